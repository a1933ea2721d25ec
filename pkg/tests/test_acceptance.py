"""Acceptance gate: one test and one summary line per criterion."""
import math
import time

import numpy as np
import pytest

from linecoord import (
    CodeConfig, JointPmf, baseline_region, corollary_joint, entropy, generate_codebook, in_S_in,
    induced_hat_distribution, induced_tilde_distribution, matched_vs_swapped, monte_carlo_gap,
    mutual_information, region_of, resolvability_gap, secrecy_gap, star_region,
)
from linecoord.builtins import cascade_bsc, reference_scheme
from linecoord.cli import main
from linecoord.dist import iid_table
from linecoord.experiments import gap_contrast
from linecoord.scheme import random_scheme
from conftest import markov_pmf, random_pmf
from instances import as_lists, small_instances
import oracles

h = oracles.binary_entropy


def test_information_measures(record_criterion):
    t0 = time.perf_counter()
    checks = []
    checks.append((entropy(JointPmf.uniform((2,))), 1.0))
    checks.append((entropy(JointPmf.uniform((2, 2, 2))), 3.0))
    checks.append((entropy(JointPmf.point_mass((2, 3), (1, 2))), 0.0))
    checks.append((mutual_information(JointPmf.point_mass((2, 2), (0, 1)), {0}, {1}), 0.0))
    bsc = JointPmf(0.5 * np.array([[0.9, 0.1], [0.1, 0.9]]))
    checks.append((entropy(bsc), 1.0 + h(0.1)))
    checks.append((mutual_information(bsc, {0}, {1}), 1.0 - h(0.1)))
    q = cascade_bsc(0.1, 0.1)
    checks.append((mutual_information(q, {0}, {1}), 1.0 - h(0.1)))
    checks.append((mutual_information(q, {0}, {2}), 1.0 - h(0.18)))
    checks.append((mutual_information(q, {1, 2}, {0}), 1.0 - h(0.1)))
    checks.append((entropy(q), 1.0 + 2 * h(0.1)))
    worst = max(abs(a - b) for a, b in checks)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 1.0
    record_criterion(1, "information measures vs analytic formulas", ok, f"max error {worst:.1e}, {elapsed:.2f}s")
    assert ok


def test_corollary_consistency(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst, members = 0.0, 0
    for t in range(100):
        shape = tuple(int(x) for x in rng.integers(2, 4, 3))
        q = random_pmf(rng, shape, sparsity=0.25 if t % 3 == 0 else 0.0)
        aux = corollary_joint(q)
        r = region_of(aux)
        worst = max(worst, abs(r.bound("R12") - mutual_information(q, {1, 2}, {0})),
                    abs(r.bound("R23") - mutual_information(q, {2}, {0})))
        members += in_S_in(aux)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and members == 100 and elapsed < 10
    record_criterion(2, "corollary choice reproduces the R0-free bounds", ok,
                     f"max error {worst:.1e}, {members}/100 in inner set, {elapsed:.2f}s")
    assert ok


def test_common_randomness_saving(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = -math.inf
    for t in range(1000):
        shape = tuple(int(x) for x in rng.integers(2, 4, 3))
        q = random_pmf(rng, shape, sparsity=0.3 if t % 2 else 0.0)
        star, base = star_region(q), baseline_region(q)
        worst = max(worst, star.bound("R12") - base.bound("R12"), star.bound("R23") - base.bound("R23"))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10
    record_criterion(3, "unconstrained common randomness never raises link rates", ok,
                     f"max(star - baseline) {worst:.3g}, {elapsed:.2f}s")
    assert ok


def test_topology_penalty(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    worst_identity, min_penalty = 0.0, math.inf
    for _ in range(100):
        shape = tuple(int(x) for x in rng.integers(2, 4, 3))
        q = markov_pmf(rng, shape)
        cmp = matched_vs_swapped(q)
        diff = cmp.swapped.bound("swapped:R32") - cmp.matched.bound("matched:R23")
        expect = mutual_information(q, {1}, {0}) - mutual_information(q, {2}, {0})
        worst_identity = max(worst_identity, abs(diff - expect))
        min_penalty = min(min_penalty, diff)
    cascade = matched_vs_swapped(cascade_bsc(0.1, 0.1)).penalty
    analytic = h(0.18) - h(0.1)
    elapsed = time.perf_counter() - t0
    ok = (worst_identity <= 1e-9 and min_penalty >= -1e-9 and cascade > 0
          and abs(cascade - analytic) <= 1e-6 and elapsed < 10)
    record_criterion(4, "swapped topology pays I(X2;X1) - I(X3;X1)", ok,
                     f"min penalty {min_penalty:.2e}, cascade {cascade:.6f} vs {analytic:.6f}, {elapsed:.2f}s")
    assert ok


def test_exact_oracle_equivalence(record_criterion):
    t0 = time.perf_counter()
    worst = {"hat": 0.0, "secrecy": 0.0, "tilde": 0.0}
    instances = small_instances()
    for label, spec, q, cb, cfg in instances:
        w, u, v = as_lists(cb)
        ch = (spec.ch_X1.rows, spec.ch_X2.rows, spec.ch_X3.rows)
        n1 = spec.action_sizes[0]
        hat = oracles.hat_table(w, u, v, *ch, spec.action_sizes, cfg.n)
        worst["hat"] = max(worst["hat"], float(np.abs(hat - induced_hat_distribution(cb, spec, cfg).table()).max()))
        sec = oracles.secrecy_tv(w, u, ch[0], n1, cfg.n)
        worst["secrecy"] = max(worst["secrecy"], abs(sec - secrecy_gap(cb, spec, cfg)))
        tilde = oracles.tilde_table(w, u, v, *ch, q.probs.sum(axis=(1, 2)), spec.action_sizes, cfg.n)
        got = induced_tilde_distribution(cb, spec, cfg, q).table()
        worst["tilde"] = max(worst["tilde"], float(np.abs(tilde - got).max()))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-12 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record_criterion(5, "optimised evaluators match brute-force enumeration", ok,
                     f"{len(instances)} instances, {detail}, {elapsed:.2f}s")
    assert ok


def test_protocol_x1_marginal(record_criterion):
    configs = [(label, spec, q, cb, cfg) for label, spec, q, cb, cfg in small_instances()]
    rng = np.random.default_rng(404)
    for n in (3, 4):
        for seed in range(5):
            spec = random_scheme((2, 2, 2), (2, 2, 2), rng)
            q = JointPmf(rng.dirichlet(np.ones(8)).reshape(2, 2, 2))
            cfg = CodeConfig.from_sizes(n, *(int(x) for x in rng.integers(1, 5, 3)))
            configs.append((f"n{n}-{seed}", spec, q, generate_codebook(spec, cfg, seed), cfg))
        q, spec = reference_scheme()
        cfg = CodeConfig(n, 1.25, 0.469, 0.25)
        configs.append((f"n{n}-reference", spec, q, generate_codebook(spec, cfg, 0), cfg))
    worst = 0.0
    for label, spec, q, cb, cfg in configs:
        n = cfg.n
        n1 = spec.action_sizes[0]
        rest = spec.action_sizes[1] * spec.action_sizes[2]
        table = induced_tilde_distribution(cb, spec, cfg, q).table().reshape((n1, rest) * n)
        x1 = table.sum(axis=tuple(range(1, 2 * n, 2)))
        worst = max(worst, float(np.abs(x1 - iid_table(q.probs.sum(axis=(1, 2)), n)).max()))
    ok = worst <= 1e-12
    record_criterion(6, "protocol output has the i.i.d. X1 marginal", ok, f"{len(configs)} configs, max error {worst:.1e}")
    assert ok


def test_rate_threshold_contrast(record_criterion):
    t0 = time.perf_counter()
    q, spec = reference_scheme()
    res, sec = gap_contrast(q, spec, n=8, seeds=range(20), margin=0.25, budget=1e9)
    elapsed = time.perf_counter() - t0
    ok = res.passed and sec.passed and elapsed < 600
    record_criterion(
        7, "gaps shrink when rates clear their thresholds (n=8, 20 codebooks)", ok,
        f"resolvability {res.mean_low:.4f} vs {res.mean_high:.4f} (diff {res.difference:.4f} +/- {res.half_width:.4f}); "
        f"secrecy {sec.mean_low:.4f} vs {sec.mean_high:.4f} (diff {sec.difference:.4f} +/- {sec.half_width:.4f}); "
        f"{elapsed:.0f}s")
    assert ok


def test_monte_carlo_calibration(record_criterion):
    kinds = {
        "intermediate": lambda spec, q, cb, cfg: resolvability_gap(cb, spec, cfg, q),
        "secrecy": lambda spec, q, cb, cfg: secrecy_gap(cb, spec, cfg),
        "protocol": lambda spec, q, cb, cfg: induced_tilde_distribution(cb, spec, cfg, q).tv_to_iid(),
    }
    worst, worst_label, cases = 20, "", 0
    for label, spec, q, cb, cfg in small_instances():
        for kind, exact_fn in kinds.items():
            exact = exact_fn(spec, q, cb, cfg)
            hits = 0
            for rep in range(20):
                est = monte_carlo_gap(spec, cfg, q, 100_000, np.random.default_rng([rep, 99]), codebook=cb, kind=kind)
                hits += abs(est.estimate - exact) <= est.half_width
            cases += 1
            if hits < worst:
                worst, worst_label = hits, f"{label}/{kind}"
    ok = worst >= 18
    record_criterion(8, "Monte Carlo intervals cover the exact gap", ok,
                     f"{cases} instance/gap pairs, worst coverage {worst}/20 {worst_label}".rstrip())
    assert ok


def test_determinism(tmp_path, record_criterion, capsys):
    runs = {
        "exact": ["simulate", "--target", "cascade-bsc", "--n", "1,2,4", "--seeds", "0-3",
                  "--rates", "above-resolvability;below-sum;above-secrecy"],
        "mc": ["simulate", "--target", "cascade-bsc", "--n", "2,3", "--seeds", "0-2", "--mode", "mc",
               "--trials", "20000"],
        "region": ["region", "--target", "cascade-bsc:0.1,0.2", "--samples", "10", "--seed", "5", "--verbose"],
        "insights": ["insights", "--target", "cascade-bsc"],
    }
    mismatched = []
    files = 0
    for name, args in runs.items():
        outs = []
        for attempt in ("a", "b"):
            d = tmp_path / f"{name}-{attempt}"
            assert main(args + ["--out", str(d)]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        files += len(outs[0])
        if outs[0] != outs[1]:
            mismatched.append(name)
    capsys.readouterr()
    ok = not mismatched
    record_criterion(9, "seeded reruns give byte-identical CSV/JSON", ok,
                     f"{files} files compared" + (f", mismatched: {mismatched}" if mismatched else ""))
    assert ok
