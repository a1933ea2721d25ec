"""Seeded sweeps, region reports and insight tables behind the command line."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import builtins
from .code import CodeConfig, SimulationReport, default_budget, simulate
from .dist import JointPmf, entropy, is_markov_chain, mutual_information
from .errors import PreconditionError
from .region import (
    baseline_region, in_S_in, in_S_out, inner_bound_sample, literal_r0_bound, matched_vs_swapped,
    region_of, star_region,
)
from .scheme import SchemeSpec

SCHEMA_VERSION = 1
SCHEMA_LINE = f"# linecoord-results schema={SCHEMA_VERSION}"
THRESHOLD_LABELS = ("R0+R12+R23", "R0+R12", "R0+R23", "R0", "R12+R23", "R12", "R23")
RATE_PRESETS = ("above-resolvability", "below-sum", "above-secrecy")


class ConfigError(ValueError):
    """Invalid experiment configuration or input file."""


# --------------------------------------------------------------------------
# loading inputs


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def load_target(ref: str) -> JointPmf:
    """A target from a JSON file, or a builtin name such as ``cascade-bsc:0.1,0.2``."""
    if Path(ref).is_file():
        try:
            q = JointPmf.from_json(_read_json(ref))
        except ValueError as exc:
            raise ConfigError(f"{ref}: {exc}") from None
    else:
        try:
            q = builtins.builtin_target(ref)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"target {ref!r} is neither a readable file nor a builtin: {exc}") from None
    if q.nvars != 3:
        raise ConfigError(f"{ref}: target must have exactly three action variables")
    return q


def load_scheme(ref: str, target: JointPmf) -> SchemeSpec:
    if Path(ref).is_file():
        try:
            spec = SchemeSpec.from_json(_read_json(ref))
        except ValueError as exc:
            raise ConfigError(f"{ref}: {exc}") from None
    else:
        try:
            spec = builtins.builtin_scheme(ref, target)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
    if spec.action_sizes != target.shape:
        raise ConfigError(f"scheme action alphabets {spec.action_sizes} do not match target {target.shape}")
    return spec


def resolve_rates(entry, spec: SchemeSpec, margin: float = 0.25) -> tuple[float, float, float]:
    """Turn a rate triple or a preset name into three rates."""
    if isinstance(entry, str):
        if entry == "above-resolvability":
            return builtins.rates_above_resolvability(spec, margin)
        if entry == "below-sum":
            return builtins.rates_below_sum(spec, margin)
        if entry == "above-secrecy":
            return builtins.rates_above_secrecy(spec, builtins.rates_above_resolvability(spec, margin)[0], margin)
        raise ConfigError(f"unknown rate preset {entry!r}; presets are {RATE_PRESETS}")
    r = tuple(float(x) for x in entry)
    if len(r) != 3 or any(not (x >= 0 and math.isfinite(x)) for x in r):
        raise ConfigError(f"rate triple must be three nonnegative numbers, got {entry!r}")
    return r


# --------------------------------------------------------------------------
# sweep configuration and result rows


@dataclass(frozen=True)
class ExperimentConfig:
    target: str
    scheme: str = "corollary"
    n_values: tuple[int, ...] = (2, 4, 6, 8)
    rates: tuple = ("above-resolvability",)
    seeds: tuple[int, ...] = tuple(range(20))
    mode: str = "exact"
    trials: int = 100_000
    out_dir: str | None = None
    budget: float | None = None
    jobs: int = 1
    timing: bool = False
    gaps: tuple[str, ...] = ("resolvability", "secrecy", "protocol")

    def validate(self):
        if not self.n_values or not self.rates or not self.seeds:
            raise ConfigError("sweep lists for n, rates and seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if any(int(n) != n or n < 1 for n in self.n_values):
            raise ConfigError("blocklengths must be positive integers")
        if self.mode not in ("exact", "mc"):
            raise ConfigError("mode must be 'exact' or 'mc'")
        if self.mode == "mc" and self.trials < 1:
            raise ConfigError("Monte Carlo mode needs --trials >= 1")
        if self.budget is not None and not self.budget > 0:
            raise ConfigError("budget must be positive")
        bad = set(self.gaps) - {"resolvability", "secrecy", "protocol"}
        if bad:
            raise ConfigError(f"unknown gap names {sorted(bad)}")
        return self


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _opt_float(s: str):
    return None if s == "" else float(s)


def _opt_int(s: str):
    return None if s == "" else int(s)


@dataclass(frozen=True)
class ResultRow:
    n: int
    r0: float
    r12: float
    r23: float
    seed: int
    m0: int
    m12: int
    m23: int
    mode: str
    trials: int | None
    resolvability_gap: float | None
    secrecy_gap: float | None
    protocol_gap: float | None
    resolvability_hw: float | None
    secrecy_hw: float | None
    protocol_hw: float | None
    th_sum: float
    th_r0_r12: float
    th_r0_r23: float
    th_r0: float
    th_r12_r23: float
    th_r12: float
    th_r23: float
    runtime_s: float | None
    error: str

    @property
    def thresholds(self) -> tuple[float, ...]:
        return (self.th_sum, self.th_r0_r12, self.th_r0_r23, self.th_r0, self.th_r12_r23, self.th_r12, self.th_r23)

    @classmethod
    def from_report(cls, rep: SimulationReport) -> "ResultRow":
        c = rep.config
        th = {**rep.resolvability_thresholds, **rep.secrecy_thresholds}
        err = "; ".join(f"{k}: {v}" for k, v in sorted(rep.errors.items()))
        return cls(
            c.n, c.r0, c.r12, c.r23, rep.seed, c.m0, c.m12, c.m23, rep.mode, rep.trials,
            rep.resolvability_gap, rep.secrecy_gap, rep.protocol_gap,
            rep.half_widths.get("resolvability"), rep.half_widths.get("secrecy"), rep.half_widths.get("protocol"),
            *(float(th[k]) for k in THRESHOLD_LABELS),
            rep.runtime_s, err,
        )


_INT_FIELDS = {"n", "seed", "m0", "m12", "m23"}
_STR_FIELDS = {"mode", "error"}


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\r\n")
    writer = csv.writer(buf)
    names = [f.name for f in fields(ResultRow)]
    writer.writerow(names)
    for r in rows:
        writer.writerow([_fmt(getattr(r, k)) for k in names])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ResultRow]:
    buf = io.StringIO(text, newline="")
    first = buf.readline().rstrip("\r\n")
    if not first.startswith("# linecoord-results"):
        raise ConfigError("missing results schema line")
    if first != SCHEMA_LINE:
        raise ConfigError(f"unsupported results schema: {first!r}")
    reader = csv.DictReader(buf)
    out = []
    for rec in reader:
        kw = {}
        for f in fields(ResultRow):
            raw = rec[f.name]
            if f.name in _INT_FIELDS:
                kw[f.name] = int(raw)
            elif f.name == "trials":
                kw[f.name] = _opt_int(raw)
            elif f.name in _STR_FIELDS:
                kw[f.name] = raw
            else:
                kw[f.name] = _opt_float(raw)
        out.append(ResultRow(**kw))
    return out


def _run_task(task):
    q_json, spec_json, n, rates, seed, mode, trials, budget, timing, gaps = task
    q = JointPmf.from_json(q_json)
    spec = SchemeSpec.from_json(spec_json)
    t0 = time.perf_counter()
    rep = simulate(spec, CodeConfig(n, *rates), q, seed, mode=mode, trials=trials, budget=budget, gaps=gaps)
    if timing:
        rep.runtime_s = round(time.perf_counter() - t0, 6)
    return rep


def run_sweep(cfg: ExperimentConfig, q: JointPmf | None = None, spec: SchemeSpec | None = None):
    """One report per (n, rates, seed), ordered by sweep index."""
    cfg.validate()
    q = load_target(cfg.target) if q is None else q
    spec = load_scheme(cfg.scheme, q) if spec is None else spec
    budget = default_budget() if cfg.budget is None else cfg.budget
    q_json, spec_json = q.to_json(), spec.to_json()
    tasks = [
        (q_json, spec_json, int(n), resolve_rates(r, spec), int(seed), cfg.mode, int(cfg.trials), budget,
         cfg.timing, tuple(cfg.gaps))
        for n in cfg.n_values for r in cfg.rates for seed in cfg.seeds
    ]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            reports = list(pool.map(_run_task, tasks))
    else:
        reports = [_run_task(t) for t in tasks]
    return reports


def dumps(obj) -> str:
    """Canonical JSON text used for every report file."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_sweep(reports, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [ResultRow.from_report(r) for r in reports]
    csv_path = out / "results.csv"
    json_path = out / "reports.json"
    csv_path.write_text(rows_to_csv(rows), encoding="utf-8")
    json_path.write_text(dumps({"schema": SCHEMA_VERSION, "reports": [r.to_json() for r in reports]}),
                         encoding="utf-8")
    return csv_path, json_path


def mean_gap_by_n(rows, gap: str = "resolvability_gap") -> dict[int, float]:
    out = {}
    for n in sorted({r.n for r in rows}):
        vals = [getattr(r, gap) for r in rows if r.n == n and getattr(r, gap) is not None]
        if vals:
            out[n] = float(np.mean(vals))
    return out


# --------------------------------------------------------------------------
# region and insight reports


def region_report(q: JointPmf, cards=None, samples: int = 20, seed: int = 0, topology: bool | None = None,
                  verbose: bool = False) -> dict:
    """Baseline, unconstrained-common-randomness, topology and sampled inner-bound regions.

    ``topology=None`` includes the matched/swapped comparison only when the
    target is a Markov chain X1 - X2 - X3; ``True`` demands it and raises
    :class:`PreconditionError` otherwise.
    """
    markov = is_markov_chain(q, (0,), (1,), (2,))
    report = {
        "target": q.to_json(),
        "baseline": baseline_region(q).to_json(),
        "star": star_region(q).to_json(),
        "markov_x1_x2_x3": markov,
    }
    if topology or (topology is None and markov):
        report["topology"] = matched_vs_swapped(q).to_json()
    sample = inner_bound_sample(q, cards, samples, np.random.default_rng(seed))
    members = []
    for aux, reg in sample:
        entry = {
            "template": aux.scheme.name if aux.scheme is not None else None,
            "cards": list(aux.cards),
            "in_S_in": in_S_in(aux, q),
            "in_S_out": in_S_out(aux, q),
            "region": reg.to_json(),
        }
        if verbose:
            entry["r0_bound_without_x1"] = literal_r0_bound(aux)
        members.append(entry)
    report["inner_bound"] = {
        "cards": list(sample.members[0][0].cards) if sample.members else list(cards or ()),
        "attempts": sample.attempts,
        "rejected": sample.rejected,
        "templates": list(sample.templates),
        "diagnostic": sample.diagnostic,
        "members": members,
    }
    return report


def insights_report(q: JointPmf) -> dict:
    """Baseline vs. unconstrained-common-randomness bounds, and topology penalty when Markov."""
    h1 = entropy(q, (0,))
    h12 = entropy(q, (0, 1))
    i23_1 = mutual_information(q, (1, 2), (0,))
    i3_1 = mutual_information(q, (2,), (0,))
    out = {
        "common_randomness": {
            "baseline": {"R12": h1, "R23": h12},
            "star": {"R12": i23_1, "R23": i3_1},
            "savings": {"R12": h1 - i23_1, "R23": h12 - i3_1},
        }
    }
    if is_markov_chain(q, (0,), (1,), (2,)):
        cmp = matched_vs_swapped(q)
        out["topology"] = {
            "matched": {"R12": cmp.matched.bound("matched:R12"), "R23": cmp.matched.bound("matched:R23")},
            "swapped": {"R13": cmp.swapped.bound("swapped:R13"), "R32": cmp.swapped.bound("swapped:R32")},
            "penalty": cmp.penalty,
        }
    else:
        out["topology"] = None
    return out


@dataclass(frozen=True)
class GapContrast:
    gap: str
    mean_low: float
    mean_high: float
    difference: float
    half_width: float
    rates_low: tuple
    rates_high: tuple
    n: int
    seeds: tuple

    @property
    def passed(self) -> bool:
        return self.mean_low < self.mean_high and self.difference > self.half_width

    def to_json(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        d["rates_low"] = list(self.rates_low)
        d["rates_high"] = list(self.rates_high)
        d["seeds"] = list(self.seeds)
        return d


def paired_bootstrap_half_width(diffs, n_boot: int = 2000, level: float = 0.95, seed: int = 0) -> float:
    """Half the width of the percentile bootstrap interval for the mean of ``diffs``."""
    diffs = np.asarray(diffs, dtype=np.float64)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, diffs.size, size=(n_boot, diffs.size))
    means = diffs[idx].mean(axis=1)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(hi - lo) / 2.0


def gap_contrast(q: JointPmf, spec: SchemeSpec, n: int = 8, seeds=tuple(range(20)), margin: float = 0.25,
                 budget: float | None = None) -> tuple[GapContrast, GapContrast]:
    """Mean exact gaps above vs. below the rate thresholds, paired by codebook seed.

    Resolvability compares all thresholds met with ``margin`` to spare
    against a sum rate ``margin`` below I(UVW; X1X2X3). Secrecy compares the
    secrecy thresholds met with ``margin`` against R12 = R23 = 0.01, with
    the same R0.
    """
    above = builtins.rates_above_resolvability(spec, margin)
    below = builtins.rates_below_sum(spec, margin)
    sec_above = builtins.rates_above_secrecy(spec, above[0], margin)
    sec_below = (above[0], 0.01, 0.01)
    seeds = tuple(int(s) for s in seeds)

    def gaps(rates, kind):
        cfg = CodeConfig(n, *rates)
        return np.array([getattr(simulate(spec, cfg, q, s, budget=budget, gaps=(kind,)), f"{kind}_gap")
                         for s in seeds])

    out = []
    for kind, lo, hi in (("resolvability", above, below), ("secrecy", sec_above, sec_below)):
        g_lo, g_hi = gaps(lo, kind), gaps(hi, kind)
        diffs = g_hi - g_lo
        out.append(GapContrast(kind, float(g_lo.mean()), float(g_hi.mean()), float(diffs.mean()),
                               paired_bootstrap_half_width(diffs), tuple(lo), tuple(hi), n, seeds))
    return tuple(out)


def format_insights(rep: dict) -> str:
    cr = rep["common_randomness"]
    lines = [
        "Common randomness (rate lower bounds, bits/action)",
        f"  {'link':<6}{'baseline':>12}{'with CR':>12}{'saving':>12}",
    ]
    for link in ("R12", "R23"):
        lines.append(f"  {link:<6}{cr['baseline'][link]:>12.6f}{cr['star'][link]:>12.6f}{cr['savings'][link]:>12.6f}")
    topo = rep.get("topology")
    lines.append("")
    if topo is None:
        lines.append("Topology: target is not Markov X1 - X2 - X3; comparison skipped")
    else:
        lines += [
            "Topology (Markov X1 - X2 - X3)",
            f"  matched 1->2->3: R12 >= {topo['matched']['R12']:.6f}, R23 >= {topo['matched']['R23']:.6f}",
            f"  swapped 1->3->2: R13 >= {topo['swapped']['R13']:.6f}, R32 >= {topo['swapped']['R32']:.6f}",
            f"  penalty on the second link: {topo['penalty']:.6f}",
        ]
    for c in rep.get("contrast", []):
        lines += [
            "",
            f"{c['gap']} gap at n={c['n']} over {len(c['seeds'])} codebooks:",
            f"  rates {tuple(round(x, 4) for x in c['rates_low'])}: mean {c['mean_low']:.6f}",
            f"  rates {tuple(round(x, 4) for x in c['rates_high'])}: mean {c['mean_high']:.6f}",
            f"  difference {c['difference']:.6f} +/- {c['half_width']:.6f} -> {'PASS' if c['passed'] else 'FAIL'}",
        ]
    return "\n".join(lines) + "\n"


__all__ = [
    "ConfigError", "ExperimentConfig", "GapContrast", "PreconditionError", "ResultRow", "gap_contrast",
    "insights_report", "load_scheme", "load_target", "region_report", "rows_from_csv", "rows_to_csv",
    "run_sweep", "write_sweep",
]
