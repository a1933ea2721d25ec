"""Random superposition codebooks and the distributions they induce.

The intermediate problem feeds codewords ``w_i``, ``u_ij``, ``v_ik`` chosen
by uniform indices ``(i, j, k) = (m0, m12, m23)`` through the action
channels; its output law is ``p_hat``. The line protocol reuses the same
codebook: agent 1 draws its actions from q, picks ``m12`` from the
posterior ``p_hat(m12 | x1^n, m0)``, and agents 2 and 3 simulate their
channels. Its output law is ``p_tilde``.

Distributions over action sequences are dense arrays of shape ``(Z,) * n``
where ``Z = |X1| |X2| |X3|`` and the letter index at each position is
``(x1 * |X2| + x2) * |X3| + x3``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dist import JointPmf, iid_table, sample_rows
from .errors import ResourceBudgetError
from .scheme import SchemeSpec

DEFAULT_BUDGET = 10**9
BUDGET_ENV = "LINECOORD_BUDGET"
DEFAULT_STORAGE_CAP = 5 * 10**7
# largest dense intermediate array, in float64 entries
DEFAULT_TABLE_CAP = 1 << 25


def default_budget() -> float:
    raw = os.environ.get(BUDGET_ENV)
    if raw:
        try:
            return float(raw)
        except ValueError:
            raise ValueError(f"{BUDGET_ENV}={raw!r} is not a number") from None
    return float(DEFAULT_BUDGET)


def message_size(n: int, rate: float) -> int:
    """max(1, round(2^(n rate))), rounding halves up."""
    return max(1, int(math.floor(2.0 ** (n * rate) + 0.5)))


@dataclass(frozen=True)
class CodeConfig:
    """Blocklength and rates (bits/action) of a line coordination code."""

    n: int
    r0: float
    r12: float
    r23: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("blocklength n must be a positive integer")
        for r in (self.r0, self.r12, self.r23):
            if not (r >= 0 and math.isfinite(r)):
                raise ValueError("rates must be finite and nonnegative")
        object.__setattr__(self, "n", int(self.n))

    @property
    def m0(self) -> int:
        return message_size(self.n, self.r0)

    @property
    def m12(self) -> int:
        return message_size(self.n, self.r12)

    @property
    def m23(self) -> int:
        return message_size(self.n, self.r23)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.m0, self.m12, self.m23)

    @classmethod
    def from_sizes(cls, n: int, m0: int, m12: int, m23: int) -> "CodeConfig":
        """Config whose rates are log2(M)/n, so the sizes come back exactly."""
        cfg = cls(n, math.log2(m0) / n, math.log2(m12) / n, math.log2(m23) / n)
        if cfg.sizes != (m0, m12, m23):
            raise ValueError(f"sizes {(m0, m12, m23)} not reproducible at n={n}")
        return cfg

    def to_json(self) -> dict:
        return {"n": self.n, "r0": self.r0, "r12": self.r12, "r23": self.r23,
                "m0": self.m0, "m12": self.m12, "m23": self.m23}


@dataclass(frozen=True, eq=False)
class Codebook:
    """Codewords ``w[i]``, ``u[i, j]``, ``v[i, k]`` as integer arrays.

    Shapes are ``(M0, n)``, ``(M0, M12, n)`` and ``(M0, M23, n)``.
    """

    w: np.ndarray
    u: np.ndarray
    v: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        w, u, v = (np.array(a, dtype=np.int64) for a in (self.w, self.u, self.v))
        if w.ndim != 2 or u.ndim != 3 or v.ndim != 3:
            raise ValueError("codebook arrays must have shapes (M0,n), (M0,M12,n), (M0,M23,n)")
        if u.shape[0] != w.shape[0] or v.shape[0] != w.shape[0] or u.shape[2] != w.shape[1] or v.shape[2] != w.shape[1]:
            raise ValueError("inconsistent codebook array shapes")
        for a in (w, u, v):
            a.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.w.shape[1]

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.w.shape[0], self.u.shape[1], self.v.shape[1])

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return (np.array_equal(self.w, other.w) and np.array_equal(self.u, other.u)
                and np.array_equal(self.v, other.v))

    def check(self, spec: SchemeSpec, config: CodeConfig | None = None):
        nu, nv, nw = spec.cards
        if config is not None and (config.n != self.n or config.sizes != self.sizes):
            raise ValueError(f"codebook sizes {self.sizes} (n={self.n}) do not match the config")
        if self.w.max(initial=0) >= nw or self.u.max(initial=0) >= nu or self.v.max(initial=0) >= nv:
            raise ValueError("codebook symbols exceed the scheme's auxiliary alphabets")

    def to_json(self, config: CodeConfig | None = None) -> dict:
        out = {"seed": self.seed, "w": self.w.tolist(), "u": self.u.tolist(), "v": self.v.tolist()}
        if config is not None:
            out["config"] = config.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Codebook":
        return cls(np.asarray(obj["w"]), np.asarray(obj["u"]), np.asarray(obj["v"]), obj.get("seed"))

    def dump(self, path, config: CodeConfig | None = None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(config), fh)

    @classmethod
    def load(cls, path) -> "Codebook":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _rng_and_seed(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    if rng is None:
        raise ValueError("pass an integer seed or a numpy Generator")
    return np.random.default_rng(rng), int(rng)


def generate_codebook(spec: SchemeSpec, config: CodeConfig, rng, cap: int = DEFAULT_STORAGE_CAP) -> Codebook:
    """Draw the w-, u- and v-codewords symbol by symbol.

    ``w_i ~ p_W`` i.i.d., then ``u_ij[l] ~ p_{U|W}(. | w_i[l])`` and
    ``v_ik[l] ~ p_{V|W}(. | w_i[l])``. Draws happen in that order so a seed
    fixes the whole codebook.
    """
    m0, m12, m23 = config.sizes
    n = config.n
    total = m0 * (1 + m12 + m23) * n
    if total > cap:
        raise ResourceBudgetError(f"codebook needs {total} symbols, above the cap {cap}", total, cap)
    gen, seed = _rng_and_seed(rng)
    w = sample_rows(spec.p_W[None, :], np.zeros((m0, n), dtype=np.int64), gen)
    u = sample_rows(spec.p_U_given_W.rows, np.broadcast_to(w[:, None, :], (m0, m12, n)), gen)
    v = sample_rows(spec.p_V_given_W.rows, np.broadcast_to(w[:, None, :], (m0, m23, n)), gen)
    return Codebook(w, u, v, seed)


# --------------------------------------------------------------------------
# mixtures of product distributions

def _letter_rows(spec: SchemeSpec) -> np.ndarray:
    """W(z | s) for joint input s = (u, v, w) and action letter z = (x1, x2, x3)."""
    t = np.einsum("uwa,uvwb,vwc->uvwabc", spec.ch_X1.rows, spec.ch_X2.rows, spec.ch_X3.rows)
    nu, nv, nw = spec.cards
    return t.reshape(nu * nv * nw, -1)


def _joint_input_sequences(cb: Codebook, spec: SchemeSpec) -> np.ndarray:
    """Joint input symbol sequences for every (i, j, k), shape (M0*M12*M23, n)."""
    nu, nv, nw = spec.cards
    m0, m12, m23 = cb.sizes
    s = (cb.u[:, :, None, :] * nv + cb.v[:, None, :, :]) * nw + cb.w[:, None, None, :]
    return s.reshape(m0 * m12 * m23, cb.n)


def _prefix_counts(seqs: np.ndarray) -> list[int]:
    """Number of distinct prefixes of each length 0..n."""
    n = seqs.shape[1]
    out = [1]
    for d in range(1, n + 1):
        out.append(len(np.unique(seqs[:, :d], axis=0)))
    return out


def _trie_cost(prefix_counts, z: int, n: int, stop_depth: int) -> tuple[float, float]:
    """(operations, largest intermediate) for contracting a trie up to ``stop_depth``."""
    ops, peak = 0.0, 0.0
    for d in range(n - 1, stop_depth - 1, -1):
        size = float(prefix_counts[d + 1]) * z ** (n - d)
        ops += size
        peak = max(peak, float(prefix_counts[d]) * z ** (n - d))
    return ops, peak


def _contract_trie(seqs: np.ndarray, weights: np.ndarray, rows: np.ndarray, stop_depth: int = 0):
    """Sum of weighted product distributions, grouped by sequence prefix.

    Computes, for every distinct prefix ``a`` of length ``stop_depth``, the
    array ``T_a[z_{d+1..n}] = sum_{s with prefix a} weight(s) prod_l rows[s_l, z_l]``.
    Returns the prefixes (lexicographic order) and the stacked arrays with
    shape ``(n_prefixes, Z ** (n - stop_depth))``.
    """
    n = seqs.shape[1]
    z = rows.shape[1]
    keys, inverse = np.unique(seqs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    tensors = np.bincount(inverse, weights=weights, minlength=len(keys))[:, None]
    for d in range(n - 1, stop_depth - 1, -1):
        last = keys[:, d]
        if d == 0:
            parents = keys[:1, :0]
            starts = np.array([0])
        else:
            parents, starts = np.unique(keys[:, :d], axis=0, return_index=True)
        width = tensors.shape[1] * z
        parent_of = np.searchsorted(starts, np.arange(len(keys)), side="right") - 1
        out = np.zeros((len(parents), width))
        # chunk children so the (children, Z, width) temporary stays bounded
        chunk = max(1, DEFAULT_TABLE_CAP // (4 * width))
        for c0 in range(0, len(keys), chunk):
            c1 = min(len(keys), c0 + chunk)
            contrib = (rows[last[c0:c1]][:, :, None] * tensors[c0:c1, None, :]).reshape(c1 - c0, width)
            owners = parent_of[c0:c1]
            local_starts = np.flatnonzero(np.r_[True, owners[1:] != owners[:-1]])
            out[owners[local_starts]] += np.add.reduceat(contrib, local_starts, axis=0)
        keys, tensors = parents, out
    return keys, tensors


def mixture_of_products(seqs, weights, rows, budget: float | None = None) -> np.ndarray:
    """Dense ``(Z,) * n`` table of ``sum_k weights[k] prod_l rows[seqs[k, l], z_l]``."""
    seqs = np.asarray(seqs, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    n = seqs.shape[1]
    z = rows.shape[1]
    budget = default_budget() if budget is None else budget
    ops, peak = _trie_cost(_prefix_counts(seqs), z, n, 0)
    _check_budget(ops, budget, peak)
    _, t = _contract_trie(seqs, weights, rows, 0)
    return t.reshape((z,) * n)


def _check_budget(ops: float, budget: float, peak: float = 0.0, what: str = "exact evaluation"):
    if ops > budget:
        raise ResourceBudgetError(
            f"{what} needs about {ops:.3g} operations, above the budget {budget:.3g}; "
            f"use Monte Carlo mode or raise the budget",
            ops, budget,
        )
    if peak > DEFAULT_TABLE_CAP:
        raise ResourceBudgetError(
            f"{what} needs a {peak:.3g}-entry table, above the cap {DEFAULT_TABLE_CAP}; use Monte Carlo mode",
            peak, DEFAULT_TABLE_CAP,
        )


def _mixture_tv_to_iid(seqs, weights, rows, letter_pmf, budget) -> float:
    """TV between a product mixture and an i.i.d. law, one first-letter block at a time."""
    n = seqs.shape[1]
    z = rows.shape[1]
    counts = _prefix_counts(seqs)
    stop = 1 if n > 1 else 0
    ops, peak = _trie_cost(counts, z, n, stop)
    ops += 3.0 * counts[1] * z ** n
    _check_budget(ops, budget, max(peak, float(z) ** (n - 1) * 3))
    keys, tensors = _contract_trie(seqs, weights, rows, stop)
    if stop == 0:
        return 0.5 * float(np.abs(tensors[0] - letter_pmf).sum())
    rest = iid_table(letter_pmf, n - 1).reshape(-1) if n > 1 else np.ones(1)
    first = keys[:, 0]
    l1 = 0.0
    for z1 in range(z):
        block = rows[first, z1] @ tensors
        l1 += float(np.abs(block - letter_pmf[z1] * rest).sum())
    return min(1.0, 0.5 * l1)


# --------------------------------------------------------------------------
# intermediate problem


class InducedHat:
    """Output law ``p_hat`` of the codebook fed through the action channels."""

    def __init__(self, cb: Codebook, spec: SchemeSpec, config: CodeConfig | None = None,
                 budget: float | None = None):
        cb.check(spec, config)
        self.cb = cb
        self.spec = spec
        self.budget = default_budget() if budget is None else float(budget)
        self.rows = _letter_rows(spec)
        self.seqs = _joint_input_sequences(cb, spec)
        m = self.seqs.shape[0]
        self.weights = np.full(m, 1.0 / m)

    @property
    def n(self) -> int:
        return self.cb.n

    @property
    def letter_size(self) -> int:
        return self.rows.shape[1]

    def prob(self, x1, x2, x3) -> float:
        """p_hat of one triple of action sequences, summed over all codeword triples."""
        n1, n2, n3 = self.spec.action_sizes
        z = (np.asarray(x1) * n2 + np.asarray(x2)) * n3 + np.asarray(x3)
        per = self.rows[self.seqs, z[None, :]]
        return float(np.prod(per, axis=1).sum() / self.seqs.shape[0])

    def table(self) -> np.ndarray:
        return mixture_of_products(self.seqs, self.weights, self.rows, self.budget)

    def tv_to_iid(self, q: JointPmf) -> float:
        letter = _target_letter_pmf(q, self.spec)
        return _mixture_tv_to_iid(self.seqs, self.weights, self.rows, letter, self.budget)


def _target_letter_pmf(q: JointPmf, spec: SchemeSpec) -> np.ndarray:
    if not isinstance(q, JointPmf) or q.shape != spec.action_sizes:
        raise ValueError(f"target alphabets {getattr(q, 'shape', None)} do not match the scheme's {spec.action_sizes}")
    return q.flat()


def induced_hat_distribution(cb: Codebook, spec: SchemeSpec, config: CodeConfig | None = None,
                             budget: float | None = None) -> InducedHat:
    return InducedHat(cb, spec, config, budget)


def resolvability_gap(cb: Codebook, spec: SchemeSpec, config: CodeConfig | None, q: JointPmf,
                      budget: float | None = None) -> float:
    """TV(p_hat over action sequences, q^n)."""
    return InducedHat(cb, spec, config, budget).tv_to_iid(q)


def _x1_likelihoods(cb: Codebook, spec: SchemeSpec, budget: float, index=None) -> np.ndarray:
    """L[i, j, x1^n] = prod_l W(x1_l | u_ij[l], w_i[l]) for every x1 sequence.

    ``index`` restricts the computation to the given common-randomness values.
    """
    ch1 = spec.ch_X1.rows
    n1 = ch1.shape[-1]
    n = cb.n
    m0, m12, _ = cb.sizes
    rows_i = np.arange(m0) if index is None else np.asarray(index)
    ops = 2.0 * len(rows_i) * m12 * n1 ** n
    _check_budget(ops, budget, len(rows_i) * m12 * float(n1) ** n, "likelihood table")
    u = cb.u[rows_i]
    w = cb.w[rows_i]
    lik = np.ones((len(rows_i), m12, 1))
    for l in range(n):
        letter = ch1[u[:, :, l], w[:, None, l]]           # (i, j, x1)
        lik = (lik[:, :, :, None] * letter[:, :, None, :]).reshape(len(rows_i), m12, -1)
    return lik


def x1_m0_table(cb: Codebook, spec: SchemeSpec, config: CodeConfig | None = None,
                budget: float | None = None) -> np.ndarray:
    """p_hat(m0, x1^n) as an array of shape ``(M0, |X1|^n)``."""
    cb.check(spec, config)
    budget = default_budget() if budget is None else budget
    lik = _x1_likelihoods(cb, spec, budget)
    m0 = cb.sizes[0]
    return lik.mean(axis=1) / m0


def secrecy_gap(cb: Codebook, spec: SchemeSpec, config: CodeConfig | None = None,
                budget: float | None = None) -> float:
    """TV(p_hat(x1^n, m0), p_hat(x1^n) p_hat(m0)); p_hat(m0) is uniform."""
    joint = x1_m0_table(cb, spec, config, budget)
    m0 = joint.shape[0]
    if m0 == 1:
        return 0.0
    px = joint.sum(axis=0)
    return min(1.0, 0.5 * float(np.abs(joint - px[None, :] / m0).sum()))


def _posterior(lik: np.ndarray) -> np.ndarray:
    """Normalise likelihoods over the message axis (axis 1); all-zero rows become uniform."""
    tot = lik.sum(axis=1, keepdims=True)
    m12 = lik.shape[1]
    safe = np.where(tot > 0, tot, 1.0)
    return np.where(tot > 0, lik / safe, 1.0 / m12)


def posterior_m12(cb: Codebook, spec: SchemeSpec, config: CodeConfig | None, x1_seq, m0: int) -> np.ndarray:
    """p_hat(m12 | x1^n, m0), uniform when no message explains ``x1_seq``."""
    cb.check(spec, config)
    x1 = np.asarray(x1_seq, dtype=np.int64)
    if x1.shape != (cb.n,):
        raise ValueError(f"x1 sequence must have length {cb.n}")
    if not 0 <= m0 < cb.sizes[0]:
        raise ValueError("m0 out of range")
    ch1 = spec.ch_X1.rows
    lik = np.prod(ch1[cb.u[m0], cb.w[m0][None, :], x1[None, :]], axis=1)
    return _posterior(lik[None, :, None])[0, :, 0]


def _action_sizes_check(spec, q):
    if q.shape != spec.action_sizes:
        raise ValueError("target alphabets do not match the scheme")


def induced_tilde_table(cb: Codebook, spec: SchemeSpec, config: CodeConfig | None, q: JointPmf,
                        budget: float | None = None) -> np.ndarray:
    """Dense ``(Z,) * n`` table of the protocol's action law ``p_tilde``."""
    cb.check(spec, config)
    _action_sizes_check(spec, q)
    budget = default_budget() if budget is None else budget
    n1, n2, n3 = spec.action_sizes
    ny = n2 * n3
    n = cb.n
    m0, m12, m23 = cb.sizes
    nx1 = n1 ** n
    nyn = ny ** n
    ops = m0 * m12 * (2.0 * m23 * nyn + float(nx1) * nyn + 2.0 * nx1)
    _check_budget(ops, budget, max(float(nx1) * nyn, float(m12) * m23 * nyn), "p_tilde evaluation")

    q1n = iid_table(q.probs.sum(axis=(1, 2)), n).reshape(-1)
    # W(x2, x3 | u, v, w) indexed [(u, v, w), y]
    chy = np.einsum("uvwb,vwc->uvwbc", spec.ch_X2.rows, spec.ch_X3.rows)
    nu, nv, nw = spec.cards
    chy = chy.reshape(nu, nv, nw, ny)
    out = np.zeros((nx1, nyn))
    for i in range(m0):
        lik = _x1_likelihoods(cb, spec, budget, index=[i])[0]     # (j, x1)
        tot = lik.sum(axis=0, keepdims=True)
        post = np.where(tot > 0, lik / np.where(tot > 0, tot, 1.0), 1.0 / m12)   # (j, x1)
        a = (q1n[None, :] * post).T                                  # (x1, j)
        g = np.ones((m12, m23, 1))
        for l in range(n):
            letter = chy[cb.u[i, :, l][:, None], cb.v[i, :, l][None, :], cb.w[i, l]]   # (j, k, y)
            g = (g[:, :, :, None] * letter[:, :, None, :]).reshape(m12, m23, -1)
        b = g.mean(axis=1)                                           # (j, y^n)
        out += a @ b
    out /= m0
    return _to_letter_layout(out, (n1, n2, n3), n)


def _to_letter_layout(table_x1_y: np.ndarray, action_sizes, n: int) -> np.ndarray:
    """Reorder an (x1^n, (x2 x3)^n) table into the per-position letter layout."""
    n1, n2, n3 = action_sizes
    ny = n2 * n3
    t = table_x1_y.reshape((n1,) * n + (ny,) * n)
    perm = [ax for l in range(n) for ax in (l, n + l)]
    t = np.transpose(t, perm)
    return t.reshape((n1 * ny,) * n)


class InducedTilde:
    """Action law ``p_tilde`` of the line protocol built on a codebook."""

    def __init__(self, cb: Codebook, spec: SchemeSpec, config: CodeConfig | None, q: JointPmf,
                 budget: float | None = None):
        cb.check(spec, config)
        _action_sizes_check(spec, q)
        self.cb, self.spec, self.q = cb, spec, q
        self.budget = default_budget() if budget is None else float(budget)
        self._table = None

    def prob(self, x1, x2, x3) -> float:
        """p_tilde of one triple of action sequences."""
        cb, spec = self.cb, self.spec
        x1, x2, x3 = (np.asarray(a, dtype=np.int64) for a in (x1, x2, x3))
        m0, m12, m23 = cb.sizes
        q1 = self.q.probs.sum(axis=(1, 2))
        px1 = float(np.prod(q1[x1]))
        if px1 == 0:
            return 0.0
        total = 0.0
        for i in range(m0):
            post = posterior_m12(cb, spec, None, x1, i)
            u, v, w = cb.u[i], cb.v[i], cb.w[i]
            l2 = spec.ch_X2.rows[u[:, None, :], v[None, :, :], w[None, None, :], x2[None, None, :]]
            l3 = spec.ch_X3.rows[v, w[None, :], x3[None, :]]
            g = np.prod(l2, axis=2) * np.prod(l3, axis=1)[None, :]      # (j, k)
            total += float(post @ g.mean(axis=1))
        return px1 * total / m0

    def table(self) -> np.ndarray:
        if self._table is None:
            self._table = induced_tilde_table(self.cb, self.spec, None, self.q, self.budget)
        return self._table

    def tv_to_iid(self) -> float:
        letter = self.q.flat()
        target = iid_table(letter, self.cb.n)
        return min(1.0, 0.5 * float(np.abs(self.table() - target).sum()))


def induced_tilde_distribution(cb: Codebook, spec: SchemeSpec, config: CodeConfig | None, q: JointPmf,
                               budget: float | None = None) -> InducedTilde:
    return InducedTilde(cb, spec, config, q, budget)


def protocol_gap(cb: Codebook, spec: SchemeSpec, config: CodeConfig | None, q: JointPmf,
                 budget: float | None = None) -> float:
    """TV(p_tilde, q^n)."""
    return InducedTilde(cb, spec, config, q, budget).tv_to_iid()


# --------------------------------------------------------------------------
# sampling


class ProtocolTrace(NamedTuple):
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    m0: int | np.ndarray
    m12: int | np.ndarray
    m23: int | np.ndarray


def _choose_index(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of ``probs``."""
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = 1.0
    u = rng.random(probs.shape[:-1])
    return np.minimum((u[..., None] >= cdf).sum(axis=-1), probs.shape[-1] - 1)


def sample_protocol(cb: Codebook, spec: SchemeSpec, q: JointPmf, size: int, rng: np.random.Generator,
                    m0=None, chunk: int = 4096) -> ProtocolTrace:
    """Draw ``size`` independent protocol traces (arrays with a leading trace axis)."""
    _action_sizes_check(spec, q)
    n = cb.n
    big_m0, m12, m23 = cb.sizes
    q1 = q.probs.sum(axis=(1, 2))
    x1 = sample_rows(q1[None, :], np.zeros((size, n), dtype=np.int64), rng)
    m0s = rng.integers(0, big_m0, size) if m0 is None else np.full(size, int(m0))
    ch1 = spec.ch_X1.rows
    m12s = np.empty(size, dtype=np.int64)
    for c0 in range(0, size, chunk):
        c1 = min(size, c0 + chunk)
        i = m0s[c0:c1]
        with np.errstate(divide="ignore"):
            logl = np.log(ch1[cb.u[i], cb.w[i][:, None, :], x1[c0:c1, None, :]]).sum(axis=2)
        top = logl.max(axis=1, keepdims=True)
        finite = np.isfinite(top)
        lik = np.where(finite, np.exp(logl - np.where(finite, top, 0.0)), 1.0)
        m12s[c0:c1] = _choose_index(lik / lik.sum(axis=1, keepdims=True), rng)
    m23s = rng.integers(0, m23, size)
    u = cb.u[m0s, m12s]
    v = cb.v[m0s, m23s]
    w = cb.w[m0s]
    nu, nv, nw = spec.cards
    n2 = spec.action_sizes[1]
    n3 = spec.action_sizes[2]
    x2 = sample_rows(spec.ch_X2.rows.reshape(-1, n2), (u * nv + v) * nw + w, rng)
    x3 = sample_rows(spec.ch_X3.rows.reshape(-1, n3), v * nw + w, rng)
    return ProtocolTrace(x1, x2, x3, m0s, m12s, m23s)


def run_line_protocol(cb: Codebook, spec: SchemeSpec, config: CodeConfig | None, q: JointPmf,
                      rng, m0: int | None = None) -> ProtocolTrace:
    """One run of the three-agent protocol.

    Agent 1 draws x1^n i.i.d. from q's first marginal and sends m12 drawn
    from the posterior given (x1^n, m0); agent 2 draws m23 uniformly and
    passes (u, v, w) through its channel; agent 3 passes (v, w) through its
    own. ``m0`` is drawn uniformly unless given.
    """
    cb.check(spec, config)
    gen, _ = _rng_and_seed(rng)
    t = sample_protocol(cb, spec, q, 1, gen, m0=m0)
    return ProtocolTrace(t.x1[0], t.x2[0], t.x3[0], int(t.m0[0]), int(t.m12[0]), int(t.m23[0]))


def sample_intermediate(cb: Codebook, spec: SchemeSpec, size: int, rng: np.random.Generator):
    """Draw ``(m0, m12, m23, z)`` from the intermediate problem; ``z`` holds letter indices."""
    big_m0, m12, m23 = cb.sizes
    nu, nv, nw = spec.cards
    i = rng.integers(0, big_m0, size)
    j = rng.integers(0, m12, size)
    k = rng.integers(0, m23, size)
    s = (cb.u[i, j] * nv + cb.v[i, k]) * nw + cb.w[i]
    z = sample_rows(_letter_rows(spec), s, rng)
    return i, j, k, z


# --------------------------------------------------------------------------
# Monte Carlo estimation


@dataclass(frozen=True)
class MCEstimate:
    """Interval estimate of a TV gap from sampled traces.

    Cells whose deviation from the reference law is clearly signed enter
    linearly, with the exact multinomial variance. Cells whose sign is
    unresolved, and the unseen part of the outcome space, can only be
    bounded; they widen the interval rather than bias the centre. The raw
    plug-in value is kept for reference.
    """

    estimate: float
    half_width: float
    plugin: float
    trials: int
    kind: str
    confidence: float

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "half_width": self.half_width, "plugin": self.plugin,
                "trials": self.trials, "kind": self.kind, "confidence": self.confidence}


def _seq_codes(letters: np.ndarray, base: int) -> np.ndarray:
    codes = np.zeros(letters.shape[0], dtype=np.int64)
    for l in range(letters.shape[1]):
        codes = codes * base + letters[:, l]
    return codes


def _iid_prob_of_codes(codes: np.ndarray, letter_pmf: np.ndarray, n: int) -> np.ndarray:
    z = letter_pmf.size
    out = np.ones(codes.shape[0])
    c = codes.copy()
    for _ in range(n):
        out *= letter_pmf[c % z]
        c //= z
    return out


def _normal_quantile(confidence: float) -> float:
    from statistics import NormalDist
    return NormalDist().inv_cdf(0.5 + confidence / 2.0)


def _tv_interval(f, d, var, coeff_of_signs, trials, z, unseen_lo, unseen_hi):
    """Combine resolved and unresolved cells into (low, high) bounds on the TV.

    ``d`` are per-cell deviations, ``var`` their approximate variances and
    ``coeff_of_signs`` maps the sign vector to linear coefficients on ``f``.
    """
    sigma = np.sqrt(var)
    resolved = np.abs(d) > z * sigma
    s = np.where(resolved, np.sign(d), 0.0)
    a = coeff_of_signs(s)
    lin_var = max(0.0, float((a * a * f).sum() - (a * f).sum() ** 2)) / trials
    base = 0.5 * float(np.abs(d[resolved]).sum())
    slack = 0.5 * float((np.abs(d[~resolved]) + z * sigma[~resolved]).sum())
    spread = z * math.sqrt(lin_var)
    return base + unseen_lo - spread, base + slack + unseen_hi + spread


def _known_target_interval(counts, trials, target, z):
    f = counts / trials
    d = f - target
    var = np.maximum(f, 1.0 / trials) / trials
    unseen = max(0.0, 1.0 - float(target.sum()))
    miss = (np.count_nonzero(counts == 1) + 1) / trials
    lo, hi = _tv_interval(f, d, var, lambda s: 0.5 * s, trials, z,
                          0.5 * max(0.0, unseen - miss), 0.5 * (unseen + miss))
    return 0.5 * float(np.abs(d).sum()) + 0.5 * unseen, lo, hi


def _secrecy_interval(x_codes, m0_idx, m0, trials, z):
    xs, x_of = np.unique(x_codes, return_inverse=True)
    grid = np.bincount(x_of * m0 + m0_idx, minlength=len(xs) * m0).reshape(len(xs), m0)
    f = grid / trials
    fx = f.sum(axis=1, keepdims=True)
    d = f - fx / m0
    var = np.maximum(f + fx / m0 ** 2, 1.0 / trials) / trials
    singles = np.count_nonzero(np.bincount(x_of) == 1)
    miss = (singles + 1) / trials

    def coeffs(s):
        return 0.5 * (s - s.mean(axis=1, keepdims=True))

    lo, hi = _tv_interval(f.ravel(), d.ravel(), var.ravel(), lambda s: coeffs(s.reshape(f.shape)).ravel(),
                          trials, z, 0.0, miss * (1.0 - 1.0 / m0))
    return 0.5 * float(np.abs(d).sum()), lo, hi


def monte_carlo_gap(spec: SchemeSpec, config: CodeConfig, q: JointPmf | None, trials: int, rng,
                    codebook: Codebook | None = None, kind: str = "protocol",
                    confidence: float = 0.99) -> MCEstimate:
    """Estimate a TV gap from sampled traces.

    ``kind`` is ``"protocol"`` (TV of p_tilde to q^n), ``"intermediate"``
    (TV of p_hat to q^n) or ``"secrecy"`` (TV of the (x1^n, m0) law to the
    product of its x1^n marginal and the uniform m0 law). The codebook is
    drawn from ``rng`` when not supplied.
    """
    if int(trials) != trials or trials < 1:
        raise ValueError("trials must be a positive integer")
    if kind not in ("protocol", "intermediate", "secrecy"):
        raise ValueError(f"unknown gap kind {kind!r}")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    gen, _ = _rng_and_seed(rng)
    cb = codebook if codebook is not None else generate_codebook(spec, config, gen)
    cb.check(spec, config)
    n = cb.n
    zq = _normal_quantile(confidence)
    letter_size = int(np.prod(spec.action_sizes))
    if kind == "secrecy":
        i, _, _, letters = sample_intermediate(cb, spec, trials, gen)
        n2n3 = spec.action_sizes[1] * spec.action_sizes[2]
        x1 = _seq_codes(letters // n2n3, spec.action_sizes[0])
        plugin, lo, hi = _secrecy_interval(x1, i, cb.sizes[0], trials, zq)
    else:
        if q is None:
            raise ValueError("a target distribution is required")
        letter_pmf = _target_letter_pmf(q, spec)
        if kind == "intermediate":
            letters = sample_intermediate(cb, spec, trials, gen)[3]
        else:
            t = sample_protocol(cb, spec, q, trials, gen)
            letters = (t.x1 * spec.action_sizes[1] + t.x2) * spec.action_sizes[2] + t.x3
        cells, counts = np.unique(_seq_codes(letters, letter_size), return_counts=True)
        target = _iid_prob_of_codes(cells, letter_pmf, n)
        plugin, lo, hi = _known_target_interval(counts, trials, target, zq)
    lo, hi = max(0.0, lo), min(1.0, hi)
    if hi < lo:
        lo = hi = min(1.0, max(0.0, plugin))
    return MCEstimate((lo + hi) / 2.0, (hi - lo) / 2.0, min(1.0, plugin), int(trials), kind, confidence)


# --------------------------------------------------------------------------
# reports


@dataclass
class SimulationReport:
    """Gaps measured for one codebook, with the scheme's rate thresholds."""

    config: CodeConfig
    seed: int
    mode: str
    resolvability_gap: float | None = None
    secrecy_gap: float | None = None
    protocol_gap: float | None = None
    half_widths: dict = field(default_factory=dict)
    trials: int | None = None
    resolvability_thresholds: dict = field(default_factory=dict)
    secrecy_thresholds: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    runtime_s: float | None = None

    def to_json(self) -> dict:
        l1 = lambda g: None if g is None else 2.0 * g
        out = {
            "config": self.config.to_json(),
            "seed": self.seed,
            "mode": self.mode,
            "trials": self.trials,
            "tv": {"resolvability": self.resolvability_gap, "secrecy": self.secrecy_gap,
                   "protocol": self.protocol_gap},
            "l1": {"resolvability": l1(self.resolvability_gap), "secrecy": l1(self.secrecy_gap),
                   "protocol": l1(self.protocol_gap)},
            "half_widths": dict(sorted(self.half_widths.items())),
            "thresholds": {"resolvability": self.resolvability_thresholds,
                           "secrecy": self.secrecy_thresholds},
            "errors": dict(sorted(self.errors.items())),
        }
        if self.runtime_s is not None:
            out["runtime_s"] = self.runtime_s
        return out


GAP_KINDS = ("resolvability", "secrecy", "protocol")


def simulate(spec: SchemeSpec, config: CodeConfig, q: JointPmf, seed: int, mode: str = "exact",
             trials: int = 100_000, budget: float | None = None, gaps=GAP_KINDS) -> SimulationReport:
    """Draw a codebook from ``seed`` and measure the requested gaps.

    In exact mode a gap whose evaluation exceeds the budget is left as None
    and the reason is recorded in ``errors``. Monte Carlo draws use a
    generator derived from ``seed`` and independent of the codebook draw.
    """
    from .region import resolvability_thresholds, secrecy_thresholds

    if mode not in ("exact", "mc"):
        raise ValueError("mode must be 'exact' or 'mc'")
    if mode == "mc" and (int(trials) != trials or trials < 1):
        raise ValueError("Monte Carlo mode needs trials >= 1")
    budget = default_budget() if budget is None else float(budget)
    report = SimulationReport(config, int(seed), mode, trials=int(trials) if mode == "mc" else None,
                              resolvability_thresholds=resolvability_thresholds(spec),
                              secrecy_thresholds=secrecy_thresholds(spec))
    try:
        cb = generate_codebook(spec, config, int(seed))
    except ResourceBudgetError as exc:
        for g in gaps:
            report.errors[g] = str(exc)
        return report
    mc_rng = np.random.default_rng([int(seed), 1])
    for g in gaps:
        try:
            if mode == "exact":
                if g == "resolvability":
                    val = resolvability_gap(cb, spec, config, q, budget)
                elif g == "secrecy":
                    val = secrecy_gap(cb, spec, config, budget)
                else:
                    val = protocol_gap(cb, spec, config, q, budget)
            else:
                kind = {"resolvability": "intermediate", "secrecy": "secrecy", "protocol": "protocol"}[g]
                est = monte_carlo_gap(spec, config, q, trials, mc_rng, codebook=cb, kind=kind)
                val = est.estimate
                report.half_widths[g] = est.half_width
        except ResourceBudgetError as exc:
            report.errors[g] = str(exc)
            continue
        setattr(report, f"{g}_gap", float(val))
    return report


__all__ = [
    "CodeConfig", "Codebook", "InducedHat", "InducedTilde", "MCEstimate", "ProtocolTrace",
    "SimulationReport", "generate_codebook", "induced_hat_distribution", "induced_tilde_distribution",
    "induced_tilde_table", "mixture_of_products", "monte_carlo_gap", "posterior_m12", "protocol_gap",
    "resolvability_gap", "run_line_protocol", "sample_intermediate", "sample_protocol", "secrecy_gap",
    "simulate", "x1_m0_table",
]
