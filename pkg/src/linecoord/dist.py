"""Exact probability machinery over products of finite alphabets.

Every information quantity is in bits. A :class:`JointPmf` stores a dense
table whose axes are the variables, so variable ``i`` is axis ``i`` and
subsets of variables are given as sequences of axis indices.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConditioningError, ResourceBudgetError

NORMALIZATION_TOL = 1e-9
CLAMP_TOL = 1e-12
DEFAULT_MATERIALIZE_CAP = 1 << 24


@dataclass(frozen=True)
class Alphabet:
    """A finite action set ``{0, ..., size - 1}`` with optional labels."""

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"alphabet size must be a positive integer, got {self.size!r}")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.size:
                raise ValueError("number of labels must equal the alphabet size")
            if len(set(labels)) != len(labels):
                raise ValueError("alphabet labels must be unique")
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "size", int(self.size))


@dataclass(frozen=True)
class TypicalityParams:
    delta: float = 0.1

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError("typicality slack delta must be nonnegative")


def _as_alphabets(sizes_or_alphabets) -> tuple[Alphabet, ...]:
    out = []
    for a in sizes_or_alphabets:
        out.append(a if isinstance(a, Alphabet) else Alphabet(int(a)))
    return tuple(out)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


class JointPmf:
    """Probability mass function over a product of finite alphabets.

    Parameters
    ----------
    probs : array_like
        Either a table whose shape is the tuple of alphabet sizes, or a flat
        row-major vector when ``alphabets`` is given.
    alphabets : sequence of int or Alphabet, optional
        Alphabet of each variable. Inferred from ``probs.shape`` if omitted.
    names : sequence of str, optional
        Variable names, used only for display.
    atol : float
        Tolerance on the total mass.
    """

    __slots__ = ("_probs", "_alphabets", "_names")

    def __init__(self, probs, alphabets=None, names=None, atol=NORMALIZATION_TOL):
        arr = np.asarray(probs, dtype=np.float64)
        if alphabets is None:
            if arr.ndim == 0:
                raise ValueError("a JointPmf needs at least one variable")
            alphabets = arr.shape
        alphabets = _as_alphabets(alphabets)
        if not alphabets:
            raise ValueError("a JointPmf needs at least one variable")
        shape = tuple(a.size for a in alphabets)
        if arr.size != math.prod(shape):
            raise ValueError(
                f"table has {arr.size} entries but alphabets {shape} need {math.prod(shape)}"
            )
        arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("probabilities must be finite and nonnegative")
        total = arr.sum()
        if abs(total - 1.0) > atol:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != len(shape):
                raise ValueError("one name per variable is required")
        self._probs = _readonly(arr)
        self._alphabets = alphabets
        self._names = names

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def alphabets(self) -> tuple[Alphabet, ...]:
        return self._alphabets

    @property
    def names(self):
        return self._names

    @property
    def shape(self) -> tuple[int, ...]:
        return self._probs.shape

    @property
    def nvars(self) -> int:
        return self._probs.ndim

    def prob(self, outcome: Sequence[int]) -> float:
        return float(self._probs[tuple(int(o) for o in outcome)])

    def flat(self) -> np.ndarray:
        return self._probs.reshape(-1)

    def __repr__(self):
        return f"JointPmf(shape={self.shape})"

    def __eq__(self, other):
        if not isinstance(other, JointPmf):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._probs, other._probs)

    def __hash__(self):
        return hash((self.shape, self._probs.tobytes()))

    def allclose(self, other: "JointPmf", atol: float = 1e-12) -> bool:
        return self.shape == other.shape and bool(np.allclose(self._probs, other._probs, rtol=0, atol=atol))

    @classmethod
    def uniform(cls, sizes) -> "JointPmf":
        sizes = tuple(int(s) for s in sizes)
        return cls(np.full(sizes, 1.0 / math.prod(sizes)))

    @classmethod
    def point_mass(cls, sizes, outcome) -> "JointPmf":
        table = np.zeros(tuple(int(s) for s in sizes))
        table[tuple(outcome)] = 1.0
        return cls(table)

    @classmethod
    def product(cls, *pmfs) -> "JointPmf":
        """Independent combination of pmfs (1-D arrays or JointPmf)."""
        table = np.ones(())
        for p in pmfs:
            arr = p.probs if isinstance(p, JointPmf) else np.asarray(p, dtype=np.float64)
            table = np.multiply.outer(table, arr)
        return cls(table)

    def to_json(self) -> dict:
        out = {"alphabets": [a.size for a in self._alphabets], "probs": self.flat().tolist()}
        if any(a.labels is not None for a in self._alphabets):
            out["labels"] = [list(a.labels) if a.labels is not None else None for a in self._alphabets]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "JointPmf":
        try:
            sizes = obj["alphabets"]
            probs = obj["probs"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"distribution JSON missing field: {exc}") from None
        labels = obj.get("labels")
        if labels is not None:
            if len(labels) != len(sizes):
                raise ValueError("'labels' must have one entry per alphabet")
            alphabets = [Alphabet(int(s), lab) for s, lab in zip(sizes, labels)]
        else:
            alphabets = [Alphabet(int(s)) for s in sizes]
        return cls(np.asarray(probs, dtype=np.float64), alphabets)


class Channel:
    """Conditional pmf ``W(y | x_1, ..., x_k)`` stored as a table of shape
    ``(*input_sizes, output_size)``."""

    __slots__ = ("_rows", "_input_alphabets", "_output_alphabet")

    def __init__(self, rows, input_sizes=None, output_size=None, atol=NORMALIZATION_TOL):
        arr = np.asarray(rows, dtype=np.float64)
        if input_sizes is None:
            if arr.ndim < 2:
                raise ValueError("channel table needs at least one input axis and one output axis")
            input_sizes = arr.shape[:-1]
            output_size = arr.shape[-1]
        ins = _as_alphabets(input_sizes)
        out = output_size if isinstance(output_size, Alphabet) else Alphabet(int(output_size))
        shape = tuple(a.size for a in ins) + (out.size,)
        if arr.size != math.prod(shape):
            raise ValueError(f"channel table has {arr.size} entries, expected shape {shape}")
        arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("channel entries must be finite and nonnegative")
        sums = arr.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > atol):
            raise ValueError("every channel row must sum to 1")
        self._rows = _readonly(arr)
        self._input_alphabets = ins
        self._output_alphabet = out

    @property
    def rows(self) -> np.ndarray:
        return self._rows

    @property
    def input_alphabets(self):
        return self._input_alphabets

    @property
    def output_alphabet(self):
        return self._output_alphabet

    @property
    def input_sizes(self) -> tuple[int, ...]:
        return self._rows.shape[:-1]

    @property
    def output_size(self) -> int:
        return self._rows.shape[-1]

    def row(self, *inputs) -> np.ndarray:
        return self._rows[tuple(int(i) for i in inputs)]

    def __repr__(self):
        return f"Channel(inputs={self.input_sizes}, output={self.output_size})"

    @classmethod
    def deterministic(cls, input_sizes, output_size, fn) -> "Channel":
        input_sizes = tuple(int(s) for s in input_sizes)
        table = np.zeros(input_sizes + (int(output_size),))
        for x in itertools.product(*(range(s) for s in input_sizes)):
            table[x + (int(fn(*x)),)] = 1.0
        return cls(table)

    def to_json(self) -> dict:
        return {
            "inputs": list(self.input_sizes),
            "output": self.output_size,
            "rows": self._rows.reshape(-1, self.output_size).tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Channel":
        try:
            inputs = [int(s) for s in obj["inputs"]]
            output = int(obj["output"])
            rows = obj["rows"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"channel JSON missing field: {exc}") from None
        return cls(np.asarray(rows, dtype=np.float64), inputs, output)


def _check_indices(p: JointPmf, idx: Iterable[int], what="variable") -> tuple[int, ...]:
    out = []
    for i in idx:
        if int(i) != i or not 0 <= i < p.nvars:
            raise ValueError(f"invalid {what} index {i!r} for a pmf over {p.nvars} variables")
        out.append(int(i))
    if len(set(out)) != len(out):
        raise ValueError(f"repeated {what} index in {out}")
    return tuple(out)


def _normalize_subset(subset) -> tuple[int, ...]:
    if isinstance(subset, (int, np.integer)):
        return (int(subset),)
    return tuple(subset)


def marginal(p: JointPmf, keep) -> JointPmf:
    """Marginal on the variables in ``keep`` (kept in increasing index order)."""
    keep = _check_indices(p, _normalize_subset(keep))
    if not keep:
        raise ValueError("keep must name at least one variable")
    keep_sorted = tuple(sorted(keep))
    drop = tuple(i for i in range(p.nvars) if i not in keep_sorted)
    table = p.probs.sum(axis=drop) if drop else p.probs
    return JointPmf(table, [p.alphabets[i] for i in keep_sorted])


def _marginal_table(p: JointPmf, order: tuple[int, ...]) -> np.ndarray:
    """Marginal table with axes in exactly the given order."""
    drop = tuple(i for i in range(p.nvars) if i not in order)
    table = p.probs.sum(axis=drop) if drop else p.probs
    kept = sorted(order)
    return np.transpose(table, [kept.index(i) for i in order])


def condition(p: JointPmf, given, values) -> JointPmf:
    """Conditional pmf of the remaining variables given ``given = values``."""
    given = _check_indices(p, _normalize_subset(given))
    values = _normalize_subset(values)
    if len(values) != len(given):
        raise ValueError("one value per conditioning variable is required")
    if len(given) >= p.nvars:
        raise ValueError("at least one variable must remain after conditioning")
    index = [slice(None)] * p.nvars
    for i, v in zip(given, values):
        if not 0 <= int(v) < p.shape[i]:
            raise ValueError(f"value {v} outside alphabet of variable {i}")
        index[i] = int(v)
    slab = p.probs[tuple(index)]
    mass = slab.sum()
    if mass <= 0:
        raise ConditioningError(f"conditioning event {dict(zip(given, values))} has probability 0")
    rest = [p.alphabets[i] for i in range(p.nvars) if i not in given]
    return JointPmf(slab / mass, rest)


def _entropy_of_table(table: np.ndarray) -> float:
    t = table[table > 0]
    return float(-np.sum(t * np.log2(t)))


def entropy(p: JointPmf, subset=None) -> float:
    """Shannon entropy (bits) of the marginal on ``subset`` (all variables if None)."""
    if subset is None:
        return _entropy_of_table(p.probs)
    subset = _check_indices(p, _normalize_subset(subset))
    if not subset:
        raise ValueError("subset must be nonempty")
    return max(0.0, _entropy_of_table(_marginal_table(p, subset)))


def _clamp(v: float) -> float:
    return 0.0 if abs(v) < CLAMP_TOL else v


def mutual_information(p: JointPmf, a, b) -> float:
    """I(A; B) in bits."""
    a = _check_indices(p, _normalize_subset(a))
    b = _check_indices(p, _normalize_subset(b))
    if not a or not b:
        raise ValueError("both variable sets must be nonempty")
    if set(a) & set(b):
        raise ValueError(f"variable sets {a} and {b} overlap")
    v = entropy(p, a) + entropy(p, b) - entropy(p, a + b)
    return _clamp(v)


def conditional_mutual_information(p: JointPmf, a, b, c) -> float:
    """I(A; B | C) in bits; ``c`` may be empty."""
    a = _check_indices(p, _normalize_subset(a))
    b = _check_indices(p, _normalize_subset(b))
    c = _check_indices(p, _normalize_subset(c))
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise ValueError("variable sets must be disjoint")
    if not c:
        return mutual_information(p, a, b)
    v = entropy(p, a + c) + entropy(p, b + c) - entropy(p, a + b + c) - entropy(p, c)
    return _clamp(v)


def _tables_for_distance(p, q):
    if isinstance(p, JointPmf) and isinstance(q, JointPmf):
        if p.shape != q.shape:
            raise ValueError(f"alphabet mismatch: {p.shape} vs {q.shape}")
        return p.probs, q.probs
    pa, qa = np.asarray(getattr(p, "probs", p), float), np.asarray(getattr(q, "probs", q), float)
    if pa.shape != qa.shape:
        raise ValueError(f"alphabet mismatch: {pa.shape} vs {qa.shape}")
    return pa, qa


def l1_distance(p, q) -> float:
    pa, qa = _tables_for_distance(p, q)
    return float(np.abs(pa - qa).sum())


def total_variation(p, q) -> float:
    """Total variation distance, half the L1 distance; accepts pmfs or arrays."""
    return min(1.0, 0.5 * l1_distance(p, q))


def is_markov_chain(p: JointPmf, a, b, c, tol: float = 1e-9) -> bool:
    """Whether A - B - C holds, i.e. p(a,b,c) p(b) = p(a,b) p(b,c) within ``tol``.

    An empty ``b`` tests plain independence of A and C.
    """
    a = _check_indices(p, _normalize_subset(a))
    b = _check_indices(p, _normalize_subset(b))
    c = _check_indices(p, _normalize_subset(c))
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise ValueError("variable sets must be disjoint")
    if not a or not c:
        raise ValueError("end sets of a Markov chain must be nonempty")
    table = _marginal_table(p, a + b + c)
    na = math.prod(p.shape[i] for i in a)
    nb = math.prod(p.shape[i] for i in b)
    nc = math.prod(p.shape[i] for i in c)
    abc = table.reshape(na, nb, nc)
    pb = abc.sum(axis=(0, 2))
    pab = abc.sum(axis=2)
    pbc = abc.sum(axis=0)
    lhs = abc * pb[None, :, None]
    rhs = pab[:, :, None] * pbc[None, :, :]
    return bool(np.max(np.abs(lhs - rhs)) <= tol)


class ProductPmf:
    """The i.i.d. n-fold extension of a pmf, evaluated lazily.

    Sequences are passed as one length-``n`` sequence per variable of the
    base pmf, i.e. an array of shape ``(nvars, n)``.
    """

    def __init__(self, base: JointPmf, n: int, cap: int = DEFAULT_MATERIALIZE_CAP):
        if int(n) != n or n < 1:
            raise ValueError("n must be a positive integer")
        self.base = base
        self.n = int(n)
        self.cap = int(cap)

    def _letters(self, seqs) -> np.ndarray:
        arr = np.asarray(seqs, dtype=np.int64)
        if arr.ndim == 1 and self.base.nvars == 1:
            arr = arr[None, :]
        if arr.shape != (self.base.nvars, self.n):
            raise ValueError(f"expected {self.base.nvars} sequences of length {self.n}")
        return arr.T

    def prob(self, seqs) -> float:
        letters = self._letters(seqs)
        for j, s in enumerate(self.base.shape):
            if np.any(letters[:, j] < 0) or np.any(letters[:, j] >= s):
                raise ValueError("symbol outside its alphabet")
        vals = self.base.probs[tuple(letters.T)]
        return float(np.prod(vals))

    def log2prob(self, seqs) -> float:
        letters = self._letters(seqs)
        vals = self.base.probs[tuple(letters.T)]
        if np.any(vals <= 0):
            return -math.inf
        return float(np.sum(np.log2(vals)))

    @property
    def table_size(self) -> int:
        return math.prod(self.base.shape) ** self.n

    def materialize(self) -> np.ndarray:
        """Dense table of shape ``(K,) * n`` with K the base outcome count.

        The letter outcome at each position is the row-major index into the
        base table.
        """
        if self.table_size > self.cap:
            raise ResourceBudgetError(
                f"n-fold table has {self.table_size} entries, above the cap {self.cap}",
                required=self.table_size,
                budget=self.cap,
            )
        return iid_table(self.base.flat(), self.n)


def iid_table(letter_pmf: np.ndarray, n: int) -> np.ndarray:
    """Dense ``(K,) * n`` table of the n-fold product of a 1-D pmf."""
    letter_pmf = np.asarray(letter_pmf, dtype=np.float64)
    table = letter_pmf
    for _ in range(n - 1):
        table = np.multiply.outer(table, letter_pmf)
    return table


def product_extension(p: JointPmf, n: int, cap: int = DEFAULT_MATERIALIZE_CAP) -> ProductPmf:
    return ProductPmf(p, n, cap)


def sample(p, rng: np.random.Generator, size=None):
    """Draw from a JointPmf (returns outcome tuples) or a 1-D pmf row (returns ints)."""
    if isinstance(p, JointPmf):
        flat = p.flat()
        idx = rng.choice(flat.size, size=size, p=flat)
        if size is None:
            return tuple(int(v) for v in np.unravel_index(int(idx), p.shape))
        return np.stack(np.unravel_index(idx, p.shape), axis=-1)
    row = np.asarray(p, dtype=np.float64)
    if row.ndim != 1:
        raise ValueError("expected a JointPmf or a single pmf row")
    idx = rng.choice(row.size, size=size, p=row / row.sum())
    return int(idx) if size is None else idx


def sample_rows(rows: np.ndarray, inputs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorised draw ``y[k] ~ rows[inputs[k]]`` by inverse-CDF lookup.

    ``rows`` has shape ``(S, K)`` and ``inputs`` holds indices into its first axis.
    """
    cdf = np.cumsum(rows, axis=-1)
    cdf[:, -1] = 1.0
    u = rng.random(np.shape(inputs))
    c = cdf[inputs]
    return np.minimum((u[..., None] >= c).sum(axis=-1), rows.shape[-1] - 1)


def is_typical(seqs, p: JointPmf, params=TypicalityParams()) -> bool:
    """Weak typicality: |-(1/n) log2 p^n(seqs) - H(p)| <= delta."""
    delta = params.delta if isinstance(params, TypicalityParams) else float(params)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    arr = np.asarray(seqs, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[0] != p.nvars:
        raise ValueError(f"expected {p.nvars} sequences, got {arr.shape[0]}")
    n = arr.shape[1]
    if n < 1:
        raise ValueError("sequences must be nonempty")
    lp = ProductPmf(p, n).log2prob(arr)
    if not math.isfinite(lp):
        return False
    return abs(-lp / n - entropy(p)) <= delta
