"""Reference targets and schemes shipped with the package."""
from __future__ import annotations

import numpy as np

from .dist import JointPmf
from .region import region_of
from .scheme import SchemeSpec, corollary_scheme


def binary_symmetric(flip: float) -> np.ndarray:
    return np.array([[1.0 - flip, flip], [flip, 1.0 - flip]])


def independent_uniform() -> JointPmf:
    return JointPmf.uniform((2, 2, 2))


def identical_bits() -> JointPmf:
    t = np.zeros((2, 2, 2))
    t[0, 0, 0] = t[1, 1, 1] = 0.5
    return JointPmf(t)


def cascade_bsc(a: float = 0.1, b: float = 0.1) -> JointPmf:
    """X1 uniform, X2 = X1 through a BSC(a), X3 = X2 through a BSC(b)."""
    if not (0 <= a <= 1 and 0 <= b <= 1):
        raise ValueError("flip probabilities must lie in [0, 1]")
    return JointPmf(np.einsum("a,ab,bc->abc", [0.5, 0.5], binary_symmetric(a), binary_symmetric(b)))


TARGETS = {
    "independent-uniform": independent_uniform,
    "identical-bits": identical_bits,
    "cascade-bsc": cascade_bsc,
}


def builtin_target(name: str) -> JointPmf:
    """Look up a target by name; ``cascade-bsc:A,B`` sets the flip rates."""
    base, _, args = name.partition(":")
    if base not in TARGETS:
        raise KeyError(f"unknown builtin target {name!r}; choose from {sorted(TARGETS)}")
    if args:
        if base != "cascade-bsc":
            raise ValueError(f"target {base!r} takes no parameters")
        try:
            a, b = (float(x) for x in args.split(","))
        except ValueError:
            raise ValueError(f"expected cascade-bsc:A,B, got {name!r}") from None
        return cascade_bsc(a, b)
    return TARGETS[base]()


SCHEMES = ("corollary",)


def builtin_scheme(name: str, target: JointPmf) -> SchemeSpec:
    if name != "corollary":
        raise KeyError(f"unknown builtin scheme {name!r}; choose from {list(SCHEMES)}")
    return corollary_scheme(target)


def reference_scheme() -> tuple[JointPmf, SchemeSpec]:
    """Cascade BSC(0.1, 0.1) target with the U = X2, V = W = X3 scheme; all alphabets binary."""
    q = cascade_bsc(0.1, 0.1)
    return q, corollary_scheme(q)


def rates_above_resolvability(spec: SchemeSpec, margin: float = 0.25) -> tuple[float, float, float]:
    """Smallest rate triple meeting every codebook-resolvability threshold with ``margin`` to spare.

    R0 is set first, then R12 and R23, then R12 absorbs any shortfall of the
    sum constraint.
    """
    r = region_of(spec)
    r0 = r.bound("R0") + margin
    r12 = max(0.0, r.bound("R0+R12") + margin - r0)
    r23 = max(0.0, r.bound("R0+R23") + margin - r0)
    short = r.bound("R0+R12+R23") + margin - (r0 + r12 + r23)
    if short > 0:
        r12 += short
    return (r0, r12, r23)


def rates_below_sum(spec: SchemeSpec, margin: float = 0.25) -> tuple[float, float, float]:
    """The above-threshold triple scaled so its sum sits ``margin`` below I(UVW; X1X2X3)."""
    above = rates_above_resolvability(spec, margin)
    target = region_of(spec).bound("R0+R12+R23") - margin
    if target <= 0:
        return (0.0, 0.0, 0.0)
    scale = target / sum(above)
    return tuple(x * scale for x in above)


def rates_above_secrecy(spec: SchemeSpec, r0: float, margin: float = 0.25) -> tuple[float, float, float]:
    """Rate triple with the given R0 meeting every secrecy threshold with ``margin`` to spare."""
    r = region_of(spec)
    r12 = r.bound("R12") + margin
    r23 = r.bound("R23") + margin
    short = r.bound("R12+R23") + margin - (r12 + r23)
    if short > 0:
        r12 += short
    return (r0, r12, r23)
