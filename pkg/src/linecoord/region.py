"""Rate regions for coordination over the line network 1 -> 2 -> 3.

Regions are intersections of half-spaces ``a . (R0, R12, R23) >= bound``
with 0/1 coefficient patterns. They are stored exactly; queries are
membership tests and bound look-ups.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .dist import JointPmf, entropy, is_markov_chain, marginal, mutual_information
from .errors import PreconditionError
from .scheme import (
    U, V, W, X1, X2, X3, ACTIONS, SchemeSpec, feasible_templates, padded_corollary_scheme,
    refinement_scheme, corollary_scheme,
)

RATE_AXES = ("R0", "R12", "R23")
SWAPPED_AXES = ("R0", "R13", "R32")


@dataclass(frozen=True)
class RatePoint:
    r0: float
    r12: float
    r23: float

    def __post_init__(self):
        for v in (self.r0, self.r12, self.r23):
            if not v >= 0:
                raise ValueError("rates must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array([self.r0, self.r12, self.r23], dtype=np.float64)


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[int, int, int]
    bound: float
    label: str

    def satisfied(self, rates: np.ndarray, slack: float = 0.0) -> bool:
        return float(np.dot(self.coeffs, rates)) >= self.bound - slack

    def to_json(self) -> dict:
        return {"coeffs": list(self.coeffs), "bound": self.bound, "label": self.label}

    @classmethod
    def from_json(cls, obj) -> "Constraint":
        return cls(tuple(int(c) for c in obj["coeffs"]), float(obj["bound"]), str(obj.get("label", "")))


@dataclass(frozen=True)
class RateRegion:
    """Conjunction of half-space constraints over three rate coordinates.

    ``axes`` names the coordinates; it is ``("R0", "R12", "R23")`` except
    for the swapped-topology region, whose links are 1 -> 3 and 3 -> 2.
    """

    constraints: tuple[Constraint, ...]
    description: str = ""
    axes: tuple[str, str, str] = RATE_AXES

    def __post_init__(self):
        for c in self.constraints:
            if len(c.coeffs) != 3 or any(a not in (0, 1) for a in c.coeffs):
                raise ValueError(f"coefficients must be a 0/1 triple, got {c.coeffs}")
            if not (math.isfinite(c.bound) and c.bound >= 0):
                raise ValueError(f"bounds must be finite and nonnegative, got {c.bound}")

    def __iter__(self) -> Iterator[Constraint]:
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)

    def bound(self, label: str) -> float:
        for c in self.constraints:
            if c.label == label or c.label.split(":", 1)[-1] == label:
                return c.bound
        raise KeyError(label)

    def bounds(self) -> dict[str, float]:
        return {c.label: c.bound for c in self.constraints}

    def contains(self, point, slack: float = 0.0) -> bool:
        return contains(self, point, slack)

    def to_json(self) -> list[dict]:
        return [c.to_json() for c in self.constraints]

    @classmethod
    def from_json(cls, obj, description: str = "", axes=RATE_AXES) -> "RateRegion":
        return cls(tuple(Constraint.from_json(c) for c in obj), description, tuple(axes))


def _point_array(point) -> np.ndarray:
    if isinstance(point, RatePoint):
        return point.as_array()
    arr = np.asarray(point, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError("a rate point has three coordinates")
    return arr


def contains(region: RateRegion, point, slack: float = 0.0) -> bool:
    """True iff ``point`` meets every constraint up to additive ``slack``."""
    rates = _point_array(point)
    return all(c.satisfied(rates, slack) for c in region.constraints)


def _target(q: JointPmf) -> JointPmf:
    if not isinstance(q, JointPmf) or q.nvars != 3:
        raise ValueError("target must be a JointPmf over three action variables")
    return q


def baseline_region(q: JointPmf) -> RateRegion:
    """Rates of the explicit-description code, which uses no common randomness."""
    q = _target(q)
    return RateRegion(
        (
            Constraint((1, 0, 0), 0.0, "baseline:R0"),
            Constraint((0, 1, 0), entropy(q, (0,)), "baseline:R12"),
            Constraint((0, 0, 1), entropy(q, (0, 1)), "baseline:R23"),
        ),
        "explicit description, no common randomness",
    )


@dataclass(frozen=True)
class AuxiliaryJoint:
    """A pmf over ``(U, V, W, X1, X2, X3)`` with its declared auxiliary sizes.

    ``target`` is the action distribution the joint is meant to reproduce;
    it is needed for membership tests.
    """

    joint: JointPmf
    target: JointPmf | None = None
    scheme: SchemeSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.joint.nvars != 6:
            raise ValueError("an auxiliary joint has six variables (U, V, W, X1, X2, X3)")
        if self.target is not None and self.target.shape != self.joint.shape[3:]:
            raise ValueError("target alphabets do not match the action alphabets")

    @property
    def cards(self) -> tuple[int, int, int]:
        return self.joint.shape[:3]

    def action_marginal(self) -> JointPmf:
        return marginal(self.joint, ACTIONS)

    @classmethod
    def from_scheme(cls, scheme: SchemeSpec, target: JointPmf | None = None) -> "AuxiliaryJoint":
        return cls(scheme.joint(), target if target is not None else scheme.target(), scheme)

    @classmethod
    def from_assignment(cls, q: JointPmf, u_of, v_of, w_of, cards) -> "AuxiliaryJoint":
        """Joint where each auxiliary is a deterministic function of the actions.

        ``u_of(x1, x2, x3)`` etc. return labels in ``range(card)``.
        """
        q = _target(q)
        table = np.zeros(tuple(cards) + q.shape)
        for x in np.ndindex(q.shape):
            pr = q.probs[x]
            if pr > 0:
                table[(u_of(*x), v_of(*x), w_of(*x)) + x] += pr
        return cls(JointPmf(table), q)


def corollary_joint(q: JointPmf) -> AuxiliaryJoint:
    """U = X2, W = X3, V = X3."""
    return AuxiliaryJoint.from_scheme(corollary_scheme(q), q)


def _joint_of(p) -> JointPmf:
    if isinstance(p, AuxiliaryJoint):
        return p.joint
    if isinstance(p, SchemeSpec):
        return p.joint()
    if isinstance(p, JointPmf) and p.nvars == 6:
        return p
    raise ValueError("expected an AuxiliaryJoint, SchemeSpec or six-variable JointPmf")


def region_of(p) -> RateRegion:
    """The seven-constraint region induced by an auxiliary joint.

    The common-randomness constraint uses I(W; X1 X2 X3).
    """
    pj = _joint_of(p)
    mi = lambda a, b: mutual_information(pj, a, b)
    return RateRegion(
        (
            Constraint((1, 1, 1), mi((U, V, W), ACTIONS), "aux:R0+R12+R23"),
            Constraint((1, 1, 0), mi((U, W), ACTIONS), "aux:R0+R12"),
            Constraint((1, 0, 1), mi((V, W), ACTIONS), "aux:R0+R23"),
            Constraint((1, 0, 0), mi((W,), ACTIONS), "aux:R0"),
            Constraint((0, 1, 1), mi((U, V, W), (X1,)), "aux:R12+R23"),
            Constraint((0, 1, 0), mi((U, W), (X1,)), "aux:R12"),
            Constraint((0, 0, 1), mi((V, W), (X1,)), "aux:R23"),
        ),
        "auxiliary-variable region",
    )


def literal_r0_bound(p) -> float:
    """I(W; X2 X3): the common-randomness bound read with X1 omitted.

    Reported next to the I(W; X1 X2 X3) bound used by :func:`region_of`.
    """
    return mutual_information(_joint_of(p), (W,), (X2, X3))


def resolvability_thresholds(p) -> dict[str, float]:
    """Rate thresholds under which the codebook output approximates the target."""
    r = region_of(p)
    return {k: r.bound("aux:" + k) for k in ("R0+R12+R23", "R0+R12", "R0+R23", "R0")}


def secrecy_thresholds(p) -> dict[str, float]:
    """Rate thresholds under which the common randomness stays hidden from X1^n."""
    r = region_of(p)
    return {k: r.bound("aux:" + k) for k in ("R12+R23", "R12", "R23")}


def _resolve_target(p: AuxiliaryJoint, q):
    q = q if q is not None else (p.target if isinstance(p, AuxiliaryJoint) else None)
    if q is None:
        raise PreconditionError("membership tests need the target action distribution")
    return _target(q)


def in_S_out(p, q: JointPmf | None = None, tol: float = 1e-9) -> bool:
    """Outer-bound membership: X1 - UW - V X2 X3, X1 X2 U - VW - X3 and matching actions."""
    q = _resolve_target(p, q)
    pj = _joint_of(p)
    act = _target(marginal(pj, ACTIONS))
    if act.shape != q.shape or np.max(np.abs(act.probs - q.probs)) > tol:
        return False
    return is_markov_chain(pj, (X1,), (U, W), (V, X2, X3), tol) and is_markov_chain(
        pj, (X1, X2, U), (V, W), (X3,), tol
    )


def in_S_in(p, q: JointPmf | None = None, tol: float = 1e-9) -> bool:
    """Inner-bound membership: outer-bound conditions plus U - W - V."""
    return in_S_out(p, q, tol) and is_markov_chain(_joint_of(p), (U,), (W,), (V,), tol)


def star_region(q: JointPmf) -> RateRegion:
    """Optimal inter-agent rates when common randomness is unconstrained (R0 free)."""
    q = _target(q)
    return RateRegion(
        (
            Constraint((0, 1, 0), mutual_information(q, (1, 2), (0,)), "star:R12"),
            Constraint((0, 0, 1), mutual_information(q, (2,), (0,)), "star:R23"),
        ),
        "projection with unconstrained common randomness",
    )


@dataclass(frozen=True)
class TopologyComparison:
    matched: RateRegion
    swapped: RateRegion
    penalty: float

    def to_json(self) -> dict:
        return {
            "matched": self.matched.to_json(),
            "swapped": self.swapped.to_json(),
            "swapped_axes": list(self.swapped.axes),
            "penalty": self.penalty,
        }


def matched_vs_swapped(q: JointPmf, tol: float = 1e-9) -> TopologyComparison:
    """Compare the line 1 -> 2 -> 3 with the line 1 -> 3 -> 2 for a Markov target.

    Requires X1 - X2 - X3. The penalty is the extra rate on the second link
    of the swapped line, I(X2; X1) - I(X3; X1).
    """
    q = _target(q)
    if not is_markov_chain(q, (0,), (1,), (2,), tol):
        raise PreconditionError("matched/swapped comparison needs X1 - X2 - X3 to be a Markov chain")
    i21 = mutual_information(q, (1,), (0,))
    i31 = mutual_information(q, (2,), (0,))
    matched = RateRegion(
        (Constraint((0, 1, 0), i21, "matched:R12"), Constraint((0, 0, 1), i31, "matched:R23")),
        "matched topology 1->2->3",
    )
    swapped = RateRegion(
        (Constraint((0, 1, 0), i21, "swapped:R13"), Constraint((0, 0, 1), i21, "swapped:R32")),
        "swapped topology 1->3->2",
        SWAPPED_AXES,
    )
    penalty = i21 - i31
    if abs(penalty) < 1e-12:
        penalty = 0.0
    return TopologyComparison(matched, swapped, penalty)


@dataclass
class InnerBoundSample:
    """Accepted members of the inner-bound set with their regions.

    Iterating yields ``(AuxiliaryJoint, RateRegion)`` pairs.
    """

    members: list
    attempts: int
    rejected: int
    templates: tuple[str, ...]
    diagnostic: str = ""

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def __getitem__(self, i):
        return self.members[i]


def default_cards(q: JointPmf) -> tuple[int, int, int]:
    """(|X2|, |X3|, |X3|), which always admits the corollary construction."""
    return (q.shape[1], q.shape[2], q.shape[2])


def inner_bound_sample(q: JointPmf, cards=None, samples: int = 100, rng=None,
                       include_corollary: bool = True, marginal_tol: float = 1e-6) -> InnerBoundSample:
    """Draw members of the inner-bound set for target ``q`` and their regions.

    Each draw builds ``p(w), p(u|w), p(v|w)`` and the three action channels
    from a randomly chosen refinement template, then keeps the draw iff its
    action marginal matches ``q`` within ``marginal_tol``. When the
    cardinalities allow it, the corollary construction is emitted first.
    """
    q = _target(q)
    cards = tuple(int(c) for c in (cards if cards is not None else default_cards(q)))
    if len(cards) != 3 or min(cards) < 1:
        raise ValueError("cards must be three positive integers")
    rng = np.random.default_rng(rng)
    templates = tuple(feasible_templates(q, cards))
    members, rejected, attempts = [], 0, 0

    def consider(scheme):
        nonlocal rejected
        aux = AuxiliaryJoint.from_scheme(scheme, q)
        if np.max(np.abs(aux.action_marginal().probs - q.probs)) <= marginal_tol:
            members.append((aux, region_of(aux)))
        else:
            rejected += 1

    if include_corollary:
        seed_scheme = padded_corollary_scheme(q, cards)
        if seed_scheme is not None:
            attempts += 1
            consider(seed_scheme)
    if templates:
        for _ in range(int(samples)):
            attempts += 1
            consider(refinement_scheme(q, cards, rng, templates[rng.integers(len(templates))]))
    diagnostic = ""
    if not members:
        diagnostic = (
            f"no member found for cards {cards}; constructions need |U| >= |X1| or |X2| "
            f"with |W| >= |X3|, or |W| >= |X1||X2||X3|, or a product target"
        )
    return InnerBoundSample(members, attempts, rejected, templates, diagnostic)
