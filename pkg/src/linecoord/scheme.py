"""Coding-scheme distributions p(w) p(u|w) p(v|w) W(x1|u,w) W(x2|u,v,w) W(x3|v,w).

A :class:`SchemeSpec` fixes the auxiliary layers and the three action
channels. Its six-variable joint is ordered ``(U, V, W, X1, X2, X3)``; the
index constants below name those axes.
"""
from __future__ import annotations

import math

import numpy as np

from .dist import Channel, JointPmf, marginal

U, V, W, X1, X2, X3 = range(6)
ACTIONS = (X1, X2, X3)
VARIABLE_NAMES = ("U", "V", "W", "X1", "X2", "X3")


def _pmf_vector(p) -> np.ndarray:
    arr = np.asarray(p.probs if isinstance(p, JointPmf) else p, dtype=np.float64).reshape(-1)
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-9:
        raise ValueError("p_W must be a pmf")
    return arr


class SchemeSpec:
    """Auxiliary distributions and action channels of a superposition code.

    Parameters
    ----------
    p_W : array_like or JointPmf
        Distribution of the common-randomness layer W.
    p_U_given_W, p_V_given_W : Channel
        Layer channels with the single input W.
    ch_X1 : Channel
        Inputs ``(U, W)``.
    ch_X2 : Channel
        Inputs ``(U, V, W)``.
    ch_X3 : Channel
        Inputs ``(V, W)``.
    """

    def __init__(self, p_W, p_U_given_W: Channel, p_V_given_W: Channel,
                 ch_X1: Channel, ch_X2: Channel, ch_X3: Channel, name: str | None = None):
        self.p_W = _pmf_vector(p_W)
        self.p_U_given_W = p_U_given_W
        self.p_V_given_W = p_V_given_W
        self.ch_X1 = ch_X1
        self.ch_X2 = ch_X2
        self.ch_X3 = ch_X3
        self.name = name
        nw = self.p_W.size
        nu = p_U_given_W.output_size
        nv = p_V_given_W.output_size
        checks = [
            (p_U_given_W.input_sizes, (nw,), "p_U_given_W"),
            (p_V_given_W.input_sizes, (nw,), "p_V_given_W"),
            (ch_X1.input_sizes, (nu, nw), "ch_X1"),
            (ch_X2.input_sizes, (nu, nv, nw), "ch_X2"),
            (ch_X3.input_sizes, (nv, nw), "ch_X3"),
        ]
        for got, want, label in checks:
            if tuple(got) != want:
                raise ValueError(f"{label} has input sizes {tuple(got)}, expected {want}")
        self._joint = None

    @property
    def cards(self) -> tuple[int, int, int]:
        """Auxiliary cardinalities ``(|U|, |V|, |W|)``."""
        return (self.p_U_given_W.output_size, self.p_V_given_W.output_size, self.p_W.size)

    @property
    def action_sizes(self) -> tuple[int, int, int]:
        return (self.ch_X1.output_size, self.ch_X2.output_size, self.ch_X3.output_size)

    def joint(self) -> JointPmf:
        if self._joint is None:
            table = np.einsum(
                "w,wu,wv,uwa,uvwb,vwc->uvwabc",
                self.p_W,
                self.p_U_given_W.rows,
                self.p_V_given_W.rows,
                self.ch_X1.rows,
                self.ch_X2.rows,
                self.ch_X3.rows,
            )
            self._joint = JointPmf(table, names=VARIABLE_NAMES)
        return self._joint

    def target(self) -> JointPmf:
        """Action marginal p(x1, x2, x3) that the scheme simulates."""
        return marginal(self.joint(), ACTIONS)

    def to_json(self) -> dict:
        out = {
            "p_W": self.p_W.tolist(),
            "p_U_given_W": self.p_U_given_W.to_json(),
            "p_V_given_W": self.p_V_given_W.to_json(),
            "ch_X1": self.ch_X1.to_json(),
            "ch_X2": self.ch_X2.to_json(),
            "ch_X3": self.ch_X3.to_json(),
        }
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SchemeSpec":
        try:
            p_w = obj["p_W"]
            if isinstance(p_w, dict):
                p_w = JointPmf.from_json(p_w).flat()
            return cls(
                p_w,
                Channel.from_json(obj["p_U_given_W"]),
                Channel.from_json(obj["p_V_given_W"]),
                Channel.from_json(obj["ch_X1"]),
                Channel.from_json(obj["ch_X2"]),
                Channel.from_json(obj["ch_X3"]),
                name=obj.get("name"),
            )
        except KeyError as exc:
            raise ValueError(f"scheme JSON missing field {exc}") from None


def _conditional_rows(table: np.ndarray, n_cond_axes: int) -> np.ndarray:
    """Normalise the trailing axes of ``table`` given its leading axes.

    Rows with zero mass become uniform; they are never reached with
    positive probability.
    """
    lead = table.shape[:n_cond_axes]
    flat = table.reshape(math.prod(lead), -1)
    sums = flat.sum(axis=1, keepdims=True)
    out = np.where(sums > 0, flat / np.where(sums > 0, sums, 1.0), 1.0 / flat.shape[1])
    return out.reshape(table.shape)


def _delta_channel(input_sizes, output_size, fn) -> Channel:
    return Channel.deterministic(input_sizes, output_size, fn)


def corollary_scheme(q: JointPmf) -> SchemeSpec:
    """Scheme with U = X2 and V = W = X3.

    X1 is produced from (U, W) through q(x1 | x2, x3); X2 and X3 copy U and V.
    """
    q = _as_target(q)
    n1, n2, n3 = q.shape
    q23 = q.probs.sum(axis=0)                      # (x2, x3)
    p_w = q23.sum(axis=0)                          # q(x3)
    p_u_given_w = _conditional_rows(q23.T.copy(), 1)  # q(x2 | x3), indexed [w, u]
    p_v_given_w = np.eye(n3)
    # q(x1 | x2, x3) indexed [u=x2, w=x3, x1]
    ch1 = _conditional_rows(np.transpose(q.probs, (1, 2, 0)).copy(), 2)
    return SchemeSpec(
        p_w,
        Channel(p_u_given_w),
        Channel(p_v_given_w),
        Channel(ch1),
        _delta_channel((n2, n3, n3), n2, lambda u, v, w: u),
        _delta_channel((n3, n3), n3, lambda v, w: v),
        name="corollary",
    )


def _as_target(q: JointPmf) -> JointPmf:
    if not isinstance(q, JointPmf) or q.nvars != 3:
        raise ValueError("target must be a JointPmf over (X1, X2, X3)")
    return q


def _random_surjection(n_labels: int, n_values: int, rng: np.random.Generator) -> np.ndarray:
    """Map each of ``n_labels`` labels to a value so every value gets a label."""
    if n_labels < n_values:
        raise ValueError("need at least as many labels as values")
    groups = np.concatenate([rng.permutation(n_values), rng.integers(0, n_values, n_labels - n_values)])
    return rng.permutation(groups)


def _refinement_kernel(groups: np.ndarray, n_values: int, rng, n_contexts: int = 1) -> np.ndarray:
    """Random kernel k[c, value, label], supported on labels mapped to ``value``."""
    n_labels = groups.size
    k = np.zeros((n_contexts, n_values, n_labels))
    for c in range(n_contexts):
        for val in range(n_values):
            labels = np.flatnonzero(groups == val)
            k[c, val, labels] = rng.dirichlet(np.ones(labels.size))
    return k


def _noise_layer(nw: int, n_out: int, rng) -> np.ndarray:
    return rng.dirichlet(np.ones(n_out), size=nw)


def is_product_target(q: JointPmf, tol: float = 1e-9) -> bool:
    p = q.probs
    prod = np.einsum("a,b,c->abc", p.sum(axis=(1, 2)), p.sum(axis=(0, 2)), p.sum(axis=(0, 1)))
    return bool(np.max(np.abs(prod - p)) <= tol)


def feasible_templates(q: JointPmf, cards) -> list[str]:
    """Names of refinement constructions that fit the auxiliary cardinalities."""
    nu, nv, nw = cards
    n1, n2, n3 = q.shape
    out = []
    if nu >= n2 and nw >= n3:
        out.append("refine-x2")
    if nu >= n1 and nw >= n3:
        out.append("refine-x1")
    if nw >= n1 * n2 * n3:
        out.append("refine-all")
    if is_product_target(q):
        out.append("independent")
    return out


def refinement_scheme(q: JointPmf, cards, rng: np.random.Generator, template: str) -> SchemeSpec:
    """Random scheme whose action marginal equals ``q`` by construction.

    Templates
    ---------
    ``refine-x2``
        W is a random refinement of X3, U a random refinement of X2 (drawn
        given W), V is noise given W. X1 comes from q(x1 | x2, x3).
    ``refine-x1``
        As above with U refining X1; X2 comes from q(x2 | x1, x3).
    ``refine-all``
        W refines the whole action triple; U and V are noise given W.
    ``independent``
        Product targets only: every channel ignores its inputs.
    """
    q = _as_target(q)
    nu, nv, nw = (int(c) for c in cards)
    n1, n2, n3 = q.shape
    pq = q.probs
    p_v_given_w = _noise_layer(nw, nv, rng)

    if template in ("refine-x2", "refine-x1"):
        g_w = _random_surjection(nw, n3, rng)
        k_w = _refinement_kernel(g_w, n3, rng)[0]           # [x3, w]
        p_w = pq.sum(axis=(0, 1)) @ k_w
        if template == "refine-x2":
            inner, n_inner = pq.sum(axis=0), n2              # q(x2, x3)
        else:
            inner, n_inner = pq.sum(axis=1), n1              # q(x1, x3)
        g_u = _random_surjection(nu, n_inner, rng)
        k_u = _refinement_kernel(g_u, n_inner, rng, n_contexts=nw)   # [w, value, u]
        cond = _conditional_rows(inner.T.copy(), 1)           # [x3, value]
        p_u_given_w = np.einsum("wv,wvu->wu", cond[g_w], k_u)
        x3_of_w = g_w
        val_of_u = g_u
        if template == "refine-x2":
            # q(x1 | x2, x3) indexed [x2, x3, x1]
            c1 = _conditional_rows(np.transpose(pq, (1, 2, 0)).copy(), 2)
            ch1 = c1[val_of_u][:, x3_of_w]                    # [u, w, x1]
            ch2 = np.zeros((nu, nv, nw, n2))
            ch2[np.arange(nu), :, :, val_of_u] = 1.0
        else:
            ch1 = np.zeros((nu, nw, n1))
            ch1[np.arange(nu), :, val_of_u] = 1.0
            # q(x2 | x1, x3) indexed [x1, x3, x2]
            c2 = _conditional_rows(np.transpose(pq, (0, 2, 1)).copy(), 2)
            base = c2[val_of_u][:, x3_of_w]                   # [u, w, x2]
            ch2 = np.broadcast_to(base[:, None, :, :], (nu, nv, nw, n2)).copy()
        ch3 = np.zeros((nv, nw, n3))
        ch3[:, np.arange(nw), x3_of_w] = 1.0
    elif template == "refine-all":
        nz = n1 * n2 * n3
        g_w = _random_surjection(nw, nz, rng)
        k_w = _refinement_kernel(g_w, nz, rng)[0]
        p_w = q.flat() @ k_w
        p_u_given_w = _noise_layer(nw, nu, rng)
        a1, a2, a3 = np.unravel_index(g_w, (n1, n2, n3))
        ch1 = np.zeros((nu, nw, n1))
        ch1[:, np.arange(nw), a1] = 1.0
        ch2 = np.zeros((nu, nv, nw, n2))
        ch2[:, :, np.arange(nw), a2] = 1.0
        ch3 = np.zeros((nv, nw, n3))
        ch3[:, np.arange(nw), a3] = 1.0
    elif template == "independent":
        if not is_product_target(q):
            raise ValueError("the independent template requires a product target")
        p_w = rng.dirichlet(np.ones(nw))
        p_u_given_w = _noise_layer(nw, nu, rng)
        ch1 = np.broadcast_to(pq.sum(axis=(1, 2)), (nu, nw, n1)).copy()
        ch2 = np.broadcast_to(pq.sum(axis=(0, 2)), (nu, nv, nw, n2)).copy()
        ch3 = np.broadcast_to(pq.sum(axis=(0, 1)), (nv, nw, n3)).copy()
    else:
        raise ValueError(f"unknown template {template!r}")

    return SchemeSpec(
        p_w / p_w.sum(),
        Channel(p_u_given_w),
        Channel(p_v_given_w),
        Channel(ch1),
        Channel(ch2),
        Channel(ch3),
        name=template,
    )


def padded_corollary_scheme(q: JointPmf, cards) -> SchemeSpec | None:
    """The corollary construction embedded in larger auxiliary alphabets.

    Extra labels get zero probability. Returns None when the cardinalities
    are too small.
    """
    nu, nv, nw = cards
    n1, n2, n3 = q.shape
    if nu < n2 or nv < n3 or nw < n3:
        return None
    base = corollary_scheme(q)
    p_w = np.zeros(nw)
    p_w[:n3] = base.p_W
    pu = np.full((nw, nu), 1.0 / nu)
    pu[:n3] = 0.0
    pu[:n3, :n2] = base.p_U_given_W.rows
    pv = np.full((nw, nv), 1.0 / nv)
    pv[:n3] = 0.0
    pv[:n3, :n3] = np.eye(n3)
    ch1 = np.full((nu, nw, n1), 1.0 / n1)
    ch1[:n2, :n3] = base.ch_X1.rows
    ch2 = np.full((nu, nv, nw, n2), 1.0 / n2)
    ch3 = np.full((nv, nw, n3), 1.0 / n3)
    for u in range(n2):
        ch2[u, :, :, :] = 0.0
        ch2[u, :, :, u] = 1.0
    for v in range(n3):
        ch3[v, :, :] = 0.0
        ch3[v, :, v] = 1.0
    return SchemeSpec(p_w, Channel(pu), Channel(pv), Channel(ch1), Channel(ch2), Channel(ch3),
                      name="corollary")


def random_scheme(cards, action_sizes, rng: np.random.Generator, concentration: float = 1.0) -> SchemeSpec:
    """Scheme with every distribution drawn from a symmetric Dirichlet."""
    nu, nv, nw = cards
    n1, n2, n3 = action_sizes
    d = lambda k, size: rng.dirichlet(np.full(k, concentration), size=size)
    return SchemeSpec(
        d(nw, None),
        Channel(d(nu, nw)),
        Channel(d(nv, nw)),
        Channel(d(n1, (nu, nw))),
        Channel(d(n2, (nu, nv, nw))),
        Channel(d(n3, (nv, nw))),
        name="random",
    )
