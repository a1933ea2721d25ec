"""Brute-force reference enumerators.

These loop over every codeword index and every action sequence with plain
Python and share no code with the optimised evaluators. Use them only for
tiny instances.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def _seqs(size, n):
    return list(itertools.product(range(size), repeat=n))


def _letter(x1, x2, x3, n2, n3):
    return (x1 * n2 + x2) * n3 + x3


def hat_table(w, u, v, ch1, ch2, ch3, action_sizes, n):
    """p_hat in the per-position letter layout, shape (Z,) * n.

    ``ch1[u, w, x1]``, ``ch2[u, v, w, x2]`` and ``ch3[v, w, x3]`` are the
    action channels. Codewords are indexed ``w[i][l]``, ``u[i][j][l]`` and
    ``v[i][k][l]``.
    """
    n1, n2, n3 = action_sizes
    m0, m12, m23 = len(w), len(u[0]), len(v[0])
    out = np.zeros((n1 * n2 * n3,) * n)
    for a in _seqs(n1, n):
        for b in _seqs(n2, n):
            for c in _seqs(n3, n):
                total = 0.0
                for i in range(m0):
                    for j in range(m12):
                        for k in range(m23):
                            p = 1.0
                            for l in range(n):
                                uu, vv, ww = u[i][j][l], v[i][k][l], w[i][l]
                                p *= ch1[uu, ww, a[l]] * ch2[uu, vv, ww, b[l]] * ch3[vv, ww, c[l]]
                            total += p
                idx = tuple(_letter(a[l], b[l], c[l], n2, n3) for l in range(n))
                out[idx] = total / (m0 * m12 * m23)
    return out


def secrecy_joint(w, u, ch1, n1, n):
    """p_hat(m0, x1^n) as a dict keyed by (m0, x1 tuple)."""
    m0, m12 = len(w), len(u[0])
    out = {}
    for i in range(m0):
        for a in _seqs(n1, n):
            total = 0.0
            for j in range(m12):
                p = 1.0
                for l in range(n):
                    p *= ch1[u[i][j][l], w[i][l], a[l]]
                total += p
            out[(i, a)] = total / (m0 * m12)
    return out


def secrecy_tv(w, u, ch1, n1, n):
    joint = secrecy_joint(w, u, ch1, n1, n)
    m0 = len(w)
    tv = 0.0
    for a in _seqs(n1, n):
        px = sum(joint[(i, a)] for i in range(m0))
        for i in range(m0):
            tv += abs(joint[(i, a)] - px / m0)
    return tv / 2.0


def tilde_table(w, u, v, ch1, ch2, ch3, q1, action_sizes, n):
    """Law of the three-agent protocol in the letter layout.

    Agent 1 draws x1^n i.i.d. from ``q1``; given m0 it picks m12 with
    probability proportional to p(x1^n | u(m0, m12), w(m0)), uniform when
    every likelihood is zero. Agent 2 picks m23 uniformly and draws x2^n
    through ch2; Agent 3 draws x3^n through ch3.
    """
    n1, n2, n3 = action_sizes
    m0, m12, m23 = len(w), len(u[0]), len(v[0])
    out = np.zeros((n1 * n2 * n3,) * n)
    for a in _seqs(n1, n):
        pa = math.prod(q1[x] for x in a)
        for b in _seqs(n2, n):
            for c in _seqs(n3, n):
                total = 0.0
                for i in range(m0):
                    lik = []
                    for j in range(m12):
                        p = 1.0
                        for l in range(n):
                            p *= ch1[u[i][j][l], w[i][l], a[l]]
                        lik.append(p)
                    s = sum(lik)
                    post = [x / s for x in lik] if s > 0 else [1.0 / m12] * m12
                    for j in range(m12):
                        for k in range(m23):
                            p = 1.0
                            for l in range(n):
                                uu, vv, ww = u[i][j][l], v[i][k][l], w[i][l]
                                p *= ch2[uu, vv, ww, b[l]] * ch3[vv, ww, c[l]]
                            total += post[j] * p / m23
                idx = tuple(_letter(a[l], b[l], c[l], n2, n3) for l in range(n))
                out[idx] = pa * total / m0
    return out


def iid_table(letter_pmf, n):
    out = np.zeros((len(letter_pmf),) * n)
    for s in _seqs(len(letter_pmf), n):
        out[s] = math.prod(letter_pmf[z] for z in s)
    return out


def tv(a, b):
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def binary_entropy(p):
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)
