import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from linecoord import JointPmf  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Collect one summary line per acceptance criterion."""
    def _record(number, name, passed, detail=""):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}"
        if detail:
            line += f": {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_pmf(rng, shape, sparsity=0.0):
    t = rng.dirichlet(np.full(int(np.prod(shape)), 0.7))
    if sparsity:
        t = np.where(rng.random(t.size) < sparsity, 0.0, t)
        if t.sum() == 0:
            t[rng.integers(t.size)] = 1.0
        t = t / t.sum()
    return JointPmf(t.reshape(shape))


def markov_pmf(rng, shape):
    """p(x1) p(x2|x1) p(x3|x2) with Dirichlet factors."""
    n1, n2, n3 = shape
    p1 = rng.dirichlet(np.ones(n1))
    p21 = rng.dirichlet(np.ones(n2), size=n1)
    p32 = rng.dirichlet(np.ones(n3), size=n2)
    return JointPmf(np.einsum("a,ab,bc->abc", p1, p21, p32))


@st.composite
def pmfs(draw, min_vars=1, max_vars=3, max_size=3, allow_zeros=True):
    nvars = draw(st.integers(min_vars, max_vars))
    shape = tuple(draw(st.integers(1, max_size)) for _ in range(nvars))
    size = int(np.prod(shape))
    weights = draw(st.lists(st.floats(0.0 if allow_zeros else 0.01, 1.0), min_size=size, max_size=size))
    w = np.asarray(weights)
    if w.sum() <= 1e-6:
        w = np.ones(size)
    return JointPmf((w / w.sum()).reshape(shape))


def seeds():
    return st.integers(0, 2**32 - 1)
