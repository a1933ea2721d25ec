import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linecoord import (
    Channel, ConditioningError, JointPmf, ResourceBudgetError, TypicalityParams, condition,
    conditional_mutual_information, entropy, is_markov_chain, is_typical, l1_distance, marginal,
    mutual_information, product_extension, sample, total_variation,
)
from conftest import pmfs, random_pmf, seeds
from oracles import binary_entropy


def bsc_pair(flip):
    return JointPmf(0.5 * np.array([[1 - flip, flip], [flip, 1 - flip]]))


class TestConstruction:
    def test_rejects_unnormalised(self):
        with pytest.raises(ValueError):
            JointPmf([0.5, 0.6])

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            JointPmf([1.5, -0.5])

    def test_read_only(self):
        p = JointPmf.uniform((2, 2))
        with pytest.raises(ValueError):
            p.probs[0, 0] = 1.0

    def test_json_round_trip(self):
        p = random_pmf(np.random.default_rng(3), (2, 3, 2))
        assert JointPmf.from_json(p.to_json()) == p

    def test_channel_rows_must_normalise(self):
        with pytest.raises(ValueError):
            Channel(np.array([[0.5, 0.4], [0.5, 0.5]]))


class TestMarginal:
    def test_uniform(self):
        m = marginal(JointPmf.uniform((2, 2)), {0})
        np.testing.assert_allclose(m.probs, [0.5, 0.5])

    def test_copy_pair(self):
        p = JointPmf(np.array([[0.5, 0.0], [0.0, 0.5]]))
        np.testing.assert_allclose(marginal(p, {1}).probs, [0.5, 0.5])

    def test_against_direct_sum(self):
        p = random_pmf(np.random.default_rng(0), (2, 2, 2))
        expect = np.array([[sum(p.probs[a, b, c] for b in range(2)) for c in range(2)] for a in range(2)])
        np.testing.assert_allclose(marginal(p, {0, 2}).probs, expect, atol=1e-15)

    def test_bad_index(self):
        with pytest.raises(ValueError):
            marginal(JointPmf.uniform((2, 2)), {2})


class TestCondition:
    def test_deterministic_coupling(self):
        p = JointPmf(np.array([[0.5, 0.0], [0.0, 0.5]]))
        np.testing.assert_allclose(condition(p, (0,), (0,)).probs, [1.0, 0.0])

    def test_independent(self):
        np.testing.assert_allclose(condition(JointPmf.uniform((2, 2)), (0,), (1,)).probs, [0.5, 0.5])

    def test_hand_renormalisation(self):
        t = np.array([[0.1, 0.3], [0.2, 0.4]])
        np.testing.assert_allclose(condition(JointPmf(t), (0,), (0,)).probs, [0.25, 0.75], atol=1e-15)

    def test_zero_probability_event(self):
        p = JointPmf(np.array([[0.5, 0.5], [0.0, 0.0]]))
        with pytest.raises(ConditioningError):
            condition(p, (0,), (1,))


class TestEntropyAndInformation:
    def test_uniform_bit(self):
        assert entropy(JointPmf.uniform((2,))) == pytest.approx(1.0, abs=1e-12)

    def test_point_mass(self):
        assert entropy(JointPmf.point_mass((3, 2), (1, 0))) == 0.0

    def test_bernoulli(self):
        h = entropy(JointPmf([0.89, 0.11]))
        assert h == pytest.approx(binary_entropy(0.11), abs=1e-12)
        assert h == pytest.approx(0.49992, abs=1e-5)

    def test_independent_pair(self):
        assert mutual_information(JointPmf.uniform((2, 3)), {0}, {1}) == 0.0

    def test_copy(self):
        p = JointPmf(np.array([[0.5, 0.0], [0.0, 0.5]]))
        assert mutual_information(p, {0}, {1}) == pytest.approx(1.0, abs=1e-12)

    def test_bsc(self):
        mi = mutual_information(bsc_pair(0.1), {0}, {1})
        assert mi == pytest.approx(1 - binary_entropy(0.1), abs=1e-12)
        assert mi == pytest.approx(0.53100, abs=1e-5)

    def test_overlapping_sets(self):
        with pytest.raises(ValueError):
            mutual_information(JointPmf.uniform((2, 2)), {0}, {0, 1})


class TestDistances:
    def test_identity(self):
        p = random_pmf(np.random.default_rng(1), (3, 2))
        assert total_variation(p, p) == 0.0

    def test_disjoint(self):
        assert total_variation(JointPmf.point_mass((2,), (0,)), JointPmf.point_mass((2,), (1,))) == 1.0

    def test_direct(self):
        assert total_variation(JointPmf([0.6, 0.4]), JointPmf([0.5, 0.5])) == pytest.approx(0.1, abs=1e-15)
        assert l1_distance(JointPmf([0.6, 0.4]), JointPmf([0.5, 0.5])) == pytest.approx(0.2, abs=1e-15)

    def test_alphabet_mismatch(self):
        with pytest.raises(ValueError):
            total_variation(JointPmf.uniform((2,)), JointPmf.uniform((3,)))


class TestMarkov:
    def test_constructed_chain(self):
        p1 = np.array([0.3, 0.7])
        p21 = np.array([[0.9, 0.1], [0.2, 0.8]])
        p32 = np.array([[0.6, 0.4], [0.25, 0.75]])
        p = JointPmf(np.einsum("a,ab,bc->abc", p1, p21, p32))
        assert is_markov_chain(p, {0}, {1}, {2})

    def test_independent(self):
        assert is_markov_chain(JointPmf.uniform((2, 3, 2)), {0}, {1}, {2})

    def test_perturbed_copy(self):
        t = np.zeros((2, 2, 2))
        t[0, 0, 0] = t[1, 1, 1] = 0.5
        assert is_markov_chain(JointPmf(t), {0}, {1}, {2}, tol=1e-6)
        # z now depends on x given y
        t2 = np.zeros((2, 2, 2))
        t2[0, 0, 0], t2[1, 0, 1], t2[1, 1, 1] = 0.4, 0.1, 0.5
        assert not is_markov_chain(JointPmf(t2), {0}, {1}, {2}, tol=1e-6)


class TestProductExtension:
    def test_n1_is_base(self):
        p = random_pmf(np.random.default_rng(2), (2, 3))
        ext = product_extension(p, 1)
        for x in np.ndindex(p.shape):
            assert ext.prob(np.array(x)[:, None]) == p.probs[x]

    def test_uniform_pairs(self):
        ext = product_extension(JointPmf.uniform((2,)), 2)
        np.testing.assert_allclose(ext.materialize(), np.full((2, 2), 0.25))

    def test_bernoulli_sequence(self):
        ext = product_extension(JointPmf([0.7, 0.3]), 3)
        assert ext.prob([1, 0, 1]) == pytest.approx(0.3 * 0.7 * 0.3, abs=1e-15)

    def test_materialise_cap(self):
        with pytest.raises(ResourceBudgetError):
            product_extension(JointPmf.uniform((8,)), 10, cap=1000).materialize()


class TestSampling:
    def test_point_mass(self):
        rng = np.random.default_rng(0)
        p = JointPmf.point_mass((2, 3), (1, 2))
        assert all(sample(p, rng) == (1, 2) for _ in range(20))

    def test_uniform_frequency(self):
        draws = sample(JointPmf.uniform((2,)), np.random.default_rng(11), size=10_000)[:, 0]
        sigma = math.sqrt(0.25 / 10_000)
        assert abs(draws.mean() - 0.5) <= 3 * sigma

    def test_same_seed(self):
        p = random_pmf(np.random.default_rng(5), (3, 2))
        a = sample(p, np.random.default_rng(9), size=50)
        b = sample(p, np.random.default_rng(9), size=50)
        np.testing.assert_array_equal(a, b)


class TestTypicality:
    def test_uniform_always_typical(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            seq = rng.integers(0, 2, size=15)
            assert is_typical(seq, JointPmf.uniform((2,)), TypicalityParams(0.01))

    def test_all_ones_bernoulli(self):
        assert not is_typical(np.ones(20, dtype=int), JointPmf([0.9, 0.1]), TypicalityParams(0.1))

    def test_large_slack(self):
        assert is_typical(np.ones(20, dtype=int), JointPmf([0.9, 0.1]), TypicalityParams(10.0))

    def test_zero_probability_symbol(self):
        assert not is_typical(np.array([0, 1]), JointPmf([1.0, 0.0]), TypicalityParams(10.0))


# ---------------------------------------------------------------- properties


@given(pmfs())
def test_entropy_bounds(p):
    h = entropy(p)
    assert -1e-12 <= h <= math.log2(p.probs.size) + 1e-9


@given(pmfs(min_vars=3, max_vars=3))
def test_chain_rule(p):
    lhs = entropy(p)
    rhs = entropy(p, {0}) + (entropy(p, {0, 1}) - entropy(p, {0})) + (lhs - entropy(p, {0, 1}))
    assert lhs == pytest.approx(rhs, abs=1e-9)
    # I(A; BC) = I(A; B) + I(A; C | B)
    assert mutual_information(p, {0}, {1, 2}) == pytest.approx(
        mutual_information(p, {0}, {1}) + conditional_mutual_information(p, {0}, {2}, {1}), abs=1e-9)


@given(pmfs(min_vars=2, max_vars=3))
def test_mutual_information_symmetric_and_bounded(p):
    a, b = {0}, {1}
    mi = mutual_information(p, a, b)
    assert mi >= 0
    assert mi == pytest.approx(mutual_information(p, b, a), abs=1e-12)
    assert mi <= min(entropy(p, a), entropy(p, b)) + 1e-9


@given(seeds(), st.integers(1, 4))
def test_tv_is_a_metric(seed, k):
    rng = np.random.default_rng(seed)
    p, q, r = (random_pmf(rng, (k, 2)) for _ in range(3))
    assert 0 <= total_variation(p, q) <= 1
    assert total_variation(p, q) == pytest.approx(total_variation(q, p), abs=1e-15)
    assert total_variation(p, r) <= total_variation(p, q) + total_variation(q, r) + 1e-12


@given(pmfs(min_vars=2, max_vars=3, allow_zeros=False), st.data())
def test_condition_matches_bayes(p, data):
    x = data.draw(st.integers(0, p.shape[0] - 1))
    cond = condition(p, (0,), (x,))
    expect = p.probs[x] / p.probs[x].sum()
    np.testing.assert_allclose(cond.probs, expect, atol=1e-12)


@given(pmfs(min_vars=1, max_vars=2, max_size=2), st.integers(1, 4), st.data())
def test_product_extension_matches_table(p, n, data):
    ext = product_extension(p, n)
    table = ext.materialize()
    seqs = np.array([[data.draw(st.integers(0, s - 1)) for _ in range(n)] for s in p.shape])
    letters = tuple(np.ravel_multi_index(tuple(seqs[:, l]), p.shape) for l in range(n))
    assert ext.prob(seqs) == pytest.approx(table[letters], abs=1e-15)
    assert table.sum() == pytest.approx(1.0, abs=1e-12)


@given(seeds())
def test_markov_factorisation_has_zero_cmi(seed):
    from conftest import markov_pmf
    p = markov_pmf(np.random.default_rng(seed), (2, 3, 2))
    assert is_markov_chain(p, {0}, {1}, {2})
    assert conditional_mutual_information(p, {0}, {2}, {1}) == pytest.approx(0.0, abs=1e-9)
    assert mutual_information(p, {0}, {2}) <= mutual_information(p, {0}, {1}) + 1e-9
