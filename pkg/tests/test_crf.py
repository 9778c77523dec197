import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dialogact.crf import crf_nll, log_partition, marginals, path_score, viterbi
from dialogact.errors import ContractError, DimensionError
from dialogact.tensor import Tape, Tensor, backward


def nll(E, T, s, e, y):
    return crf_nll(Tensor(E), Tensor(T), Tensor(s), Tensor(e), y).item()


def zeros(L, Y):
    return np.zeros((L, Y)), np.zeros((Y, Y)), np.zeros(Y), np.zeros(Y)


def test_all_zero_scores_give_ln_of_path_count():
    assert nll(*zeros(3, 2), [0, 1, 0]) == pytest.approx(math.log(8), abs=1e-12)


def test_single_label_has_zero_nll():
    rng = np.random.default_rng(0)
    E, T, s, e = oracles.random_crf(rng, 4, 1)
    assert abs(nll(E, T, s, e, [0, 0, 0, 0])) < 1e-12


def test_nll_matches_enumeration_l5_y4():
    rng = np.random.default_rng(1)
    E, T, s, e = oracles.random_crf(rng, 5, 4)
    y = list(rng.integers(0, 4, size=5))
    assert nll(E, T, s, e, y) == pytest.approx(oracles.brute_nll(E, T, s, e, y), abs=1e-8)


def test_label_out_of_range_is_contract_error():
    with pytest.raises(ContractError):
        nll(*zeros(2, 3), [0, 3])
    with pytest.raises(ContractError):
        nll(*zeros(2, 3), [0])


def test_shape_mismatch_is_dimension_error():
    E, T, s, e = zeros(2, 3)
    with pytest.raises(DimensionError):
        log_partition(E, np.zeros((2, 2)), s, e)


def test_viterbi_decoupled_chain_is_per_position_argmax():
    rng = np.random.default_rng(2)
    E = rng.normal(size=(6, 4))
    path, score = viterbi(E, np.zeros((4, 4)), np.zeros(4), np.zeros(4))
    assert path == list(np.argmax(E, axis=1))
    assert score == pytest.approx(E.max(axis=1).sum(), abs=1e-12)


def test_viterbi_single_label():
    E = np.array([[0.5], [-1.0], [2.0]])
    path, score = viterbi(E, np.array([[0.3]]), np.array([0.1]), np.array([-0.2]))
    assert path == [0, 0, 0]
    assert score == pytest.approx(1.5 + 0.6 + 0.1 - 0.2, abs=1e-12)


def test_viterbi_matches_exhaustive_search():
    rng = np.random.default_rng(3)
    E, T, s, e = oracles.random_crf(rng, 6, 3)
    path, score = viterbi(E, T, s, e)
    ref_path, ref_score = oracles.brute_viterbi(E, T, s, e)
    assert path == ref_path
    assert score == pytest.approx(ref_score, abs=1e-9)


def test_viterbi_ties_prefer_lower_ordinal():
    path, _ = viterbi(*zeros(4, 3))
    assert path == [0, 0, 0, 0]


def test_marginals_symmetric_and_vs_enumeration():
    np.testing.assert_allclose(marginals(*zeros(3, 2)), 0.5)
    rng = np.random.default_rng(4)
    E, T, s, e = oracles.random_crf(rng, 4, 3)
    m = marginals(E, T, s, e)
    np.testing.assert_allclose(m, oracles.brute_marginals(E, T, s, e), atol=1e-8)
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-9)


def test_gradient_of_nll_is_marginals_minus_gold():
    rng = np.random.default_rng(5)
    E, T, s, e = oracles.random_crf(rng, 4, 3)
    Et = Tensor(E, requires_grad=True)
    y = [0, 2, 1, 1]
    with Tape():
        g = backward(crf_nll(Et, Tensor(T), Tensor(s), Tensor(e), y))
    expected = oracles.brute_marginals(E, T, s, e)
    expected[np.arange(4), y] -= 1.0
    np.testing.assert_allclose(g.of(Et), expected, atol=1e-10)


instances = st.tuples(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**31 - 1))


@settings(max_examples=30, deadline=None)
@given(instances)
def test_distribution_sums_to_one(inst):
    L, Y, seed = inst
    E, T, s, e = oracles.random_crf(np.random.default_rng(seed), L, Y, scale=2.0)
    total = sum(math.exp(-nll(E, T, s, e, list(y))) for y in oracles.all_paths(L, Y))
    assert total == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(instances)
def test_viterbi_beats_random_sequences(inst):
    L, Y, seed = inst
    rng = np.random.default_rng(seed)
    E, T, s, e = oracles.random_crf(rng, L, Y)
    _, best = viterbi(E, T, s, e)
    for _ in range(100):
        y = rng.integers(0, Y, size=L)
        assert best >= path_score(E, T, s, e, y) - 1e-12


@settings(max_examples=30, deadline=None)
@given(instances, st.floats(-50, 50))
def test_viterbi_invariant_to_uniform_emission_shift(inst, c):
    L, Y, seed = inst
    E, T, s, e = oracles.random_crf(np.random.default_rng(seed), L, Y)
    assert viterbi(E + c, T, s, e)[0] == viterbi(E, T, s, e)[0]


def test_large_scores_stay_finite():
    E, T, s, e = oracles.random_crf(np.random.default_rng(6), 5, 3, scale=300.0)
    assert math.isfinite(log_partition(E, T, s, e))
