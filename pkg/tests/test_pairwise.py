import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fisherhash.binary_codes import BinaryCodeMatrix
from fisherhash.pairwise import (
    MarginParams,
    PairSets,
    loss_dissimilar,
    loss_similar,
    pair_gradient,
    pair_objective,
)

# Frozen via 40-digit evaluation (mpmath) of log(1 + exp(.)).
LOG2 = 0.6931471805599453
SP_1 = 1.3132616875182228
SP_4 = 4.0181499279178097
SP_NEG2 = 0.1269280110429725


def naive_objective(u, b_dense, pairs, params):
    """Scalar-by-scalar reference: plain loops, library log/exp."""
    total = 0.0
    for i, j in pairs.similar:
        d = -0.5 * float(u[:, i] @ u[:, j])
        total += math.log(1.0 + math.exp(d + params.m))
    for i, j in pairs.dissimilar:
        d = -0.5 * float(u[:, i] @ u[:, j])
        total += math.log(1.0 + math.exp(-d + params.m))
    for i in range(u.shape[1]):
        total += params.psi * float(((u[:, i] - b_dense[:, i]) ** 2).sum())
    return total


def fd_gradient(u, b, pairs, params, step=1e-5):
    grad = np.zeros_like(u)
    for k in range(u.shape[0]):
        for i in range(u.shape[1]):
            up, dn = u.copy(), u.copy()
            up[k, i] += step
            dn[k, i] -= step
            grad[k, i] = (
                pair_objective(up, b, pairs, params)
                - pair_objective(dn, b, pairs, params)
            ) / (2 * step)
    return grad


def random_instance(rng, k=5, n=8):
    u = rng.normal(size=(k, n))
    signs = rng.choice([-1, 1], size=(k, n))
    b = BinaryCodeMatrix.from_signs(signs)
    idx = [(i, j) for i in range(n) for j in range(i + 1, n)]
    rng.shuffle(idx)
    half = len(idx) // 2
    pairs = PairSets(np.array(idx[:half]), np.array(idx[half:]))
    return u, b, signs, pairs


class TestLossCurves:
    def test_origin_is_log_two(self):
        assert loss_similar(0.0, 0.0) == pytest.approx(LOG2, abs=1e-15)
        assert loss_dissimilar(0.0, 0.0) == pytest.approx(LOG2, abs=1e-15)

    def test_similar_with_margin_one(self):
        assert loss_similar(0.0, 1.0) == pytest.approx(SP_1, abs=1e-15)

    def test_dissimilar_mirrors_similar(self):
        assert loss_dissimilar(-3.0, 1.0) == loss_similar(3.0, 1.0)
        assert loss_similar(3.0, 1.0) == pytest.approx(SP_4, abs=1e-14)

    def test_no_overflow_at_large_dissimilarity(self):
        assert loss_similar(50.0, 0.0) == pytest.approx(50.0, abs=1e-9)
        assert np.isfinite(loss_similar(1e4, 0.0))
        assert np.isfinite(loss_dissimilar(-1e4, 2.0))

    def test_dissimilar_decays_to_zero(self):
        d = np.linspace(0, 40, 9)
        vals = loss_dissimilar(d, 0.0)
        assert (np.diff(vals) < 0).all()
        assert vals[-1] < 1e-15

    @given(
        st.floats(-30, 30),
        st.floats(0, 5),
        st.floats(0.01, 5),
    )
    @settings(max_examples=60, deadline=None)
    def test_symmetry_and_margin_monotonicity(self, d, m, dm):
        assert loss_similar(d, m) == loss_dissimilar(-d, m)
        assert loss_similar(d, m + dm) > loss_similar(d, m)
        assert loss_dissimilar(d, m + dm) > loss_dissimilar(d, m)

    def test_zero_margin_is_plain_logistic(self):
        d = np.linspace(-6, 6, 25)
        np.testing.assert_allclose(loss_similar(d, 0.0), np.log1p(np.exp(d)), rtol=1e-15)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            loss_similar(np.nan, 0.0)
        with pytest.raises(ValueError):
            loss_dissimilar(0.0, np.inf)


class TestMarginParams:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            MarginParams(m=-0.5)
        with pytest.raises(ValueError):
            MarginParams(psi=-1.0)


class TestPairSets:
    def test_rejects_overlap(self):
        with pytest.raises(ValueError, match="both sets"):
            PairSets(np.array([[0, 1]]), np.array([[0, 1]]))

    def test_rejects_self_pair(self):
        with pytest.raises(ValueError, match="i < j"):
            PairSets(np.array([[2, 2]]), np.empty((0, 2), dtype=int))

    def test_rejects_out_of_range_index(self):
        pairs = PairSets(np.array([[0, 9]]), np.empty((0, 2), dtype=int))
        with pytest.raises(ValueError, match="out of range"):
            pairs.validate_against(4)

    def test_from_label_sets(self):
        sets = [frozenset({0}), frozenset({0, 1}), frozenset({2})]
        pairs = PairSets.all_pairs_from_label_sets(sets)
        assert pairs.similar.tolist() == [[0, 1]]
        assert pairs.dissimilar.tolist() == [[0, 2], [1, 2]]


class TestPairObjective:
    def test_single_similar_pair_identical_binary_columns(self):
        signs = np.ones((4, 2))
        b = BinaryCodeMatrix.from_signs(signs)
        pairs = PairSets(similar=np.array([[0, 1]]))
        # D = -K/2 = -2 and the discrepancy term vanishes.
        got = pair_objective(signs.astype(float), b, pairs, MarginParams(m=0.0, psi=3.7))
        assert got == pytest.approx(SP_NEG2, abs=1e-15)

    def test_empty_pairs_zero_discrepancy(self):
        signs = np.ones((3, 4))
        b = BinaryCodeMatrix.from_signs(signs)
        assert pair_objective(signs.astype(float), b, PairSets(), MarginParams()) == 0.0

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(123)
        for _ in range(5):
            u, b, signs, pairs = random_instance(rng)
            params = MarginParams(m=rng.uniform(0, 2), psi=rng.uniform(0, 2))
            got = pair_objective(u, b, pairs, params)
            want = naive_objective(u, signs, pairs, params)
            assert got == pytest.approx(want, rel=1e-12)

    def test_shape_mismatch_rejected(self):
        b = BinaryCodeMatrix.from_signs(np.ones((3, 4)))
        with pytest.raises(ValueError):
            pair_objective(np.ones((4, 4)), b, PairSets(), MarginParams())


class TestPairGradient:
    def test_quadratic_term_only(self):
        rng = np.random.default_rng(5)
        signs = rng.choice([-1, 1], size=(4, 6))
        b = BinaryCodeMatrix.from_signs(signs)
        u = signs + rng.normal(size=signs.shape)
        grad = pair_gradient(u, b, PairSets(), MarginParams(m=0.0, psi=1.0))
        np.testing.assert_allclose(grad, 2.0 * (u - signs), atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(99)
        for _ in range(3):
            u, b, _, pairs = random_instance(rng)
            params = MarginParams(m=rng.uniform(0, 2), psi=rng.uniform(0, 2))
            analytic = pair_gradient(u, b, pairs, params)
            numeric = fd_gradient(u, b, pairs, params)
            denom = np.maximum(np.abs(numeric), 1.0)
            assert (np.abs(analytic - numeric) / denom).max() < 1e-4

    def test_zero_columns_leave_only_psi_term(self):
        u = np.zeros((3, 2))
        signs = np.ones((3, 2))
        b = BinaryCodeMatrix.from_signs(signs)
        pairs = PairSets(similar=np.array([[0, 1]]))
        grad = pair_gradient(u, b, pairs, MarginParams(m=1.0, psi=0.5))
        np.testing.assert_allclose(grad, 2 * 0.5 * (u - signs), atol=1e-15)
