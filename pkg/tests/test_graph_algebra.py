from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from graphflow.errors import BadMetric, BadTensor
from graphflow.graph_algebra import (
    constant_curvature,
    graph_point_state,
    kulkarni_nomizu,
    quantity_A,
    quantity_A_grouped_bound,
    quantity_B,
    s_on_frames,
    singular_decompose,
    square_bracket,
    wedge_pairs,
)


def brute_kn(P, Q):
    """Four-term formula evaluated on explicit wedge pairs."""
    pairs = wedge_pairs(P.shape[0])
    out = np.zeros((len(pairs), len(pairs)))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            out[a, b] = P[i, k] * Q[j, l] + P[j, l] * Q[i, k] - P[i, l] * Q[j, k] - P[j, k] * Q[i, l]
    return out


def check_frames(sd, tol=1e-10):
    G = sd.product_metric
    E, X = sd.e_frame, sd.xi_frame
    np.testing.assert_allclose(E.T @ G @ E, np.eye(sd.m), atol=tol)
    np.testing.assert_allclose(X.T @ G @ X, np.eye(sd.n), atol=tol)
    np.testing.assert_allclose(E.T @ G @ X, 0.0, atol=tol)
    for i in range(sd.m - sd.r, sd.m):
        np.testing.assert_allclose(sd.df @ sd.alpha_basis[:, i], sd.lambdas[i] * sd.beta_basis[:, sd.n - sd.m + i], atol=tol)


class TestSingularDecompose:
    def test_zero(self):
        sd = singular_decompose(np.zeros((2, 2)))
        assert sd.r == 0
        np.testing.assert_array_equal(sd.lambdas, 0.0)
        np.testing.assert_allclose(sd.e_frame[2:], 0.0)
        np.testing.assert_allclose(sd.xi_frame[:2], 0.0)
        check_frames(sd)

    def test_identity(self):
        sd = singular_decompose(np.eye(2))
        np.testing.assert_allclose(sd.lambdas, [1.0, 1.0])
        for i in range(2):
            a, b = sd.alpha_basis[:, i], sd.beta_basis[:, i]
            np.testing.assert_allclose(sd.e_frame[:, i], np.concatenate([a, b]) / math.sqrt(2), atol=1e-15)
            np.testing.assert_allclose(sd.xi_frame[:, i], np.concatenate([-a, b]) / math.sqrt(2), atol=1e-15)

    def test_diagonal(self):
        sd = singular_decompose(np.diag([0.5, 0.2]))
        np.testing.assert_allclose(sd.lambdas, [0.2, 0.5])
        a, b = sd.alpha_basis[:, 1], sd.beta_basis[:, 1]
        np.testing.assert_allclose(sd.e_frame[:, 1], np.concatenate([a, 0.5 * b]) / math.sqrt(1.25), atol=1e-15)
        check_frames(sd)

    def test_bad_metric(self):
        with pytest.raises(BadMetric):
            singular_decompose(np.eye(2), gM=np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(BadMetric):
            singular_decompose(np.eye(2), gN=np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_wide_df_rejected(self):
        with pytest.raises(BadTensor):
            singular_decompose(np.ones((1, 2)))

    def test_rank_cut(self):
        sd = singular_decompose(np.array([[1.0, 0.0], [0.0, 1e-12], [0.0, 0.0]]))
        assert sd.r == 1 and sd.lambdas[0] == 0.0
        check_frames(sd)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 3), st.integers(0, 2**32 - 1), st.booleans())
    def test_random_invariants(self, m, extra, seed, metrics):
        rng = np.random.default_rng(seed)
        n = min(4, m + extra)
        df = rng.uniform(-2, 2, (n, m))
        gM = gN = None
        if metrics:
            B, C = rng.standard_normal((m, m)), rng.standard_normal((n, n))
            gM, gN = B @ B.T + np.eye(m), C @ C.T + np.eye(n)
        sd = singular_decompose(df, gM, gN)
        assert np.all(np.diff(sd.lambdas) >= 0)
        check_frames(sd, 1e-9)


class TestPointState:
    def test_identity(self):
        ps = graph_point_state(np.eye(2))
        assert ps.u == pytest.approx(0.5)
        np.testing.assert_allclose(ps.s_tensor, 0.0)
        assert ps.s2_min == pytest.approx(0.0, abs=1e-15) and ps.lamlam_max == pytest.approx(1.0)

    def test_zero(self):
        ps = graph_point_state(np.zeros((2, 2)))
        assert (ps.u, ps.s2_min, ps.lamlam_max) == (1.0, 2.0, 0.0)

    def test_worked(self):
        ps = graph_point_state(np.diag([0.2, 0.5]))
        assert ps.u == pytest.approx(1 / math.sqrt(1.04 * 1.25), abs=1e-12)
        assert ps.u == pytest.approx(0.877058, abs=1e-6)
        assert ps.s2_min == pytest.approx(0.6 + 12 / 13, abs=1e-12)
        assert ps.lamlam_max == pytest.approx(0.1, abs=1e-15)
        sb = square_bracket(ps.s_tensor, ps.induced)
        assert sb.eigenvalues[0] == pytest.approx(ps.s2_min, abs=1e-12)

    def test_one_dimensional_domain(self):
        ps = graph_point_state(np.array([[3.0]]))
        assert math.isinf(ps.s2_min) and ps.lamlam_max == 0.0
        assert ps.to_dict()["s2_min"] is None

    @settings(max_examples=300, deadline=None)
    @given(st.integers(2, 4), st.integers(0, 2), st.integers(0, 2**32 - 1))
    def test_s2_min_matches_bracket(self, m, extra, seed):
        rng = np.random.default_rng(seed)
        n = min(4, m + extra)
        ps = graph_point_state(rng.uniform(-2, 2, (n, m)))
        sb = square_bracket(ps.s_tensor, ps.induced)
        assert abs(sb.eigenvalues[0] - ps.s2_min) <= 1e-9
        assert 0.0 < ps.u <= 1.0
        assert (ps.s2_min > 0) == (ps.lamlam_max < 1)
        lam = np.sort(ps.lambdas)[::-1]
        for i in range(m):
            for j in range(i + 1, m):
                pair = 2 * (1 - lam[i] ** 2 * lam[j] ** 2) / ((1 + lam[i] ** 2) * (1 + lam[j] ** 2))
                assert ps.mus[i] + ps.mus[j] == pytest.approx(pair, abs=1e-12)


class TestFrames:
    @pytest.mark.parametrize("lam,ee,mixed", [(0.0, 1.0, 0.0), (1.0, 0.0, -1.0), (0.5, 0.6, -0.8)])
    def test_closed_forms(self, lam, ee, mixed):
        sd = singular_decompose(np.diag([lam, 0.3]))
        i = int(np.argmin(np.abs(sd.lambdas - lam)))
        fc = s_on_frames(sd)
        assert fc.ee[i, i] == pytest.approx(ee, abs=1e-15)
        assert fc.exi[i, i] == pytest.approx(mixed, abs=1e-15)
        S = np.diag([1.0, 1.0, -1.0, -1.0])
        np.testing.assert_allclose(sd.e_frame.T @ S @ sd.e_frame, fc.ee, atol=1e-14)
        np.testing.assert_allclose(sd.e_frame.T @ S @ sd.xi_frame, fc.exi, atol=1e-14)


class TestKulkarniNomizu:
    def test_identity_m2(self):
        np.testing.assert_allclose(kulkarni_nomizu(np.eye(2), np.eye(2)), [[2.0]])

    def test_zero(self):
        np.testing.assert_array_equal(kulkarni_nomizu(np.zeros((3, 3)), np.eye(3)), 0.0)

    def test_diag_125(self):
        np.testing.assert_allclose(kulkarni_nomizu(np.diag([1.0, 2.0, 5.0]), np.eye(3)), np.diag([3.0, 6.0, 7.0]))

    @settings(max_examples=100, deadline=None)
    @given(arrays(float, (4, 4), elements=st.floats(-3, 3)), arrays(float, (4, 4), elements=st.floats(-3, 3)))
    def test_matches_brute_force(self, P, Q):
        P, Q = P + P.T, Q + Q.T
        np.testing.assert_allclose(kulkarni_nomizu(P, Q), brute_kn(P, Q), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(BadTensor):
            kulkarni_nomizu(np.eye(2), np.eye(3))


class TestSquareBracket:
    def test_T_equals_g(self, rng):
        B = rng.standard_normal((4, 4))
        g = B @ B.T + np.eye(4)
        np.testing.assert_allclose(square_bracket(g, g).eigenvalues, 2.0, atol=1e-12)

    def test_diag_125(self):
        np.testing.assert_allclose(square_bracket(np.diag([1.0, 2.0, 5.0]), np.eye(3)).eigenvalues, [3.0, 6.0, 7.0])

    def test_zero(self):
        np.testing.assert_allclose(square_bracket(np.zeros((3, 3)), np.eye(3)).eigenvalues, 0.0, atol=1e-15)

    def test_bad_metric(self):
        with pytest.raises(BadMetric):
            square_bracket(np.eye(2), -np.eye(2))


class TestQuantityA:
    def test_zero(self):
        assert quantity_A([0.2, 0.5], np.zeros((2, 2, 2))) == 0.0

    def test_rank_zero(self, rng):
        A = rng.standard_normal((3, 2, 2))
        A = A + A.transpose(0, 2, 1)
        assert quantity_A([0.0, 0.0], A) == pytest.approx(float(np.sum(A**2)))

    def test_worked(self):
        A = np.zeros((2, 2, 2))
        A[0, 0, 0] = 1.0
        assert quantity_A([0.2, 0.5], A, r=2) == pytest.approx(1.04, abs=1e-15)

    def test_asymmetric(self):
        A = np.zeros((2, 2, 2))
        A[0, 0, 1] = 1.0
        with pytest.raises(BadTensor):
            quantity_A([0.2, 0.5], A)

    def test_bruteforce_expansion(self, rng):
        # independent loop over the unrolled definition with explicit indices
        m, n, r = 3, 3, 2
        lam = np.array([0.0, 0.4, 0.9])
        A = rng.standard_normal((n, m, m))
        A = A + A.transpose(0, 2, 1)
        expected = float(np.sum(A**2))
        for k in range(m):
            for i in range(1, r + 1):
                expected += lam[m - r + i - 1] ** 2 * A[n - r + i - 1, i - 1, k] ** 2
            for i in range(1, r + 1):
                for j in range(i + 1, r + 1):
                    expected += 2 * lam[m - r + i - 1] * lam[m - r + j - 1] * A[n - r + j - 1, i - 1, k] * A[n - r + i - 1, j - 1, k]
        assert quantity_A(lam, A) == pytest.approx(expected, rel=1e-13)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(2, 4), st.integers(0, 2**32 - 1))
    def test_bound_with_computed_delta(self, m, seed):
        rng = np.random.default_rng(seed)
        lam = np.sort(rng.uniform(0, 1.4, m))
        top = lam[-1] * lam[-2]
        if top >= 1:
            lam *= math.sqrt(0.99 / top)
        delta = 1 - lam[-1] * lam[-2]
        A = rng.standard_normal((m, m, m))
        A = A + A.transpose(0, 2, 1)
        value = quantity_A(lam, A)
        assert value >= delta * np.sum(A**2) - 1e-12
        assert value >= quantity_A_grouped_bound(lam, A, delta) - 1e-10


class TestQuantityB:
    def test_zero(self):
        sd = singular_decompose(np.zeros((2, 2)))
        g = np.eye(2)
        qb = quantity_B(sd, constant_curvature(1.0, g), constant_curvature(1.0, g), 1.0)
        assert qb.direct == 0.0 and qb.decomposed == pytest.approx(0.0, abs=1e-15)

    def test_worked(self):
        sd = singular_decompose(np.diag([0.5, 0.2]))
        g = np.eye(2)
        qb = quantity_B(sd, constant_curvature(1.0, g), constant_curvature(1.0, g), 1.0)
        expected = (0.04 + 0.25 - 2 * 0.04 * 0.25) / (1.04 * 1.25)
        assert expected == pytest.approx(0.207692, abs=1e-6)
        assert qb.direct == pytest.approx(expected, abs=1e-12)
        assert qb.decomposed == pytest.approx(expected, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_radius_two_target(self, seed):
        rng = np.random.default_rng(seed)
        lam = np.sort(rng.uniform(0, 1.5, 2))
        if lam[0] * lam[1] > 1:
            lam /= math.sqrt(lam[0] * lam[1])
        sd = singular_decompose(np.diag(lam[::-1]))
        g = np.eye(2)
        qb = quantity_B(sd, constant_curvature(1.0, g), constant_curvature(0.25, g), 1.0)
        assert abs(qb.decomposed - qb.direct) <= 1e-12
        assert qb.direct >= -1e-12
