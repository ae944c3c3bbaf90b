"""Pointwise linear algebra of a graph Gamma(f) in M x N.

Everything here acts on a single point: the differential ``df`` is an
``n x m`` matrix written in bases of T_xM and T_{f(x)}N whose Gram matrices
are ``gM`` and ``gN`` (identity for orthonormal bases, which is the case on
every hot path). Graph tangent and normal vectors are stored as
``(m + n)``-vectors, M block first, orthonormal for ``gM (+) gN``.

Index conventions follow the usual singular decomposition: singular values
are sorted ascending, the first ``m - r`` of them vanish, and
``df(alpha_i) = lambda_i beta_{n - m + i}`` for the non-zero ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import BadMetric, BadTensor, NumericalFailure

RANK_TOL = 1e-10

Curvature = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], float]


def _check_metric(g, size: int, name: str) -> np.ndarray:
    if g is None:
        return np.eye(size)
    g = np.asarray(g, dtype=float)
    if g.shape != (size, size):
        raise BadMetric(f"{name} must be {size}x{size}, got {g.shape}")
    if not np.allclose(g, g.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(g).max())):
        raise BadMetric(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise BadMetric(f"{name} is not positive definite") from None
    return g


def _check_df(df) -> np.ndarray:
    df = np.atleast_2d(np.asarray(df, dtype=float))
    if df.ndim != 2:
        raise BadTensor(f"df must be a matrix, got shape {df.shape}")
    n, m = df.shape
    if m > n:
        raise BadTensor(f"domain dimension {m} exceeds target dimension {n}; unsupported")
    if not np.all(np.isfinite(df)):
        raise BadTensor("df has non-finite entries")
    return df


@dataclass(frozen=True)
class SingularData:
    """Singular decomposition of df together with the adapted graph frames.

    Attributes:
        m, n: Domain and target dimensions.
        r: Rank of df.
        lambdas: Singular values, ascending, length m.
        alpha_basis: ``m x m``, columns gM-orthonormal, diagonalizing f*gN.
        beta_basis: ``n x n``, columns gN-orthonormal.
        e_frame: ``(m+n) x m`` orthonormal graph tangent frame.
        xi_frame: ``(m+n) x n`` orthonormal graph normal frame.
    """

    m: int
    n: int
    r: int
    lambdas: np.ndarray
    alpha_basis: np.ndarray
    beta_basis: np.ndarray
    e_frame: np.ndarray
    xi_frame: np.ndarray
    df: np.ndarray
    gM: np.ndarray
    gN: np.ndarray

    @property
    def product_metric(self) -> np.ndarray:
        return scipy.linalg.block_diag(self.gM, self.gN)


def singular_decompose(df, gM=None, gN=None, rank_tol: float = RANK_TOL) -> SingularData:
    """Singular decomposition of ``df`` relative to the metrics ``gM`` and ``gN``.

    Solves ``f*gN v = lambda^2 gM v`` (through an SVD of the differential in
    metric-orthonormal coordinates) and builds the tangent frame
    ``e_i = (alpha_i (+) lambda_i beta_{n-m+i}) / sqrt(1 + lambda_i^2)`` and the
    normal frame ``xi_i = (-lambda_{i+m-n} alpha_{i+m-n} (+) beta_i) / sqrt(...)``.
    Singular values at or below ``rank_tol`` are set to exactly zero.
    """
    df = _check_df(df)
    n, m = df.shape
    gM = _check_metric(gM, m, "gM")
    gN = _check_metric(gN, n, "gN")

    # SVD of the whitened differential: its singular values are the square
    # roots of the eigenvalues of f*gN relative to gM, without squaring noise
    chol_m = np.linalg.cholesky(gM)
    chol_n = np.linalg.cholesky(gN)
    whitened = chol_n.T @ scipy.linalg.solve_triangular(chol_m, df.T, lower=True).T
    try:
        U, svals, Vt = np.linalg.svd(whitened, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"singular value decomposition failed: {exc}") from exc
    lambdas = svals[::-1].copy()
    r = int(np.count_nonzero(lambdas > rank_tol))
    lambdas[: m - r] = 0.0
    alpha = scipy.linalg.solve_triangular(chol_m.T, Vt[::-1].T, lower=False)
    # beta_{n-m+i} is the image direction of alpha_i; the first n-m columns complete the basis
    ordered = np.concatenate([U[:, m:], U[:, :m][:, ::-1]], axis=1)
    beta = scipy.linalg.solve_triangular(chol_n.T, ordered, lower=False)

    scale = 1.0 / np.sqrt(1.0 + lambdas**2)
    e_frame = np.zeros((m + n, m))
    e_frame[:m, :] = alpha * scale
    for i in range(m - r, m):
        e_frame[m:, i] = lambdas[i] * scale[i] * beta[:, n - m + i]

    xi_frame = np.zeros((m + n, n))
    xi_frame[m:, : n - r] = beta[:, : n - r]
    for i in range(n - r, n):
        k = i + m - n
        xi_frame[:m, i] = -lambdas[k] * scale[k] * alpha[:, k]
        xi_frame[m:, i] = scale[k] * beta[:, i]

    return SingularData(m, n, r, lambdas, alpha, beta, e_frame, xi_frame, df, gM, gN)


@dataclass(frozen=True)
class GraphPointState:
    df: np.ndarray
    pullback: np.ndarray
    induced: np.ndarray
    s_tensor: np.ndarray
    lambdas: np.ndarray
    u: float
    mus: np.ndarray
    s2_min: float
    lamlam_max: float

    def to_dict(self) -> dict:
        def finite(x):
            return None if not math.isfinite(x) else float(x)

        return {
            "df": self.df.tolist(),
            "pullback": self.pullback.tolist(),
            "induced": self.induced.tolist(),
            "s_tensor": self.s_tensor.tolist(),
            "lambdas": self.lambdas.tolist(),
            "u": float(self.u),
            "mus": self.mus.tolist(),
            "s2_min": finite(self.s2_min),
            "lamlam_max": float(self.lamlam_max),
        }


def mu_values(lambdas) -> np.ndarray:
    """Eigenvalues of s w.r.t. the induced metric, ascending."""
    lam = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    return (1.0 - lam**2) / (1.0 + lam**2)


def graph_point_state(df, gM=None, gN=None) -> GraphPointState:
    sd = singular_decompose(df, gM, gN)
    pullback = sd.df.T @ sd.gN @ sd.df
    lam = sd.lambdas
    mus = mu_values(lam)
    if sd.m >= 2:
        s2_min = float(mus[0] + mus[1])
        lamlam_max = float(lam[-1] * lam[-2])
    else:
        s2_min = math.inf
        lamlam_max = 0.0
    return GraphPointState(
        df=sd.df,
        pullback=pullback,
        induced=sd.gM + pullback,
        s_tensor=sd.gM - pullback,
        lambdas=lam,
        u=float(1.0 / math.sqrt(np.prod(1.0 + lam**2))),
        mus=mus,
        s2_min=s2_min,
        lamlam_max=lamlam_max,
    )


@dataclass(frozen=True)
class FrameComponents:
    """Closed-form values of s on the adapted frames."""

    ee: np.ndarray  # m x m, s(e_i, e_j)
    xixi: np.ndarray  # n x n, s(xi_i, xi_j)
    exi: np.ndarray  # m x n, s(e_i, xi_j)


def s_on_frames(sd: SingularData) -> FrameComponents:
    m, n, r = sd.m, sd.n, sd.r
    lam = sd.lambdas
    ratio = (1.0 - lam**2) / (1.0 + lam**2)
    xixi_diag = -np.ones(n)
    for i in range(n - r, n):
        xixi_diag[i] = -ratio[i + m - n]
    exi = np.zeros((m, n))
    for i in range(r):
        k = m - r + i
        exi[k, n - r + i] = -2.0 * lam[k] / (1.0 + lam[k] ** 2)
    return FrameComponents(np.diag(ratio), np.diag(xixi_diag), exi)


def wedge_pairs(m: int) -> list[tuple[int, int]]:
    """Lexicographic basis e_i ^ e_j, i < j, of Lambda^2 R^m."""
    return list(combinations(range(m), 2))


def kulkarni_nomizu(P, Q) -> np.ndarray:
    """Matrix of P (.) Q on Lambda^2 in the lexicographic wedge basis."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape or P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise BadTensor(f"need two square matrices of equal size, got {P.shape}, {Q.shape}")
    pairs = np.array(wedge_pairs(P.shape[0]), dtype=int).reshape(-1, 2)
    i, j = pairs[:, 0][:, None], pairs[:, 1][:, None]
    k, l = pairs[:, 0][None, :], pairs[:, 1][None, :]
    return P[i, k] * Q[j, l] + P[j, l] * Q[i, k] - P[j, k] * Q[i, l] - P[i, l] * Q[j, k]


@dataclass(frozen=True)
class SquareBracket:
    matrix: np.ndarray  # T (.) g
    metric: np.ndarray  # 1/2 g (.) g
    eigenvalues: np.ndarray  # ascending, relative to metric


def square_bracket(T, g) -> SquareBracket:
    """T^[2] = T (.) g and its eigenvalues relative to G = 1/2 g (.) g."""
    T = np.asarray(T, dtype=float)
    g = _check_metric(g, T.shape[0], "g")
    K = kulkarni_nomizu(T, g)
    G = 0.5 * kulkarni_nomizu(g, g)
    if K.size == 0:
        return SquareBracket(K, G, np.zeros(0))
    vals = scipy.linalg.eigh(0.5 * (K + K.T), G, eigvals_only=True)
    return SquareBracket(K, G, vals)


def _check_A(lambdas, A, r):
    lam = np.asarray(lambdas, dtype=float)
    A = np.asarray(A, dtype=float)
    m = lam.size
    if A.ndim != 3 or A.shape[1:] != (m, m):
        raise BadTensor(f"A must have shape (n, {m}, {m}), got {A.shape}")
    if not np.allclose(A, A.transpose(0, 2, 1), rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise BadTensor("A is not symmetric in its tangent arguments")
    if r is None:
        r = int(np.count_nonzero(lam > RANK_TOL))
    if r > min(m, A.shape[0]):
        raise BadTensor(f"rank {r} exceeds dimensions m={m}, n={A.shape[0]}")
    return lam, A, r


def quantity_A(lambdas, A, r: int | None = None) -> float:
    """The curvature-free group of the log u evolution.

    ``A[a, i, k]`` is A_{xi_a}(e_i, e_k). The three sums are evaluated exactly
    as written, with the rank-shifted indices ``lambda_{m-r+i}`` and
    ``xi_{n-r+i}`` and the unshifted tangent arguments ``e_i``.
    """
    lam, A, r = _check_A(lambdas, A, r)
    m, n = lam.size, A.shape[0]
    total = float(np.sum(A**2))
    for i in range(r):
        total += lam[m - r + i] ** 2 * float(np.sum(A[n - r + i, i, :] ** 2))
    for i in range(r):
        for j in range(i + 1, r):
            weight = lam[m - r + i] * lam[m - r + j]
            total += 2.0 * weight * float(np.dot(A[n - r + j, i, :], A[n - r + i, j, :]))
    return total


def quantity_A_grouped_bound(lambdas, A, delta: float, r: int | None = None) -> float:
    """delta |A|^2 + (1 - delta) sum_k sum_{i<j} (|A_{xi_j}(e_i,e_k)| - |A_{xi_i}(e_j,e_k)|)^2.

    Intermediate lower bound for ``quantity_A`` valid whenever every pair
    product of singular values is at most ``1 - delta``.
    """
    lam, A, r = _check_A(lambdas, A, r)
    n = A.shape[0]
    grouped = 0.0
    for i in range(r):
        for j in range(i + 1, r):
            diff = np.abs(A[n - r + j, i, :]) - np.abs(A[n - r + i, j, :])
            grouped += float(np.sum(diff**2))
    return delta * float(np.sum(A**2)) + (1.0 - delta) * grouped


def constant_curvature(kappa: float, g) -> Curvature:
    """R(u,v,w,z) = kappa (<u,w><v,z> - <u,z><v,w>) for the inner product g."""
    g = np.asarray(g, dtype=float)

    def R(u, v, w, z):
        return kappa * ((u @ g @ w) * (v @ g @ z) - (u @ g @ z) * (v @ g @ w))

    return R


def diagonal_curvature(sec, basis, g) -> Curvature:
    """Algebraic curvature tensor with prescribed sectional curvatures on frame planes.

    ``sec[a, b]`` is the sectional curvature of the plane spanned by columns
    ``a`` and ``b`` of the g-orthonormal ``basis``; the curvature operator is
    diagonal in the wedge basis built from those columns.
    """
    sec = np.asarray(sec, dtype=float)
    coords = np.asarray(basis, dtype=float).T @ np.asarray(g, dtype=float)
    pairs = wedge_pairs(sec.shape[0])

    def R(u, v, w, z):
        cu, cv, cw, cz = coords @ u, coords @ v, coords @ w, coords @ z
        total = 0.0
        for a, b in pairs:
            total += sec[a, b] * (cu[a] * cv[b] - cu[b] * cv[a]) * (cw[a] * cz[b] - cw[b] * cz[a])
        return total

    return R


@dataclass(frozen=True)
class QuantityB:
    direct: float
    decomposed: float
    terms: tuple[float, float, float]


def _sectional(R: Curvature, u, v, g) -> float:
    area2 = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    if area2 <= 1e-14 * max(1.0, (u @ g @ u) * (v @ g @ v)):
        return 0.0
    return R(u, v, u, v) / area2


def quantity_B(sd: SingularData, curvM: Curvature, curvN: Curvature, sigma: float) -> QuantityB:
    """The curvature group of the log u evolution, computed two ways.

    ``direct`` evaluates sum_{l,k} (lambda_l^2 R_M - f*R_N)(e_l,e_k,e_l,e_k) with
    the curvature evaluators applied to the M and N blocks of the frame.
    ``decomposed`` evaluates the three-group expression for twice the
    quantity (target pinching, Ricci excess, area-decreasing weights) and
    halves it.
    """
    m, n = sd.m, sd.n
    lam = sd.lambdas
    if sd.e_frame.shape != (m + n, m):
        raise BadTensor("frame shape does not match (m, n)")
    eM = sd.e_frame[:m, :]
    eN = sd.e_frame[m:, :]

    direct = 0.0
    for l in range(m):
        for k in range(m):
            direct += lam[l] ** 2 * curvM(eM[:, l], eM[:, k], eM[:, l], eM[:, k])
            direct -= curvN(eN[:, l], eN[:, k], eN[:, l], eN[:, k])

    gM_kk = 1.0 / (1.0 + lam**2)
    fgN_kk = lam**2 / (1.0 + lam**2)
    alpha = sd.alpha_basis
    secM = np.zeros((m, m))
    secN = np.zeros((m, m))
    for k in range(m):
        for l in range(m):
            if k == l:
                continue
            secM[k, l] = _sectional(curvM, alpha[:, k], alpha[:, l], sd.gM)
            secN[k, l] = _sectional(curvN, eN[:, k], eN[:, l], sd.gN)
    ricM = np.array([sum(curvM(alpha[:, a], eM[:, l], alpha[:, a], eM[:, l]) for a in range(m)) for l in range(m)])

    t1 = 0.0
    for l in range(m):
        for k in range(m):
            if k != l:
                t1 += 2.0 * lam[l] ** 2 * fgN_kk[k] * gM_kk[l] * (sigma - secN[k, l])
    t2 = float(np.sum(lam**2 * (ricM - (m - 1) * sigma * gM_kk)))
    t3 = 0.0
    for k in range(m):
        for l in range(k + 1, m):
            lk, ll = lam[k], lam[l]
            weight = ((lk - ll) ** 2 + 2.0 * ll * lk * (1.0 - ll * lk)) / ((1.0 + lk**2) * (1.0 + ll**2))
            t3 += weight * (secM[k, l] + sigma)
    return QuantityB(float(direct), float(0.5 * (t1 + t2 + t3)), (float(t1), float(t2), float(t3)))
