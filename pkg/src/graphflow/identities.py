"""Randomized and analytic checks of the pointwise graph identities.

Each suite compares a routine from :mod:`graph_algebra` against an oracle
that shares none of its closed forms: plain eigensolves, explicit
contractions in ambient coordinates, or finite differences. Every suite is
deterministic in its seed; trial ``k`` draws from the ``k``-th child of
``SeedSequence(seed)``, so trials could run in any order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.stats

from .flow import FlowConfig, advance, init_from_preset, perturbation_matrix
from .graph_algebra import (
    constant_curvature,
    diagonal_curvature,
    quantity_A,
    quantity_A_grouped_bound,
    quantity_B,
    s_on_frames,
    singular_decompose,
    square_bracket,
)
from .manifolds import ModelManifold
from .mesh import build_mesh, estimate_df_all, estimate_second_fundamental, graph_geometry, project_to_product_tangent, singular_values_all

EXACT_TOL = 1e-9
B_REL_TOL = 1e-10
SIGN_TOL = 1e-12
FD_REL_TOL = 1e-3


@dataclass(frozen=True)
class TrialReport:
    suite: str
    trials: int
    max_abs_err: float
    max_rel_err: float
    failures: int
    seed: int | None
    skipped: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _trial_rngs(seed: int, trials: int):
    for child in np.random.SeedSequence(seed).spawn(trials):
        yield np.random.default_rng(child)


def _random_spd(rng: np.random.Generator, k: int) -> np.ndarray:
    B = rng.standard_normal((k, k))
    return B @ B.T / k + 0.5 * np.eye(k)


def _random_orthogonal(rng: np.random.Generator, k: int) -> np.ndarray:
    return scipy.stats.ortho_group.rvs(k, random_state=rng) if k > 1 else np.ones((1, 1))


# ----------------------------------------------------------------------
# eigenvalues of T (.) g


def verify_eigen_lemma(m: int = 4, trials: int = 1000, seed: int = 0, tol: float = EXACT_TOL) -> TrialReport:
    """Eigenvalues of T^[2] relative to g versus pairwise sums of those of T."""
    if not 2 <= m <= 6:
        raise ValueError(f"m must lie in 2..6, got {m}")
    worst_abs = worst_rel = 0.0
    failures = 0
    for rng in _trial_rngs(seed, trials):
        g = _random_spd(rng, m)
        T = rng.standard_normal((m, m))
        T = T + T.T
        L = np.linalg.cholesky(g)
        Linv = np.linalg.inv(L)
        mu = np.linalg.eigvalsh(Linv @ T @ Linv.T)
        iu = np.triu_indices(m, 1)
        oracle = np.sort(mu[iu[0]] + mu[iu[1]])
        got = square_bracket(T, g).eigenvalues
        err = float(np.max(np.abs(got - oracle)))
        rel = err / max(1.0, float(np.max(np.abs(oracle))))
        worst_abs, worst_rel = max(worst_abs, err), max(worst_rel, rel)
        failures += err > tol
    return TrialReport("eigen_lemma", trials, worst_abs, worst_rel, int(failures), seed, extra={"m": m})


# ----------------------------------------------------------------------
# s on the adapted frames


def _random_df(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    df = rng.standard_normal((n, m)) * rng.uniform(0.1, 2.0)
    kind = rng.integers(4)
    if kind == 1:
        # rank deficient
        df[:, rng.integers(m)] = 0.0
        df = df @ _random_orthogonal(rng, m)
    elif kind == 2:
        df[:] = 0.0
    elif kind == 3:
        # an isometric direction, lambda = 1
        U = _random_orthogonal(rng, n)[:, : min(m, n)]
        V = _random_orthogonal(rng, m)[:, : min(m, n)]
        svals = rng.uniform(0.0, 2.0, min(m, n))
        svals[0] = 1.0
        df = U @ np.diag(svals) @ V.T
    return df


def verify_frame_relations(trials: int = 1000, seed: int = 0, tol: float = EXACT_TOL, max_dim: int = 4) -> TrialReport:
    """Closed forms of s on e/xi frames against the ambient contraction of gM (+) (-gN)."""
    worst = 0.0
    failures = 0
    for rng in _trial_rngs(seed, trials):
        m = int(rng.integers(1, max_dim + 1))
        n = int(rng.integers(m, max_dim + 1))
        df = _random_df(rng, m, n)
        use_metrics = bool(rng.integers(2))
        gM = _random_spd(rng, m) if use_metrics else np.eye(m)
        gN = _random_spd(rng, n) if use_metrics else np.eye(n)
        sd = singular_decompose(df, gM, gN)
        G = np.zeros((m + n, m + n))
        G[:m, :m], G[m:, m:] = gM, gN
        S = G.copy()
        S[m:, m:] = -gN
        E, X = sd.e_frame, sd.xi_frame
        fc = s_on_frames(sd)
        errs = [
            np.abs(E.T @ S @ E - fc.ee),
            np.abs(X.T @ S @ X - fc.xixi),
            np.abs(E.T @ S @ X - fc.exi),
            np.abs(E.T @ G @ E - np.eye(m)),
            np.abs(X.T @ G @ X - np.eye(n)),
            np.abs(E.T @ G @ X),
            # e_i is tangent to the graph: N block equals df of M block
            np.abs(E[m:, :] - df @ E[:m, :]),
        ]
        err = max(float(np.max(e)) if e.size else 0.0 for e in errs)
        worst = max(worst, err)
        failures += err > tol
    return TrialReport("frame_relations", trials, worst, worst, int(failures), seed)


# ----------------------------------------------------------------------
# lower bound for the curvature-free group


def _lambdas_with_pinching(rng: np.random.Generator, m: int, r: int, delta: float) -> np.ndarray:
    lam = np.zeros(m)
    lam[m - r :] = np.sort(rng.uniform(0.0, 2.0, r))
    if r >= 2:
        top = lam[-1] * lam[-2]
        bound = 1.0 - delta
        if top > bound or rng.integers(4) == 0:
            # rescale onto (or inside) the pinching boundary
            scale = math.sqrt(bound / top) if top > 0 else 1.0
            lam[m - r :] *= scale if rng.integers(2) else scale * rng.uniform(0.3, 1.0)
    return lam


def verify_A_bound(trials: int = 1000, delta_targets=(0.1, 0.5), seed: int = 0) -> TrialReport:
    """Check A-quantity >= grouped-squares bound >= delta |A|^2 on pinched samples.

    ``trials`` draws are made for every delta target.
    """
    worst_abs = worst_rel = 0.0
    failures = 0
    min_ratio = math.inf
    for t_index, delta in enumerate(delta_targets):
        for rng in _trial_rngs(seed + 7919 * t_index, trials):
            m = int(rng.integers(2, 6))
            n = int(rng.integers(1, 6))
            r = int(rng.integers(0, min(m, n) + 1))
            lam = _lambdas_with_pinching(rng, m, r, delta)
            A = rng.standard_normal((n, m, m)) * (0.0 if rng.integers(20) == 0 else 1.0)
            A = 0.5 * (A + A.transpose(0, 2, 1))
            normA2 = float(np.sum(A**2))
            value = quantity_A(lam, A, r=r)
            grouped = quantity_A_grouped_bound(lam, A, delta, r=r)
            floor = delta * normA2
            shortfall = max(0.0, floor - value, grouped - value - 1e-12 * max(1.0, normA2))
            worst_abs = max(worst_abs, shortfall)
            worst_rel = max(worst_rel, shortfall / max(1.0, normA2))
            if normA2 > 0:
                min_ratio = min(min_ratio, value / normA2)
            failures += (value < floor - SIGN_TOL) or (grouped < floor - SIGN_TOL) or (value < grouped - 1e-12 * max(1.0, normA2))
    return TrialReport(
        "A_bound",
        trials * len(delta_targets),
        worst_abs,
        worst_rel,
        int(failures),
        seed,
        extra={"deltas": list(delta_targets), "min_A_over_normA2": min_ratio},
    )


# ----------------------------------------------------------------------
# curvature group: direct sum against the three-term decomposition


def _df_with_singular_values(rng: np.random.Generator, lam: np.ndarray, n: int) -> np.ndarray:
    m = lam.size
    k = min(m, n)
    U = _random_orthogonal(rng, n)[:, :k]
    V = _random_orthogonal(rng, m)[:, :k]
    return U @ np.diag(lam[::-1][:k]) @ V.T


def _curvature_bounds(curv, dim: int, sec: np.ndarray | None, kappa: float | None):
    """(sec_min, sec_max, ric_min) of an algebraic curvature tensor.

    For a curvature operator diagonal in a wedge basis the sectional
    curvature of any plane is a convex combination of the diagonal entries,
    so their extremes bound it sharply.
    """
    basis = np.eye(dim)
    ric = np.array([[sum(curv(basis[a], basis[b], basis[a], basis[c]) for a in range(dim)) for c in range(dim)] for b in range(dim)])
    ric_min = float(np.min(np.linalg.eigvalsh(0.5 * (ric + ric.T)))) if dim else 0.0
    if sec is None:
        return kappa, kappa, ric_min
    off = sec[~np.eye(dim, dtype=bool)]
    return float(off.min()), float(off.max()), ric_min


def _random_diagonal_curvature(rng: np.random.Generator, dim: int, lo: float, hi: float):
    sec = rng.uniform(lo, hi, (dim, dim))
    sec = np.triu(sec, 1)
    sec = sec + sec.T
    basis = _random_orthogonal(rng, dim)
    return diagonal_curvature(sec, basis, np.eye(dim)), sec


def verify_B_decomposition(trials: int = 1000, seed: int = 0, extended: bool = True) -> TrialReport:
    """Direct double sum against the halved three-group display, plus its sign.

    Trials alternate between constant-curvature pairs and, when ``extended``,
    per-plane curvature tensors. Half of the draws are constructed inside
    the hypotheses (pinching and area decreasing) to exercise the sign claim.
    """
    worst_abs = worst_rel = 0.0
    failures = 0
    sign_checked = 0
    min_on_hyp = math.inf
    for idx, rng in enumerate(_trial_rngs(seed, trials)):
        m = int(rng.integers(2, 5))
        n = int(rng.integers(m, 5))
        in_hyp = idx % 2 == 0
        lam = np.sort(rng.uniform(0.0, 1.5, m))
        if in_hyp and m >= 2 and lam[-1] * lam[-2] > 1.0:
            lam *= math.sqrt(1.0 / (lam[-1] * lam[-2])) * rng.uniform(0.5, 1.0)
            lam = np.sort(lam)
        df = _df_with_singular_values(rng, lam, n)
        sd = singular_decompose(df)
        sigma = float(rng.uniform(0.05, 2.0))
        use_ext = extended and idx % 4 >= 2
        if use_ext:
            if in_hyp:
                curvM, secM = _random_diagonal_curvature(rng, m, -0.9 * sigma, sigma + 1.0)
                curvN, secN = _random_diagonal_curvature(rng, n, -1.0, sigma)
            else:
                curvM, secM = _random_diagonal_curvature(rng, m, -2.0, 2.0)
                curvN, secN = _random_diagonal_curvature(rng, n, -2.0, 2.0)
            kM = kN = None
        else:
            if in_hyp:
                kM = float(rng.uniform(sigma, sigma + 1.0))
                kN = float(rng.uniform(-1.0, sigma))
            else:
                kM, kN = (float(v) for v in rng.uniform(-2.0, 2.0, 2))
            curvM, curvN = constant_curvature(kM, np.eye(m)), constant_curvature(kN, np.eye(n))
            secM = secN = None
        qb = quantity_B(sd, curvM, curvN, sigma)
        err = abs(qb.direct - qb.decomposed)
        rel = err / max(1.0, abs(qb.direct))
        worst_abs, worst_rel = max(worst_abs, err), max(worst_rel, rel)
        failures += rel > B_REL_TOL

        smin_M, _, ric_M = _curvature_bounds(curvM, m, secM, kM)
        _, smax_N, _ = _curvature_bounds(curvN, n, secN, kN)
        lamlam = lam[-1] * lam[-2]
        satisfied = smin_M > -sigma and ric_M >= (m - 1) * sigma - 1e-12 and sigma >= smax_N and lamlam <= 1.0
        if satisfied:
            sign_checked += 1
            min_on_hyp = min(min_on_hyp, qb.direct)
            failures += qb.direct < -SIGN_TOL
    return TrialReport(
        "B_decomposition",
        trials,
        worst_abs,
        worst_rel,
        int(failures),
        seed,
        extra={"sign_checked": sign_checked, "min_B_on_hypothesis": min_on_hyp if sign_checked else None},
    )


def worked_B_example(lambdas=(0.2, 0.5), sigma: float = 1.0) -> tuple[float, float]:
    """Both evaluations of the curvature group for S^2(1) -> S^2(1)."""
    lam = np.asarray(lambdas, dtype=float)
    sd = singular_decompose(np.diag(lam[::-1]))
    g = np.eye(lam.size)
    qb = quantity_B(sd, constant_curvature(1.0, g), constant_curvature(1.0, g), sigma)
    return qb.direct, qb.decomposed


# ----------------------------------------------------------------------
# Gauss equation on graphs of analytic maps S^2 -> S^2


@dataclass(frozen=True)
class AnalyticSphereMap:
    """f(x) = r_N (q + eps W x) / |q + eps W x| extended to a neighbourhood of S^2.

    ``identity`` and ``constant`` are the special cases (q, W) = (0, I) and
    eps = 0.
    """

    q: np.ndarray
    W: np.ndarray
    eps: float

    @classmethod
    def identity(cls) -> "AnalyticSphereMap":
        return cls(np.zeros(3), np.eye(3), 1.0)

    @classmethod
    def constant(cls, q=(0.0, 0.0, 1.0)) -> "AnalyticSphereMap":
        return cls(np.asarray(q, dtype=float), np.zeros((3, 3)), 0.0)

    @classmethod
    def perturb(cls, eps: float = 0.3, seed: int = 7) -> "AnalyticSphereMap":
        S = ModelManifold.sphere(2)
        return cls(np.array([0.0, 0.0, 1.0]), perturbation_matrix(seed, S, S), eps)

    def pre(self, x):
        return self.q + self.eps * (x @ self.W.T)

    def __call__(self, x):
        y = self.pre(x)
        return y / np.linalg.norm(y, axis=-1, keepdims=True)

    def jet(self, x0):
        """f(x0), Df(x0) and the bilinear D^2 f(x0), all ambient."""
        y = self.pre(x0)
        r = np.linalg.norm(y)
        n = y / r
        L = self.eps * self.W
        P = (np.eye(3) - np.outer(n, n)) / r
        Df = P @ L

        def d2(v, w):
            a, b = L @ v, L @ w
            na, nb = n @ a, n @ b
            return (-na * b - nb * a - (a @ b) * n + 3.0 * na * nb * n) / r**2

        return n, Df, d2, r


def _tangent_basis(x0):
    return ModelManifold.sphere(2).tangent_basis_at(x0)


def _chart(x0, b, a):
    """Normal coordinates: exp_{x0}(a_0 b_0 + a_1 b_1) on the unit sphere."""
    v = a[0] * b[0] + a[1] * b[1]
    t = np.linalg.norm(v)
    if t == 0.0:
        return x0.copy()
    return math.cos(t) * x0 + math.sin(t) / t * v


def gauss_lhs(fmap: AnalyticSphereMap, x0, h: float = 1e-3) -> float:
    """Gaussian curvature of the graph metric by finite differences (Brioschi)."""
    b = _tangent_basis(x0)

    def G(a0, a1):
        p = _chart(x0, b, (a0, a1))
        return np.concatenate([p, fmap(p)])

    def metric(a0, a1):
        d0 = (G(a0 + h, a1) - G(a0 - h, a1)) / (2 * h)
        d1 = (G(a0, a1 + h) - G(a0, a1 - h)) / (2 * h)
        return d0 @ d0, d0 @ d1, d1 @ d1

    g = {(i, j): np.array(metric(i * h, j * h)) for i in (-1, 0, 1) for j in (-1, 0, 1)}
    E, F, Gm = g[(0, 0)]
    du = (g[(1, 0)] - g[(-1, 0)]) / (2 * h)
    dv = (g[(0, 1)] - g[(0, -1)]) / (2 * h)
    duu = (g[(1, 0)] - 2 * g[(0, 0)] + g[(-1, 0)]) / h**2
    dvv = (g[(0, 1)] - 2 * g[(0, 0)] + g[(0, -1)]) / h**2
    duv = (g[(1, 1)] - g[(1, -1)] - g[(-1, 1)] + g[(-1, -1)]) / (4 * h**2)
    Eu, Fu, Gu = du
    Ev, Fv, Gv = dv
    Evv, Fuv, Guu = dvv[0], duv[1], duu[2]
    M1 = np.array(
        [
            [-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev],
            [Fv - 0.5 * Gu, E, F],
            [0.5 * Gv, F, Gm],
        ]
    )
    M2 = np.array([[0.0, 0.5 * Ev, 0.5 * Gu], [0.5 * Ev, E, F], [0.5 * Gu, F, Gm]])
    return float((np.linalg.det(M1) - np.linalg.det(M2)) / (E * Gm - F * F) ** 2)


def gauss_rhs(fmap: AnalyticSphereMap, x0) -> float:
    """Product curvature on the tangent plane plus the second fundamental form terms."""
    b = _tangent_basis(x0)
    y0, Df, d2, _ = fmap.jet(x0)
    d = [np.concatenate([b[i], Df @ b[i]]) for i in range(2)]
    hess = {}
    for i in range(2):
        for j in range(2):
            base = -x0 if i == j else np.zeros(3)
            hess[i, j] = np.concatenate([base, Df @ base + d2(b[i], b[j])])

    # tangent projector of S^2 x S^2 at (x0, y0)
    nM = np.concatenate([x0, np.zeros(3)])
    nN = np.concatenate([np.zeros(3), y0])
    T = np.stack(d, axis=1)

    def second_fundamental(v):
        v = v - (v @ nM) * nM - (v @ nN) * nN
        coef = np.linalg.solve(T.T @ T, T.T @ v)
        return v - T @ coef

    A = {k: second_fundamental(v) for k, v in hess.items()}

    def sec_block(u, v):
        return (u @ u) * (v @ v) - (u @ v) ** 2

    R = sec_block(d[0][:3], d[1][:3]) + sec_block(d[0][3:], d[1][3:])
    area2 = (d[0] @ d[0]) * (d[1] @ d[1]) - (d[0] @ d[1]) ** 2
    return float((R + A[0, 0] @ A[1, 1] - A[0, 1] @ A[0, 1]) / area2)


def verify_gauss(
    sample_points: int = 20,
    fd_step: float = 1e-3,
    maps=("identity", "s2_perturb"),
    epsilon: float = 0.3,
    seed: int = 7,
    tol: float = FD_REL_TOL,
) -> TrialReport:
    """Finite-difference curvature of graph metrics against the Gauss equation."""
    builders = {
        "identity": AnalyticSphereMap.identity,
        "constant": AnalyticSphereMap.constant,
        "s2_perturb": lambda: AnalyticSphereMap.perturb(epsilon, seed),
    }
    rng = np.random.default_rng(seed)
    points = ModelManifold.sphere(2).random_point(rng, sample_points)
    worst_abs = worst_rel = 0.0
    failures = skipped = trials = 0
    values = {}
    for name in maps:
        fmap = builders[name]()
        rows = []
        for x0 in points:
            if np.linalg.norm(fmap.pre(x0)) < 1e-2:
                skipped += 1
                continue
            lhs, rhs = gauss_lhs(fmap, x0, fd_step), gauss_rhs(fmap, x0)
            if not (math.isfinite(lhs) and math.isfinite(rhs)):
                skipped += 1
                continue
            trials += 1
            err = abs(lhs - rhs)
            rel = err / abs(rhs) if rhs != 0.0 else err
            worst_abs, worst_rel = max(worst_abs, err), max(worst_rel, rel)
            failures += rel > tol
            rows.append((lhs, rhs))
        values[name] = {
            "rhs_min": min((r for _, r in rows), default=None),
            "rhs_max": max((r for _, r in rows), default=None),
        }
    return TrialReport("gauss", trials, worst_abs, worst_rel, int(failures), seed, skipped, extra={"fd_step": fd_step, "maps": values})


# ----------------------------------------------------------------------
# log u evolution along a discrete run (diagnostic)


def verify_logu_identity(
    cfg: FlowConfig,
    M: ModelManifold,
    N: ModelManifold,
    steps: int = 3,
    sample_vertices: int = 64,
) -> TrialReport:
    """Compare the fixed-vertex rate of log u with the right-hand side of its evolution.

    The vertical gauge moves the base point of each particle with velocity
    -H^M, so the fixed-vertex rate is corrected by <grad_M log u, H^M>
    before the comparison with Delta log u + A-group + B-group. Second
    derivatives come from two-ring fits, so the agreement is rough; no
    threshold is applied and ``failures`` is always 0.
    """
    monitor_only = replace(cfg, strict=False)
    mesh = build_mesh(M, cfg.resolution)
    state, _ = init_from_preset(monitor_only, mesh, M, N)
    verts = np.unique(np.linspace(0, mesh.n_vertices - 1, min(sample_vertices, mesh.n_vertices)).astype(np.int64))
    curvM = constant_curvature(M.kappa, np.eye(M.dim))
    curvN = constant_curvature(N.kappa, np.eye(N.dim))
    errs, scales = [], []
    for _ in range(steps):
        f = state.f_values
        df, frames_n = estimate_df_all(mesh, f, N)
        logu = -0.5 * np.sum(np.log1p(singular_values_all(df) ** 2), axis=1)
        geo = graph_geometry(mesh, f, N)
        lap = geo.apply(logu)
        H = geo.laplacian_of_positions()
        HM, _ = project_to_product_tangent(M, N, mesh.vertices, f, H)
        hm = np.einsum("vam,va->vm", mesh.frames, HM)
        diffs = (logu[mesh.ring] - logu[:, None]) * mesh.ring_mask
        grad = np.einsum("vmk,vk->vm", mesh.ring_pinv, diffs)

        new, rec = advance(state, mesh, M, N, monitor_only, measure_diameter=False)
        if new.terminal:
            break
        df_new, _ = estimate_df_all(mesh, new.f_values, N)
        logu_new = -0.5 * np.sum(np.log1p(singular_values_all(df_new) ** 2), axis=1)
        rate = (logu_new - logu) / rec.dt
        for v in verts:
            sff = estimate_second_fundamental(mesh, f, int(v), M, N, df=df[v])
            sd = sff.frames
            a_group = quantity_A(sd.lambdas, sff.A, r=sd.r)
            b_group = quantity_B(sd, curvM, curvN, 1.0).direct
            lhs = rate[v] + grad[v] @ hm[v]
            rhs = lap[v] + a_group + b_group
            errs.append(abs(lhs - rhs))
            scales.append(max(abs(lhs), abs(rhs)))
        state = new
    errs_arr = np.asarray(errs) if errs else np.zeros(1)
    scale = np.asarray(scales) if scales else np.ones(1)
    return TrialReport(
        "logu_identity",
        len(errs),
        float(np.max(errs_arr)),
        float(np.max(errs_arr / np.maximum(scale, 1e-12))),
        0,
        cfg.seed,
        extra={
            "diagnostic": True,
            "mean_abs_err": float(np.mean(errs_arr)),
            "median_abs_err": float(np.median(errs_arr)),
            "max_side": float(np.max(scale)),
        },
    )
