"""Curvature hypotheses for (M, N) and area-decreasing certificates for maps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionTooSmall
from .manifolds import ModelManifold
from .mesh import MeshDomain, estimate_df_all, singular_values_all

DEFAULT_MARGIN = 1e-3


@dataclass(frozen=True)
class HypothesisReport:
    """Admissible range of the pinching constant sigma.

    The interval is ``[sigma_lo, sigma_hi]``, open at the lower end when
    ``lo_open`` is set (sigma must be strictly positive). ``sigma_lo`` and
    ``sigma_hi`` are ``None`` when no sigma works.
    """

    sigma_lo: float | None
    sigma_hi: float | None
    lo_open: bool
    sec_M_range: tuple[float, float]
    sec_N_range: tuple[float, float]
    ric_M_min: float
    admissible: bool

    def to_dict(self) -> dict:
        return {
            "sigma_lo": self.sigma_lo,
            "sigma_hi": self.sigma_hi,
            "sigma_lo_open": self.lo_open,
            "sec_M_range": list(self.sec_M_range),
            "sec_N_range": list(self.sec_N_range),
            "ric_M_min": self.ric_M_min,
            "admissible": self.admissible,
        }


def sigma_interval(M: ModelManifold, N: ModelManifold) -> HypothesisReport:
    """All sigma > 0 with sec_M > -sigma and Ric_M >= (m-1) sigma >= (m-1) sec_N.

    For constant-curvature models every quantity is exact: the upper end is
    Ric_M / (m-1) = sec_M, the lower end is sec_N (or an open 0 when N is flat).
    """
    m = M.dim
    if m < 2:
        raise DimensionTooSmall(f"the domain must have dimension >= 2, got {m}")
    sec_m = M.kappa
    sec_n = N.kappa if N.dim >= 2 else 0.0
    ric_min = (m - 1) * sec_m
    hi = ric_min / (m - 1)
    lo_open = sec_n <= 0.0
    lo = 0.0 if lo_open else sec_n
    # sec_M > -sigma holds automatically for sigma > 0 since sec_M >= 0 here
    admissible = hi > 0.0 and (lo < hi if lo_open else lo <= hi) and sec_m > -hi
    return HypothesisReport(
        sigma_lo=lo if admissible else None,
        sigma_hi=hi if admissible else None,
        lo_open=lo_open,
        sec_M_range=(sec_m, sec_m),
        sec_N_range=(sec_n, sec_n),
        ric_M_min=ric_min,
        admissible=admissible,
    )


@dataclass(frozen=True)
class AreaDecreasingCertificate:
    lamlam_max: float
    delta: float
    strict: bool
    margin: float

    def to_dict(self) -> dict:
        return {"lamlam_max": self.lamlam_max, "delta": self.delta, "strict": self.strict, "margin": self.margin}


def lamlam_from_df(df: np.ndarray) -> np.ndarray:
    """Per-vertex largest pair product of singular values."""
    lam = singular_values_all(df)
    if lam.shape[1] < 2:
        return np.zeros(len(lam))
    return lam[:, -1] * lam[:, -2]


def certify_map(
    f_values: np.ndarray,
    mesh: MeshDomain,
    M: ModelManifold,
    N: ModelManifold,
    margin: float = DEFAULT_MARGIN,
) -> AreaDecreasingCertificate:
    """Strictly area decreasing iff max over vertices of lambda_i lambda_j is below 1 - margin.

    Degree-nonzero maps between spheres fail this check by necessity; that is
    reported through ``strict=False``, never raised.
    """
    if M != mesh.manifold:
        raise ValueError("mesh was built on a different domain")
    df, _ = estimate_df_all(mesh, np.asarray(f_values, dtype=float), N)
    worst = float(np.max(lamlam_from_df(df)))
    if not math.isfinite(worst):
        raise FloatingPointError("non-finite differential estimate")
    return AreaDecreasingCertificate(worst, 1.0 - worst, worst < 1.0 - margin, margin)
