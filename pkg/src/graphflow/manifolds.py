"""Closed-form geometry of the constant-curvature model spaces.

Points on the round sphere S^m(r) are stored as ambient vectors in R^{m+1}
with norm r. Points on the flat torus T^m(r) are stored as arc-length
coordinates reduced to [0, 2*pi*r). All tangent calculus happens in ambient
coordinates, so a tangent vector is simply an ambient vector orthogonal to
the sphere normal (sphere) or an arbitrary coordinate vector (torus).

Every array-valued method accepts leading batch dimensions: ``p`` may have
shape ``(..., ambient_dim)`` and the result broadcasts accordingly. The
scalar-looking operations (``curvature_at``, ``ricci_at``) take single
points and vectors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import AntipodalPoints, DegenerateRetraction, NotTangent, OffManifold

OFF_MANIFOLD_TOL = 1e-8
_ANTIPODAL_TOL = 1e-12


class Kind(str, enum.Enum):
    ROUND_SPHERE = "sphere"
    FLAT_TORUS = "torus"


@dataclass(frozen=True)
class ModelManifold:
    """An analytic model space: round sphere or flat torus.

    Attributes:
        kind: Which model.
        dim: Intrinsic dimension (1..8).
        radius: Sphere radius, or the common circle radius of the torus.
    """

    kind: Kind
    dim: int
    radius: float = 1.0

    def __post_init__(self):
        if not 1 <= self.dim <= 8:
            raise ValueError(f"dimension must lie in 1..8, got {self.dim}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "kind", Kind(self.kind))

    @classmethod
    def sphere(cls, dim: int = 2, radius: float = 1.0) -> "ModelManifold":
        return cls(Kind.ROUND_SPHERE, dim, float(radius))

    @classmethod
    def torus(cls, dim: int = 2, radius: float = 1.0) -> "ModelManifold":
        return cls(Kind.FLAT_TORUS, dim, float(radius))

    @property
    def is_sphere(self) -> bool:
        return self.kind is Kind.ROUND_SPHERE

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1 if self.is_sphere else self.dim

    @property
    def kappa(self) -> float:
        """The constant sectional curvature."""
        return 1.0 / self.radius**2 if self.is_sphere else 0.0

    @property
    def period(self) -> float:
        return 2.0 * np.pi * self.radius

    def __str__(self) -> str:
        name = "S" if self.is_sphere else "T"
        return f"{name}^{self.dim}(r={self.radius:g})"

    # ------------------------------------------------------------------
    # validation

    def check_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (self.ambient_dim,):
            raise OffManifold(f"expected ambient dimension {self.ambient_dim}, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise OffManifold("non-finite point coordinates")
        if self.is_sphere:
            dev = np.abs(np.linalg.norm(p, axis=-1) - self.radius)
            if np.any(dev > OFF_MANIFOLD_TOL * max(1.0, self.radius)):
                raise OffManifold(f"point off {self}: | |p| - r | = {np.max(dev):.3g}")
        return p

    def check_tangent(self, p: np.ndarray, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.ambient_dim,):
            raise NotTangent(f"expected ambient dimension {self.ambient_dim}, got shape {v.shape}")
        if self.is_sphere:
            normal_part = np.abs(np.sum(v * p, axis=-1)) / self.radius
            scale = 1.0 + np.linalg.norm(v, axis=-1)
            if np.any(normal_part > OFF_MANIFOLD_TOL * scale):
                raise NotTangent(f"vector has normal component {np.max(normal_part):.3g}")
        return v

    # ------------------------------------------------------------------
    # frames and projections

    def unit_normal(self, p: np.ndarray) -> np.ndarray:
        """Outward unit normal of the sphere (zeros for the torus)."""
        p = np.asarray(p, dtype=float)
        if not self.is_sphere:
            return np.zeros_like(p)
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def project_tangent(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        if not self.is_sphere:
            return np.array(v, dtype=float)
        n = self.unit_normal(p)
        return v - np.sum(v * n, axis=-1, keepdims=True) * n

    def frames(self, p: np.ndarray) -> np.ndarray:
        """Orthonormal tangent frames as columns, shape ``(..., ambient_dim, dim)``.

        The sphere frame is the Householder reflection sending the dominant
        axis to the normal, with that column dropped. Deterministic in ``p``.
        """
        p = np.asarray(p, dtype=float)
        batch = p.shape[:-1]
        a = self.ambient_dim
        if not self.is_sphere:
            return np.broadcast_to(np.eye(a), batch + (a, a)).copy()
        n = self.unit_normal(p).reshape(-1, a)
        k = np.argmax(np.abs(n), axis=1)
        rows = np.arange(n.shape[0])
        w = n.copy()
        w[rows, k] += np.where(n[rows, k] >= 0.0, 1.0, -1.0)
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        householder = np.eye(a)[None] - 2.0 * w[:, :, None] * w[:, None, :]
        keep = np.ones((n.shape[0], a), dtype=bool)
        keep[rows, k] = False
        basis = householder.transpose(0, 2, 1)[keep].reshape(n.shape[0], a - 1, a)
        return basis.transpose(0, 2, 1).reshape(batch + (a, a - 1))

    def tangent_basis_at(self, p) -> np.ndarray:
        """Orthonormal basis of T_pM, one ambient vector per row."""
        p = self.check_point(p)
        if p.ndim != 1:
            raise ValueError("tangent_basis_at takes a single point")
        return self.frames(p).T.copy()

    # ------------------------------------------------------------------
    # curvature

    def _inner(self, u, v) -> float:
        return float(np.dot(u, v))

    def curvature_at(self, p, u, v, w, z) -> float:
        """R(u, v, w, z) with R(u, v, u, v) = kappa (|u|^2|v|^2 - <u,v>^2)."""
        p = self.check_point(p)
        u, v, w, z = (self.check_tangent(p, x) for x in (u, v, w, z))
        if self.kappa == 0.0:
            return 0.0
        ip = self._inner
        return self.kappa * (ip(u, w) * ip(v, z) - ip(u, z) * ip(v, w))

    def sectional_at(self, p, u, v) -> float:
        area2 = np.dot(u, u) * np.dot(v, v) - np.dot(u, v) ** 2
        if area2 <= 0.0:
            raise NotTangent("sectional curvature of a degenerate plane")
        return self.curvature_at(p, u, v, u, v) / area2

    def ricci_at(self, p, u, v) -> float:
        """Ric(u, v), computed as the trace of R(., u, ., v) over a frame."""
        p = self.check_point(p)
        u = self.check_tangent(p, u)
        v = self.check_tangent(p, v)
        return sum(self.curvature_at(p, e, u, e, v) for e in self.tangent_basis_at(p))

    # ------------------------------------------------------------------
    # exponential, logarithm, retraction

    def log_map(self, p, q, check: bool = True) -> np.ndarray:
        """Tangent vector at ``p`` pointing along the minimizing geodesic to ``q``."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if check:
            self.check_point(p)
            self.check_point(q)
        if not self.is_sphere:
            d = q - p
            return d - self.period * np.round(d / self.period)
        r2 = self.radius**2
        c = np.sum(p * q, axis=-1, keepdims=True)
        w = q - (c / r2) * p
        wn = np.linalg.norm(w, axis=-1, keepdims=True)
        if np.any((c / r2 < -1.0 + _ANTIPODAL_TOL) & (wn < 1e-6 * self.radius)):
            raise AntipodalPoints("logarithm undefined for antipodal points")
        theta = np.arctan2(wn * self.radius, c)
        scale = np.divide(self.radius * theta, wn, out=np.zeros_like(wn), where=wn > 0.0)
        return scale * w

    def exp_map(self, p, v) -> np.ndarray:
        """Geodesic step (exact rotation on the sphere, addition on the torus)."""
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        if not self.is_sphere:
            return np.mod(p + v, self.period)
        vn = np.linalg.norm(v, axis=-1, keepdims=True)
        t = vn / self.radius
        sinc = np.divide(np.sin(t), t, out=np.ones_like(t), where=t > 0.0)
        out = np.cos(t) * p + sinc * v
        return self.radius * out / np.linalg.norm(out, axis=-1, keepdims=True)

    def distance(self, p, q) -> np.ndarray:
        return np.linalg.norm(self.log_map(p, q, check=False), axis=-1)

    def retract(self, p, v, check: bool = True) -> np.ndarray:
        """Sphere: radius * (p + v) / |p + v|. Torus: coordinate-wise wrap of p + v."""
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        if check:
            self.check_point(p)
        x = p + v
        if not self.is_sphere:
            out = np.mod(x, self.period)
            # np.mod can return the period itself for tiny negative inputs
            return np.where(out >= self.period, 0.0, out)
        nrm = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(nrm < 1e-300):
            raise DegenerateRetraction("p + v = 0 has no spherical retraction")
        return self.radius * x / nrm

    def chord(self, p, q) -> np.ndarray:
        """Ambient displacement from p to q (shortest wrap on the torus)."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.is_sphere:
            return q - p
        return self.log_map(p, q, check=False)

    # ------------------------------------------------------------------
    # sampling helpers

    def random_point(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        shape = (self.ambient_dim,) if size is None else (size, self.ambient_dim)
        if self.is_sphere:
            x = rng.standard_normal(shape)
            return self.radius * x / np.linalg.norm(x, axis=-1, keepdims=True)
        return rng.uniform(0.0, self.period, shape)

    def random_tangent(self, rng: np.random.Generator, p: np.ndarray) -> np.ndarray:
        return self.project_tangent(p, rng.standard_normal(np.shape(p)))
