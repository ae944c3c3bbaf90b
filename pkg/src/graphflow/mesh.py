"""Discretization of the domain M and discrete differential estimators.

The mesh lives on M only; a map f is a per-vertex array of points on N. The
graph of f is the polyhedral surface with vertices ``(x_i, f(x_i))`` in the
product of the two ambient spaces. Edge vectors of that surface are taken as
chords (sphere) or shortest wrapped differences (torus), so periodic
domains need no seam bookkeeping.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .errors import AntipodalPoints, DegenerateNeighborhood, DegenerateTriangle, UnsupportedDomain
from .graph_algebra import SingularData, singular_decompose
from .manifolds import ModelManifold

DEGENERATE_AREA = 1e-14
DIAMETER_SAMPLE = 512


# ----------------------------------------------------------------------
# mesh construction

_PHI = (1.0 + math.sqrt(5.0)) / 2.0
_ICO_VERTICES = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=float,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def icosphere(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere after ``resolution`` rounds of midpoint subdivision."""
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTICES]
    faces = _ICO_FACES
    for _ in range(resolution):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = cache.get(key)
            if idx is None:
                mid = verts[a] + verts[b]
                verts.append(mid / np.linalg.norm(mid))
                idx = cache[key] = len(verts) - 1
            return idx

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = np.array(new_faces, dtype=np.int64)
    return np.array(verts), faces


def torus_grid(resolution: int, period: float) -> tuple[np.ndarray, np.ndarray]:
    """Periodic ``resolution x resolution`` grid, each quad split along one diagonal."""
    k = resolution
    h = period / k
    i, j = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    verts = np.stack([i.ravel() * h, j.ravel() * h], axis=1)
    idx = lambda a, b: (a % k) * k + (b % k)  # noqa: E731
    faces = []
    for a in range(k):
        for b in range(k):
            faces.append([idx(a, b), idx(a + 1, b), idx(a + 1, b + 1)])
            faces.append([idx(a, b), idx(a + 1, b + 1), idx(a, b + 1)])
    return verts, np.array(faces, dtype=np.int64)


@dataclass
class MeshDomain:
    """A triangulated model domain plus the fixed operators used by the flow.

    Attributes:
        manifold: The domain M.
        vertices: ``(V, ambient_dim)`` points on M.
        faces: ``(F, 3)`` vertex indices, consistently oriented.
        edges: ``(E, 2)`` unique undirected edges.
        neighbors: One-ring index arrays, one per vertex.
        h_min, h_max: Extreme chordal edge lengths.
    """

    manifold: ModelManifold
    resolution: int
    vertices: np.ndarray
    faces: np.ndarray
    edges: np.ndarray
    neighbors: list[np.ndarray]
    h_min: float
    h_max: float
    # padded one-ring (V, K) with -1 padding, mask, and least-squares operators
    ring: np.ndarray = field(repr=False, default=None)
    ring_mask: np.ndarray = field(repr=False, default=None)
    ring_pinv: np.ndarray = field(repr=False, default=None)
    ring_coords: np.ndarray = field(repr=False, default=None)
    frames: np.ndarray = field(repr=False, default=None)
    vertex_areas: np.ndarray = field(repr=False, default=None)
    scatter: scipy.sparse.csr_matrix = field(repr=False, default=None)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges) + len(self.faces)

    def two_ring(self, v: int) -> np.ndarray:
        ring = set(self.neighbors[v].tolist())
        for w in self.neighbors[v]:
            ring.update(self.neighbors[w].tolist())
        ring.discard(v)
        return np.array(sorted(ring), dtype=np.int64)


def _unique_edges(faces: np.ndarray) -> np.ndarray:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def build_mesh(M: ModelManifold, resolution: int) -> MeshDomain:
    """Icosphere (sphere, ``resolution`` subdivisions) or periodic grid (torus, res x res)."""
    if resolution < 0:
        raise UnsupportedDomain(f"resolution must be non-negative, got {resolution}")
    if M.dim != 2:
        raise UnsupportedDomain(f"only two-dimensional domains are meshed, got {M}")
    if M.is_sphere:
        verts, faces = icosphere(resolution)
        verts = M.radius * verts
    else:
        if resolution < 3:
            raise UnsupportedDomain("a periodic grid needs resolution >= 3")
        verts, faces = torus_grid(resolution, M.period)

    edges = _unique_edges(faces)
    nv = len(verts)
    nbr_sets: list[set[int]] = [set() for _ in range(nv)]
    for a, b in edges:
        nbr_sets[a].add(int(b))
        nbr_sets[b].add(int(a))
    neighbors = [np.array(sorted(s), dtype=np.int64) for s in nbr_sets]
    lengths = np.linalg.norm(M.chord(verts[edges[:, 0]], verts[edges[:, 1]]), axis=1)

    mesh = MeshDomain(
        manifold=M,
        resolution=resolution,
        vertices=verts,
        faces=faces,
        edges=edges,
        neighbors=neighbors,
        h_min=float(lengths.min()),
        h_max=float(lengths.max()),
    )
    _precompute(mesh)
    return mesh


def _precompute(mesh: MeshDomain) -> None:
    M = mesh.manifold
    nv = mesh.n_vertices
    kmax = max(len(n) for n in mesh.neighbors)
    ring = -np.ones((nv, kmax), dtype=np.int64)
    for v, nb in enumerate(mesh.neighbors):
        ring[v, : len(nb)] = nb
    mask = ring >= 0
    safe = np.where(mask, ring, np.arange(nv)[:, None])

    x = mesh.vertices
    frames = M.frames(x)
    logs = M.log_map(x[:, None, :], x[safe], check=False) * mask[..., None]
    coords = np.einsum("vka,vam->vkm", logs, frames)
    design = _design(coords) * mask[..., None]
    gram = np.einsum("vki,vkj->vij", design, design)
    cond = np.linalg.cond(gram)
    if np.any(~np.isfinite(cond)) or np.any(cond * mesh.h_min**2 > 1e8):
        raise DegenerateNeighborhood("one-ring too degenerate for a quadratic fit")
    # only the rows producing the linear part are kept
    pinv = np.linalg.solve(gram, design.transpose(0, 2, 1))[:, : M.dim]

    mesh.ring = safe
    mesh.ring_mask = mask
    mesh.ring_coords = coords
    mesh.ring_pinv = pinv
    mesh.frames = frames

    nf = len(mesh.faces)
    rows = mesh.faces.T.ravel()
    cols = np.arange(3 * nf)
    mesh.scatter = scipy.sparse.csr_matrix((np.ones(3 * nf), (rows, cols)), shape=(nv, 3 * nf))

    domain_edges = _face_edges(mesh, x, M)
    mesh.vertex_areas = GraphGeometry.from_edges(mesh, *domain_edges).areas


# ----------------------------------------------------------------------
# differential estimation


@dataclass(frozen=True)
class DifferentialEstimate:
    df: np.ndarray  # n x m in tangent frames of M at x and N at f(x)
    residual: float


def _design(coords: np.ndarray) -> np.ndarray:
    """Columns t_i and t_i t_j (halved on the diagonal) of a local quadratic model."""
    m = coords.shape[-1]
    iu = np.triu_indices(m)
    quad = coords[..., iu[0]] * coords[..., iu[1]] * np.where(iu[0] == iu[1], 0.5, 1.0)
    return np.concatenate([coords, quad], axis=-1)


def _fit(coords: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, float]:
    design = _design(coords)
    full = np.linalg.matrix_rank(design) == design.shape[1]
    if not full:
        design = coords
    coef, *_ = np.linalg.lstsq(design, targets, rcond=None)
    res = design @ coef - targets
    return coef[: coords.shape[1]].T, float(np.sqrt(np.mean(np.sum(res**2, axis=1))))


def estimate_df(mesh: MeshDomain, f_values, v: int, M: ModelManifold, N: ModelManifold) -> DifferentialEstimate:
    """Least-squares differential of f at vertex ``v`` from geodesic logs.

    Fits log_{f(x)}(f_j) ~ L a_j + Q(a_j, a_j) with a_j = log_x(x_j) over the
    one-ring and returns the linear part L. The quadratic term absorbs the
    asymmetry of irregular rings, which keeps the estimate second order. The
    two-ring is used when the one-ring spans fewer than m directions.
    """
    f_values = np.asarray(f_values, dtype=float)
    x = mesh.vertices[v]
    y = f_values[v]
    frame_m = M.frames(x)
    frame_n = N.frames(y)
    for nbrs in (mesh.neighbors[v], mesh.two_ring(v)):
        dom = M.log_map(x, mesh.vertices[nbrs], check=False) @ frame_m
        if np.linalg.matrix_rank(dom, tol=1e-10 * mesh.h_max) < M.dim:
            continue
        tgt = N.log_map(y, f_values[nbrs], check=False) @ frame_n
        df, residual = _fit(dom, tgt)
        return DifferentialEstimate(df, residual)
    raise DegenerateNeighborhood(f"vertex {v}: neighborhood spans fewer than {M.dim} directions")


def estimate_df_all(mesh: MeshDomain, f_values: np.ndarray, N: ModelManifold) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized one-ring estimate at every vertex.

    Returns:
        ``(df, frames_n)`` with ``df`` of shape ``(V, n, m)`` and the target
        frames ``(V, ambient_N, n)`` in which it is expressed.
    """
    frames_n = N.frames(f_values)
    tgt_logs = _ring_logs(mesh, f_values, N)
    tgt = np.einsum("vka,van->vkn", tgt_logs, frames_n)
    df = np.einsum("vmk,vkn->vnm", mesh.ring_pinv, tgt)
    return df, frames_n


def _ring_logs(mesh: MeshDomain, f_values: np.ndarray, N: ModelManifold) -> np.ndarray:
    y = f_values[:, None, :]
    q = f_values[mesh.ring]
    if N.is_sphere:
        c = np.sum(y * q, axis=-1) / N.radius**2
        if np.any(c[mesh.ring_mask] < -1.0 + 1e-12):
            raise AntipodalPoints("neighboring map values are antipodal")
    return N.log_map(y, q, check=False) * mesh.ring_mask[..., None]


def singular_values_all(df: np.ndarray) -> np.ndarray:
    """Singular values per vertex, ascending, shape ``(V, m)``."""
    return np.linalg.svd(df, compute_uv=False)[:, ::-1]


# ----------------------------------------------------------------------
# the graph as a polyhedral surface


def _face_edges(mesh: MeshDomain, pts: np.ndarray, mfd: ModelManifold) -> tuple[np.ndarray, np.ndarray]:
    a, b, c = mesh.faces.T
    e_ab = mfd.chord(pts[a], pts[b])
    e_ac = mfd.chord(pts[a], pts[c])
    return e_ab, e_ac


def graph_face_edges(mesh: MeshDomain, f_values: np.ndarray, N: ModelManifold, domain_edges=None):
    """Edge vectors ab, ac of every graph triangle in the product ambient space."""
    if domain_edges is None:
        domain_edges = _face_edges(mesh, mesh.vertices, mesh.manifold)
    n_ab, n_ac = _face_edges(mesh, f_values, N)
    return np.concatenate([domain_edges[0], n_ab], axis=1), np.concatenate([domain_edges[1], n_ac], axis=1)


@dataclass
class GraphGeometry:
    """Cotangent weights and mixed areas of a polyhedral surface.

    ``cots[:, c]`` is the cotangent of the angle at corner ``c`` of each face.
    """

    mesh: MeshDomain
    e_ab: np.ndarray
    e_ac: np.ndarray
    cots: np.ndarray
    areas: np.ndarray
    face_areas: np.ndarray

    @classmethod
    def from_edges(cls, mesh: MeshDomain, e_ab: np.ndarray, e_ac: np.ndarray) -> "GraphGeometry":
        e_bc = e_ac - e_ab
        l_ab = np.sum(e_ab * e_ab, axis=1)
        l_ac = np.sum(e_ac * e_ac, axis=1)
        l_bc = np.sum(e_bc * e_bc, axis=1)
        d_a = np.sum(e_ab * e_ac, axis=1)
        d_b = -np.sum(e_ab * e_bc, axis=1)
        d_c = np.sum(e_ac * e_bc, axis=1)
        twice_area = np.sqrt(np.clip(l_ab * l_ac - d_a * d_a, 0.0, None))
        face_areas = 0.5 * twice_area
        if np.any(face_areas < DEGENERATE_AREA) or not np.all(np.isfinite(face_areas)):
            bad = int(np.argmin(np.where(np.isfinite(face_areas), face_areas, -1.0)))
            raise DegenerateTriangle(f"face {bad} has area {face_areas[bad]:.3g}")
        cots = np.stack([d_a, d_b, d_c], axis=1) / twice_area[:, None]

        obtuse = (d_a < 0) | (d_b < 0) | (d_c < 0)
        voronoi = np.stack(
            [
                (l_ab * cots[:, 2] + l_ac * cots[:, 1]) / 8.0,
                (l_ab * cots[:, 2] + l_bc * cots[:, 0]) / 8.0,
                (l_ac * cots[:, 1] + l_bc * cots[:, 0]) / 8.0,
            ],
            axis=1,
        )
        corner_areas = np.where(obtuse[:, None], face_areas[:, None] / 3.0, voronoi)
        areas = mesh.scatter @ corner_areas.T.ravel()
        return cls(mesh, e_ab, e_ac, cots, areas, face_areas)

    def laplacian_of_positions(self) -> np.ndarray:
        """Cotangent Laplacian of the embedding, i.e. the Euclidean mean curvature vector."""
        e_ab, e_ac = self.e_ab, self.e_ac
        e_bc = e_ac - e_ab
        ca, cb, cc = self.cots[:, 0:1], self.cots[:, 1:2], self.cots[:, 2:3]
        at_a = 0.5 * (cc * e_ab + cb * e_ac)
        at_b = 0.5 * (-cc * e_ab + ca * e_bc)
        at_c = 0.5 * (-cb * e_ac - ca * e_bc)
        stacked = np.concatenate([at_a, at_b, at_c], axis=0)
        return (self.mesh.scatter @ stacked) / self.areas[:, None]

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Cotangent Laplacian of a per-vertex field (scalar or vector valued)."""
        values = np.asarray(values, dtype=float)
        vec = values.reshape(len(values), -1)
        a, b, c = self.mesh.faces.T
        ca, cb, cc = self.cots[:, 0:1], self.cots[:, 1:2], self.cots[:, 2:3]
        d_ab, d_ac, d_bc = vec[b] - vec[a], vec[c] - vec[a], vec[c] - vec[b]
        at_a = 0.5 * (cc * d_ab + cb * d_ac)
        at_b = 0.5 * (-cc * d_ab + ca * d_bc)
        at_c = 0.5 * (-cb * d_ac - ca * d_bc)
        out = (self.mesh.scatter @ np.concatenate([at_a, at_b, at_c], axis=0)) / self.areas[:, None]
        return out.reshape(values.shape)

    def weight_matrix(self) -> scipy.sparse.csr_matrix:
        """Symmetric cotangent weight matrix W with W_ii = -sum_j W_ij."""
        nv = self.mesh.n_vertices
        a, b, c = self.mesh.faces.T
        rows = np.concatenate([a, b, a, c, b, c])
        cols = np.concatenate([b, a, c, a, c, b])
        w = 0.5 * np.concatenate([self.cots[:, 2]] * 2 + [self.cots[:, 1]] * 2 + [self.cots[:, 0]] * 2)
        off = scipy.sparse.csr_matrix((w, (rows, cols)), shape=(nv, nv))
        return (off - scipy.sparse.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()


def graph_geometry(mesh: MeshDomain, f_values: np.ndarray, N: ModelManifold) -> GraphGeometry:
    return GraphGeometry.from_edges(mesh, *graph_face_edges(mesh, np.asarray(f_values, dtype=float), N))


def graph_laplacian_apply(mesh: MeshDomain, f_values, M: ModelManifold, N: ModelManifold) -> np.ndarray:
    """Euclidean mean curvature vector of the graph at every vertex, ``(V, aM + aN)``."""
    if M != mesh.manifold:
        raise ValueError("mesh was built on a different domain")
    return graph_geometry(mesh, f_values, N).laplacian_of_positions()


def project_to_product_tangent(M: ModelManifold, N: ModelManifold, x, y, V) -> tuple[np.ndarray, np.ndarray]:
    """Split an ambient vector on M x N into its T_xM and T_yN components."""
    V = np.asarray(V, dtype=float)
    am = M.ambient_dim
    return M.project_tangent(x, V[..., :am]), N.project_tangent(y, V[..., am:])


# ----------------------------------------------------------------------
# second fundamental form (diagnostic only)


@dataclass(frozen=True)
class SecondFundamentalEstimate:
    A: np.ndarray  # (n, m, m): A[a, i, k] = A_{xi_a}(e_i, e_k)
    normA2: float
    frames: SingularData


def estimate_second_fundamental(
    mesh: MeshDomain, f_values, v: int, M: ModelManifold, N: ModelManifold, df: np.ndarray | None = None
) -> SecondFundamentalEstimate:
    """Quadratic fit of the graph over its tangent plane in normal coordinates of M x N.

    Neighbours are placed with the product logarithm (log_x, log_{f(x)}), so the
    curvature of M x N inside its ambient space never enters; the Hessian of
    the normal heights at the centre is the second fundamental form.
    """
    f_values = np.asarray(f_values, dtype=float)
    if df is None:
        df = estimate_df(mesh, f_values, v, M, N).df
    sd = singular_decompose(df)
    m = M.dim
    nbrs = mesh.two_ring(v)
    x, y = mesh.vertices[v], f_values[v]
    disp = np.concatenate(
        [
            M.log_map(x, mesh.vertices[nbrs], check=False) @ M.frames(x),
            N.log_map(y, f_values[nbrs], check=False) @ N.frames(y),
        ],
        axis=1,
    )
    t = disp @ sd.e_frame
    heights = disp @ sd.xi_frame
    iu = np.triu_indices(m)
    quad = t[:, iu[0]] * t[:, iu[1]] * np.where(iu[0] == iu[1], 0.5, 1.0)
    design = np.concatenate([t, quad], axis=1)
    if np.linalg.matrix_rank(design, tol=1e-8 * mesh.h_max**2) < design.shape[1]:
        raise DegenerateNeighborhood(f"vertex {v}: two-ring cannot support a quadratic fit")
    coef, *_ = np.linalg.lstsq(design, heights, rcond=None)
    A = np.zeros((sd.n, m, m))
    for a in range(sd.n):
        A[a][iu] = coef[m:, a]
        A[a] = A[a] + np.triu(A[a], 1).T
    return SecondFundamentalEstimate(A, float(np.sum(A**2)), sd)


# ----------------------------------------------------------------------
# diagnostics and export


def image_diameter(f_values, N: ModelManifold) -> float:
    """Largest pairwise geodesic distance over a deterministic subsample."""
    f_values = np.asarray(f_values, dtype=float)
    if len(f_values) > DIAMETER_SAMPLE:
        f_values = f_values[np.linspace(0, len(f_values) - 1, DIAMETER_SAMPLE).astype(np.int64)]
    diff = N.chord(f_values[:, None, :], f_values[None, :, :])
    chord = np.sqrt(np.max(np.sum(diff * diff, axis=-1)))
    if N.is_sphere:
        return float(2.0 * N.radius * np.arcsin(min(1.0, chord / (2.0 * N.radius))))
    return float(chord)


SNAPSHOT_BASE = ("vertex_id",)


def snapshot_csv(mesh: MeshDomain, f_values: np.ndarray, N: ModelManifold) -> str:
    """Per-vertex CSV: ids, domain and map coordinates, singular values, u, lamlam, s2min."""
    M = mesh.manifold
    df, _ = estimate_df_all(mesh, f_values, N)
    lam = singular_values_all(df)
    m = M.dim
    u = 1.0 / np.sqrt(np.prod(1.0 + lam**2, axis=1))
    lamlam = lam[:, -1] * lam[:, -2] if m >= 2 else np.zeros(len(lam))
    mus = (1.0 - lam[:, ::-1] ** 2) / (1.0 + lam[:, ::-1] ** 2)
    s2min = mus[:, 0] + mus[:, 1] if m >= 2 else np.full(len(lam), np.inf)

    header = list(SNAPSHOT_BASE)
    header += [f"x{i}" for i in range(M.ambient_dim)]
    header += [f"f{i}" for i in range(N.ambient_dim)]
    header += [f"lambda{i + 1}" for i in range(m)] + ["u", "lamlam", "s2min"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for v in range(mesh.n_vertices):
        row = [v, *mesh.vertices[v], *f_values[v], *lam[v], u[v], lamlam[v], s2min[v]]
        writer.writerow([row[0]] + [repr(float(c)) for c in row[1:]])
    return buf.getvalue()


def read_snapshot_f(path, N: ModelManifold, n_vertices: int) -> np.ndarray:
    """Map values from a snapshot-style CSV (columns f0..f{a-1}, one row per vertex)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [f"f{i}" for i in range(N.ambient_dim)]
        missing = [c for c in cols if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        rows = [[float(r[c]) for c in cols] for r in reader]
    f_values = np.array(rows, dtype=float).reshape(-1, N.ambient_dim)
    if len(f_values) != n_vertices:
        raise ValueError(f"{path}: expected {n_vertices} rows, found {len(f_values)}")
    return N.retract(f_values, np.zeros_like(f_values), check=False)
