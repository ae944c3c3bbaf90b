"""Explicit graphical mean curvature flow on a fixed domain mesh.

The graph is advanced in the vertical gauge: vertices stay fixed over M and
only the map values move. With H = (H^M, H^N) the mean curvature of the
graph split along T(M x N) = TM + TN, the vertical velocity is
``v = H^N - df(H^M)``; it differs from H by a vector tangent to the graph,
so it moves the same surface.

One step of the scheme:

    H      = cotangent Laplacian of the graph positions, projected to T(M x N)
    v      = H^N - df(H^M)
    dt     = cfl * h_min^2 / (1 + max lambda^2)
    f_new  = retract_N(f + dt v)
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import GraphFlowError, StrictAreaDecreasingViolated, UnsupportedDomain
from .hypothesis import AreaDecreasingCertificate, certify_map
from .manifolds import ModelManifold
from .mesh import (
    MeshDomain,
    build_mesh,
    estimate_df_all,
    graph_geometry,
    image_diameter,
    project_to_product_tangent,
    read_snapshot_f,
    singular_values_all,
)

logger = logging.getLogger(__name__)


class Event(str, enum.Enum):
    CONVERGED = "Converged"
    GRAPH_FAILURE = "GraphFailure"
    BLOW_UP = "BlowUp"
    STEP_BUDGET = "StepBudget"


PRESETS = ("s2_perturb", "s2_identity", "s2_antipodal", "t2_linear", "constant", "from_file")


@dataclass(frozen=True)
class FlowConfig:
    preset: str = "s2_perturb"
    epsilon: float = 0.3
    seed: int = 7
    resolution: int = 4
    cfl: float = 0.1
    max_steps: int = 20000
    diam_tol: float = 1e-3
    lamlam_margin: float = 1e-3
    u_floor: float = 1e-6
    vmax_blowup: float = 1e4
    record_every: int = 10
    strict: bool = True
    stop_on_converged: bool = True
    linear_map: tuple[tuple[float, ...], ...] = ((1.0, 0.0), (0.0, 0.0))
    target_point: tuple[float, ...] | None = None
    init_file: str | None = None

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        if not 0.0 < self.cfl <= 0.5:
            raise ValueError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        for name in ("diam_tol", "lamlam_margin", "u_floor", "vmax_blowup"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 0 or self.record_every < 1:
            raise ValueError("max_steps must be >= 0 and record_every >= 1")
        if self.preset == "from_file" and not self.init_file:
            raise ValueError("preset from_file needs init_file")


@dataclass(frozen=True)
class FlowState:
    t: float
    step: int
    f_values: np.ndarray
    last_velocity: np.ndarray
    events: frozenset = frozenset()
    strict_at_init: bool = False

    @property
    def terminal(self) -> bool:
        return bool(self.events)


MONITOR_FIELDS = (
    "step", "t", "dt", "u_min", "u_max", "lamlam_max", "s2_min",
    "diam_image", "v_max", "dirichlet_energy", "logu_min",
)


@dataclass(frozen=True)
class MonitorRecord:
    step: int
    t: float
    dt: float
    u_min: float
    u_max: float
    lamlam_max: float
    s2_min: float
    diam_image: float
    v_max: float
    dirichlet_energy: float
    logu_min: float

    def row(self) -> list[str]:
        return [str(self.step)] + [repr(float(getattr(self, f))) for f in MONITOR_FIELDS[1:]]


# ----------------------------------------------------------------------
# initial data


def _default_point(N: ModelManifold) -> np.ndarray:
    q = np.zeros(N.ambient_dim)
    if N.is_sphere:
        q[-1] = N.radius
    return q


def perturbation_matrix(seed: int, M: ModelManifold, N: ModelManifold) -> np.ndarray:
    """Seeded matrix W with entries in [-1, 1] for f(x) = retract(q + eps W x)."""
    return np.random.default_rng(seed).uniform(-1.0, 1.0, (N.ambient_dim, M.ambient_dim))


def preset_values(cfg: FlowConfig, mesh: MeshDomain, M: ModelManifold, N: ModelManifold) -> np.ndarray:
    """Per-vertex map values for the configured preset."""
    x = mesh.vertices
    q = _default_point(N) if cfg.target_point is None else np.asarray(cfg.target_point, dtype=float)
    if cfg.preset in ("s2_perturb", "s2_identity", "s2_antipodal"):
        if not (M.is_sphere and N.is_sphere):
            raise UnsupportedDomain(f"preset {cfg.preset} needs sphere domain and target")
    if cfg.preset == "s2_perturb":
        N.check_point(q)
        W = perturbation_matrix(cfg.seed, M, N)
        return N.retract(np.broadcast_to(q, (len(x), N.ambient_dim)), cfg.epsilon * x @ W.T, check=False)
    if cfg.preset in ("s2_identity", "s2_antipodal"):
        if M.dim != N.dim:
            raise UnsupportedDomain(f"preset {cfg.preset} needs equal dimensions")
        sign = 1.0 if cfg.preset == "s2_identity" else -1.0
        return sign * (N.radius / M.radius) * x
    if cfg.preset == "t2_linear":
        if M.is_sphere or N.is_sphere:
            raise UnsupportedDomain("preset t2_linear needs torus domain and target")
        B = np.asarray(cfg.linear_map, dtype=float)
        if B.shape != (N.dim, M.dim):
            raise ValueError(f"linear_map must be {N.dim}x{M.dim}, got {B.shape}")
        if not np.array_equal(B, np.round(B)):
            raise ValueError("linear_map needs integer entries to descend to the torus")
        return np.mod((N.radius / M.radius) * x @ B.T, N.period)
    if cfg.preset == "constant":
        N.check_point(q)
        return np.tile(q, (len(x), 1))
    return read_snapshot_f(cfg.init_file, N, mesh.n_vertices)


def init_from_preset(
    cfg: FlowConfig, mesh: MeshDomain, M: ModelManifold, N: ModelManifold
) -> tuple[FlowState, AreaDecreasingCertificate]:
    """Initial state and its area-decreasing certificate.

    Raises:
        StrictAreaDecreasingViolated: strict mode is on and the map is not
            strictly area decreasing.
    """
    f0 = np.ascontiguousarray(preset_values(cfg, mesh, M, N), dtype=float)
    cert = certify_map(f0, mesh, M, N, margin=cfg.lamlam_margin)
    if cfg.strict and not cert.strict:
        raise StrictAreaDecreasingViolated(
            f"preset {cfg.preset}: max lambda_i lambda_j = {cert.lamlam_max:.6f} >= 1 - {cfg.lamlam_margin:g}"
        )
    state = FlowState(0.0, 0, f0, np.zeros_like(f0), frozenset(), strict_at_init=cert.strict)
    return state, cert


# ----------------------------------------------------------------------
# one step


def gauge_velocity(HM, HN, df) -> np.ndarray:
    """Vertical velocity v = H^N - df(H^M), all in tangent-frame coordinates.

    Accepts one point (``HM`` of shape ``(m,)``) or a batch ``(V, m)``.
    """
    HM = np.asarray(HM, dtype=float)
    return np.asarray(HN, dtype=float) - np.einsum("...nm,...m->...n", df, HM)


def gauge_tangency_residual(HM, HN, v, df) -> float:
    """Distance of (0, v) - (H^M, H^N) from the graph tangent space span{(w, df w)}."""
    df = np.atleast_2d(np.asarray(df, dtype=float))
    z = np.concatenate([-np.asarray(HM, dtype=float), np.asarray(v, dtype=float) - np.asarray(HN, dtype=float)])
    T = np.vstack([np.eye(df.shape[1]), df])
    coef, *_ = np.linalg.lstsq(T, z, rcond=None)
    return float(np.linalg.norm(z - T @ coef))


@dataclass
class Evaluation:
    """Everything computed from one state before it is advanced."""

    df: np.ndarray
    lambdas: np.ndarray
    HM: np.ndarray
    HN: np.ndarray
    velocity: np.ndarray
    dt: float
    record: MonitorRecord


def evaluate(
    state: FlowState, mesh: MeshDomain, M: ModelManifold, N: ModelManifold, cfg: FlowConfig, measure_diameter: bool = True
) -> Evaluation:
    x, f = mesh.vertices, state.f_values
    df, frames_n = estimate_df_all(mesh, f, N)
    lam = singular_values_all(df)
    H = graph_geometry(mesh, f, N).laplacian_of_positions()
    HM, HN = project_to_product_tangent(M, N, x, f, H)
    hm = np.einsum("vam,va->vm", mesh.frames, HM)
    hn = np.einsum("van,va->vn", frames_n, HN)
    v = np.einsum("van,vn->va", frames_n, gauge_velocity(hm, hn, df))

    lam2 = lam**2
    dt = cfg.cfl * mesh.h_min**2 / (1.0 + float(np.max(lam2)))
    logu = -0.5 * np.sum(np.log1p(lam2), axis=1)
    if M.dim >= 2:
        lamlam = lam[:, -1] * lam[:, -2]
        mus = (1.0 - lam2) / (1.0 + lam2)
        s2 = mus[:, -1] + mus[:, -2]
    else:
        lamlam = np.zeros(len(lam))
        s2 = np.full(len(lam), np.inf)
    diam = image_diameter(f, N) if measure_diameter else math.nan
    record = MonitorRecord(
        step=state.step,
        t=state.t,
        dt=dt,
        u_min=float(np.exp(np.min(logu))),
        u_max=float(np.exp(np.max(logu))),
        lamlam_max=float(np.max(lamlam)),
        s2_min=float(np.min(s2)),
        diam_image=diam,
        v_max=float(np.max(np.linalg.norm(v, axis=1))),
        dirichlet_energy=float(0.5 * np.sum(mesh.vertex_areas * np.sum(df**2, axis=(1, 2)))),
        logu_min=float(np.min(logu)),
    )
    return Evaluation(df, lam, HM, HN, v, dt, record)


def _blowup_record(state: FlowState) -> MonitorRecord:
    return MonitorRecord(state.step, state.t, *([math.nan] * (len(MONITOR_FIELDS) - 2)))


def _events(rec: MonitorRecord, state: FlowState, cfg: FlowConfig) -> set[Event]:
    events = set()
    values = [getattr(rec, f) for f in MONITOR_FIELDS if f != "diam_image"]
    if not all(math.isfinite(v) for v in values) or rec.v_max > cfg.vmax_blowup:
        events.add(Event.BLOW_UP)
        return events
    if rec.u_min < cfg.u_floor or (state.strict_at_init and rec.lamlam_max >= 1.0 - cfg.lamlam_margin):
        events.add(Event.GRAPH_FAILURE)
    if cfg.stop_on_converged and math.isfinite(rec.diam_image) and rec.diam_image < cfg.diam_tol:
        events.add(Event.CONVERGED)
    return events


def advance(
    state: FlowState, mesh: MeshDomain, M: ModelManifold, N: ModelManifold, cfg: FlowConfig, measure_diameter: bool = True
) -> tuple[FlowState, MonitorRecord]:
    """Evaluate ``state`` and either flag terminal events or take one Euler step.

    Numerical failures never raise; they surface as a BlowUp event.
    """
    if state.terminal:
        raise ValueError(f"state already terminal: {sorted(e.value for e in state.events)}")
    try:
        with np.errstate(all="ignore"):
            ev = evaluate(state, mesh, M, N, cfg, measure_diameter)
    except (GraphFlowError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.warning("step %d: %s", state.step, exc)
        return replace(state, events=frozenset({Event.BLOW_UP})), _blowup_record(state)
    events = _events(ev.record, state, cfg)
    if events:
        return replace(state, events=frozenset(events)), ev.record
    f_new = N.retract(state.f_values, ev.dt * ev.velocity, check=False)
    new = FlowState(state.t + ev.dt, state.step + 1, f_new, ev.velocity, frozenset(), state.strict_at_init)
    return new, ev.record


def step(state: FlowState, mesh: MeshDomain, M: ModelManifold, N: ModelManifold, cfg: FlowConfig) -> FlowState:
    return advance(state, mesh, M, N, cfg)[0]


# ----------------------------------------------------------------------
# full runs


@dataclass
class RunTracker:
    """Running extrema and monotonicity violations, updated at every step."""

    lamlam_initial: float = math.nan
    lamlam_max: float = -math.inf
    s2_min: float = math.inf
    logu_prev: float = math.nan
    logu_violation: float = 0.0
    lamlam_prev: float = math.nan
    lamlam_rate_max: float = -math.inf
    v_max: float = 0.0

    def update(self, rec: MonitorRecord, prev_dt: float | None) -> None:
        if not math.isfinite(rec.lamlam_max):
            return
        if math.isnan(self.lamlam_initial):
            self.lamlam_initial = rec.lamlam_max
        self.lamlam_max = max(self.lamlam_max, rec.lamlam_max)
        self.s2_min = min(self.s2_min, rec.s2_min)
        self.v_max = max(self.v_max, rec.v_max)
        if not math.isnan(self.logu_prev):
            self.logu_violation += max(0.0, self.logu_prev - rec.logu_min)
        if prev_dt and not math.isnan(self.lamlam_prev):
            self.lamlam_rate_max = max(self.lamlam_rate_max, (rec.lamlam_max - self.lamlam_prev) / prev_dt)
        self.logu_prev = rec.logu_min
        self.lamlam_prev = rec.lamlam_max


@dataclass
class FlowRun:
    cfg: FlowConfig
    mesh: MeshDomain
    M: ModelManifold
    N: ModelManifold
    initial_f: np.ndarray
    certificate: AreaDecreasingCertificate
    state: FlowState
    records: list[MonitorRecord] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def event(self) -> Event:
        return next(iter(sorted(self.state.events, key=lambda e: e.value)))

    def monitor_csv(self) -> str:
        return monitor_csv(self.records)

    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True) + "\n"


def monitor_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MONITOR_FIELDS)
    for rec in records:
        writer.writerow(rec.row())
    return buf.getvalue()


def _finite_or_none(x: float):
    return float(x) if math.isfinite(x) else None


def run(cfg: FlowConfig, M: ModelManifold, N: ModelManifold, mesh: MeshDomain | None = None, progress=None) -> FlowRun:
    """Step until an event fires. Never raises for numerical trouble; see the summary."""
    if mesh is None:
        mesh = build_mesh(M, cfg.resolution)
    state, cert = init_from_preset(cfg, mesh, M, N)
    result = FlowRun(cfg, mesh, M, N, state.f_values.copy(), cert, state)
    tracker = RunTracker()
    prev_dt = None
    while True:
        if state.step >= cfg.max_steps:
            try:
                with np.errstate(all="ignore"):
                    rec = evaluate(state, mesh, M, N, cfg).record
                state = replace(state, events=frozenset({Event.STEP_BUDGET}))
            except (GraphFlowError, FloatingPointError, np.linalg.LinAlgError):
                rec = _blowup_record(state)
                state = replace(state, events=frozenset({Event.BLOW_UP}))
            tracker.update(rec, prev_dt)
            result.records.append(rec)
            break
        measure = state.step % cfg.record_every == 0
        new, rec = advance(state, mesh, M, N, cfg, measure_diameter=measure)
        tracker.update(rec, prev_dt)
        prev_dt = rec.dt
        if new.terminal:
            if math.isnan(rec.diam_image) and Event.BLOW_UP not in new.events:
                rec = replace(rec, diam_image=image_diameter(state.f_values, N))
            result.records.append(rec)
            state = new
            break
        if measure:
            result.records.append(rec)
            if progress is not None:
                progress(rec)
        state = new

    result.state = state
    final = result.records[-1]
    result.summary = {
        "event": result.event.value,
        "steps": state.step,
        "final_t": state.t,
        "final_diam": _finite_or_none(final.diam_image),
        "lamlam_max_initial": _finite_or_none(tracker.lamlam_initial),
        "lamlam_max_over_run": _finite_or_none(tracker.lamlam_max),
        "s2_min_over_run": _finite_or_none(tracker.s2_min),
        "logu_min_violation": tracker.logu_violation,
        "lamlam_violation": max(0.0, tracker.lamlam_max - tracker.lamlam_initial) if math.isfinite(tracker.lamlam_max) else None,
        "lamlam_increase_rate_max": _finite_or_none(tracker.lamlam_rate_max),
        "v_max_over_run": tracker.v_max,
        "certificate": cert.to_dict(),
        "preset": cfg.preset,
        "vertices": mesh.n_vertices,
    }
    return result


def config_fields() -> list[str]:
    return [f.name for f in fields(FlowConfig)]
