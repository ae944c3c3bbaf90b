from __future__ import annotations

import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphflow.errors import StrictAreaDecreasingViolated, UnsupportedDomain
from graphflow.flow import (
    MONITOR_FIELDS,
    Event,
    FlowConfig,
    advance,
    evaluate,
    gauge_tangency_residual,
    gauge_velocity,
    init_from_preset,
    run,
    step,
)
from graphflow.mesh import build_mesh, snapshot_csv


class TestConfig:
    @pytest.mark.parametrize("kw", [{"cfl": 0.0}, {"cfl": 0.6}, {"diam_tol": 0.0}, {"u_floor": -1.0}, {"preset": "nope"}, {"record_every": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            FlowConfig(**kw)

    def test_from_file_needs_path(self):
        with pytest.raises(ValueError):
            FlowConfig(preset="from_file")


class TestGaugeVelocity:
    def test_zero(self):
        np.testing.assert_array_equal(gauge_velocity(np.zeros(2), np.zeros(2), np.eye(2)), 0.0)

    def test_vertical(self, rng):
        HN = rng.standard_normal(3)
        np.testing.assert_array_equal(gauge_velocity(np.zeros(2), HN, rng.standard_normal((3, 2))), HN)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 3), st.integers(0, 2**32 - 1))
    def test_tangency_contract(self, m, extra, seed):
        rng = np.random.default_rng(seed)
        n = m + extra
        df = rng.uniform(-3, 3, (n, m))
        HM, HN = rng.standard_normal(m), rng.standard_normal(n)
        v = gauge_velocity(HM, HN, df)
        assert gauge_tangency_residual(HM, HN, v, df) <= 1e-10 * (1 + np.abs(df).max()) ** 2

    def test_residual_detects_wrong_velocity(self):
        assert gauge_tangency_residual(np.ones(2), np.zeros(2), np.ones(2), np.eye(2)) > 0.5

    def test_batched(self, rng):
        df = rng.standard_normal((5, 2, 2))
        HM, HN = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
        v = gauge_velocity(HM, HN, df)
        for k in range(5):
            np.testing.assert_allclose(v[k], gauge_velocity(HM[k], HN[k], df[k]))


class TestInit:
    def test_constant(self, sphere, sphere_meshes):
        state, cert = init_from_preset(FlowConfig(preset="constant"), sphere_meshes(2), sphere, sphere)
        np.testing.assert_array_equal(state.f_values, np.tile([0.0, 0.0, 1.0], (162, 1)))
        assert cert.lamlam_max == 0.0

    @pytest.mark.parametrize("preset", ["s2_identity", "s2_antipodal"])
    def test_isometries_rejected(self, preset, sphere, sphere_meshes):
        with pytest.raises(StrictAreaDecreasingViolated):
            init_from_preset(FlowConfig(preset=preset), sphere_meshes(2), sphere, sphere)
        state, cert = init_from_preset(FlowConfig(preset=preset, strict=False), sphere_meshes(2), sphere, sphere)
        assert not state.strict_at_init and cert.lamlam_max == pytest.approx(1.0, abs=1e-2)

    def test_perturb_accepted(self, sphere, sphere_meshes):
        state, cert = init_from_preset(FlowConfig(), sphere_meshes(3), sphere, sphere)
        assert cert.strict and cert.lamlam_max < 1.0 and state.strict_at_init
        np.testing.assert_allclose(np.linalg.norm(state.f_values, axis=1), 1.0, atol=1e-15)

    def test_torus_linear_needs_integer_matrix(self, torus):
        mesh = build_mesh(torus, 8)
        with pytest.raises(ValueError):
            init_from_preset(FlowConfig(preset="t2_linear", linear_map=((0.5, 0.0), (0.0, 0.0))), mesh, torus, torus)

    def test_sphere_preset_on_torus(self, torus):
        with pytest.raises(UnsupportedDomain):
            init_from_preset(FlowConfig(preset="s2_perturb"), build_mesh(torus, 8), torus, torus)

    def test_from_file(self, sphere, sphere_meshes, tmp_path):
        mesh = sphere_meshes(2)
        state, _ = init_from_preset(FlowConfig(), mesh, sphere, sphere)
        path = tmp_path / "init.csv"
        path.write_text(snapshot_csv(mesh, state.f_values, sphere))
        loaded, _ = init_from_preset(FlowConfig(preset="from_file", init_file=str(path)), mesh, sphere, sphere)
        np.testing.assert_allclose(loaded.f_values, state.f_values, atol=1e-15)


class TestStep:
    def test_torus_linear_stationary(self, torus):
        cfg = FlowConfig(preset="t2_linear", resolution=16, max_steps=50, record_every=1)
        result = run(cfg, torus, torus)
        assert result.event is Event.STEP_BUDGET
        assert max(r.v_max for r in result.records) <= 1e-6

    def test_constant_stationary(self, sphere):
        cfg = FlowConfig(preset="constant", resolution=2, max_steps=50, record_every=1, stop_on_converged=False)
        result = run(cfg, sphere, sphere)
        assert result.event is Event.STEP_BUDGET and result.summary["steps"] == 50
        assert max(r.v_max for r in result.records) <= 1e-6

    def test_constant_converges_immediately(self, sphere):
        result = run(FlowConfig(preset="constant", resolution=1), sphere, sphere)
        assert result.event is Event.CONVERGED and result.summary["steps"] == 0

    def test_identity_monitor_only(self, sphere):
        cfg = FlowConfig(preset="s2_identity", strict=False, resolution=2, max_steps=100)
        result = run(cfg, sphere, sphere)
        assert result.event is Event.STEP_BUDGET
        assert abs(result.summary["lamlam_max_over_run"] - 1.0) <= 1e-2

    def test_step_moves_forward_and_stays_on_target(self, sphere, sphere_meshes):
        mesh = sphere_meshes(2)
        cfg = FlowConfig(resolution=2)
        state, _ = init_from_preset(cfg, mesh, sphere, sphere)
        new = step(state, mesh, sphere, sphere, cfg)
        assert new.step == 1 and new.t > state.t
        np.testing.assert_allclose(np.linalg.norm(new.f_values, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.sum(new.last_velocity * state.f_values, axis=1), 0.0, atol=1e-12)

    def test_velocity_obeys_gauge_contract(self, sphere, sphere_meshes):
        mesh = sphere_meshes(2)
        cfg = FlowConfig(resolution=2)
        state, _ = init_from_preset(cfg, mesh, sphere, sphere)
        ev = evaluate(state, mesh, sphere, sphere, cfg)
        frames_n = sphere.frames(state.f_values)
        for v in range(0, mesh.n_vertices, 11):
            hm = mesh.frames[v].T @ ev.HM[v]
            hn = frames_n[v].T @ ev.HN[v]
            vel = frames_n[v].T @ ev.velocity[v]
            assert gauge_tangency_residual(hm, hn, vel, ev.df[v]) <= 1e-10

    def test_dt_rule(self, sphere, sphere_meshes):
        mesh = sphere_meshes(2)
        cfg = FlowConfig(resolution=2, cfl=0.2)
        state, _ = init_from_preset(cfg, mesh, sphere, sphere)
        ev = evaluate(state, mesh, sphere, sphere, cfg)
        assert ev.dt == pytest.approx(0.2 * mesh.h_min**2 / (1 + ev.lambdas.max() ** 2), rel=1e-15)

    def test_terminal_state_cannot_advance(self, sphere, sphere_meshes):
        mesh = sphere_meshes(1)
        cfg = FlowConfig(preset="constant", resolution=1)
        state, _ = init_from_preset(cfg, mesh, sphere, sphere)
        done, _ = advance(state, mesh, sphere, sphere, cfg)
        assert Event.CONVERGED in done.events
        with pytest.raises(ValueError):
            advance(done, mesh, sphere, sphere, cfg)


class TestEvents:
    def test_graph_failure_on_u_floor(self, sphere):
        result = run(FlowConfig(resolution=2, u_floor=0.99), sphere, sphere)
        assert result.event is Event.GRAPH_FAILURE and result.summary["steps"] == 0

    def test_blow_up_threshold(self, sphere):
        result = run(FlowConfig(resolution=2, vmax_blowup=1e-3), sphere, sphere)
        assert result.event is Event.BLOW_UP

    def test_numerical_failure_becomes_blow_up(self, sphere, sphere_meshes):
        mesh = sphere_meshes(1)
        cfg = FlowConfig(resolution=1)
        state, _ = init_from_preset(cfg, mesh, sphere, sphere)
        bad = replace(state, f_values=np.full_like(state.f_values, np.nan))
        new, rec = advance(bad, mesh, sphere, sphere, cfg)
        assert new.events == {Event.BLOW_UP} and math.isnan(rec.u_min)

    def test_step_budget(self, sphere):
        result = run(FlowConfig(resolution=1, max_steps=3), sphere, sphere)
        assert result.event is Event.STEP_BUDGET and result.state.step == 3
        assert result.records[-1].step == 3


@pytest.fixture(scope="module")
def small_run(sphere):
    return run(FlowConfig(resolution=2, diam_tol=1e-2), sphere, sphere)


class TestRun:
    def test_converges(self, small_run):
        s = small_run.summary
        assert s["event"] == "Converged" and s["final_diam"] < 1e-2
        assert s["lamlam_violation"] <= 1e-3 and s["logu_min_violation"] <= 1e-3
        assert s["lamlam_increase_rate_max"] <= 1e-3

    def test_summary_keys(self, small_run):
        required = {"event", "steps", "final_t", "final_diam", "lamlam_max_over_run", "s2_min_over_run", "logu_min_violation", "lamlam_violation"}
        assert required <= set(small_run.summary)
        json.loads(small_run.summary_json())

    def test_monitor_csv(self, small_run):
        lines = small_run.monitor_csv().splitlines()
        assert lines[0] == ",".join(MONITOR_FIELDS)
        rows = [list(map(float, line.split(","))) for line in lines[1:]]
        assert all(math.isfinite(v) for row in rows for v in row)
        assert all(row[3] <= row[4] for row in rows)
        ts = [row[1] for row in rows]
        assert ts == sorted(ts)

    def test_deterministic(self, small_run, sphere):
        again = run(FlowConfig(resolution=2, diam_tol=1e-2), sphere, sphere)
        assert again.monitor_csv() == small_run.monitor_csv()
        assert again.summary_json() == small_run.summary_json()
