from __future__ import annotations

import json

import pytest

from graphflow.cli import EXIT_CONFIG, EXIT_FLOW, EXIT_OK, EXIT_VERIFY, main
from graphflow.config import ENV_OUT, SCHEMA, parse_config
from graphflow.errors import ConfigError


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path, ""), environ={})
        for section, keys in SCHEMA.items():
            for key, spec in keys.items():
                assert cfg.get(section, key) == spec.default

    def test_type_error_has_line(self, tmp_path):
        with pytest.raises(ConfigError, match="line 3"):
            parse_config(write(tmp_path, "# comment\n[mesh]\nresolution = abc\n"), environ={})

    def test_unknown_key_has_line(self, tmp_path):
        with pytest.raises(ConfigError, match="line 4") as exc:
            parse_config(write(tmp_path, "[flow]\nepsilon = 0.1\n\nepsilonn = 0.2\n"), environ={})
        assert exc.value.lineno == 4

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config(write(tmp_path, "\n[flwo]\nepsilon = 0.1\n"), environ={})

    def test_key_outside_section(self, tmp_path):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config(write(tmp_path, "epsilon = 0.1\n"), environ={})

    def test_flag_beats_file(self, tmp_path):
        cfg = parse_config(write(tmp_path, "[flow]\nepsilon = 0.1\n"), {"flow.epsilon": "0.3"}, environ={})
        assert cfg.get("flow", "epsilon") == 0.3 and cfg.flow_config().epsilon == 0.3

    def test_output_precedence(self, tmp_path):
        path = write(tmp_path, "[output]\ndir = from_file\n")
        assert str(parse_config(path, environ={}).output_dir) == "from_file"
        assert str(parse_config(path, environ={ENV_OUT: "from_env"}).output_dir) == "from_env"
        assert str(parse_config(path, {"output.dir": "from_flag"}, environ={ENV_OUT: "from_env"}).output_dir) == "from_flag"

    def test_bad_flag(self):
        with pytest.raises(ConfigError):
            parse_config(None, {"flow.nope": "1"}, environ={})

    def test_semantic_validation(self):
        with pytest.raises(ConfigError):
            parse_config(None, {"flow.cfl": "0.9"}, environ={})

    def test_parsers(self, tmp_path):
        text = "[manifolds]\ndomain_kind = Torus\n[flow]\nstrict = no\nlinear_map = 1,1;0,2\ntarget_point = 0,1,0\n"
        cfg = parse_config(write(tmp_path, text), environ={})
        assert cfg.domain().is_sphere is False
        fc = cfg.flow_config()
        assert fc.strict is False and fc.linear_map == ((1.0, 1.0), (0.0, 2.0)) and fc.target_point == (0.0, 1.0, 0.0)


class TestMain:
    def test_help_lists_every_key(self, capsys):
        with pytest.raises(SystemExit):
            main(["--help"])
        out = capsys.readouterr().out
        for section, keys in SCHEMA.items():
            for key, spec in keys.items():
                assert f"{key} = {spec.render()}" in out

    def test_check(self, capsys):
        assert main(["check", "--manifolds.target_radius", "2", "--mesh.resolution", "2"]) == EXIT_OK
        rep = json.loads(capsys.readouterr().out)
        assert rep["admissible"] and (rep["sigma_lo"], rep["sigma_hi"]) == (0.25, 1.0)
        assert rep["lamlam_max"] < 1 and rep["delta"] == pytest.approx(1 - rep["lamlam_max"])

    def test_check_reports_certificate_problems(self, capsys):
        assert main(["check", "--manifolds.domain_kind", "torus", "--mesh.resolution", "8"]) == EXIT_OK
        rep = json.loads(capsys.readouterr().out)
        assert rep["admissible"] is False and "certificate_error" in rep

    def test_point_identity(self, tmp_path, capsys):
        path = write(tmp_path, "[[1, 0], [0, 1]]", "df.json")
        assert main(["point", "--df", str(path)]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["u"] == pytest.approx(0.5)

    def test_point_text_matrix(self, tmp_path, capsys):
        path = write(tmp_path, "0.5 0\n0 0.2\n", "df.txt")
        assert main(["point", "--df", str(path)]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["lamlam_max"] == pytest.approx(0.1)

    def test_config_error_exit(self, tmp_path, capsys):
        assert main(["check", "--config", str(write(tmp_path, "[mesh]\nresolution = abc\n"))]) == EXIT_CONFIG
        assert "line 2" in capsys.readouterr().err

    def test_verify_single_suite(self, capsys):
        assert main(["verify", "--suite", "frames", "--verify.trials", "50"]) == EXIT_OK
        rep = json.loads(capsys.readouterr().out)
        assert rep["suite"] == "frame_relations" and rep["passed"]

    def test_verify_failure_exit(self, capsys, monkeypatch):
        from graphflow import identities

        failing = identities.TrialReport("frame_relations", 1, 1.0, 1.0, 1, 0)
        monkeypatch.setattr(identities, "verify_frame_relations", lambda *a, **k: failing)
        assert main(["verify", "--suite", "frames"]) == EXIT_VERIFY

    def test_flow_writes_outputs(self, tmp_path, capsys):
        out = tmp_path / "out"
        args = ["flow", "--mesh.resolution", "2", "--flow.diam_tol", "0.05", "--output.dir", str(out), "--output.snapshots", "true"]
        assert main(args + ["--expect-converged"]) == EXIT_OK
        for name in ("monitor.csv", "summary.json", "config.json", "snapshot_initial.csv", "snapshot_final.csv"):
            assert (out / name).is_file()
        first = (out / "monitor.csv").read_bytes()
        assert main(args) == EXIT_OK
        assert (out / "monitor.csv").read_bytes() == first
        assert json.loads((out / "summary.json").read_text())["event"] == "Converged"

    def test_flow_budget_with_expect_converged(self, tmp_path):
        args = ["flow", "--mesh.resolution", "1", "--flow.max_steps", "2", "--output.dir", str(tmp_path)]
        assert main(args + ["--expect-converged"]) == EXIT_FLOW
        assert main(args) == EXIT_OK

    def test_flow_rejected_preset(self, tmp_path, capsys):
        args = ["flow", "--flow.preset", "s2_identity", "--mesh.resolution", "1", "--output.dir", str(tmp_path)]
        assert main(args) == EXIT_CONFIG
        assert "rejected" in capsys.readouterr().err

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_OUT, str(tmp_path / "env_out"))
        assert main(["flow", "--mesh.resolution", "1", "--flow.max_steps", "1"]) == EXIT_OK
        assert (tmp_path / "env_out" / "summary.json").is_file()
