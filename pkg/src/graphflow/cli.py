"""Command-line entry point: ``graphflow {check,flow,verify,point}``.

Exit codes: 0 success, 1 failed verification suite, 2 configuration error,
3 flow ended without converging while ``--expect-converged`` was given.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import identities
from .config import ENV_OUT, SCHEMA, RunConfig, parse_config
from .errors import ConfigError, GraphFlowError, StrictAreaDecreasingViolated
from .flow import Event, preset_values, run
from .graph_algebra import graph_point_state
from .hypothesis import certify_map, sigma_interval
from .mesh import build_mesh, snapshot_csv

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_FLOW = 0, 1, 2, 3
SUITES = ("eigen", "frames", "A", "B", "gauss", "logu")

log = logging.getLogger("graphflow")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _config_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, default=None, help="INI config file")
    group = parent.add_argument_group("config keys (override the file)")
    for section, keys in SCHEMA.items():
        for key, spec in keys.items():
            group.add_argument(
                f"--{section}.{key}",
                dest=f"cfg__{section}__{key}",
                metavar="V",
                default=None,
                help=f"{spec.help} (default: {spec.render() or 'none'})",
            )
    return parent


def _key_table() -> str:
    lines = ["config keys ([section] key = default), settable in the file or as --section.key:"]
    for section, keys in SCHEMA.items():
        lines.append(f"  [{section}]")
        lines.extend(f"    {key} = {spec.render()}" for key, spec in keys.items())
    lines.append(f"environment: {ENV_OUT} overrides [output] dir; --output.dir overrides both.")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = _config_flags()
    parser = argparse.ArgumentParser(
        prog="graphflow",
        description="Mean curvature flow of graphs of maps between model manifolds.",
        epilog=_key_table(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="curvature hypotheses and certificate of the initial map")
    p_flow = sub.add_parser("flow", parents=[common], help="run the flow; write monitor.csv and summary.json")
    p_flow.add_argument("--expect-converged", action="store_true", help="exit 3 unless the run converges")
    p_ver = sub.add_parser("verify", parents=[common], help="run the identity suites")
    p_ver.add_argument("--suite", choices=("all",) + SUITES, default="all")
    p_pt = sub.add_parser("point", parents=[common], help="pointwise graph data of a differential")
    p_pt.add_argument("--df", type=Path, required=True, help="n x m matrix file (whitespace or comma separated)")
    p_pt.add_argument("--gM", type=Path, default=None, help="domain metric matrix file")
    p_pt.add_argument("--gN", type=Path, default=None, help="target metric matrix file")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for name, value in vars(args).items():
        if name.startswith("cfg__") and value is not None:
            _, section, key = name.split("__", 2)
            overrides[f"{section}.{key}"] = value
    return parse_config(args.config, overrides)


def _read_matrix(path: Path) -> np.ndarray:
    """A JSON nested list, or rows of whitespace/comma separated numbers."""
    text = path.read_text()
    if text.lstrip().startswith("["):
        try:
            return np.array(json.loads(text), dtype=float)
        except (json.JSONDecodeError, ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
    rows = [line.replace(",", " ").split() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    try:
        return np.array([[float(v) for v in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_check(cfg: RunConfig) -> int:
    M, N = cfg.domain(), cfg.target()
    report = sigma_interval(M, N).to_dict()
    report["lamlam_max"] = report["delta"] = None
    try:
        fcfg = cfg.flow_config()
        mesh = build_mesh(M, fcfg.resolution)
        cert = certify_map(preset_values(fcfg, mesh, M, N), mesh, M, N, margin=fcfg.lamlam_margin)
        report.update(lamlam_max=cert.lamlam_max, delta=cert.delta, strict=cert.strict, preset=fcfg.preset)
    except (GraphFlowError, ValueError, OSError) as exc:
        report["certificate_error"] = str(exc)
    print(_dump(report))
    return EXIT_OK


def cmd_flow(cfg: RunConfig, expect_converged: bool) -> int:
    M, N = cfg.domain(), cfg.target()
    fcfg = cfg.flow_config()
    out = cfg.output_dir
    try:
        result = run(fcfg, M, N, progress=lambda rec: log.info("step %d t=%.4g diam=%.3g", rec.step, rec.t, rec.diam_image))
    except StrictAreaDecreasingViolated as exc:
        print(f"graphflow: initial map rejected: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    (out / "monitor.csv").write_text(result.monitor_csv())
    (out / "summary.json").write_text(result.summary_json())
    (out / "config.json").write_text(_dump(cfg.to_dict()) + "\n")
    if cfg.get("output", "snapshots"):
        (out / "snapshot_initial.csv").write_text(snapshot_csv(result.mesh, result.initial_f, N))
        (out / "snapshot_final.csv").write_text(snapshot_csv(result.mesh, result.state.f_values, N))
    print(_dump({k: result.summary[k] for k in ("event", "steps", "final_t", "final_diam")}))
    if expect_converged and result.event is not Event.CONVERGED:
        return EXIT_FLOW
    return EXIT_OK


def cmd_verify(cfg: RunConfig, suite: str) -> int:
    v = cfg.values["verify"]
    trials, seed = v["trials"], v["seed"]
    fcfg = cfg.flow_config()
    runners = {
        "eigen": lambda: [identities.verify_eigen_lemma(m, trials, seed) for m in (3, 4)],
        "frames": lambda: [identities.verify_frame_relations(trials, seed)],
        "A": lambda: [identities.verify_A_bound(trials, (0.1, 0.5), seed)],
        "B": lambda: [identities.verify_B_decomposition(trials, seed)],
        "gauss": lambda: [identities.verify_gauss(v["gauss_points"], v["fd_step"], epsilon=fcfg.epsilon, seed=fcfg.seed)],
        "logu": lambda: [identities.verify_logu_identity(fcfg, cfg.domain(), cfg.target())],
    }
    chosen = SUITES if suite == "all" else (suite,)
    ok = True
    for name in chosen:
        for report in runners[name]():
            print(json.dumps(report.to_dict(), sort_keys=True))
            ok &= report.passed
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_point(args: argparse.Namespace) -> int:
    df = _read_matrix(args.df)
    gM = _read_matrix(args.gM) if args.gM else None
    gN = _read_matrix(args.gN) if args.gN else None
    print(_dump(graph_point_state(df, gM, gN).to_dict()))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "check":
            return cmd_check(cfg)
        if args.command == "flow":
            return cmd_flow(cfg, args.expect_converged)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite)
        return cmd_point(args)
    except ConfigError as exc:
        print(f"graphflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GraphFlowError, ValueError, OSError) as exc:
        print(f"graphflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
