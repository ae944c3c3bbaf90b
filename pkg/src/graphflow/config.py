"""INI run configuration with typed keys, line-numbered errors and flag overrides.

Precedence, highest first: command-line ``--section.key`` flags, the
``GRAPHFLOW_OUT`` environment variable (``[output] dir`` only), the config
file, built-in defaults.
"""

from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError
from .flow import PRESETS, FlowConfig
from .manifolds import Kind, ModelManifold

ENV_OUT = "GRAPHFLOW_OUT"


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _kind(text: str) -> str:
    return Kind(text.strip().lower()).value


def _preset(text: str) -> str:
    text = text.strip()
    if text not in PRESETS:
        raise ValueError(f"unknown preset {text!r}; choose from {', '.join(PRESETS)}")
    return text


def _matrix(text: str) -> tuple[tuple[float, ...], ...]:
    """Rows separated by ';', entries by ',' (e.g. ``1,0;0,0``)."""
    rows = tuple(tuple(float(v) for v in row.split(",")) for row in text.strip().split(";"))
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"ragged matrix {text!r}")
    return rows


def _point(text: str) -> tuple[float, ...] | None:
    text = text.strip()
    if text.lower() in ("", "none", "default"):
        return None
    return tuple(float(v) for v in text.split(","))


def _optional_str(text: str) -> str | None:
    text = text.strip()
    return text or None


@dataclass(frozen=True)
class Key:
    default: Any
    parse: Callable[[str], Any]
    help: str

    def render(self) -> str:
        value = self.default
        if isinstance(value, tuple) and value and isinstance(value[0], tuple):
            return ";".join(",".join(f"{v:g}" for v in row) for row in value)
        if isinstance(value, bool):
            return "true" if value else "false"
        return "" if value is None else str(value)


_FLOW_DEFAULTS = FlowConfig()

SCHEMA: dict[str, dict[str, Key]] = {
    "manifolds": {
        "domain_kind": Key("sphere", _kind, "domain model: sphere or torus"),
        "domain_dim": Key(2, int, "domain dimension"),
        "domain_radius": Key(1.0, float, "domain radius"),
        "target_kind": Key("sphere", _kind, "target model: sphere or torus"),
        "target_dim": Key(2, int, "target dimension"),
        "target_radius": Key(1.0, float, "target radius"),
    },
    "mesh": {
        "resolution": Key(_FLOW_DEFAULTS.resolution, int, "icosphere subdivisions, or torus grid size"),
    },
    "flow": {
        "preset": Key(_FLOW_DEFAULTS.preset, _preset, "initial map: " + ", ".join(PRESETS)),
        "epsilon": Key(_FLOW_DEFAULTS.epsilon, float, "perturbation size of s2_perturb"),
        "seed": Key(_FLOW_DEFAULTS.seed, int, "seed of the s2_perturb matrix"),
        "cfl": Key(_FLOW_DEFAULTS.cfl, float, "dt = cfl h_min^2 / (1 + max lambda^2)"),
        "max_steps": Key(_FLOW_DEFAULTS.max_steps, int, "step budget"),
        "diam_tol": Key(_FLOW_DEFAULTS.diam_tol, float, "image diameter that counts as converged"),
        "lamlam_margin": Key(_FLOW_DEFAULTS.lamlam_margin, float, "strictness margin on max lambda_i lambda_j"),
        "u_floor": Key(_FLOW_DEFAULTS.u_floor, float, "graph failure threshold on u"),
        "vmax_blowup": Key(_FLOW_DEFAULTS.vmax_blowup, float, "blow-up threshold on the velocity"),
        "record_every": Key(_FLOW_DEFAULTS.record_every, int, "steps between monitor rows"),
        "strict": Key(_FLOW_DEFAULTS.strict, _bool, "reject initial maps that are not strictly area decreasing"),
        "stop_on_converged": Key(_FLOW_DEFAULTS.stop_on_converged, _bool, "stop when the image diameter drops below diam_tol"),
        "linear_map": Key(_FLOW_DEFAULTS.linear_map, _matrix, "integer matrix B of t2_linear, rows split by ';'"),
        "target_point": Key(None, _point, "q for s2_perturb and constant, comma separated"),
        "init_file": Key(None, _optional_str, "snapshot CSV read by from_file"),
    },
    "output": {
        "dir": Key("graphflow_out", str, f"output directory (env {ENV_OUT} overrides the file)"),
        "snapshots": Key(False, _bool, "also write initial and final per-vertex snapshots"),
    },
    "verify": {
        "trials": Key(1000, int, "random trials per suite"),
        "seed": Key(0, int, "master seed of the random suites"),
        "fd_step": Key(1e-3, float, "finite-difference step of the Gauss check"),
        "gauss_points": Key(20, int, "sample points per map in the Gauss check"),
    },
}


@dataclass
class RunConfig:
    values: dict[str, dict[str, Any]] = field(default_factory=dict)
    source: str | None = None

    def get(self, section: str, key: str):
        return self.values[section][key]

    def domain(self) -> ModelManifold:
        s = self.values["manifolds"]
        return ModelManifold(Kind(s["domain_kind"]), s["domain_dim"], s["domain_radius"])

    def target(self) -> ModelManifold:
        s = self.values["manifolds"]
        return ModelManifold(Kind(s["target_kind"]), s["target_dim"], s["target_radius"])

    def flow_config(self) -> FlowConfig:
        kw = dict(self.values["flow"])
        kw["resolution"] = self.values["mesh"]["resolution"]
        return FlowConfig(**kw)

    @property
    def output_dir(self) -> Path:
        return Path(self.values["output"]["dir"])

    def to_dict(self) -> dict:
        return {sec: dict(vals) for sec, vals in self.values.items()}


def defaults() -> RunConfig:
    return RunConfig({sec: {k: spec.default for k, spec in keys.items()} for sec, keys in SCHEMA.items()})


_KEY_LINE = re.compile(r"^\s*([^=:\s\[#;][^=:]*?)\s*[=:]")
_SECTION_LINE = re.compile(r"^\s*\[([^\]]+)\]")


def _line_numbers(text: str) -> dict[tuple[str | None, str], int]:
    where: dict[tuple[str | None, str], int] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if m := _SECTION_LINE.match(line):
            section = m.group(1).strip()
        elif m := _KEY_LINE.match(line):
            where.setdefault((section, m.group(1).strip().lower()), lineno)
    return where


def _convert(section: str, key: str, raw: str, lineno: int | None, origin: str) -> Any:
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}] in {origin}", lineno)
    spec = SCHEMA[section].get(key)
    if spec is None:
        raise ConfigError(f"unknown key {key!r} in [{section}] ({origin})", lineno)
    try:
        return spec.parse(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}", lineno) from None


def parse_config(path=None, overrides: dict[str, str] | None = None, environ=None) -> RunConfig:
    """Load a config file (optional), apply env and flag overrides, validate.

    Args:
        path: INI file, or None for defaults only.
        overrides: ``{"section.key": "raw value"}`` from the command line.
        environ: Mapping consulted for ``GRAPHFLOW_OUT`` (defaults to os.environ).

    Raises:
        ConfigError: unknown sections or keys, unparsable values, bad syntax.
    """
    cfg = defaults()
    environ = os.environ if environ is None else environ
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        parser = configparser.ConfigParser(interpolation=None, strict=True)
        try:
            parser.read_string(text, source=str(path))
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError("key outside of any [section]", exc.lineno) from None
        except configparser.DuplicateOptionError as exc:
            raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
        except configparser.DuplicateSectionError as exc:
            raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
        except configparser.ParsingError as exc:
            lineno = exc.errors[0][0] if exc.errors else None
            raise ConfigError(f"syntax error in {path}", lineno) from None
        lines = _line_numbers(text)
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lines.get((section, ""), _section_line(text, section)))
            for key, raw in parser.items(section):
                lineno = lines.get((section, key))
                cfg.values[section][key] = _convert(section, key, raw, lineno, str(path))
        cfg.source = str(path)
    if environ.get(ENV_OUT):
        cfg.values["output"]["dir"] = environ[ENV_OUT]
    for dotted, raw in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        cfg.values.setdefault(section, {})
        cfg.values[section][key] = _convert(section, key, raw, None, f"flag --{dotted}")
    _validate(cfg)
    return cfg


def _section_line(text: str, section: str) -> int | None:
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_LINE.match(line)
        if m and m.group(1).strip() == section:
            return lineno
    return None


def _validate(cfg: RunConfig) -> None:
    try:
        cfg.domain()
        cfg.target()
        cfg.flow_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    v = cfg.values["verify"]
    if v["trials"] < 1 or v["gauss_points"] < 1 or not v["fd_step"] > 0:
        raise ConfigError("[verify] trials and gauss_points must be >= 1 and fd_step > 0")
