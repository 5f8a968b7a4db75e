"""Run configuration: INI file, environment overrides, command-line overrides."""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

from .bounds import Protocol, max_cell, max_size_for_quotient
from .geometry import ShapeKind
from .partition import Field, PartitionScheme
from .protocol import ProtocolParams
from .sim import SimConfig

ENV_PREFIX = "GAFCELLS_"


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    vals = tuple(float(x) for x in text.replace(" ", "").split(",") if x)
    if not vals:
        raise ValueError("expected a comma-separated list of numbers")
    return vals


def _optional_floats(text: str):
    return _floats(text) if text.strip() else None


def _optional_float(text: str):
    return float(text) if text.strip() else None


def _size(text: str):
    return "max" if text.strip().lower() == "max" else float(text)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _count(text: str) -> int:
    return int(float(text))


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    parse: Callable[[str], Any]
    default: str
    unit: str
    help: str

    @property
    def dotted(self) -> str:
        return f"{self.section}.{self.name}"

    @property
    def flag(self) -> str:
        return f"--{self.section}-{self.name.replace('_', '-')}"

    @property
    def env(self) -> str:
        return f"{ENV_PREFIX}{self.section.upper()}_{self.name.upper()}"


SCHEMA: tuple[Key, ...] = (
    Key("field", "extent", _floats, "10,10", "R", "field side lengths, comma separated (2 or 3 values)"),
    Key("field", "origin", _optional_floats, "", "R", "lower field corner; empty means the origin"),
    Key("scheme", "protocol", Protocol, "gaf", "-", "gaf, hgaf or ehgaf"),
    Key("scheme", "shape", ShapeKind, "square", "-", "square, triangle, hexagon or cube"),
    Key("scheme", "size", _size, "max", "R", "cell side (height for triangles) or 'max' for the largest admissible size"),
    Key("scheme", "quotient", _count, "0", "-", "subcells per cell side (HGAF/eHGAF); 0 derives it from subcell"),
    Key("scheme", "subcell", _optional_float, "", "R", "subcell side d; empty derives it from quotient"),
    Key("scheme", "epoch", float, "60", "time", "rotation/sliding epoch length"),
    Key("protocol", "t_discovery", float, "1", "time", "discovery timer T_d"),
    Key("protocol", "t_active", float, "60", "time", "active timer T_a"),
    Key("protocol", "t_sleep", float, "30", "time", "sleep timer T_s"),
    Key("protocol", "draw_sleeping", float, "0.01", "energy/time", "power draw while sleeping"),
    Key("protocol", "draw_discovery", float, "1", "energy/time", "power draw during discovery"),
    Key("protocol", "draw_active", float, "1", "energy/time", "power draw while active"),
    Key("protocol", "battery", float, "1000", "energy", "initial battery per node"),
    Key("sim", "range", float, "1", "length", "communication range R (absolute)"),
    Key("sim", "absolute_units", _bool, "false", "-", "treat field/scheme lengths as absolute instead of multiples of R"),
    Key("sim", "nodes", _count, "100", "count", "number of deployed nodes N"),
    Key("sim", "seed", _count, "0", "-", "deployment seed"),
    Key("sim", "step", _optional_float, "", "time", "fixed time step; empty means T_d/10"),
    Key("sim", "max_time", float, "100000", "time", "simulation horizon"),
    Key("sim", "audit_interval", float, "10", "time", "interval between Req.I/Req.II audits"),
    Key("sim", "strict", _bool, "false", "-", "reject cell sizes above the bounds maximum"),
)

KEYS = {k.dotted: k for k in SCHEMA}
SECTIONS = tuple(dict.fromkeys(k.section for k in SCHEMA))


def describe_keys() -> str:
    lines = []
    for k in SCHEMA:
        lines.append(f"  [{k.section}] {k.name} ({k.unit}, default {k.default or 'empty'}): {k.help}")
    return "\n".join(lines)


def read_raw(
    path: str | os.PathLike | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, str] | None = None,
) -> dict[str, str]:
    """Merge defaults < file < environment < overrides as raw strings."""
    raw = {k.dotted: k.default for k in SCHEMA}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(p, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{p}: {exc}") from exc
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(f"{p}: unknown section [{section}]")
            for name, value in parser.items(section):
                key = f"{section}.{name}"
                if key not in KEYS:
                    raise ConfigError(f"{p}: unknown key '{name}' in [{section}]")
                raw[key] = value
    env = os.environ if env is None else env
    for k in SCHEMA:
        if k.env in env:
            raw[k.dotted] = env[k.env]
    for key, value in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigError(f"unknown key '{key}'")
        raw[key] = value
    return raw


def parse_raw(raw: Mapping[str, str]) -> dict[str, Any]:
    out = {}
    for key, text in raw.items():
        spec = KEYS[key]
        try:
            out[key] = spec.parse(text)
        except ValueError as exc:
            raise ConfigError(f"{key} = {text!r}: {exc}") from exc
    return out


def _scheme(v: Mapping[str, Any], R: float, scale: float) -> PartitionScheme:
    protocol, kind = v["scheme.protocol"], v["scheme.shape"]
    m = v["scheme.quotient"] or None
    d = v["scheme.subcell"]
    size = v["scheme.size"]
    if protocol is not Protocol.GAF and m is None and d is None:
        raise ConfigError(f"{protocol.value} needs scheme.quotient or scheme.subcell")
    if size == "max":
        if protocol is Protocol.GAF:
            size = max_cell(protocol, kind, R).combined_max_size
        elif m is not None:
            size = max_size_for_quotient(protocol, kind, R, m)
        else:
            raise ConfigError("size = max needs scheme.quotient for subcell schemes")
    else:
        size = size * scale
    if d is not None:
        d = d * scale
        if m is not None and abs(size / m - d) > 1e-9 * size:
            raise ConfigError(f"subcell {d} disagrees with size/quotient {size / m}")
    elif m is not None:
        d = size / m
    return PartitionScheme(protocol, kind, size, d, v["scheme.epoch"])


def build(values: Mapping[str, Any]) -> SimConfig:
    R = values["sim.range"]
    scale = 1.0 if values["sim.absolute_units"] else R
    field = Field(
        tuple(x * scale for x in values["field.extent"]),
        None if values["field.origin"] is None else tuple(x * scale for x in values["field.origin"]),
    )
    params = ProtocolParams(
        t_discovery=values["protocol.t_discovery"],
        t_active=values["protocol.t_active"],
        t_sleep=values["protocol.t_sleep"],
        draw_sleeping=values["protocol.draw_sleeping"],
        draw_discovery=values["protocol.draw_discovery"],
        draw_active=values["protocol.draw_active"],
        battery=values["protocol.battery"],
    )
    return SimConfig(
        field=field,
        scheme=_scheme(values, R, scale),
        params=params,
        R=R,
        n_nodes=values["sim.nodes"],
        seed=values["sim.seed"],
        step=values["sim.step"],
        max_time=values["sim.max_time"],
        audit_interval=values["sim.audit_interval"],
        strict=values["sim.strict"],
    )


def load_config(path=None, env=None, overrides=None) -> SimConfig:
    try:
        return build(parse_raw(read_raw(path, env, overrides)))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
