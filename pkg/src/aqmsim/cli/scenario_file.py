"""Flat ``key = value`` scenario files.

Example::

    # 1 Gbps variant of preset I
    preset = I
    bandwidth_mbps = 1000
    aqm = dualpi2
    phases = 0:1:1, 60:2:2
    duration_s = 120
    aqm.target_delay_ms = 15

``preset`` (optional, must come first) seeds every field from a named
preset; later keys override it. ``aqm.<name>`` sets a field of the AQM
settings. ``phases`` is a comma list of ``start:cubic:prague`` triples and
``sinusoid`` is ``base:amplitude:frequency[:phase[:request_packets]]``.
"""
from dataclasses import replace
from typing import Optional

from ..aqm import check_aqm_key
from ..model import (AqmSettings, ConfigError, Phase, ScenarioConfig, SinusoidParams,
                     preset_scenario)


class ScenarioParseError(ConfigError):
    def __init__(self, path, line: int, key: Optional[str], message: str):
        self.path = path
        self.line = line
        self.key = key
        where = f"{path}:{line}" + (f" [{key}]" if key else "")
        super().__init__(f"{where}: {message}")


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _optional_int(text: str):
    return None if text.lower() in ("", "none") else int(text)


def parse_phases(text: str):
    out = []
    if not text.strip():
        return ()
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 3:
            raise ValueError(f"phase {item.strip()!r} is not start:cubic:prague")
        out.append(Phase(_number(parts[0]), int(parts[1]), int(parts[2])))
    return tuple(out)


def parse_sinusoid(text: str):
    if text.lower() in ("", "none"):
        return None
    parts = [p.strip() for p in text.split(":")]
    if not 3 <= len(parts) <= 5:
        raise ValueError("sinusoid is base:amplitude:frequency[:phase[:request_packets]]")
    vals = [float(p) for p in parts[:4]]
    kw = {}
    if len(parts) == 5:
        kw["request_packets"] = int(parts[4])
    return SinusoidParams(*vals, **kw)


_SCENARIO_PARSERS = {
    "name": str,
    "bandwidth_mbps": int,
    "rtt_ms": int,
    "mtu_bytes": int,
    "aqm": check_aqm_key,
    "duration_s": _number,
    "seed": int,
    "ghost": _bool,
    "queue_capacity_bytes": _optional_int,
    "scheduler": str,
    "starvation_guard": int,
    "classic_growth": str,
    "load_phases": parse_phases,
    "sinusoid": parse_sinusoid,
}
_ALIASES = {"phases": "load_phases"}

_AQM_PARSERS = {
    "target_delay_ms": _number,
    "ired_max_factor": int,
    "ired_min_depth_bytes": _optional_int,
    "ired_sampling": str,
    "codel_interval_ms": _number,
    "codel_sqrt": str,
    "pi2_interval_ms": _number,
    "pi2_alpha": float,
    "pi2_beta": float,
    "coupling_k": _number,
}


def parse_scenario_text(text: str, path="<string>") -> ScenarioConfig:
    values = {}
    aqm_values = {}
    base = None
    key_lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioParseError(path, lineno, None, "expected 'key = value'")
        key, _, val = (s.strip() for s in line.partition("="))
        if not key:
            raise ScenarioParseError(path, lineno, None, "missing key")
        if key in key_lines:
            raise ScenarioParseError(path, lineno, key, f"duplicate key (first set on line {key_lines[key]})")
        key_lines[key] = lineno
        try:
            if key == "preset":
                if values or aqm_values:
                    raise ValueError("preset must come before other keys")
                base = preset_scenario(val)
            elif key.startswith("aqm."):
                name = key[4:]
                if name not in _AQM_PARSERS:
                    raise ValueError(f"unknown AQM setting; known: {', '.join(sorted(_AQM_PARSERS))}")
                aqm_values[name] = _AQM_PARSERS[name](val)
            else:
                name = _ALIASES.get(key, key)
                if name not in _SCENARIO_PARSERS:
                    raise ValueError("unknown key")
                values[name] = _SCENARIO_PARSERS[name](val)
        except ConfigError as exc:
            raise ScenarioParseError(path, lineno, key, str(exc)) from None
        except ValueError as exc:
            raise ScenarioParseError(path, lineno, key, str(exc)) from None
    try:
        if base is None:
            missing = [k for k in ("name", "bandwidth_mbps", "rtt_ms", "mtu_bytes") if k not in values]
            if missing:
                raise ConfigError(f"missing required keys: {', '.join(missing)} (or give a preset)")
            settings = AqmSettings(**aqm_values)
            return ScenarioConfig(aqm_settings=settings, **values)
        settings = replace(base.aqm_settings, **aqm_values)
        return replace(base, aqm_settings=settings, **values)
    except ScenarioParseError:
        raise
    except (ConfigError, ValueError, TypeError) as exc:
        raise ScenarioParseError(path, 0, None, str(exc)) from None


def load_scenario_file(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_scenario_text(fh.read(), str(path))


def _emit_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_scenario(cfg: ScenarioConfig) -> str:
    """Inverse of ``parse_scenario_text`` (every field written explicitly)."""
    lines = []
    for name in _SCENARIO_PARSERS:
        v = getattr(cfg, name)
        if name == "load_phases":
            v = ", ".join(f"{_emit_value(p.start_s)}:{p.cubic_flows}:{p.prague_flows}" for p in v)
            name = "phases"
        elif name == "sinusoid" and v is not None:
            v = ":".join([_emit_value(float(x)) for x in (v.base_rate, v.amplitude, v.frequency, v.phase)]
                         + [str(v.request_packets)])
        else:
            v = _emit_value(v)
        lines.append(f"{name} = {v}")
    for name in _AQM_PARSERS:
        lines.append(f"aqm.{name} = {_emit_value(getattr(cfg.aqm_settings, name))}")
    return "\n".join(lines) + "\n"


def resolve_scenario(selector: str) -> ScenarioConfig:
    """A preset name, or a path to a scenario file."""
    try:
        return preset_scenario(selector)
    except ConfigError:
        pass
    import os
    if os.path.exists(selector):
        return load_scenario_file(selector)
    return preset_scenario(selector)
