"""Experiment configuration: strict YAML loading with line-precise errors.

Every key is checked against a fixed schema; unknown keys, wrong types and
violated invariants are reported as ``ConfigError`` naming the dotted field
path and its line in the file.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .dispersion import DispersionElement
from .events import ChannelConfig, Gate, SourceConfig
from .franson import FransonConfig
from .spectral import Explicit, Flat, LorentzianRolloff, RingParams
from .state import BiphotonState

REQUIRED = object()
_FLOAT_RE = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?")


class ConfigError(ValueError):
    def __init__(self, field: str, message: str, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = f" (line {line})" if line else ""
        super().__init__(f"{field}{where}: {message}")


# key -> (type, default); nested dicts are sub-schemas
RING = {
    "pump_wavelength_nm": (float, 1550.9),
    "fsr_ghz": (float, 384.6),
    "linewidth_mhz": (float, 270.0),
    "n_sidebands": (int, 6),
    "min_sideband": (int, 2),
    "weights": ({
        "model": (str, "flat"),
        "scale": (float, None),
        "values": (list, None),
    }, None),
}
SOURCE = {
    "pair_rate": (float, REQUIRED),
    "duration": (float, REQUIRED),
    "seed": (int, 0),
    "segment_duration": (float, 1e-3),
}
GATE = {"period_ns": (float, REQUIRED), "width_ns": (float, REQUIRED)}
CHANNEL = {
    "efficiency": (float, 1.0),
    "dark_rate": (float, 0.0),
    "jitter_ps": (float, 0.0),
    "gate": (GATE, None),
}
TIA = {
    "bin_ps": (float, 100.0),
    "range_ns": (float, 25.0),
    "window_ns": (float, 2.0),
    "sideband": (int, 2),
}
FRANSON = {
    "tau_s_ns": (float, 6.0),
    "base_visibility": (float, 1.0),
    "pump_coherence_ns": (float, 1000.0),
    "sidebands": (list, [2, 3]),
    "common_span_fs": (float, 10.0),
    "common_step_fs": (float, 0.05),
    "taud_start_ps": (float, -0.5),
    "taud_stop_ps": (float, 6.0),
    "taud_step_fs": (float, 0.25),
    "mc_points": (int, 24),
    "mc_duration": (float, 1e-3),
}
DISPERSION = {
    "D_signal": (float, 2.0),
    "D_idler": (float, -2.0),
    "ref_wavelength": (float, None),
    "loss": (float, 0.5),
    "sidebands": (list, [2, 5]),
    "range_ns": (float, 40.0),
    "bin_ps": (float, 100.0),
}
SCHMIDT = {
    "k_range": (list, [2, 7]),
    "duration": (float, None),
    "pair_rate": (float, None),
}
TOP = {
    "output_dir": (str, "bfc_out"),
    "ring": (RING, REQUIRED),
    "source": (SOURCE, REQUIRED),
    "detectors": ({"signal": (CHANNEL, REQUIRED), "idler": (CHANNEL, REQUIRED)}, REQUIRED),
    "tia": (TIA, {}),
    "franson": (FRANSON, {}),
    "dispersion": (DISPERSION, {}),
    "schmidt": (SCHMIDT, {}),
}


@dataclass(frozen=True)
class TiaConfig:
    bin_ps: float = 100.0
    range_ns: float = 25.0
    window_ns: float = 2.0
    sideband: int = 2

    @property
    def range_ps(self) -> float:
        return self.range_ns * 1e3

    @property
    def window_ps(self) -> float:
        return self.window_ns * 1e3


@dataclass(frozen=True)
class FransonSection:
    cfg: FransonConfig
    sidebands: tuple[int, ...]
    common_span_fs: float
    common_step_fs: float
    taud_start_ps: float
    taud_stop_ps: float
    taud_step_fs: float
    mc_points: int
    mc_duration: float


@dataclass(frozen=True)
class DispersionSection:
    signal: DispersionElement
    idler: DispersionElement
    sidebands: tuple[int, int]
    range_ns: float
    bin_ps: float


@dataclass(frozen=True)
class SchmidtSection:
    k_range: tuple[int, int]
    duration: Optional[float]
    pair_rate: Optional[float] = None


@dataclass(frozen=True)
class ExperimentConfig:
    ring: RingParams
    source: SourceConfig
    signal: ChannelConfig
    idler: ChannelConfig
    tia: TiaConfig
    franson: FransonSection
    dispersion: DispersionSection
    schmidt: SchmidtSection
    output_dir: str
    sha256: str = field(default="", compare=False)

    @property
    def channels(self) -> tuple[ChannelConfig, ChannelConfig]:
        return self.signal, self.idler


# ---------------------------------------------------------------------------

def _node_to_python(node, path: str, lines: dict[str, int]):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            sub = f"{path}.{key}" if path else key
            if key in out:
                raise ConfigError(sub, "duplicate key", k.start_mark.line + 1)
            out[key] = _node_to_python(v, sub, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_node_to_python(v, f"{path}[{j}]", lines) for j, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def _coerce(value, typ, path, line):
    if typ is float:
        # YAML 1.1 reads exponent floats without a dot ("2e7") as strings
        if isinstance(value, str) and _FLOAT_RE.fullmatch(value.strip()):
            return float(value)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}", line)
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}", line)
        return value
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}", line)
        return value
    if typ is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}", line)
        return value
    raise TypeError(typ)


def _check(data, schema: dict, path: str, lines: dict[str, int]) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", "expected a mapping", lines.get(path))
    for key in data:
        if key not in schema:
            sub = f"{path}.{key}" if path else key
            raise ConfigError(sub, f"unknown key (allowed: {', '.join(schema)})", lines.get(sub))
    out = {}
    for key, (typ, default) in schema.items():
        sub = f"{path}.{key}" if path else key
        if key not in data:
            if default is REQUIRED:
                raise ConfigError(sub, "missing required key", lines.get(path))
            out[key] = _check(default, typ, sub, lines) if isinstance(typ, dict) and default is not None else default
            continue
        if isinstance(typ, dict):
            out[key] = _check(data[key], typ, sub, lines)
        else:
            out[key] = _coerce(data[key], typ, sub, lines.get(sub))
    return out


def _build(section: str, fields: dict, lines: dict[str, int], fn):
    try:
        return fn()
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        msg = str(exc)
        for name in sorted(fields, key=len, reverse=True):
            if re.search(rf"\b{re.escape(name)}\b", msg):
                path = f"{section}.{name}"
                raise ConfigError(path, msg, lines.get(path)) from None
        raise ConfigError(section, msg, lines.get(section)) from None


def _int_list(values, path, lines, n=None) -> tuple[int, ...]:
    for j, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{path}[{j}]", f"expected an integer, got {v!r}", lines.get(f"{path}[{j}]"))
    if n is not None and len(values) != n:
        raise ConfigError(path, f"expected {n} integers", lines.get(path))
    return tuple(values)


def _weight_model(w: Optional[dict], lines) -> Any:
    if w is None:
        return Flat()
    path = "ring.weights"
    model = w["model"]
    if model == "flat":
        return Flat()
    if model == "lorentzian_rolloff":
        if w["scale"] is None:
            raise ConfigError(f"{path}.scale", "required for lorentzian_rolloff", lines.get(path))
        return _build(path, {"scale": 1}, lines, lambda: LorentzianRolloff(w["scale"]))
    if model == "explicit":
        if w["values"] is None:
            raise ConfigError(f"{path}.values", "required for explicit weights", lines.get(path))
        for j, v in enumerate(w["values"]):
            _coerce(v, float, f"{path}.values[{j}]", lines.get(f"{path}.values[{j}]"))
        return Explicit(tuple(w["values"]))
    raise ConfigError(f"{path}.model", f"unknown weight model {model!r} "
                      "(flat, explicit, lorentzian_rolloff)", lines.get(f"{path}.model"))


def _channel(name: str, d: dict, lines) -> ChannelConfig:
    path = f"detectors.{name}"
    gate = None
    if d["gate"] is not None:
        g = d["gate"]
        gate = _build(f"{path}.gate", GATE, lines,
                      lambda: Gate(g["period_ns"] * 1e3, g["width_ns"] * 1e3))
    return _build(path, CHANNEL, lines, lambda: ChannelConfig(
        d["efficiency"], d["dark_rate"], d["jitter_ps"], gate))


def parse_config(text: str, seed: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate a YAML config; ``seed`` overrides ``source.seed``."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<syntax>", str(exc).splitlines()[0], mark.line + 1 if mark else None) from None
    if root is None:
        raise ConfigError("<root>", "empty configuration")
    lines: dict[str, int] = {}
    raw = _node_to_python(root, "", lines)
    d = _check(raw, TOP, "", lines)

    r = d["ring"]
    ring = _build("ring", RING, lines, lambda: RingParams(
        r["pump_wavelength_nm"], r["fsr_ghz"], r["linewidth_mhz"], r["n_sidebands"],
        r["min_sideband"], _weight_model(r["weights"], lines)))

    s = d["source"]
    if seed is not None:
        s = dict(s, seed=int(seed))
    source = _build("source", SOURCE, lines, lambda: SourceConfig(
        s["pair_rate"], s["duration"], s["seed"], s["segment_duration"]))

    signal = _channel("signal", d["detectors"]["signal"], lines)
    idler = _channel("idler", d["detectors"]["idler"], lines)

    t = d["tia"]
    tia = TiaConfig(**t)
    for key in ("bin_ps", "range_ns", "window_ns"):
        if not t[key] > 0:
            raise ConfigError(f"tia.{key}", "must be > 0", lines.get(f"tia.{key}"))
    ratio = tia.range_ps / tia.bin_ps
    if abs(ratio - round(ratio)) > 1e-9:
        raise ConfigError("tia.range_ns", "range is not a multiple of bin_ps", lines.get("tia.range_ns"))
    if tia.window_ps > tia.range_ps:
        raise ConfigError("tia.window_ns", "window larger than half the histogram range",
                          lines.get("tia.window_ns"))
    if tia.sideband not in ring.sideband_indices:
        raise ConfigError("tia.sideband", f"not one of the ring's sidebands {ring.sideband_indices.tolist()}",
                          lines.get("tia.sideband"))

    f = d["franson"]
    fcfg = _build("franson", FRANSON, lines, lambda: FransonConfig(
        f["tau_s_ns"], f["tau_s_ns"], f["base_visibility"], f["pump_coherence_ns"]))
    _build("franson", {"tau_s_ns": 1, "tau_i_ns": 1}, lines, lambda: fcfg.check(BiphotonState(ring)))
    fsb = _int_list(f["sidebands"], "franson.sidebands", lines)
    bad = [k for k in fsb if k not in ring.sideband_indices]
    if not fsb or bad:
        raise ConfigError("franson.sidebands", f"must be a non-empty subset of the ring's sidebands",
                          lines.get("franson.sidebands"))
    for key in ("common_span_fs", "common_step_fs", "taud_step_fs", "mc_duration"):
        if not f[key] > 0:
            raise ConfigError(f"franson.{key}", "must be > 0", lines.get(f"franson.{key}"))
    if not f["taud_stop_ps"] > f["taud_start_ps"]:
        raise ConfigError("franson.taud_stop_ps", "must exceed taud_start_ps", lines.get("franson.taud_stop_ps"))
    if f["mc_points"] < 0:
        raise ConfigError("franson.mc_points", "must be >= 0", lines.get("franson.mc_points"))
    franson = FransonSection(fcfg, fsb, f["common_span_fs"], f["common_step_fs"], f["taud_start_ps"],
                             f["taud_stop_ps"], f["taud_step_fs"], f["mc_points"], f["mc_duration"])

    x = d["dispersion"]
    ref = x["ref_wavelength"] if x["ref_wavelength"] is not None else ring.pump_wavelength_nm
    path = "dispersion"
    d_sig = _build(path, {"ref_wavelength": 1, "loss": 1}, lines,
                   lambda: DispersionElement(x["D_signal"], ref, x["loss"]))
    d_idl = _build(path, {"ref_wavelength": 1, "loss": 1}, lines,
                   lambda: DispersionElement(x["D_idler"], ref, x["loss"]))
    dsb = _int_list(x["sidebands"], "dispersion.sidebands", lines, 2)
    if dsb[0] > dsb[1] or any(k not in ring.sideband_indices for k in dsb):
        raise ConfigError("dispersion.sidebands", "must be [k_lo, k_hi] within the ring's sidebands",
                          lines.get("dispersion.sidebands"))
    for key in ("range_ns", "bin_ps"):
        if not x[key] > 0:
            raise ConfigError(f"dispersion.{key}", "must be > 0", lines.get(f"dispersion.{key}"))
    dispersion = DispersionSection(d_sig, d_idl, dsb, x["range_ns"], x["bin_ps"])

    sc = d["schmidt"]
    kr = _int_list(sc["k_range"], "schmidt.k_range", lines, 2)
    if kr[0] > kr[1] or any(k not in ring.sideband_indices for k in kr):
        raise ConfigError("schmidt.k_range", "must be [k_lo, k_hi] within the ring's sidebands",
                          lines.get("schmidt.k_range"))
    for key in ("duration", "pair_rate"):
        if sc[key] is not None and not sc[key] > 0:
            raise ConfigError(f"schmidt.{key}", "must be > 0", lines.get(f"schmidt.{key}"))
    schmidt = SchmidtSection(kr, sc["duration"], sc["pair_rate"])

    return ExperimentConfig(ring, source, signal, idler, tia, franson, dispersion, schmidt,
                            d["output_dir"], hashlib.sha256(text.encode()).hexdigest())


def load_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, seed)
