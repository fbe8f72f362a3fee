"""Run configuration: JSON schema checks, unit parsing and presets.

Times are seconds when given as numbers; strings need an explicit unit
suffix ("15ns", "6 us", "0.1 s").  Fluxes are photons per second.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .measurement import CalibrationData
from .source import SourceParams, fit_gamma

PAPER_PHI_C = 9.6e5
PAPER_PHI_S = 1.9e5
PAPER_CROSSOVER = 15e-9
IDEAL_ALPHA = 100.0
IDEAL_DELTA_TAU = 26e-9


class ConfigError(ValueError):
    pass


_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9, "ps": 1e-12}
_TIME_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([a-zµ]+)\s*$")


def parse_time(value) -> float:
    """Seconds from a number, or from a string carrying a unit suffix."""
    if isinstance(value, bool):
        raise ConfigError(f"not a time: {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        match = _TIME_RE.match(value)
        if match and match.group(2) in _UNITS:
            return float(match.group(1)) * _UNITS[match.group(2)]
    raise ConfigError(f"cannot parse time {value!r}; use seconds or a string like '15ns'")


def _check_keys(section: str, data: dict, allowed: set, required: set = frozenset()):
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be an object")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
    missing = set(required) - set(data)
    if missing:
        raise ConfigError(f"missing keys in {section}: {sorted(missing)}")


@dataclass(frozen=True)
class Scan:
    kind: str  # "tau_series" | "flux_grid" | "single"
    centers: tuple = ()
    half_width: float = 0.0
    phi_c: tuple = ()
    phi_s: tuple = ()
    window: tuple = (0.0, 13e-9)

    def bins(self) -> list[tuple[float, float]]:
        if self.kind == "tau_series":
            from .simulate import tau_bins
            return tau_bins(list(self.centers), self.half_width)
        return [tuple(self.window)]


@dataclass(frozen=True)
class RunConfig:
    source: SourceParams
    calib: CalibrationData
    scan: Scan
    duration_s: float
    seed: int
    output_dir: Path
    tau_grid: np.ndarray
    resamples: int = 100
    surface: Scan | None = None
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def config_hash(self) -> str:
        # where results go does not change what they are
        content = {k: v for k, v in self.raw.items() if k != "output_dir"}
        blob = json.dumps(content, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def header(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed}


def _parse_source(data: dict) -> SourceParams:
    allowed = {"phi_c", "phi_s", "gamma", "crossover_tau", "phase", "dephasing", "leakage",
               "escape_efficiency"}
    _check_keys("source", data, allowed, {"phi_c", "phi_s", "gamma"})
    d = dict(data)
    gamma = d.pop("gamma")
    crossover = d.pop("crossover_tau", None)
    try:
        if gamma == "fit":
            tau_star = parse_time(crossover if crossover is not None else PAPER_CROSSOVER)
            gamma = fit_gamma(tau_star, float(d["phi_c"]), float(d["phi_s"]),
                              escape_efficiency=float(d.get("escape_efficiency", 1.0)))
        elif crossover is not None:
            raise ConfigError("crossover_tau only makes sense with gamma = 'fit'")
        return SourceParams(gamma=float(gamma), **{k: float(v) for k, v in d.items()})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid source: {exc}") from exc


def _parse_calibration(data, base_dir: Path) -> CalibrationData:
    if data == "ideal":
        return CalibrationData.ideal(IDEAL_ALPHA, IDEAL_DELTA_TAU)
    if isinstance(data, str):
        path = Path(data)
        if not path.is_absolute():
            path = base_dir / path
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"calibration file {path} is not valid JSON: {exc}") from exc
    if isinstance(data, dict) and "ideal" in data:
        _check_keys("calibration", data, {"ideal"})
        opts = data["ideal"]
        _check_keys("calibration.ideal", opts, {"alpha", "delta_tau_s", "singles"})
        return CalibrationData.ideal(
            float(opts.get("alpha", IDEAL_ALPHA)),
            parse_time(opts.get("delta_tau_s", IDEAL_DELTA_TAU)),
            float(opts.get("singles", 0.0)),
        )
    try:
        return CalibrationData.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid calibration: {exc}") from exc


def _parse_scan(data: dict, section: str = "scan") -> Scan:
    _check_keys(section, data, {"kind", "centers", "half_width", "phi_c", "phi_s", "window"}, {"kind"})
    kind = data["kind"]
    window = tuple(parse_time(t) for t in data.get("window", (0.0, 13e-9)))
    if len(window) != 2 or not window[0] < window[1] or window[0] < 0:
        raise ConfigError(f"{section}.window must be [lo, hi] with 0 <= lo < hi")
    if kind == "tau_series":
        _check_keys(section, data, {"kind", "centers", "half_width"}, {"centers", "half_width"})
        centers = tuple(parse_time(c) for c in data["centers"])
        hw = parse_time(data["half_width"])
        scan = Scan(kind, centers=centers, half_width=hw)
        try:
            scan.bins()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return scan
    if kind == "flux_grid":
        _check_keys(section, data, {"kind", "phi_c", "phi_s", "window"}, {"phi_c", "phi_s"})
        pc = tuple(float(x) for x in data["phi_c"])
        ps = tuple(float(x) for x in data["phi_s"])
        if not pc or not ps or min(pc) < 0 or min(ps) < 0:
            raise ConfigError(f"{section} flux lists must be non-empty and non-negative")
        return Scan(kind, phi_c=pc, phi_s=ps, window=window)
    if kind == "single":
        _check_keys(section, data, {"kind", "window"})
        return Scan(kind, window=window)
    raise ConfigError(f"unknown scan kind {kind!r}")


def _parse_tau_grid(data) -> np.ndarray:
    if data is None:
        return np.linspace(0.0, 100e-9, 101)
    _check_keys("tau_grid", data, {"start", "stop", "num"}, {"stop", "num"})
    start = parse_time(data.get("start", 0.0))
    stop = parse_time(data["stop"])
    num = int(data["num"])
    if num < 1 or stop < start:
        raise ConfigError("tau_grid needs num >= 1 and stop >= start")
    return np.linspace(start, stop, num)


TOP_KEYS = {"source", "calibration", "scan", "duration_s", "seed", "output_dir",
            "tau_grid", "resamples", "surface"}


def parse_config(data: dict, base_dir: Path | str = ".") -> RunConfig:
    """Validate a config dictionary; raises ConfigError on any problem."""
    _check_keys("config", data, TOP_KEYS, {"source", "scan"})
    base_dir = Path(base_dir)
    source = _parse_source(data["source"])
    calib = _parse_calibration(data.get("calibration", "ideal"), base_dir)
    scan = _parse_scan(data["scan"])
    surface = _parse_scan(data["surface"], "surface") if "surface" in data else None
    if surface is not None and surface.kind != "flux_grid":
        raise ConfigError("surface must be a flux_grid")
    duration = parse_time(data.get("duration_s", 700.0))
    if not duration > 0:
        raise ConfigError("duration_s must be positive")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    resamples = data.get("resamples", 100)
    if isinstance(resamples, bool) or not isinstance(resamples, int) or resamples < 1:
        raise ConfigError("resamples must be a positive integer")
    return RunConfig(
        source=source,
        calib=calib,
        scan=scan,
        duration_s=duration,
        seed=seed,
        output_dir=Path(data.get("output_dir", "out")),
        tau_grid=_parse_tau_grid(data.get("tau_grid")),
        resamples=resamples,
        surface=surface,
        raw=copy.deepcopy(data),
    )


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


@lru_cache(maxsize=None)
def paper_gamma() -> float:
    """Bandwidth fitted to the 15 ns SV/CS crossover at the published fluxes."""
    return fit_gamma(PAPER_CROSSOVER, PAPER_PHI_C, PAPER_PHI_S)


def preset(name: str) -> dict:
    """Built-in run configurations; returns a fresh dictionary."""
    g = paper_gamma()
    paper_source = {"phi_c": PAPER_PHI_C, "phi_s": PAPER_PHI_S, "gamma": g}
    base = {
        "source": paper_source,
        "calibration": "ideal",
        "duration_s": 700.0,
        "seed": 2014,
        "resamples": 100,
        "tau_grid": {"start": 0.0, "stop": 100e-9, "num": 101},
    }
    if name == "fig1b":
        base["scan"] = {"kind": "tau_series", "centers": [6e-9, 30e-9, 48e-9, 66e-9], "half_width": 6e-9}
    elif name == "fig1c":
        base["scan"] = {"kind": "tau_series",
                        "centers": [6e-9, 18e-9, 30e-9, 42e-9, 54e-9, 66e-9, 78e-9],
                        "half_width": 6e-9}
    elif name == "fig1d":
        base["scan"] = {"kind": "single", "window": [0.0, 13e-9]}
        base["surface"] = {
            "kind": "flux_grid",
            "phi_c": np.geomspace(1e5, 1e7, 41).tolist(),
            "phi_s": np.geomspace(1e3, 0.5 * g, 41).tolist(),
            "window": [0.0, 13e-9],
        }
    elif name == "null":
        base["source"] = dict(paper_source, phi_s=0.0)
        base["scan"] = {"kind": "single", "window": [0.0, 13e-9]}
    else:
        raise ConfigError(f"unknown preset {name!r}; choose from fig1b, fig1c, fig1d, null")
    return base


PRESETS = ("fig1b", "fig1c", "fig1d", "null")
