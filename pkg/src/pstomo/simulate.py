"""Counts-level Monte Carlo of the coincidence tomography.

Each outcome m gets n_exp,m ~ Poisson(n_th,m * T_m) where n_th,m is the
expected coincidence rate of the window-averaged state and T_m the live
time of its waveplate configuration.  Singles are Poisson around the
calibration singles rates.  No time tags are generated.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .measurement import CalibrationData, expected_rates
from .source import SourceParams, window_average_dm
from .state import TwoPhotonState


@dataclass(frozen=True)
class CountRecord:
    m: int
    n_exp: int
    singles: tuple[int, int, int, int]
    duration: float
    tau_bin: tuple[float, float] | None = None
    seed: int | None = None
    bin: int = 0

    def __post_init__(self):
        if int(self.n_exp) != self.n_exp or self.n_exp < 0:
            raise ValueError("n_exp must be a non-negative integer")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        object.__setattr__(self, "n_exp", int(self.n_exp))
        object.__setattr__(self, "singles", tuple(int(s) for s in self.singles))
        if self.tau_bin is not None:
            object.__setattr__(self, "tau_bin", (float(self.tau_bin[0]), float(self.tau_bin[1])))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["singles"] = list(self.singles)
        d["tau_bin"] = None if self.tau_bin is None else list(self.tau_bin)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "CountRecord":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown count record keys: {sorted(unknown)}")
        data = dict(data)
        if data.get("tau_bin") is not None:
            data["tau_bin"] = tuple(data["tau_bin"])
        data["singles"] = tuple(data["singles"])
        return cls(**data)


def live_times(calib: CalibrationData, duration: float) -> np.ndarray:
    """Per-outcome live time: the total split evenly over waveplate configurations."""
    configs = sorted({s.configuration for s in calib.settings})
    return np.full(len(calib.settings), duration / len(configs))


def _seed_int(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1, dtype=np.uint32)[0])
    return int(seed)


def draw_counts(rho: TwoPhotonState, calib: CalibrationData, duration: float, seed: int,
                tau_bin=None, bin_index: int = 0) -> list[CountRecord]:
    """Poisson coincidences and singles for a known state."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    t = live_times(calib, duration)
    if np.any(t <= 0):
        raise ValueError("every setting needs a positive live time")
    rng = np.random.default_rng(seed)
    rates = np.clip(expected_rates(rho, calib), 0.0, None)
    coinc = rng.poisson(rates * t)
    singles = rng.poisson(calib.beta * t[:, None])
    return [
        CountRecord(s.m, int(coinc[k]), tuple(singles[k]), float(t[k]), tau_bin, seed, bin_index)
        for k, s in enumerate(calib.settings)
    ]


def simulate_tomography(params: SourceParams, calib: CalibrationData, duration: float,
                        window: tuple[float, float], seed: int,
                        bin_index: int = 0) -> list[CountRecord]:
    """One tomography run on the state averaged over ``window`` (|tau| range, s)."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    seed = _seed_int(seed)
    rho = window_average_dm(params, *window)
    return draw_counts(rho, calib, duration, seed, tuple(window), bin_index)


def tau_bins(centers: Sequence[float], half_width: float) -> list[tuple[float, float]]:
    """|tau| windows [c - w, c + w], clipped at zero; must not overlap."""
    if not half_width > 0:
        raise ValueError("half width must be positive")
    if len(centers) == 0:
        raise ValueError("no bins requested")
    bins = [(max(0.0, c - half_width), c + half_width) for c in sorted(centers)]
    for (lo0, hi0), (lo1, hi1) in zip(bins, bins[1:]):
        if lo1 < hi0 - 1e-18:
            raise ValueError("tau bins overlap")
    for lo, hi in bins:
        if not hi > lo:
            raise ValueError("empty tau bin")
    return bins


def simulate_tau_series(params: SourceParams, calib: CalibrationData, duration: float,
                        tau_centers: Sequence[float], half_width: float,
                        seed: int) -> list[list[CountRecord]]:
    """Independent tomography runs, one per delay bin, each on its own RNG stream."""
    bins = tau_bins(tau_centers, half_width)
    children = np.random.SeedSequence(seed).spawn(len(bins))
    return [
        simulate_tomography(params, calib, duration, b, _seed_int(child), k)
        for k, (b, child) in enumerate(zip(bins, children))
    ]


def write_counts(path: str | Path, records: Iterable[CountRecord], header: dict | None = None) -> None:
    """JSON lines, one record per (bin, m); an optional first line holds a header."""
    with open(path, "w") as fh:
        if header is not None:
            fh.write(json.dumps({"_header": header}, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_counts(path: str | Path) -> list[CountRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            if "_header" in data:
                continue
            out.append(CountRecord.from_dict(data))
    return out


def group_by_bin(records: Iterable[CountRecord]) -> dict[int, list[CountRecord]]:
    groups: dict[int, list[CountRecord]] = {}
    for r in records:
        groups.setdefault(r.bin, []).append(r)
    return {k: sorted(v, key=lambda r: r.m) for k, v in sorted(groups.items())}
