"""Polarization analyser and four-detector coincidence model.

Both photons pass a QWP and then a HWP; a beam displacer sends H to the
detector pair D1/D2 and V to D3/D4.  Same-polarization pairs are seen as
D1D2 (HH) or D3D4 (VV) coincidences, mixed pairs on the four cross pairs.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .state import Basis, TwoPhotonState, ket, projector

N_OUTCOMES = 10
N_DETECTORS = 4


class Projector(str, enum.Enum):
    P1 = "P1"  # |HH><HH|
    P2 = "P2"  # |VV><VV|
    P3 = "P3"  # |HV><HV| + |VH><VH|

    @property
    def matrix(self) -> np.ndarray:
        if self is Projector.P1:
            return projector(ket("HH"))
        if self is Projector.P2:
            return projector(ket("VV"))
        return projector(ket("HV")) + projector(ket("VH"))


class DetectorPair(str, enum.Enum):
    D1D2 = "D1D2"
    D3D4 = "D3D4"
    CROSS = "CROSS"  # D1D3 + D1D4 + D2D3 + D2D4

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        """Zero-based detector index pairs whose coincidences are summed."""
        if self is DetectorPair.D1D2:
            return ((0, 1),)
        if self is DetectorPair.D3D4:
            return ((2, 3),)
        return ((0, 2), (0, 3), (1, 2), (1, 3))


@dataclass(frozen=True)
class MeasurementSetting:
    m: int
    theta_hwp: float
    theta_qwp: float
    projector: Projector
    detectors: DetectorPair

    @property
    def configuration(self) -> tuple[float, float]:
        return (self.theta_hwp, self.theta_qwp)


def jones_hwp(theta: float) -> np.ndarray:
    c, s = np.cos(2 * theta), np.sin(2 * theta)
    return np.array([[c, s], [s, -c]], dtype=complex)


def jones_qwp(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    off = (1 - 1j) * s * c
    return np.array([[c**2 + 1j * s**2, off], [off, 1j * c**2 + s**2]], dtype=complex)


def load_settings(path: str | Path | None = None) -> tuple[MeasurementSetting, ...]:
    """Read a settings table; the packaged default is used when path is None."""
    if path is None:
        text = resources.files("pstomo").joinpath("data/settings.json").read_text()
    else:
        text = Path(path).read_text()
    data = json.loads(text)
    scale = np.pi if data.get("angle_unit", "rad") == "pi_rad" else 1.0
    out = []
    for row in data["settings"]:
        out.append(MeasurementSetting(
            m=int(row["m"]),
            theta_hwp=float(row["theta_hwp"]) * scale,
            theta_qwp=float(row["theta_qwp"]) * scale,
            projector=Projector(row["projector"]),
            detectors=DetectorPair(row["detectors"]),
        ))
    ms = [s.m for s in out]
    if sorted(ms) != list(range(1, len(out) + 1)):
        raise ValueError(f"settings must be numbered 1..{len(out)}, got {ms}")
    return tuple(sorted(out, key=lambda s: s.m))


@lru_cache(maxsize=1)
def default_settings() -> tuple[MeasurementSetting, ...]:
    return load_settings()


def povm_element(setting: MeasurementSetting) -> np.ndarray:
    """(U_HWP U_QWP)^{x2} P (U_QWP^+ U_HWP^+)^{x2} in the computational basis."""
    w = jones_hwp(setting.theta_hwp) @ jones_qwp(setting.theta_qwp)
    w2 = np.kron(w, w)
    return w2 @ setting.projector.matrix @ w2.conj().T


@lru_cache(maxsize=16)
def _povm_stack(settings: tuple) -> np.ndarray:
    out = np.array([povm_element(s) for s in settings])
    out.setflags(write=False)
    return out


def povm_stack(settings=None) -> np.ndarray:
    """All POVM elements of a settings table, shape (n, 4, 4)."""
    settings = default_settings() if settings is None else tuple(settings)
    return _povm_stack(settings)


def configuration_povms(theta_hwp: float, theta_qwp: float) -> dict[Projector, np.ndarray]:
    """The three outcome operators of one waveplate configuration."""
    return {
        p: povm_element(MeasurementSetting(0, theta_hwp, theta_qwp, p, DetectorPair.CROSS))
        for p in Projector
    }


@dataclass(frozen=True, eq=False)
class CalibrationData:
    """Detector efficiencies, singles, backgrounds and per-setting brightness.

    gamma: (4,) normalized path-and-detector efficiencies.
    beta, background: (10, 4) singles and background rates per setting and detector (1/s).
    alpha: (10,) brightness entering the expected coincidence rate (1/s).
    delta_tau: coincidence window (s).
    """

    gamma: np.ndarray
    beta: np.ndarray
    background: np.ndarray
    alpha: np.ndarray
    delta_tau: float
    settings: tuple = field(default_factory=default_settings)

    def __post_init__(self):
        n = len(self.settings)
        g = np.array(self.gamma, dtype=float)
        beta = np.array(self.beta, dtype=float)
        bg = np.array(self.background, dtype=float)
        alpha = np.array(self.alpha, dtype=float)
        if g.shape != (N_DETECTORS,):
            raise ValueError("gamma must have 4 entries")
        if np.any(g < 0) or abs(g.sum() - 1.0) > 1e-12:
            raise ValueError("gamma must be non-negative and sum to 1")
        if beta.shape != (n, N_DETECTORS) or bg.shape != (n, N_DETECTORS):
            raise ValueError(f"beta and background must have shape ({n}, 4)")
        if alpha.shape != (n,):
            raise ValueError(f"alpha must have {n} entries")
        if np.any(bg < 0) or np.any(bg > beta):
            raise ValueError("background rates must lie in [0, beta]")
        if np.any(alpha < 0):
            raise ValueError("alpha must be non-negative")
        if not self.delta_tau > 0:
            raise ValueError("coincidence window must be positive")
        for name, arr in (("gamma", g), ("beta", beta), ("background", bg), ("alpha", alpha)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "delta_tau", float(self.delta_tau))
        object.__setattr__(self, "settings", tuple(self.settings))

    @classmethod
    def from_singles(cls, gamma, beta, background, delta_tau, settings=None) -> "CalibrationData":
        """Brightness from the singles, alpha_m = sum_i beta_{i,m} / gamma_i."""
        settings = default_settings() if settings is None else settings
        return cls(gamma, beta, background, brightness(beta, gamma), delta_tau, settings)

    @classmethod
    def ideal(cls, alpha: float = 1.0, delta_tau: float = 26e-9, singles: float = 0.0,
              settings=None) -> "CalibrationData":
        """Uniform efficiencies, no background, constant brightness."""
        settings = default_settings() if settings is None else settings
        n = len(settings)
        beta = np.full((n, N_DETECTORS), float(singles))
        return cls(np.full(4, 0.25), beta, np.zeros_like(beta), np.full(n, float(alpha)),
                   delta_tau, settings)

    def scaled(self, factor: float) -> "CalibrationData":
        """Same calibration with the brightness multiplied by ``factor``."""
        return CalibrationData(self.gamma, self.beta, self.background, self.alpha * factor,
                               self.delta_tau, self.settings)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma.tolist(),
            "beta": self.beta.tolist(),
            "background": self.background.tolist(),
            "alpha": self.alpha.tolist(),
            "delta_tau_s": self.delta_tau,
        }

    @classmethod
    def from_dict(cls, data: dict, settings=None) -> "CalibrationData":
        allowed = {"gamma", "beta", "background", "alpha", "delta_tau_s"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown calibration keys: {sorted(unknown)}")
        missing = allowed - set(data)
        if missing:
            raise ValueError(f"missing calibration keys: {sorted(missing)}")
        settings = default_settings() if settings is None else settings
        return cls(data["gamma"], data["beta"], data["background"], data["alpha"],
                   data["delta_tau_s"], settings)


def calibrate_efficiencies(beta_45) -> np.ndarray:
    """gamma_i = beta_{i,45} / sum_j beta_{j,45} from a 45-degree coherent input."""
    b = np.asarray(beta_45, dtype=float)
    if b.shape != (N_DETECTORS,):
        raise ValueError("need one singles rate per detector")
    if np.any(~(b > 0)):
        raise ValueError("calibration singles rates must be positive")
    return b / b.sum()


def brightness(beta, gamma) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("brightness needs strictly positive efficiencies")
    return (beta / gamma).sum(axis=-1)


def _eta(detectors: DetectorPair, gamma) -> float:
    g1, g2, g3, g4 = gamma
    if detectors is DetectorPair.D1D2:
        return 2 * g1 * g2
    if detectors is DetectorPair.D3D4:
        return 2 * g3 * g4
    return (g1 + g2) * (g3 + g4)


def eta_factor(m: int, gamma, settings=None) -> float:
    """Coincidence efficiency of outcome m (1-based); same-SPAD pairs are lost."""
    settings = default_settings() if settings is None else settings
    if not 1 <= m <= len(settings):
        raise ValueError(f"outcome index {m} outside 1..{len(settings)}")
    return float(_eta(settings[m - 1].detectors, np.asarray(gamma, dtype=float)))


def eta_vector(gamma, settings=None) -> np.ndarray:
    settings = default_settings() if settings is None else settings
    return np.array([_eta(s.detectors, np.asarray(gamma, dtype=float)) for s in settings])


def accidentals(beta, background, delta_tau: float, m: int, settings=None) -> float:
    """Accidental coincidence rate of outcome m from signal-background pairs.

    Per detector pair, acc^(i,j) = [b_i b_j - (b_i - bg_i)(b_j - bg_j)] dtau with
    b the singles and bg the background rates; cross outcomes sum four pairs.
    """
    if not delta_tau > 0:
        raise ValueError("coincidence window must be positive")
    settings = default_settings() if settings is None else settings
    if not 1 <= m <= len(settings):
        raise ValueError(f"outcome index {m} outside 1..{len(settings)}")
    beta = np.asarray(beta, dtype=float)
    bg = np.asarray(background, dtype=float)
    row_b, row_bg = beta[m - 1], bg[m - 1]
    total = 0.0
    for i, j in settings[m - 1].detectors.pairs:
        total += row_b[i] * row_b[j] - (row_b[i] - row_bg[i]) * (row_b[j] - row_bg[j])
    return float(total * delta_tau)


def accidentals_vector(calib: CalibrationData) -> np.ndarray:
    return np.array([
        accidentals(calib.beta, calib.background, calib.delta_tau, s.m, calib.settings)
        for s in calib.settings
    ])


def expected_rates(rho: TwoPhotonState | np.ndarray, calib: CalibrationData) -> np.ndarray:
    """n_th,m = Tr[Pi_m rho] eta_m alpha_m + acc_m for every outcome (1/s)."""
    if isinstance(rho, TwoPhotonState):
        if rho.basis is not Basis.COMPUTATIONAL:
            raise ValueError("expected counts need a computational-basis state")
        rho = rho.matrix
    probs = np.einsum("kij,ji->k", povm_stack(calib.settings), rho).real
    return probs * eta_vector(calib.gamma, calib.settings) * calib.alpha + accidentals_vector(calib)


def expected_counts(rho: TwoPhotonState, setting: MeasurementSetting, calib: CalibrationData) -> float:
    """n_th for one setting (rate, 1/s)."""
    if rho.basis is not Basis.COMPUTATIONAL:
        raise ValueError("expected counts need a computational-basis state")
    p = float(np.real(np.trace(povm_element(setting) @ rho.matrix)))
    eta = _eta(setting.detectors, calib.gamma)
    acc = accidentals(calib.beta, calib.background, calib.delta_tau, setting.m, calib.settings)
    return max(0.0, p * eta * calib.alpha[setting.m - 1] + acc)
