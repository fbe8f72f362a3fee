"""Forward model of a polarization-squeezed beam.

An H-polarized coherent field of flux ``phi_c`` is combined with V-polarized
squeezed vacuum of flux ``phi_s`` from a below-threshold degenerate OPO of
bandwidth ``gamma``.  The squeezed field is Gaussian, so every fourth-order
correlation R^{mn}_{ij}(tau) = <E_i^+(t) E_j^+(t+tau) E_n(t+tau) E_m(t)>
factors into the coherent amplitude and the two second moments

    n(tau) = <E_V^+(t) E_V(t+tau)>,     m(tau) = <E_V(t) E_V(t+tau)>.

The two-photon density matrix is rho_{ij,mn}(tau) proportional to R^{mn}_{ij}(tau).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, optimize

from .state import LABELS, TwoPhotonState, concurrence, negativity

CS_REL_TOL = 1e-12


@dataclass(frozen=True)
class SourceParams:
    """Physical description of the beam.

    phi_c, phi_s are photon fluxes (1/s), gamma the squeezing bandwidth
    (rad/s), phase the SV/CS relative phase (rad).  ``dephasing`` is the rms
    of a Gaussian phase noise on the coherent field and ``leakage`` the
    fraction of coherent amplitude that ends up in the V mode.

    ``escape_efficiency`` is the share of the cavity loss that goes through
    the output coupler.  The default 1 is the lossless OPO, for which
    gamma * phi_s ~ phi_c**2 marks the maximally entangled ridge; 0.5 gives
    the symmetric two-port cavity.
    """

    phi_c: float
    phi_s: float
    gamma: float
    phase: float = 0.0
    dephasing: float = 0.0
    leakage: float = 0.0
    escape_efficiency: float = 1.0

    def __post_init__(self):
        for name in ("phi_c", "phi_s", "gamma", "phase", "dephasing", "leakage",
                     "escape_efficiency"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.phi_c < 0 or self.phi_s < 0:
            raise ValueError("fluxes must be non-negative")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.dephasing < 0 or self.leakage < 0:
            raise ValueError("dephasing and leakage must be non-negative")
        if not 0 < self.escape_efficiency <= 1:
            raise ValueError("escape_efficiency must lie in (0, 1]")
        if not self.epsilon < 1:
            raise ValueError(f"pump parameter epsilon={self.epsilon} is at or above threshold")

    @property
    def epsilon(self) -> float:
        # inverts phi_s = eta gamma eps^2 / (1 - eps^2)
        eta_g = self.escape_efficiency * self.gamma
        return float(np.sqrt(self.phi_s / (eta_g + self.phi_s)))

    @property
    def alpha(self) -> float:
        """Coherent amplitude, real by choice of phase reference."""
        return float(np.sqrt(self.phi_c))

    def replace(self, **changes) -> "SourceParams":
        d = asdict(self)
        d.update(changes)
        return SourceParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SourceParams":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown source keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class FieldMoments:
    n_tau: complex
    m_tau: complex
    tau: float
    n_zero: float


def _moments(params: SourceParams, tau):
    eps, g = params.epsilon, params.gamma
    t = np.abs(np.asarray(tau, dtype=float))
    slow = np.exp(-g * (1 - eps) * t) / (1 - eps)
    fast = np.exp(-g * (1 + eps) * t) / (1 + eps)
    pre = 0.5 * params.escape_efficiency * eps * g
    n = pre * (slow - fast) + 0j
    m = np.exp(1j * params.phase) * pre * (slow + fast)
    return n, m


def field_moments(params: SourceParams, tau: float) -> FieldMoments:
    """Stationary second moments of the squeezed field at delay tau (s)."""
    n, m = _moments(params, tau)
    return FieldMoments(complex(n), complex(m), float(tau), float(params.phi_s))


def _raw_matrix(params: SourceParams, tau):
    """Unnormalized rho_{ij,mn} = R^{mn}_{ij}; broadcasts over an array of tau.

    The coherent part is a = alpha in H and b = leakage * alpha in V.  With
    CS phase noise of rms s, each term picking up k powers of the coherent
    phase is damped by exp(-k^2 s^2 / 2); only the terms carrying m or m*
    have k = +-2, all others are phase-free.
    """
    n, m = _moments(params, tau)
    n0 = params.phi_s
    a = params.alpha
    b = params.leakage * a
    d2 = np.exp(-2.0 * params.dephasing**2)
    nc = np.conj(n)
    md = d2 * m

    shape = np.shape(n)
    r = np.zeros(shape + (4, 4), dtype=complex)
    HH, HV, VH, VV = range(4)
    r[..., HH, HH] = a**4
    r[..., HH, HV] = a**3 * b
    r[..., HH, VH] = a**3 * b
    r[..., HH, VV] = a**2 * (b**2 + md)
    r[..., HV, HV] = a**2 * (b**2 + n0)
    r[..., HV, VH] = a**2 * (b**2 + nc)
    r[..., HV, VV] = a * b * (b**2 + n0 + nc + md)
    r[..., VH, VH] = a**2 * (b**2 + n0)
    r[..., VH, VV] = a * b * (b**2 + n + n0 + md)
    r[..., VV, VV] = (
        b**4
        + b**2 * (2 * (md.real) + 2 * n.real + 2 * n0)
        + np.abs(m) ** 2
        + np.abs(n) ** 2
        + n0**2
    )
    # lower triangle by Hermitian pairing
    iu = np.triu_indices(4, 1)
    r[..., iu[1], iu[0]] = np.conj(r[..., iu[0], iu[1]])
    return r


@dataclass(frozen=True)
class CorrelationTensor:
    """The sixteen R^{mn}_{ij}(tau), stored as a 4x4 array indexed [ij, mn]."""

    r: np.ndarray
    tau: float

    def __getitem__(self, key) -> complex:
        row, col = key
        return complex(self.r[LABELS.index(row), LABELS.index(col)])

    def as_dict(self) -> dict:
        return {(i, j): self[i, j] for i in LABELS for j in LABELS}


def correlation_tensor(params: SourceParams, tau: float) -> CorrelationTensor:
    r = _raw_matrix(params, float(tau))
    r.setflags(write=False)
    return CorrelationTensor(r, float(tau))


def two_photon_dm(params: SourceParams, tau: float) -> TwoPhotonState:
    if params.phi_c == 0 and params.phi_s == 0:
        raise ValueError("both fluxes are zero; there are no photon pairs")
    return TwoPhotonState.from_unnormalized(_raw_matrix(params, float(tau)))


def window_average_dm(
    params: SourceParams, tau_lo: float, tau_hi: float, rtol: float = 1e-10
) -> TwoPhotonState:
    """Average of the unnormalized matrix over tau_lo <= |tau| <= tau_hi.

    Both signs of tau are included; for this model they coincide.
    """
    if not (np.isfinite(tau_lo) and np.isfinite(tau_hi)) or tau_lo < 0 or not tau_lo < tau_hi:
        raise ValueError(f"invalid window [{tau_lo}, {tau_hi}]")
    if params.phi_c == 0 and params.phi_s == 0:
        raise ValueError("both fluxes are zero; there are no photon pairs")

    def f(t):
        return (_raw_matrix(params, t) + _raw_matrix(params, -t)).ravel()

    total, _ = integrate.quad_vec(f, tau_lo, tau_hi, epsrel=rtol, epsabs=0.0)
    return TwoPhotonState.from_unnormalized(total.reshape(4, 4))


def window_integral(params: SourceParams, tau_lo: float, tau_hi: float) -> np.ndarray:
    """Unnormalized element-wise integral, for pair-rate bookkeeping."""

    def f(t):
        return (_raw_matrix(params, t) + _raw_matrix(params, -t)).ravel()

    total, _ = integrate.quad_vec(f, tau_lo, tau_hi, epsrel=1e-10, epsabs=0.0)
    return total.reshape(4, 4)


@dataclass(frozen=True)
class CSCheck:
    lhs_a: float
    rhs_a: float
    violated_a: bool
    lhs_b: float
    rhs_b: float
    violated_b: bool

    @property
    def violated(self) -> bool:
        return self.violated_a or self.violated_b


def cs_inequality_check(tensor: CorrelationTensor) -> CSCheck:
    """Classical Cauchy-Schwarz bounds on the HH,VV and HV,VH correlations.

    (a) |R_HH,VV|^2 <= R_HV,HV R_VH,VH
    (b) |R_HV,VH|^2 <= R_HH,HH R_VV,VV
    """
    lhs_a = abs(tensor["HH", "VV"]) ** 2
    rhs_a = tensor["HV", "HV"].real * tensor["VH", "VH"].real
    lhs_b = abs(tensor["HV", "VH"]) ** 2
    rhs_b = tensor["HH", "HH"].real * tensor["VV", "VV"].real
    return CSCheck(
        lhs_a,
        rhs_a,
        bool(lhs_a > rhs_a * (1 + CS_REL_TOL)),
        lhs_b,
        rhs_b,
        bool(lhs_b > rhs_b * (1 + CS_REL_TOL)),
    )


def sweet_spot_locus(gamma: float, phi_c) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Points on gamma * phi_s = phi_c^2; ``valid`` marks phi_s < gamma."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    phi_c = np.atleast_1d(np.asarray(phi_c, dtype=float))
    phi_s = phi_c**2 / gamma
    return phi_c, phi_s, phi_s < gamma


def pair_rate_components(params: SourceParams, tau) -> tuple:
    """(sv_rate, cs_rate) = (R_VV,VV(tau), R_HH,HH(tau))."""
    r = _raw_matrix(params, tau)
    return r[..., 3, 3].real, r[..., 0, 0].real


def fit_gamma(crossover_tau: float, phi_c: float, phi_s: float, rtol: float = 1e-13,
              escape_efficiency: float = 1.0) -> float:
    """Bandwidth for which the SV and CS pair rates cross at ``crossover_tau``.

    R_VV,VV(tau*) as a function of gamma rises, peaks and decays back to
    phi_s^2, so there are generally two roots.  The root on the decaying
    branch is returned: there the crossing moves to shorter delay as gamma
    grows, and the SV contribution dominates at tau = 0.
    """
    if not crossover_tau > 0:
        raise ValueError("crossover delay must be positive")
    if not (phi_c > 0 and phi_s > 0):
        raise ValueError("both fluxes must be positive to have a crossover")
    target = phi_c**2

    def excess(log_g):
        p = SourceParams(phi_c, phi_s, float(np.exp(log_g)), escape_efficiency=escape_efficiency)
        return pair_rate_components(p, crossover_tau)[0] / target - 1.0

    # the peak of the SV rate sits near gamma ~ 1/tau*
    centre = np.log(1.0 / crossover_tau)
    grid = centre + np.linspace(-12, 12, 481)
    vals = np.array([excess(x) for x in grid])
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    peak = optimize.minimize_scalar(lambda x: -excess(x), bounds=(lo, hi), method="bounded",
                                    options={"xatol": 1e-12})
    peak_x = peak.x if -peak.fun >= vals[k] else grid[k]
    if excess(peak_x) <= 0:
        raise ValueError("no root in bracket: SV pair rate never reaches the CS rate at this delay")
    upper = peak_x + 1.0
    while excess(upper) > 0:
        upper += 1.0
        if upper > centre + 60:
            raise ValueError("no root in bracket: SV pair rate stays above the CS rate")
    root = optimize.brentq(excess, peak_x, upper, xtol=1e-15, rtol=rtol / 10, maxiter=500)
    return float(np.exp(root))


def scan_tau(params: SourceParams, taus) -> list[dict]:
    """Rows of (tau, rho entries, concurrence, negativity, CS flags) over a tau grid."""
    rows = []
    for tau in np.asarray(taus, dtype=float):
        rho = two_photon_dm(params, tau)
        cs = cs_inequality_check(correlation_tensor(params, tau))
        rows.append({
            "tau": float(tau),
            "rho": rho.matrix,
            "concurrence": concurrence(rho),
            "negativity": negativity(rho),
            "cs_violated_a": cs.violated_a,
            "cs_violated_b": cs.violated_b,
        })
    return rows
