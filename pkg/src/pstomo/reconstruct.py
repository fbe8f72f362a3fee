"""Permutation-invariant maximum-likelihood tomography.

The state is written in the triplet-singlet basis as L^+ L with

        [ p1          0           0   0  ]
    L = [ p5 + i p6   p2          0   0  ]
        [ p7 + i p8   p9 + i p10  p3  0  ]
        [ 0           0           0   p4 ]

so every real 10-vector gives a Hermitian, positive, permutation-invariant
matrix.  The fit minimizes sum_m (n_th,m - n_exp,m)^2 / (2 n_th,m) with

    n_th,m = (Tr[Pi_m L^+ L] eta_m alpha_m + acc_m) T_m

in counts.  L^+ L is left unnormalized inside the objective, so its trace
absorbs any constant mismatch between alpha_m and the true pair brightness;
the reported state is L^+ L / Tr[L^+ L].
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .measurement import CalibrationData, accidentals_vector, eta_vector, povm_stack
from .simulate import CountRecord
from .state import TS_TO_CB, Basis, TwoPhotonState, concurrence

log = logging.getLogger(__name__)

N_PARAMS = 10
N_TH_FLOOR = 1e-9
GTOL = 1e-8
FTOL = 1e-12
MAX_ITER = 5000

# (row, col) of each parameter in L and whether it is an imaginary part
_POS = [(0, 0), (1, 1), (2, 2), (3, 3), (1, 0), (1, 0), (2, 0), (2, 0), (2, 1), (2, 1)]
_IMAG = np.array([False, False, False, False, False, True, False, True, False, True])
_ROWS = np.array([r for r, _ in _POS])
_COLS = np.array([c for _, c in _POS])


@dataclass(frozen=True)
class CholeskyParams:
    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(-1)
        if p.shape != (N_PARAMS,):
            raise ValueError(f"need {N_PARAMS} Cholesky parameters, got {p.size}")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)


def cholesky_matrix(p) -> np.ndarray:
    """The lower-triangular L in the triplet-singlet basis."""
    p = np.asarray(p.p if isinstance(p, CholeskyParams) else p, dtype=float)
    L = np.zeros((4, 4), dtype=complex)
    np.add.at(L, (_ROWS, _COLS), np.where(_IMAG, 1j * p, p))
    return L


def cholesky_to_dm(p) -> TwoPhotonState:
    """Normalized computational-basis state L^+ L / Tr[L^+ L]."""
    L = cholesky_matrix(p)
    m = L.conj().T @ L
    if not np.trace(m).real > 0:
        raise ValueError("all-zero Cholesky parameters give no state")
    ts = TwoPhotonState.from_unnormalized(m, Basis.TRIPLET_SINGLET)
    return ts.in_basis(Basis.COMPUTATIONAL)


def dm_to_cholesky(matrix_ts: np.ndarray, ridge: float = 1e-9) -> np.ndarray:
    """Parameters p with L^+ L equal to a positive triplet-singlet matrix.

    Uses a Cholesky factorization of the index-reversed matrix; the
    symmetric/singlet coherences are dropped, as L cannot hold them.
    """
    m = np.array(matrix_ts, dtype=complex)
    m = 0.5 * (m + m.conj().T)
    m[:3, 3] = 0
    m[3, :3] = 0
    scale = max(np.trace(m).real, 1e-300)
    m = m + ridge * scale * np.eye(4)
    rev = m[::-1, ::-1]
    c = np.linalg.cholesky(rev)
    L = c.conj().T[::-1, ::-1]
    # diagonal of a Cholesky factor is real and positive
    p = np.empty(N_PARAMS)
    vals = L[_ROWS, _COLS]
    p[~_IMAG] = vals[~_IMAG].real
    p[_IMAG] = vals[_IMAG].imag
    return p


def _pi_basis_ts() -> np.ndarray:
    """Real basis of the 10-dimensional space of PI Hermitian matrices (TS basis)."""
    out = []
    for i in range(3):
        for j in range(i, 3):
            e = np.zeros((4, 4), dtype=complex)
            if i == j:
                e[i, i] = 1
                out.append(e)
            else:
                e[i, j] = e[j, i] = 1
                out.append(e)
                e = np.zeros((4, 4), dtype=complex)
                e[i, j], e[j, i] = 1j, -1j
                out.append(e)
    e = np.zeros((4, 4), dtype=complex)
    e[3, 3] = 1
    out.append(e)
    return np.array(out)


class WeightedError:
    """The fit objective and its analytic gradient for one set of counts."""

    def __init__(self, counts, live_time, calib: CalibrationData):
        self.counts = np.asarray(counts, dtype=float)
        self.live_time = np.asarray(live_time, dtype=float)
        n = len(calib.settings)
        if self.counts.shape != (n,) or self.live_time.shape != (n,):
            raise ValueError(f"need {n} counts and live times")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if not np.any(self.counts > 0):
            raise ValueError("all counts are zero; the fit is degenerate")
        if np.any(self.live_time <= 0):
            raise ValueError("live times must be positive")
        self.calib = calib
        pis = povm_stack(calib.settings)
        self.povm_ts = np.einsum("ai,kab,bj->kij", TS_TO_CB.conj(), pis, TS_TO_CB)
        self.weight = eta_vector(calib.gamma, calib.settings) * calib.alpha * self.live_time
        self.acc = accidentals_vector(calib) * self.live_time
        if not np.any(self.weight > 0):
            raise ValueError("no outcome has positive efficiency x brightness")
        # n_k = p^T Q_k p + acc_k, with Q_k = w_k Re Tr[Pi_k E_i^+ E_j] for the unit L's E_i
        units = np.zeros((N_PARAMS, 4, 4), dtype=complex)
        units[np.arange(N_PARAMS), _ROWS, _COLS] = np.where(_IMAG, 1j, 1.0)
        q = np.einsum("kab,icb,jca->kij", self.povm_ts, units.conj(), units).real
        self.quad = q * self.weight[:, None, None]

    def expected(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return (self.quad @ p) @ p + self.acc

    def value(self, p) -> float:
        n = np.maximum(self.expected(p), N_TH_FLOOR)
        return float(np.sum((n - self.counts) ** 2 / (2 * n)))

    def value_and_grad(self, p):
        qp = self.quad @ np.asarray(p, dtype=float)
        n_raw = qp @ p + self.acc
        n = np.maximum(n_raw, N_TH_FLOOR)
        f = np.sum((n - self.counts) ** 2 / (2 * n))
        dfdn = 0.5 * (1.0 - (self.counts / n) ** 2)
        dfdn = np.where(n_raw > N_TH_FLOOR, dfdn, 0.0)
        return float(f), 2.0 * (dfdn @ qp)

    def linear_inversion(self) -> np.ndarray:
        """Least-squares PI matrix from the counts, clipped to be positive."""
        basis = _pi_basis_ts()
        design = np.einsum("kij,bji->kb", self.povm_ts, basis).real * self.weight[:, None]
        coef, *_ = np.linalg.lstsq(design, self.counts - self.acc, rcond=None)
        m = np.einsum("b,bij->ij", coef, basis)
        w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
        w = np.clip(w, 0.0, None)
        if not w.sum() > 0:
            w = np.full(4, max(self.counts.sum() / max(self.weight.sum(), 1e-300), 1e-12) / 4)
        return (v * w) @ v.conj().T


@dataclass
class FitResult:
    rho_hat: TwoPhotonState
    p_hat: CholeskyParams
    objective: float
    iterations: int
    converged: bool
    residuals: np.ndarray
    expected: np.ndarray
    scale: float
    start_objectives: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_dict(self) -> dict:
        return {
            "rho_hat": self.rho_hat.to_dict(),
            "p_hat": self.p_hat.p.tolist(),
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "residuals": self.residuals.tolist(),
            "expected": self.expected.tolist(),
            "scale": self.scale,
            "concurrence": concurrence(self.rho_hat),
        }


def _local_fit(obj: WeightedError, p0: np.ndarray):
    res = optimize.minimize(
        obj.value_and_grad, p0, jac=True, method="L-BFGS-B",
        options={"maxiter": MAX_ITER, "ftol": FTOL, "gtol": GTOL, "maxcor": 20},
    )
    return res


def _starts(obj: WeightedError, n_starts: int, rng: np.random.Generator, init) -> list[np.ndarray]:
    starts = []
    if init is not None:
        starts.append(np.asarray(init.p if isinstance(init, CholeskyParams) else init, dtype=float))
    m0 = obj.linear_inversion()
    p_lin = dm_to_cholesky(m0, ridge=1e-3)
    starts.append(p_lin)
    scale = np.sqrt(max(np.trace(m0).real, 1e-12))
    while len(starts) < n_starts:
        p = rng.normal(size=N_PARAMS)
        starts.append(p / np.linalg.norm(p) * scale)
    return starts[:max(n_starts, 1)]


def fit_counts(counts, live_time, calib: CalibrationData, init=None, n_starts: int = 16,
               seed: int = 0) -> FitResult:
    """Multi-start weighted-error fit; the best local optimum is returned."""
    obj = WeightedError(counts, live_time, calib)
    rng = np.random.default_rng(seed)
    best = None
    start_vals = []
    iterations = 0
    for p0 in _starts(obj, n_starts, rng, init):
        start_vals.append(obj.value(p0))
        res = _local_fit(obj, p0)
        iterations += int(res.nit)
        if best is None or res.fun < best.fun:
            best = res
    p_hat = np.asarray(best.x, dtype=float)
    expected = obj.expected(p_hat)
    L = cholesky_matrix(p_hat)
    return FitResult(
        rho_hat=cholesky_to_dm(p_hat),
        p_hat=CholeskyParams(p_hat),
        objective=float(best.fun),
        iterations=iterations,
        converged=bool(best.success),
        residuals=expected - obj.counts,
        expected=expected,
        scale=float(np.trace(L.conj().T @ L).real),
        start_objectives=np.array(start_vals),
    )


def records_to_arrays(records: Sequence[CountRecord], calib: CalibrationData):
    """Counts and live times ordered by outcome index; all outcomes must be present."""
    by_m = {r.m: r for r in records}
    need = [s.m for s in calib.settings]
    missing = [m for m in need if m not in by_m]
    if missing:
        raise ValueError(f"missing outcomes {missing}; all {len(need)} are required")
    if len(by_m) != len(records):
        raise ValueError("duplicate outcome records")
    counts = np.array([by_m[m].n_exp for m in need], dtype=float)
    live = np.array([by_m[m].duration for m in need], dtype=float)
    return counts, live


def mle_fit(records: Sequence[CountRecord], calib: CalibrationData, init=None,
            n_starts: int = 16, seed: int = 0) -> FitResult:
    counts, live = records_to_arrays(records, calib)
    return fit_counts(counts, live, calib, init=init, n_starts=n_starts, seed=seed)


@dataclass
class BootstrapResult:
    concurrence_mean: float
    concurrence_sigma: float
    concurrences: np.ndarray
    dm_ensemble: np.ndarray
    n_failed: int
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "concurrence_mean": self.concurrence_mean,
            "concurrence_sigma": self.concurrence_sigma,
            "concurrences": self.concurrences.tolist(),
            "n_resamples": int(len(self.concurrences) + self.n_failed),
            "n_failed": self.n_failed,
            "degenerate": self.degenerate,
        }


def _resample_fit(args):
    counts, live, calib, init, n_starts, seed = args
    try:
        fit = fit_counts(counts, live, calib, init=init, n_starts=n_starts, seed=seed)
    except ValueError:
        return None
    if not fit.converged:
        return None
    return fit.rho_hat.matrix, concurrence(fit.rho_hat)


def bootstrap_counts(counts, live_time, calib: CalibrationData, n_resamples: int = 100,
                     seed: int = 0, init=None, n_starts: int = 2, executor=None) -> BootstrapResult:
    """Poisson resampling around the observed counts, refitting each list.

    Refits are warm-started at ``init`` (usually the point estimate) plus the
    resample's own linear inversion.  Non-converged refits are dropped.
    """
    if n_resamples < 1:
        raise ValueError("need at least one resample")
    counts = np.asarray(counts, dtype=float)
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_resamples)
    jobs = []
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        resampled = rng.poisson(counts).astype(float)
        jobs.append((resampled, live_time, calib, init, n_starts, k))
    mapper = map if executor is None else executor.map
    results = list(mapper(_resample_fit, jobs))
    ok = [r for r in results if r is not None]
    n_failed = len(results) - len(ok)
    if n_failed > 0.05 * n_resamples:
        warnings.warn(f"{n_failed} of {n_resamples} bootstrap refits failed and were excluded",
                      RuntimeWarning, stacklevel=2)
    if not ok:
        raise RuntimeError("every bootstrap refit failed")
    conc = np.array([c for _, c in ok])
    ens = np.array([m for m, _ in ok])
    degenerate = len(conc) < 2
    sigma = 0.0 if degenerate else float(np.std(conc, ddof=1))
    return BootstrapResult(float(conc.mean()), sigma, conc, ens, n_failed, degenerate)


def bootstrap(records: Sequence[CountRecord], calib: CalibrationData, n_resamples: int = 100,
              seed: int = 0, fit: FitResult | None = None, n_starts: int = 2,
              executor=None) -> BootstrapResult:
    counts, live = records_to_arrays(records, calib)
    if fit is None:
        fit = fit_counts(counts, live, calib)
    return bootstrap_counts(counts, live, calib, n_resamples, seed, fit.p_hat, n_starts, executor)
