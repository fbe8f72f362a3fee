"""Two-photon polarization states and their entanglement measures.

States live on the four-dimensional space spanned by HH, HV, VH, VV
(photon at time t first, photon at t + tau second).  The same matrix can
also be held in the triplet-singlet basis {HH, psi+, VV, psi-}, with
psi+- = (HV +- VH)/sqrt(2); the basis tag always travels with the matrix.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
# looser trace check for raw arrays handed to the measures
MEASURE_TRACE_TOL = 1e-6

LABELS = ("HH", "HV", "VH", "VV")


class Basis(str, enum.Enum):
    COMPUTATIONAL = "computational"
    TRIPLET_SINGLET = "triplet_singlet"


_S = 1 / np.sqrt(2)
# columns are HH, psi+, VV, psi- written in the computational basis
TS_TO_CB = np.array(
    [
        [1, 0, 0, 0],
        [0, _S, 0, _S],
        [0, _S, 0, -_S],
        [0, 0, 1, 0],
    ],
    dtype=complex,
)

SWAP = np.array(
    [
        [1, 0, 0, 0],
        [0, 0, 1, 0],
        [0, 1, 0, 0],
        [0, 0, 0, 1],
    ],
    dtype=complex,
)

SIGMA_YY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def ket(label: str) -> np.ndarray:
    """Computational-basis vector for 'HH', 'HV', 'VH' or 'VV'."""
    v = np.zeros(4, dtype=complex)
    v[LABELS.index(label)] = 1.0
    return v


PSI_PLUS = (ket("HV") + ket("VH")) * _S
PSI_MINUS = (ket("HV") - ket("VH")) * _S
PHI_PLUS = (ket("HH") + ket("VV")) * _S


def projector(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    return np.outer(vec, vec.conj())


@dataclass(frozen=True, eq=False)
class TwoPhotonState:
    """Trace-one, Hermitian, positive 4x4 density matrix with a basis tag.

    The matrix is validated on construction and stored read-only.
    """

    matrix: np.ndarray
    basis: Basis = Basis.COMPUTATIONAL

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError(f"density matrix must be 4x4, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("density matrix contains non-finite entries")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        lo = np.linalg.eigvalsh(m).min()
        if lo < -PSD_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "basis", Basis(self.basis))

    @classmethod
    def from_unnormalized(cls, matrix, basis: Basis = Basis.COMPUTATIONAL) -> "TwoPhotonState":
        """Hermitize and trace-normalize an arbitrary positive matrix."""
        m = np.asarray(matrix, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        tr = np.trace(m).real
        if not tr > 0:
            raise ValueError("matrix has non-positive trace and cannot be normalized")
        return cls(m / tr, basis)

    @classmethod
    def pure(cls, vec, basis: Basis = Basis.COMPUTATIONAL) -> "TwoPhotonState":
        return cls.from_unnormalized(projector(vec), basis)

    def in_basis(self, target: Basis) -> "TwoPhotonState":
        return basis_convert(self, target)

    @property
    def cb(self) -> np.ndarray:
        """The matrix in the computational basis."""
        return basis_convert(self, Basis.COMPUTATIONAL).matrix

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.value,
            "re": self.matrix.real.tolist(),
            "im": self.matrix.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TwoPhotonState":
        try:
            m = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)
            basis = Basis(data["basis"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed density matrix record: {exc}") from exc
        return cls(m, basis)


def basis_convert(state: TwoPhotonState, target: Basis) -> TwoPhotonState:
    target = Basis(target)
    if state.basis is target:
        return state
    if target is Basis.TRIPLET_SINGLET:
        m = TS_TO_CB.conj().T @ state.matrix @ TS_TO_CB
    else:
        m = TS_TO_CB @ state.matrix @ TS_TO_CB.conj().T
    m = 0.5 * (m + m.conj().T)
    return TwoPhotonState(m, target)


def _cb_matrix(state) -> np.ndarray:
    """Computational-basis matrix from a state or a raw array, with checks."""
    if isinstance(state, TwoPhotonState):
        return state.cb
    m = np.asarray(state, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("density matrix must be square")
    if m.shape != (4, 4):
        raise ValueError(f"expected a 4x4 two-qubit density matrix, got {m.shape}")
    tr = np.trace(m).real
    if abs(tr - 1.0) > MEASURE_TRACE_TOL:
        raise ValueError(f"density matrix trace {tr!r} deviates from 1")
    return 0.5 * (m + m.conj().T)


def _clip_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    if w.min() < -PSD_TOL:
        raise ValueError(f"density matrix has negative eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.conj().T


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def concurrence(state) -> float:
    """Wootters concurrence, max(0, l1 - l2 - l3 - l4).

    The l_i are the square roots of the eigenvalues of rho (sy x sy) rho* (sy x sy),
    obtained here from the Hermitian product sqrt(rho) rho~ sqrt(rho), which
    has the same spectrum and is better conditioned.
    """
    rho = _clip_psd(_cb_matrix(state))
    flipped = SIGMA_YY @ rho.conj() @ SIGMA_YY
    root = _sqrtm_psd(rho)
    ev = np.linalg.eigvalsh(root @ flipped @ root)
    lam = np.sort(np.sqrt(np.clip(ev, 0.0, None)))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def x_state_concurrence(state) -> float:
    """Closed-form concurrence for X-shaped matrices (main and anti-diagonal only)."""
    r = _cb_matrix(state)
    p = r.diagonal().real
    c1 = abs(r[0, 3]) - np.sqrt(max(p[1] * p[2], 0.0))
    c2 = abs(r[1, 2]) - np.sqrt(max(p[0] * p[3], 0.0))
    return float(2 * max(0.0, c1, c2))


def partial_transpose(m: np.ndarray) -> np.ndarray:
    """Transpose over the second photon."""
    t = np.asarray(m).reshape(2, 2, 2, 2)
    return t.transpose(0, 3, 2, 1).reshape(4, 4)


def negativity(state) -> float:
    """Sum of |negative eigenvalues| of the partial transpose."""
    rho = _clip_psd(_cb_matrix(state))
    ev = np.linalg.eigvalsh(partial_transpose(rho))
    return float(-ev[ev < 0].sum())


def noon_vector(theta: float, phi: float) -> np.ndarray:
    return np.cos(theta) * ket("HH") + np.exp(1j * phi) * np.sin(theta) * ket("VV")


def noon_fidelity(state, theta: float, phi: float) -> float:
    """<psi|rho|psi> for psi = cos(theta)|HH> + e^{i phi} sin(theta)|VV>."""
    rho = _cb_matrix(state)
    psi = noon_vector(theta, phi)
    return float(np.real(psi.conj() @ rho @ psi))


def max_noon_fidelity(state) -> tuple[float, float, float]:
    """Best NooN-like overlap and the (theta, phi) achieving it.

    Every unit vector in span{HH, VV} is a NooN vector up to global phase, so
    the maximum is the top eigenvalue of the {HH, VV} block.
    """
    rho = _cb_matrix(state)
    block = rho[np.ix_([0, 3], [0, 3])]
    w, v = np.linalg.eigh(block)
    top = v[:, -1]
    top = top * np.exp(-1j * np.angle(top[0])) if abs(top[0]) > 0 else top
    theta = float(np.arctan2(abs(top[1]), abs(top[0])))
    phi = float(np.angle(top[1])) if abs(top[1]) > 0 else 0.0
    return float(w[-1]), theta, phi


def permutation_symmetrize(state: TwoPhotonState) -> TwoPhotonState:
    """(S rho S + rho)/2 with S the swap of the two time labels."""
    rho = state.cb
    out = 0.5 * (SWAP @ rho @ SWAP + rho)
    return basis_convert(TwoPhotonState.from_unnormalized(out), state.basis)


def pi_distance(state) -> float:
    """Frobenius norm of S rho S - rho."""
    rho = _cb_matrix(state)
    return float(np.linalg.norm(SWAP @ rho @ SWAP - rho))


def fidelity(a, b) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2."""
    ra = _sqrtm_psd(_clip_psd(_cb_matrix(a)))
    inner = ra @ _clip_psd(_cb_matrix(b)) @ ra
    ev = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(min(1.0, np.sqrt(np.clip(ev, 0.0, None)).sum() ** 2))


def trace_distance(a, b) -> float:
    d = _cb_matrix(a) - _cb_matrix(b)
    return float(0.5 * np.abs(np.linalg.eigvalsh(d)).sum())
