import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_density, random_unitary, random_x_state, wootters_literal
from pstomo.state import (
    PHI_PLUS,
    PSI_MINUS,
    PSI_PLUS,
    SWAP,
    Basis,
    TwoPhotonState,
    basis_convert,
    concurrence,
    fidelity,
    ket,
    max_noon_fidelity,
    negativity,
    noon_fidelity,
    permutation_symmetrize,
    pi_distance,
    projector,
    trace_distance,
    x_state_concurrence,
)


@pytest.fixture
def rng():
    return np.random.default_rng(11)


def test_state_validation():
    with pytest.raises(ValueError):
        TwoPhotonState(np.eye(3) / 3)
    with pytest.raises(ValueError):
        TwoPhotonState(np.eye(4) / 2)
    bad = np.eye(4, dtype=complex) / 4
    bad[0, 1] = 0.1j
    with pytest.raises(ValueError):
        TwoPhotonState(bad)
    with pytest.raises(ValueError):
        TwoPhotonState(np.diag([0.6, 0.6, -0.1, -0.1]))
    s = TwoPhotonState(np.eye(4) / 4)
    with pytest.raises(ValueError):
        s.matrix[0, 0] = 1


def test_bell_and_mixed():
    bell = TwoPhotonState.pure(PHI_PLUS)
    assert concurrence(bell) == pytest.approx(1.0, abs=1e-12)
    assert negativity(bell) == pytest.approx(0.5, abs=1e-12)
    mixed = TwoPhotonState(np.eye(4) / 4)
    assert concurrence(mixed) == 0.0
    assert negativity(mixed) == pytest.approx(0.0, abs=1e-15)
    hv = TwoPhotonState.pure(ket("HV"))
    assert negativity(hv) == pytest.approx(0.0, abs=1e-15)
    assert concurrence(hv) == pytest.approx(0.0, abs=1e-12)


def test_measure_input_checks():
    with pytest.raises(ValueError):
        concurrence(np.eye(3) / 3)
    with pytest.raises(ValueError):
        concurrence(np.ones((4, 2)))
    with pytest.raises(ValueError):
        negativity(np.eye(4) / 3.9)
    # a trace error below 1e-6 is tolerated
    assert concurrence(np.eye(4) / 4 * (1 + 1e-8)) == 0.0
    tiny_negative = np.diag([0.5, 0.5 + 5e-11, 0.0, -5e-11])
    assert concurrence(tiny_negative) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        concurrence(np.diag([0.5, 0.5 + 1e-6, 0.0, -1e-6]))


def test_x_state_closed_form_matches_wootters(rng):
    for _ in range(1000):
        r = random_x_state(rng)
        c_general = concurrence(r)
        assert abs(x_state_concurrence(r) - c_general) < 1e-10
        assert abs(wootters_literal(r) - c_general) < 1e-7


def test_concurrence_matches_literal_wootters(rng):
    for _ in range(300):
        r = random_density(rng, rank=int(rng.integers(1, 5)))
        assert concurrence(r) == pytest.approx(wootters_literal(r), abs=1e-7)


def test_negativity_of_npt_x_state():
    r = np.diag([0.4, 0.1, 0.1, 0.4]).astype(complex)
    r[0, 3] = r[3, 0] = 0.3  # |rho_14|^2 > rho_22 rho_33
    assert negativity(r) == pytest.approx(0.2, abs=1e-12)
    assert concurrence(r) == pytest.approx(0.4, abs=1e-12)


def test_local_unitary_invariance(rng):
    for _ in range(200):
        r = random_density(rng)
        u = np.kron(random_unitary(rng), random_unitary(rng))
        r2 = u @ r @ u.conj().T
        assert concurrence(r2) == pytest.approx(concurrence(r), abs=1e-10)
        assert negativity(r2) == pytest.approx(negativity(r), abs=1e-10)


def test_ppt_iff_separable(rng):
    entangled = 0
    for k in range(1000):
        r = random_density(rng, rank=1 + k % 4)
        c, n = concurrence(r), negativity(r)
        assert (c > 1e-9) == (n > 1e-9)
        entangled += c > 1e-9
    assert 100 < entangled < 1000


def test_basis_convert():
    psi = TwoPhotonState.pure(PSI_PLUS)
    ts = basis_convert(psi, Basis.TRIPLET_SINGLET)
    np.testing.assert_allclose(ts.matrix, np.diag([0, 1, 0, 0]), atol=1e-15)
    singlet = basis_convert(TwoPhotonState.pure(PSI_MINUS), Basis.TRIPLET_SINGLET)
    np.testing.assert_allclose(singlet.matrix, np.diag([0, 0, 0, 1]), atol=1e-15)
    hh = basis_convert(TwoPhotonState.pure(ket("HH")), Basis.TRIPLET_SINGLET)
    np.testing.assert_allclose(hh.matrix, np.diag([1, 0, 0, 0]), atol=1e-15)
    vv = basis_convert(TwoPhotonState.pure(ket("VV")), Basis.TRIPLET_SINGLET)
    np.testing.assert_allclose(vv.matrix, np.diag([0, 0, 1, 0]), atol=1e-15)


def test_basis_round_trip_and_invariants(rng):
    for _ in range(100):
        s = TwoPhotonState.from_unnormalized(random_density(rng))
        ts = basis_convert(s, Basis.TRIPLET_SINGLET)
        back = basis_convert(ts, Basis.COMPUTATIONAL)
        np.testing.assert_allclose(back.matrix, s.matrix, atol=1e-14)
        np.testing.assert_allclose(np.linalg.eigvalsh(ts.matrix), np.linalg.eigvalsh(s.matrix),
                                   atol=1e-12)
        assert np.trace(ts.matrix).real == pytest.approx(1.0, abs=1e-12)
        assert concurrence(ts) == pytest.approx(concurrence(s), abs=1e-12)


def test_noon_fidelity():
    bell = TwoPhotonState.pure(PHI_PLUS)
    assert noon_fidelity(bell, np.pi / 4, 0.0) == pytest.approx(1.0, abs=1e-14)
    psi = TwoPhotonState.pure(PSI_PLUS)
    for theta, phi in [(0.1, 0.2), (1.0, -2.0), (np.pi / 4, np.pi)]:
        assert noon_fidelity(psi, theta, phi) == pytest.approx(0.0, abs=1e-15)


def test_max_noon_fidelity_matches_grid(rng):
    for _ in range(20):
        r = random_density(rng)
        f, theta, phi = max_noon_fidelity(r)
        assert noon_fidelity(r, theta, phi) == pytest.approx(f, abs=1e-12)
        grid = max(noon_fidelity(r, t, p) for t in np.linspace(0, np.pi, 61)
                   for p in np.linspace(-np.pi, np.pi, 61))
        assert grid <= f + 1e-12
        assert grid > f - 2e-3


def test_permutation_symmetrize(rng):
    hv = TwoPhotonState.pure(ket("HV"))
    sym = permutation_symmetrize(hv)
    expected = 0.5 * (projector(ket("HV")) + projector(ket("VH")))
    np.testing.assert_allclose(sym.matrix, expected, atol=1e-15)
    for _ in range(50):
        s = TwoPhotonState.from_unnormalized(random_density(rng))
        assert pi_distance(permutation_symmetrize(s)) < 1e-14
    x = np.diag([0.3, 0.2, 0.2, 0.3]).astype(complex)
    x[0, 3] = x[3, 0] = 0.1
    x[1, 2] = x[2, 1] = 0.05
    assert pi_distance(x) == 0.0
    assert np.allclose(SWAP @ SWAP, np.eye(4))


def test_fidelity_and_trace_distance(rng):
    a = random_density(rng)
    b = random_density(rng)
    assert fidelity(a, a) == pytest.approx(1.0, abs=1e-10)
    assert trace_distance(a, a) == pytest.approx(0.0, abs=1e-15)
    f = fidelity(a, b)
    td = trace_distance(a, b)
    # Fuchs-van de Graaf
    assert 1 - np.sqrt(f) <= td + 1e-12
    assert td <= np.sqrt(1 - f) + 1e-12
    pure_a = TwoPhotonState.pure(PHI_PLUS)
    assert fidelity(pure_a, b) == pytest.approx(np.real(PHI_PLUS.conj() @ b @ PHI_PLUS), abs=1e-10)


def test_json_round_trip(rng):
    s = TwoPhotonState.from_unnormalized(random_density(rng), Basis.TRIPLET_SINGLET)
    blob = json.dumps(s.to_dict())
    back = TwoPhotonState.from_dict(json.loads(blob))
    assert back.basis is Basis.TRIPLET_SINGLET
    np.testing.assert_array_equal(back.matrix, s.matrix)
    bad = s.to_dict()
    bad["re"][0][0] += 0.5
    with pytest.raises(ValueError):
        TwoPhotonState.from_dict(bad)
    with pytest.raises(ValueError):
        TwoPhotonState.from_dict({"re": bad["re"]})


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=32, max_size=32))
def test_measures_bounded(values):
    g = np.array(values[:16]).reshape(4, 4) + 1j * np.array(values[16:]).reshape(4, 4)
    m = g @ g.conj().T
    if np.trace(m).real < 1e-6:
        return
    m = m / np.trace(m).real
    c = concurrence(m)
    n = negativity(m)
    assert 0.0 <= c <= 1.0 + 1e-12
    assert 0.0 <= n <= 0.5 + 1e-12
