import itertools
import json

import numpy as np
import pytest

from oracles import random_density
from pstomo.measurement import (
    CalibrationData,
    DetectorPair,
    Projector,
    accidentals,
    brightness,
    calibrate_efficiencies,
    configuration_povms,
    default_settings,
    eta_factor,
    expected_counts,
    expected_rates,
    jones_hwp,
    jones_qwp,
    load_settings,
    povm_element,
    povm_stack,
)
from pstomo.state import TS_TO_CB, Basis, TwoPhotonState, ket, projector

PI = np.pi
TABLE = [
    (1, 0, 0, "P1", "D1D2"),
    (2, 0, 0, "P2", "D3D4"),
    (3, 0, 0, "P3", "CROSS"),
    (4, PI / 16, 0, "P1", "D1D2"),
    (5, PI / 8, 0, "P1", "D1D2"),
    (6, PI / 8, 0, "P3", "CROSS"),
    (7, PI / 8, PI / 4, "P3", "CROSS"),
    (8, PI / 8, PI / 8, "P1", "D1D2"),
    (9, PI / 4, PI / 8, "P1", "D1D2"),
    (10, 0, PI / 8, "P3", "CROSS"),
]


def test_settings_table():
    settings = default_settings()
    assert len(settings) == 10
    for s, (m, hwp, qwp, proj, det) in zip(settings, TABLE):
        assert s.m == m
        assert s.theta_hwp == pytest.approx(hwp, abs=1e-15)
        assert s.theta_qwp == pytest.approx(qwp, abs=1e-15)
        assert s.projector is Projector(proj)
        assert s.detectors is DetectorPair(det)
    assert len({s.configuration for s in settings}) == 7


def test_load_settings_file(tmp_path):
    rows = [{"m": m, "theta_hwp": h, "theta_qwp": q, "projector": p, "detectors": d}
            for m, h, q, p, d in TABLE]
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"angle_unit": "rad", "settings": rows}))
    loaded = load_settings(path)
    assert [s.m for s in loaded] == list(range(1, 11))
    rows[3]["m"] = 3
    path.write_text(json.dumps({"settings": rows}))
    with pytest.raises(ValueError):
        load_settings(path)


def test_jones_matrices():
    np.testing.assert_allclose(jones_hwp(0), np.diag([1, -1]), atol=1e-15)
    np.testing.assert_allclose(jones_hwp(PI / 4), [[0, 1], [1, 0]], atol=1e-15)
    np.testing.assert_allclose(jones_qwp(0), np.diag([1, 1j]), atol=1e-15)
    np.testing.assert_allclose(jones_qwp(PI / 2), np.diag([1j, 1]), atol=1e-15)
    rng = np.random.default_rng(0)
    for theta in rng.uniform(-PI, PI, 100):
        for u in (jones_hwp(theta), jones_qwp(theta)):
            np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-14)


def test_povm_examples():
    s = default_settings()
    np.testing.assert_allclose(povm_element(s[0]), projector(ket("HH")), atol=1e-15)
    np.testing.assert_allclose(povm_element(s[1]), projector(ket("VV")), atol=1e-15)
    d = np.array([1, 1]) / np.sqrt(2)
    np.testing.assert_allclose(povm_element(s[4]), projector(np.kron(d, d)), atol=1e-15)


def test_povm_completeness_and_positivity():
    for cfg in {s.configuration for s in default_settings()}:
        ops = configuration_povms(*cfg)
        np.testing.assert_allclose(sum(ops.values()), np.eye(4), atol=1e-12)
    for pi in povm_stack():
        np.testing.assert_allclose(pi, pi.conj().T, atol=1e-15)
        ev = np.linalg.eigvalsh(pi)
        assert ev.min() > -1e-14 and ev.max() < 1 + 1e-14


def test_informational_completeness_on_pi_states():
    """Outcome probabilities fix any permutation-invariant state."""
    pis = povm_stack()
    # real basis of PI Hermitian matrices: symmetric-subspace Hermitians plus the singlet
    basis = []
    for i, j in itertools.combinations_with_replacement(range(3), 2):
        e = np.zeros((4, 4), dtype=complex)
        e[i, j] = e[j, i] = 1
        basis.append(e)
        if i != j:
            e = np.zeros((4, 4), dtype=complex)
            e[i, j], e[j, i] = 1j, -1j
            basis.append(e)
    e = np.zeros((4, 4), dtype=complex)
    e[3, 3] = 1
    basis.append(e)
    cb = [TS_TO_CB @ b @ TS_TO_CB.conj().T for b in basis]
    design = np.array([[np.trace(p @ b).real for b in cb] for p in pis])
    sv = np.linalg.svd(design, compute_uv=False)
    assert sv.min() / sv.max() > 1e-3


def test_cholesky_tangent_map_full_rank():
    from pstomo.reconstruct import cholesky_matrix

    pis = povm_stack()
    rng = np.random.default_rng(2)
    for _ in range(5):
        p0 = rng.normal(size=10)

        def probs(p):
            L = cholesky_matrix(p)
            rho_cb = TS_TO_CB @ (L.conj().T @ L) @ TS_TO_CB.conj().T
            return np.einsum("kij,ji->k", pis, rho_cb).real

        h = 1e-6
        jac = np.array([(probs(p0 + h * e) - probs(p0 - h * e)) / (2 * h) for e in np.eye(10)]).T
        assert np.linalg.matrix_rank(jac, tol=1e-6 * np.abs(jac).max()) == 10


def test_calibrate_efficiencies():
    np.testing.assert_allclose(calibrate_efficiencies([3, 3, 3, 3]), [0.25] * 4)
    np.testing.assert_allclose(calibrate_efficiencies([2, 1, 1, 1]), [0.4, 0.2, 0.2, 0.2])
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert calibrate_efficiencies(rng.uniform(1, 100, 4)).sum() == pytest.approx(1, abs=1e-15)
    for bad in ([1, 0, 1, 1], [1, -1, 1, 1], [1, 1, 1]):
        with pytest.raises(ValueError):
            calibrate_efficiencies(bad)


def test_eta_factors():
    g = [0.25] * 4
    assert eta_factor(1, g) == pytest.approx(0.125)
    assert eta_factor(3, g) == pytest.approx(0.25)
    g = [0.1, 0.2, 0.3, 0.4]
    for m in (1, 4, 5, 8, 9):
        assert eta_factor(m, g) == pytest.approx(2 * 0.1 * 0.2)
    assert eta_factor(2, g) == pytest.approx(2 * 0.3 * 0.4)
    for m in (3, 6, 7, 10):
        assert eta_factor(m, g) == pytest.approx(0.3 * 0.7)
    for bad in (0, 11):
        with pytest.raises(ValueError):
            eta_factor(bad, g)


def test_eta_sum_per_configuration_bounded():
    grid = np.linspace(0, 1, 11)
    for g1, g2, g3 in itertools.product(grid, repeat=3):
        g4 = 1 - g1 - g2 - g3
        if g4 < -1e-12:
            continue
        g = [g1, g2, g3, max(g4, 0.0)]
        total = eta_factor(1, g) + eta_factor(2, g) + eta_factor(3, g)
        assert total <= 1 + 1e-12


def test_accidentals_hand_cases():
    beta = np.zeros((10, 4))
    bg = np.zeros((10, 4))
    beta[0] = [1e4, 2e4, 3e4, 4e4]
    assert accidentals(beta, bg, 26e-9, 1) == 0.0
    # pure background on detectors 1, 2: acc = (b1 b2 - s1 s2) dtau
    bg[0] = [100, 200, 0, 0]
    expected = (1e4 * 2e4 - (1e4 - 100) * (2e4 - 200)) * 26e-9
    assert accidentals(beta, bg, 26e-9, 1) == pytest.approx(expected, rel=1e-14)
    # outcome 2 uses detectors 3 and 4
    beta[1] = [5, 5, 1e4, 1e4]
    bg[1] = [5, 5, 50, 0]
    assert accidentals(beta, bg, 1e-8, 2) == pytest.approx(50 * 1e4 * 1e-8, rel=1e-14)
    # outcome 3 sums the four cross pairs
    beta[2] = [1e4, 1e4, 1e4, 1e4]
    bg[2] = [10, 0, 20, 0]
    s = beta[2] - bg[2]
    cross = sum(beta[2][i] * beta[2][j] - s[i] * s[j] for i in (0, 1) for j in (2, 3))
    assert accidentals(beta, bg, 2e-9, 3) == pytest.approx(cross * 2e-9, rel=1e-14)
    with pytest.raises(ValueError):
        accidentals(beta, bg, 0.0, 1)


def test_accidentals_paper_scale():
    beta = np.full((10, 4), 1e4)
    bg = np.full((10, 4), 1e2)
    acc = accidentals(beta, bg, 26e-9, 1)
    assert acc == pytest.approx((1e8 - 9.9e3**2) * 26e-9)
    # a few hundred pairs per second of signal dwarf ~0.05 accidentals per second
    assert acc < 1e-3 * 300


def test_calibration_validation():
    settings = default_settings()
    beta = np.full((10, 4), 100.0)
    bg = np.full((10, 4), 10.0)
    ok = CalibrationData.from_singles([0.25] * 4, beta, bg, 26e-9, settings)
    np.testing.assert_allclose(ok.alpha, 1600.0)
    np.testing.assert_allclose(brightness(beta[0], [0.1, 0.2, 0.3, 0.4]),
                               100 / 0.1 + 100 / 0.2 + 100 / 0.3 + 100 / 0.4)
    with pytest.raises(ValueError):
        CalibrationData([0.3, 0.3, 0.3, 0.3], beta, bg, ok.alpha, 26e-9, settings)
    with pytest.raises(ValueError):
        CalibrationData([0.25] * 4, beta, bg * 20, ok.alpha, 26e-9, settings)
    back = CalibrationData.from_dict(json.loads(json.dumps(ok.to_dict())))
    np.testing.assert_array_equal(back.beta, ok.beta)
    with pytest.raises(ValueError):
        CalibrationData.from_dict({**ok.to_dict(), "extra": 1})
    d = ok.to_dict()
    del d["alpha"]
    with pytest.raises(ValueError):
        CalibrationData.from_dict(d)


def test_expected_counts_examples():
    calib = CalibrationData.ideal(alpha=1000.0)
    hh = TwoPhotonState.pure(ket("HH"))
    s = default_settings()
    assert expected_counts(hh, s[1], calib) == pytest.approx(0.0, abs=1e-12)
    assert expected_counts(hh, s[0], calib) == pytest.approx(125.0)
    with pytest.raises(ValueError):
        expected_counts(hh.in_basis(Basis.TRIPLET_SINGLET), s[0], calib)
    rates = expected_rates(hh, calib)
    np.testing.assert_allclose(rates, [expected_counts(hh, x, calib) for x in s], atol=1e-12)


def test_expected_rates_linearity():
    rng = np.random.default_rng(4)
    beta = rng.uniform(1e3, 1e4, (10, 4))
    calib = CalibrationData.from_singles(calibrate_efficiencies(rng.uniform(1, 2, 4)), beta,
                                         0.01 * beta, 26e-9)
    a, b = random_density(rng), random_density(rng)
    acc = expected_rates(np.zeros((4, 4)), calib)
    lin = expected_rates(0.3 * a + 0.7 * b, calib)
    np.testing.assert_allclose(lin, 0.3 * expected_rates(a, calib) + 0.7 * expected_rates(b, calib),
                               rtol=1e-12)
    doubled = expected_rates(a, calib.scaled(2.0)) - acc
    np.testing.assert_allclose(doubled, 2 * (expected_rates(a, calib) - acc), rtol=1e-12)
    assert np.all(expected_rates(a, calib) >= 0)
