"""Photon-pair tomography of polarization-squeezed light."""
from .measurement import CalibrationData, MeasurementSetting, default_settings, expected_rates
from .reconstruct import CholeskyParams, FitResult, bootstrap, cholesky_to_dm, mle_fit
from .simulate import CountRecord, simulate_tau_series, simulate_tomography
from .source import (
    SourceParams,
    correlation_tensor,
    field_moments,
    fit_gamma,
    two_photon_dm,
    window_average_dm,
)
from .state import Basis, TwoPhotonState, concurrence, negativity

__version__ = "0.1.0"
