"""Covariance-spectral modelling of stationary space-time processes.

A spectral description in time crossed with a covariance description in
space: the library evaluates and simulates Gaussian fields from a
covariance-spectral model (long-memory temporal spectrum, power-law
coherence decay, drift-direction phase) and estimates every component
from station data with smoothed cross-periodograms and linear
regressions.
"""

from .errors import CovspecError, NumericalError, ValidationError
from .estimate import (DecayFit, DriftFit, FitReport, PhaseRateFit,
                       RegressionProblem, SpectrumFit, StructuredErrorModel,
                       aic_select, estimate_drift, fit_coherence_decay,
                       fit_phase_rate, fit_spectrum, kernel_regression,
                       phase_rate_initial, pointwise_ci, sandwich_covariance,
                       sandwich_se, slope_per_frequency)
from .model import (CosinePoly, CovarianceSpectralModel, FracExpSpectrum,
                    FrozenFieldModel, SinePoly, SiteLayout, separable_model)
from .simulate import FieldSample, cross_spectral_matrix, sample_field
from .spectra import (CoherencePhaseTable, CrossSpectraTable, HalfTransform,
                      PhaseTable, center, coherence_phase, daniell_smooth,
                      half_fft, raw_cross_spectra, smooth_cross_spectra,
                      unwind, unwind_angles)

__version__ = "0.1.0"

__all__ = [
    "CovspecError", "ValidationError", "NumericalError",
    "CosinePoly", "SinePoly", "FracExpSpectrum", "CovarianceSpectralModel",
    "FrozenFieldModel", "SiteLayout", "separable_model",
    "FieldSample", "cross_spectral_matrix", "sample_field",
    "HalfTransform", "CrossSpectraTable", "CoherencePhaseTable", "PhaseTable",
    "center", "half_fft", "raw_cross_spectra", "daniell_smooth",
    "smooth_cross_spectra", "coherence_phase", "unwind", "unwind_angles",
    "RegressionProblem", "StructuredErrorModel", "SpectrumFit", "DecayFit",
    "PhaseRateFit", "DriftFit", "FitReport",
    "fit_spectrum", "kernel_regression", "fit_coherence_decay",
    "slope_per_frequency", "estimate_drift", "phase_rate_initial",
    "fit_phase_rate", "sandwich_covariance", "sandwich_se", "aic_select",
    "pointwise_ci",
    "__version__",
]
