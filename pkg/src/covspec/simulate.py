"""Exact Gaussian sampling of a space-time field on the discrete torus.

Sampling is done in the frequency domain: at each Fourier frequency
j/T an S-vector of complex Gaussian coefficients is drawn with
covariance T * M(j/T), where M is the matrix of the model's
covariance-spectral function over all site pairs.  Conjugate pairing of
the coefficients makes the inverse FFT real, the sample exactly
stationary on the circle of length T, and the expected raw
cross-periodogram equal to M at every grid frequency.

Cost is O(S^3) per frequency for the matrix square roots (batched
eigendecompositions) plus one length-T inverse FFT per site, versus the
O((S*T)^3) of a direct space-time Cholesky.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .model import SiteLayout

__all__ = ["FieldSample", "cross_spectral_matrix", "sample_field"]

# Eigenvalues of a spectral matrix may only go negative by rounding noise;
# anything below -PSD_RTOL * trace means the model itself is invalid.
PSD_RTOL = 1e-10


@dataclass(frozen=True)
class FieldSample:
    """Real-valued sample Z(s_i, t): one row per site, one column per time."""

    values: np.ndarray  # (S, T) real
    layout: SiteLayout
    seed: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise ValidationError("sample values must be a finite (S, T) array")
        if v.shape[1] % 2 != 0:
            raise ValidationError("sample length T must be even")
        object.__setattr__(self, "values", v)

    @property
    def nsites(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


def cross_spectral_matrix(model, layout: SiteLayout, tau) -> np.ndarray:
    """Hermitian matrix of the covariance-spectral function over site pairs.

    Entry (i, j) is H(s_i - s_j, tau).  With scalar tau the result is
    (S, S); with an array of frequencies the result is (..., S, S).
    Positive semi-definiteness (up to PSD_RTOL * trace) is inherited
    from the model family and is enforced where the matrix is
    factorized, not here.
    """
    tau = np.asarray(tau, dtype=float)
    lags = layout.lag_matrix()  # (S, S, d)
    out = model.cov_spectrum(lags, tau[..., None, None])
    return np.asarray(out, dtype=complex)


def _psd_factor(mats: np.ndarray) -> np.ndarray:
    """Batched A with A @ A.conj().T == M for Hermitian PSD M.

    Eigendecomposition is used instead of Cholesky so that exactly
    singular spectral matrices (e.g. unit-modulus coherence) still
    factor; eigenvalues below -PSD_RTOL * trace raise NumericalError.
    """
    mats = 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))  # symmetrize rounding noise
    w, v = np.linalg.eigh(mats)
    tr = np.trace(mats, axis1=-2, axis2=-1).real
    floor = -PSD_RTOL * np.maximum(tr, 1e-300)
    if np.any(w < floor[..., None]):
        worst = float(np.min(w / np.maximum(tr[..., None], 1e-300)))
        raise NumericalError(
            f"spectral matrix is not PSD (min eigenvalue {worst:.3e} of trace); "
            "invalid model parameters"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]


def sample_field(model, layout: SiteLayout, length: int, seed: int) -> FieldSample:
    """Draw one Gaussian field sample with covariance-spectral function H.

    Parameters
    ----------
    model:
        Any object with a ``cov_spectrum(h, tau)`` evaluator (a
        CovarianceSpectralModel or the frozen-field oracle).
    layout:
        Station coordinates.
    length:
        Number of time steps T; must be even and at least 4.
    seed:
        Recorded in the output; identical seeds give bit-identical
        samples.

    Frequency j = 0 carries zero power (the process is mean-centered);
    j = T/2 is drawn real with covariance T * Re M(1/2); interior
    frequencies are circularly-symmetric complex Gaussians with
    covariance T * M(j/T), paired conjugately so the inverse FFT is real
    by construction.
    """
    T = int(length)
    if T < 4 or T % 2 != 0:
        raise ValidationError("length must be an even integer >= 4")
    S = layout.nsites
    rng = np.random.default_rng(seed)

    taus = np.arange(1, T // 2) / T
    mats = cross_spectral_matrix(model, layout, taus)      # (T/2-1, S, S)
    factors = _psd_factor(mats) * np.sqrt(T)

    # Interior frequencies: z = A (e1 + i e2)/sqrt(2) has E[z z^H] = A A^H.
    eps = rng.standard_normal((T // 2 - 1, S, 2))
    z = np.einsum("fij,fj->fi", factors, (eps[..., 0] + 1j * eps[..., 1]) / np.sqrt(2.0))

    # Nyquist: real draw, E[x x'] = T * Re M(1/2).
    m_nyq = cross_spectral_matrix(model, layout, 0.5).real
    a_nyq = _psd_factor(m_nyq.astype(complex)).real * np.sqrt(T)
    x_nyq = a_nyq @ rng.standard_normal(S)

    coeffs = np.zeros((S, T // 2 + 1), dtype=complex)
    coeffs[:, 1: T // 2] = z.T
    coeffs[:, T // 2] = x_nyq
    values = np.fft.irfft(coeffs, n=T, axis=1)
    return FieldSample(values=values, layout=layout, seed=int(seed))
