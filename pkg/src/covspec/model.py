"""Covariance-spectral model of a stationary space-time process.

The process is described by a complex-valued function of spatial lag h
and temporal frequency tau (cycles per time step),

    H(h, tau) = k(tau) * exp(-(gamma(tau)*|h|)**p) * exp(1j*theta(tau)*v.h)

with k a fractional-exponential temporal spectral density, gamma an even
positive decay-rate function, theta an odd phase-rate function, v a unit
drift direction, and 0 < p <= 2 the shape exponent of the spatial
coherence decay.  Frequencies live on tau in [-1/2, 1/2]; the space-time
covariance C(h, u) is recovered by numeric Fourier synthesis of H over a
discrete frequency grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError

__all__ = [
    "CosinePoly",
    "SinePoly",
    "FracExpSpectrum",
    "CovarianceSpectralModel",
    "FrozenFieldModel",
    "SiteLayout",
    "separable_model",
]


@dataclass(frozen=True)
class CosinePoly:
    """Even trigonometric polynomial sum_k a_k * cos(2*pi*k*tau), k=0..K."""

    coeffs: np.ndarray  # a_0 .. a_K

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
            raise ValidationError("cosine coefficients must be a finite 1-d sequence")
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        k = np.arange(self.coeffs.size)
        return np.cos(2.0 * np.pi * tau[..., None] * k) @ self.coeffs


@dataclass(frozen=True)
class SinePoly:
    """Odd trigonometric polynomial sum_k b_k * sin(2*pi*k*tau), k=1..K.

    Odd by construction: value at -tau is the negation of the value at
    tau, and the value at tau in {0, +-1/2} is exactly zero.
    """

    coeffs: np.ndarray  # b_1 .. b_K

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if b.ndim != 1 or b.size == 0 or not np.all(np.isfinite(b)):
            raise ValidationError("sine coefficients must be a finite 1-d sequence")
        object.__setattr__(self, "coeffs", b)

    @property
    def order(self) -> int:
        return self.coeffs.size

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        k = np.arange(1, self.coeffs.size + 1)
        return np.sin(2.0 * np.pi * tau[..., None] * k) @ self.coeffs


@dataclass(frozen=True)
class FracExpSpectrum:
    """Fractional-exponential temporal spectral density.

    log k(tau) = -long_memory * log sin(pi*|tau|) + cosine(tau), with
    0 <= long_memory < 1 so that k stays integrable while allowing a
    pole (long-range dependence) at frequency zero.
    """

    long_memory: float  # pole exponent, in [0, 1)
    cosine: CosinePoly  # c_0 .. c_K1

    def __post_init__(self):
        b = float(self.long_memory)
        if not (0.0 <= b < 1.0):
            raise ValidationError(f"long_memory must lie in [0, 1), got {b}")
        object.__setattr__(self, "long_memory", b)

    def log_value(self, tau):
        tau = np.asarray(tau, dtype=float)
        return -self.long_memory * np.log(np.sin(np.pi * np.abs(tau))) + self.cosine(tau)

    def __call__(self, tau):
        return np.exp(self.log_value(tau))


def _unit_vector(v) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    n = np.linalg.norm(v)
    if v.ndim != 1 or not np.isfinite(n) or n == 0.0:
        raise ValidationError("drift must be a nonzero finite vector")
    return v / n


def _check_tau_signed(tau):
    """Frequency domain check for H and coherence: [-1/2, 1/2], tau != 0."""
    tau = np.asarray(tau, dtype=float)
    if np.any(np.abs(tau) > 0.5) or np.any(tau == 0.0):
        raise ValidationError("tau must lie in [-1/2, 1/2] and be nonzero")
    return tau


@dataclass(frozen=True)
class CovarianceSpectralModel:
    """Full parameterization of the covariance-spectral function H.

    Parameters
    ----------
    spectrum:
        Temporal spectral density k(tau).
    log_decay:
        Even trig polynomial for log gamma(tau); gamma(tau) > 0 always.
    phase:
        Odd trig polynomial theta(tau), radians per km of lag along the
        drift direction.
    drift:
        Direction of space-time asymmetry; normalized to unit length.
    power:
        Shape exponent p of the spatial coherence decay exp(-|.|**p),
        0 < p <= 2 (needed for positive definiteness).
    """

    spectrum: FracExpSpectrum
    log_decay: CosinePoly
    phase: SinePoly
    drift: np.ndarray
    power: float

    def __post_init__(self):
        object.__setattr__(self, "drift", _unit_vector(self.drift))
        p = float(self.power)
        if not (0.0 < p <= 2.0):
            raise ValidationError(f"power must lie in (0, 2], got {p}")
        object.__setattr__(self, "power", p)

    @property
    def ndim(self) -> int:
        return self.drift.size

    def temporal_spectrum(self, tau):
        """k(tau) on (0, 1/2]; tau = 0 is rejected (pole when long_memory > 0)."""
        tau = np.asarray(tau, dtype=float)
        if np.any(tau <= 0.0) or np.any(tau > 0.5):
            raise ValidationError("tau must lie in (0, 1/2]")
        return self.spectrum(tau)

    def decay_rate(self, tau):
        """gamma(tau) = exp(log_decay(tau)), even and strictly positive."""
        tau = np.asarray(tau, dtype=float)
        if np.any(np.abs(tau) > 0.5):
            raise ValidationError("tau must lie in [-1/2, 1/2]")
        return np.exp(self.log_decay(tau))

    def phase_rate(self, tau):
        """theta(tau), odd with zeros at tau in {0, +-1/2}."""
        tau = np.asarray(tau, dtype=float)
        if np.any(np.abs(tau) > 0.5):
            raise ValidationError("tau must lie in [-1/2, 1/2]")
        return self.phase(tau)

    def coherence(self, h, tau):
        """Complex coherence exp(-(gamma|h|)**p) * exp(1j*theta*v.h).

        h may be a single lag vector or an array of shape (..., d); tau
        broadcasts against the leading axes of h. The modulus is at most
        1 with equality only at h = 0.
        """
        h = np.asarray(h, dtype=float)
        tau = np.asarray(tau, dtype=float)
        if np.any(np.abs(tau) > 0.5):
            raise ValidationError("tau must lie in [-1/2, 1/2]")
        hnorm = np.linalg.norm(np.atleast_1d(h), axis=-1)
        hdot = np.atleast_1d(h) @ self.drift
        mod = np.exp(-((np.exp(self.log_decay(tau)) * hnorm) ** self.power))
        return mod * np.exp(1j * self.phase(tau) * hdot)

    def cov_spectrum(self, h, tau):
        """H(h, tau) = k(tau) * coherence(h, tau) for tau in [-1/2, 1/2], tau != 0.

        Hermitian in the lag (H(-h, tau) is the conjugate of H(h, tau))
        and even jointly (H(-h, -tau) = H(h, tau)); k is evaluated at
        |tau| since the spectral density is even.
        """
        tau = _check_tau_signed(tau)
        return self.spectrum(np.abs(tau)) * self.coherence(h, tau)

    def covariance(self, h, u, grid_size: int):
        """Space-time covariance C(h, u) by Fourier synthesis on a grid.

        Sums H(h, j/F) * exp(2i*pi*u*j/F) over j = 1..F-1 (zero
        frequency carries no power; negative frequencies enter through
        conjugate symmetry) and divides by F.  Requires
        grid_size >= 2|u| + 2 and integer u; raises NumericalError if
        the synthesized value has imaginary residue above 1e-8 relative,
        which would indicate a non-Hermitian H.
        """
        u = np.asarray(u)
        if not np.issubdtype(u.dtype, np.integer):
            raise ValidationError("time lag u must be integer")
        F = int(grid_size)
        if F < 2 * int(np.max(np.abs(u))) + 2:
            raise ValidationError("grid_size must be at least 2|u| + 2")
        coeffs = np.zeros(F, dtype=complex)
        j = np.arange(1, F // 2 + 1)
        coeffs[j] = self.cov_spectrum(h, j / F)
        coeffs[F - j[: (F - 1) // 2]] = np.conj(coeffs[j[: (F - 1) // 2]])
        c = np.fft.ifft(coeffs)
        resid = np.max(np.abs(c.imag)) / max(np.max(np.abs(c.real)), 1e-300)
        if resid > 1e-8:
            raise NumericalError(f"non-Hermitian spectrum: imaginary residue {resid:.2e}")
        out = c.real[u % F]
        return float(out) if out.ndim == 0 else out


def separable_model(spectrum: FracExpSpectrum, decay: float, power: float,
                    drift=(1.0, 0.0)) -> CovarianceSpectralModel:
    """Separable special case: constant gamma and zero phase.

    The coherence then depends on h only, is real-valued, and the
    covariance factorizes into purely spatial x purely temporal parts.
    """
    if decay <= 0:
        raise ValidationError("decay must be positive")
    return CovarianceSpectralModel(
        spectrum=spectrum,
        log_decay=CosinePoly([np.log(decay)]),
        phase=SinePoly([0.0]),
        drift=drift,
        power=power,
    )


@dataclass(frozen=True)
class FrozenFieldModel:
    """Advected single time series: unit-modulus coherence, phase scale*tau*v.h.

    Test oracle only: its spatial coherence never decays (the D == 1
    limit is outside the exp(-|.|**p) family), so it is not a
    CovarianceSpectralModel.  It exposes the evaluator surface needed by
    the simulator and the coherence checks.
    """

    spectrum: FracExpSpectrum
    drift: np.ndarray
    scale: float = 1.0  # phase rate per unit frequency, radians per km

    def __post_init__(self):
        object.__setattr__(self, "drift", _unit_vector(self.drift))

    @property
    def ndim(self) -> int:
        return self.drift.size

    def temporal_spectrum(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau <= 0.0) or np.any(tau > 0.5):
            raise ValidationError("tau must lie in (0, 1/2]")
        return self.spectrum(tau)

    def phase_rate(self, tau):
        return self.scale * np.asarray(tau, dtype=float)

    def coherence(self, h, tau):
        h = np.asarray(h, dtype=float)
        tau = np.asarray(tau, dtype=float)
        hdot = np.atleast_1d(h) @ self.drift
        return np.exp(1j * self.scale * tau * hdot)

    def cov_spectrum(self, h, tau):
        tau = _check_tau_signed(tau)
        return self.spectrum(np.abs(tau)) * self.coherence(h, tau)


@dataclass(frozen=True)
class SiteLayout:
    """Planar station coordinates (km) and the derived pairwise lags.

    Unordered pairs (i, j) with i < j are enumerated once; the lag for a
    pair is coords[i] - coords[j], and the full lag set is closed under
    negation with h = 0 present once per site.
    """

    coords: np.ndarray  # (S, d) site coordinates in km
    pairs: np.ndarray = field(init=False)      # (P, 2) index pairs, i < j
    pair_lags: np.ndarray = field(init=False)  # (P, d) lags coords[i] - coords[j]

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1 or not np.all(np.isfinite(c)):
            raise ValidationError("coords must be a finite (S, d) array")
        object.__setattr__(self, "coords", c)
        i, j = np.triu_indices(c.shape[0], k=1)
        pairs = np.column_stack([i, j])
        lags = c[i] - c[j]
        if pairs.shape[0] and np.min(np.linalg.norm(lags, axis=1)) == 0.0:
            raise ValidationError("all sites must be distinct")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "pair_lags", lags)

    @property
    def nsites(self) -> int:
        return self.coords.shape[0]

    @property
    def ndim(self) -> int:
        return self.coords.shape[1]

    def lag_matrix(self) -> np.ndarray:
        """All ordered lags coords[i] - coords[j], shape (S, S, d)."""
        return self.coords[:, None, :] - self.coords[None, :, :]
