"""Regression-based estimation of every model component.

All fits follow the same pattern: transform the smoothed empirical
tables so the target function enters linearly, run OLS, then compute
standard errors with a structured residual covariance (between-group
covariance crossed with an AR(1) correlation over frequency) since the
initial smoothing induces strong serial correlation in the residuals.
The drift direction is the one exception: it maximizes a ratio of
quadratic forms and comes from a generalized eigenproblem.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.signal import lfilter

from .errors import NumericalError, ValidationError
from .spectra import CoherencePhaseTable, PhaseTable

__all__ = [
    "RegressionProblem",
    "StructuredErrorModel",
    "SpectrumFit",
    "DecayFit",
    "PhaseRateFit",
    "DriftFit",
    "FitReport",
    "fit_spectrum",
    "kernel_regression",
    "silverman_bandwidth",
    "fit_coherence_decay",
    "slope_per_frequency",
    "estimate_drift",
    "phase_rate_initial",
    "fit_phase_rate",
    "sandwich_covariance",
    "sandwich_se",
    "aic_select",
    "pointwise_ci",
]

# Coherence moduli this close to 0 or 1 explode under log(-log(.)) and are dropped.
MODULUS_EPS = 1e-6


@dataclass(frozen=True)
class RegressionProblem:
    """Design and response arranged as n_groups blocks of n_freq rows.

    Rows must be group-major: row r corresponds to group r // n_freq at
    frequency index r % n_freq.  Cells excluded from a fit carry an
    all-zero design row and zero response so they drop out of the
    normal equations while keeping the block structure rectangular.
    """

    X: np.ndarray  # (n, k)
    y: np.ndarray  # (n,)
    n_groups: int
    n_freq: int

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValidationError("X must be (n, k) with matching response")
        if X.shape[0] != self.n_groups * self.n_freq:
            raise ValidationError("rows must factor as n_groups * n_freq")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValidationError("design and response must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class StructuredErrorModel:
    """Between-group covariance plus AR(1) correlation over frequency."""

    sigma_s: np.ndarray  # (n_groups, n_groups) residual covariance
    ar1: float           # lag-1 correlation, |ar1| < 1

    def __post_init__(self):
        s = np.asarray(self.sigma_s, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValidationError("sigma_s must be square")
        if not abs(self.ar1) < 1.0:
            raise ValidationError("ar1 coefficient must satisfy |phi| < 1")
        object.__setattr__(self, "sigma_s", s)


@dataclass(frozen=True)
class SpectrumFit:
    """Fractional-exponential fit of the log temporal spectrum."""

    long_memory: float           # pole exponent estimate
    long_memory_se: float
    cos_coeffs: np.ndarray       # c_0 .. c_K
    cos_se: np.ndarray
    cov: np.ndarray              # sandwich covariance, design order [c_0, pole, c_1..]
    fitted_log: np.ndarray       # fitted log spectrum on the full grid
    fitted_log_se: np.ndarray    # pointwise SE of the fitted log curve
    residuals: np.ndarray        # response minus fit on used rows
    rss: float
    nobs: int
    nparams: int
    order: int
    error_model: StructuredErrorModel


@dataclass(frozen=True)
class DecayFit:
    """Joint fit of the decay shape exponent and the decay-rate function."""

    power: float                      # shape exponent p of exp(-|.|**p)
    power_se: float
    log_coeffs: np.ndarray | None     # a_0 .. a_K (parametric mode only)
    log_coeffs_se: np.ndarray | None
    gamma_curve: np.ndarray           # fitted decay rate on the full grid
    gamma_init: np.ndarray | None     # per-frequency first-stage estimate (nonparametric)
    mode: str                         # "parametric" or "nonparametric"
    dropped: int                      # entries outside the usable modulus range
    used: int
    rss: float
    nobs: int
    nparams: int
    order: int | None
    error_model: StructuredErrorModel


@dataclass(frozen=True)
class PhaseRateFit:
    """Odd trig-polynomial fit of the phase-rate function."""

    coeffs: np.ndarray  # b_1 .. b_K
    se: np.ndarray
    cov: np.ndarray
    fitted: np.ndarray  # fitted curve on the grid
    residuals: np.ndarray
    rss: float
    nobs: int
    nparams: int
    order: int
    error_model: StructuredErrorModel | None


@dataclass(frozen=True)
class DriftFit:
    """Drift direction from the ratio-of-quadratic-forms eigenproblem."""

    direction: np.ndarray    # unit vector
    eigenvalues: np.ndarray  # generalized eigenvalues, ascending
    lag_moment: np.ndarray = field(repr=False, default=None)  # A = sum h h'


@dataclass(frozen=True)
class FitReport:
    """Everything the estimation pipeline produces, JSON-serializable.

    Coefficient intervals follow the estimate +- 2 SE convention used
    throughout; curves are aligned with ``tau``.
    """

    tau: np.ndarray
    empirical_spectrum: np.ndarray       # smoothed site-averaged spectrum
    spectrum: SpectrumFit
    spectrum_np: np.ndarray              # kernel-regression spectrum curve
    decay: DecayFit                      # parametric fit
    decay_np: DecayFit | None            # two-stage nonparametric fit
    slopes: np.ndarray                   # per-frequency slope diagnostic
    drift: DriftFit
    theta_init: np.ndarray
    phase: PhaseRateFit
    phase_np: np.ndarray                 # kernel-regression phase-rate curve
    aic: dict
    orders: dict
    span: int
    mask_fraction: float
    mask_count: int

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else np.asarray(x).tolist()

        def coef_block(est, se):
            est = np.atleast_1d(np.asarray(est, dtype=float))
            se = np.atleast_1d(np.asarray(se, dtype=float))
            lo, hi = pointwise_ci(est, se)
            return {"estimate": arr(est), "se": arr(se), "ci": [arr(lo), arr(hi)]}

        return {
            "span": self.span,
            "mask_fraction": self.mask_fraction,
            "mask_count": self.mask_count,
            "orders": dict(self.orders),
            "aic": {k: arr(v) for k, v in self.aic.items()},
            "spectrum": {
                "long_memory": coef_block(self.spectrum.long_memory,
                                          self.spectrum.long_memory_se),
                "cos_coeffs": coef_block(self.spectrum.cos_coeffs, self.spectrum.cos_se),
                "rss": self.spectrum.rss,
                "nobs": self.spectrum.nobs,
                "ar1": self.spectrum.error_model.ar1,
            },
            "decay": {
                "power": coef_block(self.decay.power, self.decay.power_se),
                "log_coeffs": coef_block(self.decay.log_coeffs, self.decay.log_coeffs_se),
                "dropped": self.decay.dropped,
                "used": self.decay.used,
                "rss": self.decay.rss,
                "ar1": self.decay.error_model.ar1,
            },
            "decay_np": None if self.decay_np is None else {
                "power": coef_block(self.decay_np.power, self.decay_np.power_se),
                "dropped": self.decay_np.dropped,
                "used": self.decay_np.used,
            },
            "phase": {
                "coeffs": coef_block(self.phase.coeffs, self.phase.se),
                "rss": self.phase.rss,
                "nobs": self.phase.nobs,
                "ar1": None if self.phase.error_model is None else self.phase.error_model.ar1,
            },
            "drift": {
                "direction": arr(self.drift.direction),
                "eigenvalues": arr(self.drift.eigenvalues),
            },
            "curves": {
                "tau": arr(self.tau),
                "empirical_spectrum": arr(self.empirical_spectrum),
                "spectrum_log_fit": arr(self.spectrum.fitted_log),
                "spectrum_log_se": arr(self.spectrum.fitted_log_se),
                "spectrum_np": arr(self.spectrum_np),
                "gamma_fit": arr(self.decay.gamma_curve),
                "gamma_np": None if self.decay_np is None else arr(self.decay_np.gamma_curve),
                "theta_init": arr(self.theta_init),
                "theta_fit": arr(self.phase.fitted),
                "theta_np": arr(self.phase_np),
                "slopes": arr(self.slopes),
            },
        }


def _ols(X: np.ndarray, y: np.ndarray):
    """Least squares with an explicit rank check."""
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise NumericalError(
            f"design is rank deficient ({rank} < {X.shape[1]}); reduce the order"
        )
    resid = y - X @ coef
    return coef, resid


def _ar1_toeplitz_apply(blocks: np.ndarray, phi: float) -> np.ndarray:
    """Multiply each (F, k) block by the AR(1) Toeplitz matrix phi**|i-j|.

    Uses two linear recursions instead of materializing the F x F
    matrix, so the cost is O(F k) per block.
    """
    fwd = lfilter([1.0], [1.0, -phi], blocks, axis=-2)
    bwd = lfilter([1.0], [1.0, -phi], blocks[..., ::-1, :], axis=-2)[..., ::-1, :]
    return fwd + bwd - blocks


def estimate_error_model(resid: np.ndarray, n_groups: int, n_freq: int) -> StructuredErrorModel:
    """Moment estimates of the structured residual covariance.

    The between-group covariance is the average cross product of the
    group residual series; the frequency correlation is summarized by a
    single AR(1) coefficient (the pooled, variance-scaled lag-1
    autocovariance, whose lag-0 analogue is one by construction).
    """
    E = np.asarray(resid, dtype=float).reshape(n_groups, n_freq)
    sigma_s = (E @ E.T) / n_freq
    d = np.diag(sigma_s)
    ok = d > 0
    lag1 = np.sum(E[:, :-1] * E[:, 1:], axis=1)
    phi = float(np.sum(np.where(ok, lag1 / np.where(ok, d, 1.0), 0.0)) / (n_groups * n_freq))
    if abs(phi) >= 1.0:
        warnings.warn(f"AR(1) coefficient {phi:.3f} clipped to +-0.99", stacklevel=2)
        phi = float(np.clip(phi, -0.99, 0.99))
    return StructuredErrorModel(sigma_s=sigma_s, ar1=phi)


def sandwich_covariance(problem: RegressionProblem, residuals: np.ndarray,
                        error_model: StructuredErrorModel | None = None):
    """Coefficient covariance (X'X)^-1 X' Sigma X (X'X)^-1.

    Sigma is the Kronecker product of the between-group covariance and
    the AR(1) Toeplitz frequency correlation; it is never materialized.
    The product is accumulated block by block: each group's design block
    is hit with the Toeplitz recursion, mixed across groups through
    sigma_s, and contracted against the raw blocks.
    """
    if problem.n_freq < 8:
        raise ValidationError("structured errors need at least 8 frequencies per group")
    if error_model is None:
        error_model = estimate_error_model(residuals, problem.n_groups, problem.n_freq)
    k = problem.X.shape[1]
    blocks = problem.X.reshape(problem.n_groups, problem.n_freq, k)
    smoothed = _ar1_toeplitz_apply(blocks, error_model.ar1)
    mixed = np.einsum("ab,bfk->afk", error_model.sigma_s, smoothed)
    meat = np.einsum("afk,afl->kl", blocks, mixed)
    xtx = problem.X.T @ problem.X
    try:
        bread = np.linalg.inv(xtx)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("X'X is singular") from exc
    cov = bread @ meat @ bread
    return cov, error_model


def sandwich_se(problem: RegressionProblem, residuals: np.ndarray,
                error_model: StructuredErrorModel | None = None) -> np.ndarray:
    """Structured standard errors for the OLS coefficients of ``problem``."""
    cov, _ = sandwich_covariance(problem, residuals, error_model)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _spectrum_design(tau: np.ndarray, order: int) -> np.ndarray:
    """Columns [1, -log sin(pi tau), cos(2 pi k tau) for k = 1..order]."""
    cols = [np.ones_like(tau), -np.log(np.sin(np.pi * np.abs(tau)))]
    cols += [np.cos(2.0 * np.pi * k * tau) for k in range(1, order + 1)]
    return np.column_stack(cols)


def fit_spectrum(tau: np.ndarray, curve: np.ndarray, order: int,
                 mask: np.ndarray | None = None) -> SpectrumFit:
    """Fit the fractional-exponential model to a smoothed spectrum curve.

    Regresses log(curve) on [1, -log sin(pi tau), cos(2 pi k tau)]; the
    coefficient on the -log sin column is the long-memory exponent.  The
    curve may be (F,) for the site-averaged spectrum or (S, F) for
    stacked per-site spectra, in which case the structured errors group
    rows by site.  A warning is issued when the exponent leaves [0, 1).
    """
    tau = np.asarray(tau, dtype=float)
    curve = np.asarray(curve, dtype=float)
    stacked = np.atleast_2d(curve)
    if stacked.shape[-1] != tau.size:
        raise ValidationError("curve and tau grids disagree")
    mask = np.ones(tau.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValidationError("mask excludes every frequency")
    if np.any(stacked[:, mask] <= 0.0):
        raise ValidationError("spectrum curve must be strictly positive on the mask")

    n_groups, fm = stacked.shape[0], int(mask.sum())
    x_one = _spectrum_design(tau[mask], order)
    X = np.tile(x_one, (n_groups, 1))
    y = np.log(stacked[:, mask]).ravel()
    coef, resid = _ols(X, y)
    if not (-1e-8 <= coef[1] < 1.0):
        warnings.warn(f"long-memory exponent {coef[1]:.3f} outside [0, 1)", stacklevel=2)

    problem = RegressionProblem(X=X, y=y, n_groups=n_groups, n_freq=fm)
    cov, err = sandwich_covariance(problem, resid)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    x_full = _spectrum_design(tau, order)
    curve_se = np.sqrt(np.clip(np.einsum("fk,kl,fl->f", x_full, cov, x_full), 0.0, None))
    return SpectrumFit(
        long_memory=float(coef[1]),
        long_memory_se=float(se[1]),
        cos_coeffs=np.concatenate([[coef[0]], coef[2:]]),
        cos_se=np.concatenate([[se[0]], se[2:]]),
        cov=cov,
        fitted_log=x_full @ coef,
        fitted_log_se=curve_se,
        residuals=resid,
        rss=float(resid @ resid),
        nobs=y.size,
        nparams=order + 2,
        order=order,
        error_model=err,
    )


def silverman_bandwidth(x: np.ndarray) -> float:
    """0.9 * min(sd, IQR/1.34) * n**(-1/5), with a fallback when IQR = 0."""
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2)


def kernel_regression(x: np.ndarray, y: np.ndarray, bandwidth="auto",
                      eval_x: np.ndarray | None = None, degree: int = 1) -> np.ndarray:
    """Gaussian-kernel local-polynomial regression of y on x.

    ``degree=1`` (local linear, the default) removes the boundary bias
    that the plain kernel-weighted average (``degree=0``) suffers at the
    grid edges; windows without enough slope information fall back to
    the weighted average, and points whose weights all underflow fall
    back to the nearest observation.  With ``bandwidth="auto"`` the
    Silverman-style rule above is used.  Evaluation defaults to the
    observation grid.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size == 0:
        raise ValidationError("x and y must be matching 1-d arrays")
    if np.ptp(x) == 0.0:
        raise ValidationError("all x values are equal; nothing to regress on")
    if degree not in (0, 1):
        raise ValidationError("degree must be 0 or 1")
    b = silverman_bandwidth(x) if isinstance(bandwidth, str) else float(bandwidth)
    if b <= 0.0:
        raise ValidationError("bandwidth must be positive")
    ex = x if eval_x is None else np.asarray(eval_x, dtype=float)

    out = np.empty(ex.size)
    for lo in range(0, ex.size, 512):  # block to bound the (eval x obs) weight matrix
        chunk = ex[lo: lo + 512, None]
        u = x[None, :] - chunk
        w = np.exp(-0.5 * (u / b) ** 2)
        s0 = w.sum(axis=1)
        t0 = w @ y
        dead = s0 <= 0.0
        if np.any(dead):
            nearest = np.abs(u[dead]).argmin(axis=1)
            t0[dead] = y[nearest]
            s0[dead] = 1.0
        ratio = t0 / s0
        if degree == 1:
            s1 = (w * u).sum(axis=1)
            s2 = (w * u * u).sum(axis=1)
            t1 = (w * u) @ y
            det = s0 * s2 - s1 * s1
            flat = det <= 1e-12 * np.maximum(s0 * s2, 1e-300)
            ratio = np.where(flat, ratio,
                             (s2 * t0 - s1 * t1) / np.where(flat, 1.0, det))
        out[lo: lo + 512] = ratio
    return out


def _usable_coherence(coh: CoherencePhaseTable, mask: np.ndarray | None):
    """Masked, in-range coherence cells for the log(-log) transform."""
    mask = (np.ones(coh.tau.size, dtype=bool) if mask is None
            else np.asarray(mask, dtype=bool))
    in_range = (coh.modulus > MODULUS_EPS) & (coh.modulus < 1.0 - MODULUS_EPS)
    candidates = coh.valid & mask[None, :]
    used = candidates & in_range
    dropped = int(candidates.sum() - used.sum())
    if candidates.sum() == 0:
        raise ValidationError("mask excludes every coherence entry")
    if dropped > 0.5 * candidates.sum():
        raise ValidationError(
            f"coherence unusable: {dropped} of {int(candidates.sum())} entries "
            "fall outside the workable modulus range"
        )
    return used, dropped, mask


def fit_coherence_decay(coh: CoherencePhaseTable, order: int | None = None,
                        mask: np.ndarray | None = None, bandwidth="auto") -> DecayFit:
    """Estimate the decay shape exponent and decay-rate function.

    The transform log(-log modulus) = p*log|h| + p*log gamma(tau) makes
    both targets linear.  With ``order`` given, log gamma is an even
    trig polynomial of that order and everything comes from one OLS fit
    (coefficients on the cosine columns are p*a_k, so the a_k standard
    errors use the delta method with the joint coefficient covariance).
    With ``order=None`` a parallel-lines fit (one intercept per
    frequency, common slope) gives a first-stage decay curve which is
    then smoothed by Nadaraya-Watson regression.
    """
    used, dropped, mask = _usable_coherence(coh, mask)
    hnorm = np.linalg.norm(coh.lags, axis=1)
    if np.unique(np.round(hnorm[used.any(axis=1)], 9)).size < 2:
        raise ValidationError("need at least 2 distinct lag lengths to separate p from gamma")

    L, F = coh.modulus.shape
    fm = int(mask.sum())
    used_m = used[:, mask]
    y = np.where(used_m, np.log(-np.log(np.where(used_m, coh.modulus[:, mask], 0.5))), 0.0)
    logh = np.broadcast_to(np.log(hnorm)[:, None], (L, fm))

    if order is not None:
        tau_m = coh.tau[mask]
        k = np.arange(order + 1)
        cosines = np.cos(2.0 * np.pi * tau_m[:, None] * k)          # (fm, K2+1)
        X = np.concatenate(
            [logh[..., None], np.broadcast_to(cosines, (L, fm, order + 1))], axis=2
        ) * used_m[..., None]
        X = X.reshape(L * fm, order + 2)
        coef, resid = _ols(X, y.ravel())
        p = float(coef[0])
        if abs(p) < 1e-12:
            raise NumericalError("decay slope is numerically zero; cannot recover gamma")
        problem = RegressionProblem(X=X, y=y.ravel(), n_groups=L, n_freq=fm)
        cov, err = sandwich_covariance(problem, resid)
        a = coef[1:] / p
        # Delta method for a_k = q_k / p with joint covariance of (p, q_k).
        grad_p = -coef[1:] / p ** 2
        var_a = (grad_p ** 2 * cov[0, 0]
                 + 2.0 * grad_p * cov[0, 1:] / p
                 + np.diag(cov)[1:] / p ** 2)
        gamma_curve = np.exp(np.cos(2.0 * np.pi * coh.tau[:, None] * k) @ a)
        if not (0.0 < p <= 2.0):
            warnings.warn(f"decay exponent {p:.3f} outside (0, 2]", stacklevel=2)
        return DecayFit(
            power=p, power_se=float(np.sqrt(max(cov[0, 0], 0.0))),
            log_coeffs=a, log_coeffs_se=np.sqrt(np.clip(var_a, 0.0, None)),
            gamma_curve=gamma_curve, gamma_init=None, mode="parametric",
            dropped=dropped, used=int(used.sum()),
            rss=float(resid @ resid), nobs=int(used.sum()),
            nparams=order + 2, order=order, error_model=err,
        )

    # Nonparametric: parallel-lines stage (common slope via within-frequency
    # demeaning), then kernel smoothing of the implied decay curve.
    counts = used_m.sum(axis=0)
    xbar = np.where(counts > 0, (logh * used_m).sum(axis=0) / np.maximum(counts, 1), 0.0)
    ybar = np.where(counts > 0, (y * used_m).sum(axis=0) / np.maximum(counts, 1), 0.0)
    xt = (logh - xbar[None, :]) * used_m
    yt = (y - ybar[None, :]) * used_m
    sxx = float((xt * xt).sum())
    if sxx <= 0.0:
        raise NumericalError("no within-frequency lag variation; cannot estimate p")
    p = float((xt * yt).sum() / sxx)
    if abs(p) < 1e-12:
        raise NumericalError("decay slope is numerically zero; cannot recover gamma")
    resid = (yt - p * xt).ravel()
    problem = RegressionProblem(X=xt.reshape(-1, 1), y=yt.ravel(), n_groups=L, n_freq=fm)
    cov, err = sandwich_covariance(problem, resid)

    intercept = np.full(F, np.nan)
    intercept[mask] = np.where(counts > 0, ybar - p * xbar, np.nan)
    good = np.isfinite(intercept)
    if not good.any():
        raise NumericalError("every frequency degenerated in the parallel-lines stage")
    gamma_init = np.exp(np.interp(np.arange(F), np.flatnonzero(good), intercept[good]) / p)
    gamma_curve = kernel_regression(coh.tau[good], gamma_init[good],
                                    bandwidth=bandwidth, eval_x=coh.tau)
    if not (0.0 < p <= 2.0):
        warnings.warn(f"decay exponent {p:.3f} outside (0, 2]", stacklevel=2)
    return DecayFit(
        power=p, power_se=float(np.sqrt(max(cov[0, 0], 0.0))),
        log_coeffs=None, log_coeffs_se=None,
        gamma_curve=gamma_curve, gamma_init=gamma_init, mode="nonparametric",
        dropped=dropped, used=int(used.sum()),
        rss=float(resid @ resid), nobs=int(used.sum()),
        nparams=int(counts.size + 1), order=None, error_model=err,
    )


def slope_per_frequency(coh: CoherencePhaseTable,
                        mask: np.ndarray | None = None) -> np.ndarray:
    """Separate log(-log modulus) on log|h| slope at each frequency.

    Diagnostic for the common-slope assumption: a flat profile supports
    the parallel-lines model.  Frequencies with fewer than two usable
    distinct lags give NaN.
    """
    used, _, mask = _usable_coherence(coh, mask)
    hnorm = np.linalg.norm(coh.lags, axis=1)
    logh = np.log(hnorm)
    out = np.full(coh.tau.size, np.nan)
    for f in np.flatnonzero(mask):
        rows = used[:, f]
        if np.unique(np.round(logh[rows], 12)).size < 2:
            continue
        x = logh[rows]
        yv = np.log(-np.log(coh.modulus[rows, f]))
        xc = x - x.mean()
        out[f] = float((xc @ (yv - yv.mean())) / (xc @ xc))
    return out


def _lag_moment(lags: np.ndarray) -> np.ndarray:
    """A = sum_h h h' with a conditioning check against collinear layouts."""
    A = lags.T @ lags
    w = np.linalg.eigvalsh(A)
    if w[0] <= 1e-12 * max(w[-1], 1e-300):
        raise NumericalError(
            "lag set spans fewer dimensions than the coordinates (collinear "
            "station layout); the drift direction is unidentifiable"
        )
    return A


def estimate_drift(phase: PhaseTable, layout=None) -> DriftFit:
    """Drift direction maximizing the phase variance explained along v.

    Fitting phase = theta(tau) * v.h by least squares and profiling out
    theta leaves a ratio of quadratic forms v'Bv / v'Av whose maximizer
    is the leading generalized eigenvector; A is the lag second-moment
    matrix and B accumulates the phase-weighted lag sums over
    frequencies.  The sign is fixed so the implied phase-rate curve has
    a nonnegative mean over the lower half of the grid (only the product
    theta * v.h is identified).
    """
    lags = phase.lags
    A = _lag_moment(lags)
    g = np.where(phase.valid, phase.unwound, 0.0)
    bvecs = g.T @ lags  # (F, d) phase-weighted lag sums per frequency
    B = bvecs.T @ bvecs
    vals, vecs = scipy.linalg.eigh(B, A)
    v = vecs[:, -1]
    v = v / np.linalg.norm(v)
    theta0 = bvecs @ v / float(v @ A @ v)
    half = theta0[: max(1, theta0.size // 2)]
    if half.mean() < 0.0:
        v = -v
    return DriftFit(direction=v, eigenvalues=vals, lag_moment=A)


def phase_rate_initial(phase: PhaseTable, drift: np.ndarray) -> np.ndarray:
    """Per-frequency phase rate: (v' sum_h g(h, tau) h) / (v'Av)."""
    v = np.asarray(drift, dtype=float)
    if np.linalg.norm(v) == 0.0:
        raise ValidationError("drift vector must be nonzero")
    A = phase.lags.T @ phase.lags
    g = np.where(phase.valid, phase.unwound, 0.0)
    return (g.T @ phase.lags) @ v / float(v @ A @ v)


def _sine_design(tau: np.ndarray, order: int) -> np.ndarray:
    k = np.arange(1, order + 1)
    return np.sin(2.0 * np.pi * tau[:, None] * k)


def fit_phase_rate(theta_init: np.ndarray, tau: np.ndarray, order: int,
                   phase: PhaseTable | None = None,
                   drift: np.ndarray | None = None) -> PhaseRateFit:
    """Fit sum_k b_k sin(2 pi k tau) to the initial phase-rate curve.

    No intercept: the phase rate is odd.  When the phase table and drift
    are supplied, standard errors come from the equivalent regression of
    the per-lag phases on sin(2 pi k tau) * (v'h) with residuals grouped
    by lag; otherwise the curve regression itself is used (one group).
    The two formulations share identical coefficient estimates.
    """
    if order < 1:
        raise ValidationError("phase-rate order must be at least 1")
    tau = np.asarray(tau, dtype=float)
    theta_init = np.asarray(theta_init, dtype=float)
    X = _sine_design(tau, order)
    coef, resid = _ols(X, theta_init)
    fitted = X @ coef
    rss = float(resid @ resid)

    if phase is not None and drift is not None:
        w = phase.lags @ np.asarray(drift, dtype=float)   # v'h per lag
        L, F = phase.unwound.shape
        Xg = (_sine_design(tau, order)[None, :, :] * w[:, None, None])
        Xg = np.where(phase.valid[..., None], Xg, 0.0).reshape(L * F, order)
        yg = np.where(phase.valid, phase.unwound, 0.0).ravel()
        resid_g = yg - Xg @ coef
        problem = RegressionProblem(X=Xg, y=yg, n_groups=L, n_freq=F)
        cov, err = sandwich_covariance(problem, resid_g)
    else:
        problem = RegressionProblem(X=X, y=theta_init, n_groups=1, n_freq=tau.size)
        cov, err = sandwich_covariance(problem, resid)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return PhaseRateFit(
        coeffs=coef, se=se, cov=cov, fitted=fitted, residuals=resid,
        rss=rss, nobs=tau.size, nparams=order, order=order, error_model=err,
    )


def aic_select(fits) -> tuple[int, np.ndarray]:
    """Index of the AIC-minimizing fit among nested candidates.

    AIC = n log(RSS / n) + 2 * (number of coefficients); ties go to the
    earliest (smallest-order) candidate.  RSS values within relative
    1e-16 of the family's largest are numerically exact fits and are
    clamped to a common floor so that the penalty alone decides between
    them (otherwise rounding noise in a zero RSS would win).
    """
    fits = list(fits)
    if not fits:
        raise ValidationError("aic_select needs at least one fit")
    floor = max(1e-300, 1e-16 * max(f.rss for f in fits))
    aics = np.array([
        f.nobs * np.log(max(f.rss, floor) / f.nobs) + 2.0 * f.nparams for f in fits
    ])
    return int(np.argmin(aics)), aics


def pointwise_ci(curve: np.ndarray, se: np.ndarray):
    """Pointwise intervals estimate +- 2 * SE."""
    curve = np.asarray(curve, dtype=float)
    se = np.asarray(se, dtype=float)
    if curve.shape != se.shape:
        raise ValidationError("curve and SE grids disagree")
    return curve - 2.0 * se, curve + 2.0 * se
