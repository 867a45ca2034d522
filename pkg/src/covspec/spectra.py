"""Empirical cross-spectral quantities from centered station data.

The pipeline is: center each site series, half-Fourier transform onto
the grid tau = j/T (j = 1..[T/2]), form raw cross-periodograms per site
pair, smooth over frequency with a modified Daniell kernel, normalize
to coherence modulus and phase, and unwind the phase angles into
continuous real-valued curves.  Raw (unsmoothed) pair coherence always
has modulus one, so every downstream estimate works from the smoothed
tables.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .model import SiteLayout

__all__ = [
    "HalfTransform",
    "CrossSpectraTable",
    "CoherencePhaseTable",
    "PhaseTable",
    "center",
    "half_fft",
    "raw_cross_spectra",
    "daniell_smooth",
    "smooth_cross_spectra",
    "coherence_phase",
    "unwind_angles",
    "unwind",
]

# Lags closer than this (km) are treated as replicated and averaged.
LAG_MERGE_TOL_KM = 1e-9


@dataclass(frozen=True)
class HalfTransform:
    """Half-Fourier transform J(s_i, tau_j) on the grid j/T, j = 1..[T/2]."""

    values: np.ndarray  # (S, F) complex
    tau: np.ndarray     # (F,) frequencies in cycles per step
    nobs: int           # original series length T


@dataclass(frozen=True)
class CrossSpectraTable:
    """Per-pair cross-spectra and per-site marginal spectra on the grid.

    Pair entries hold J_i * conj(J_j) / T for unordered pairs (i, j)
    with i < j; the conjugate gives the reversed ordering.  Auto entries
    are |J_i|^2 / T, real and nonnegative.
    """

    pairs: np.ndarray        # (P, 2) site index pairs, i < j
    lags: np.ndarray         # (P, d) spatial lags s_i - s_j, km
    pair_values: np.ndarray  # (P, F) complex
    auto_values: np.ndarray  # (S, F) real
    tau: np.ndarray          # (F,)
    nobs: int
    smoothed: bool = False
    span: int | None = None

    def overall_spectrum(self) -> np.ndarray:
        """Marginal temporal spectral density averaged over sites."""
        return self.auto_values.mean(axis=0)

    def pair_value(self, i: int, j: int) -> np.ndarray:
        """Cross-spectrum for ordered pair (i, j); conjugate of (j, i)."""
        for p, (a, b) in enumerate(self.pairs):
            if (a, b) == (i, j):
                return self.pair_values[p]
            if (a, b) == (j, i):
                return np.conj(self.pair_values[p])
        raise ValidationError(f"pair ({i}, {j}) not in table")


@dataclass(frozen=True)
class CoherencePhaseTable:
    """Smoothed coherence modulus and principal phase angle per spatial lag.

    Pairs whose lag vectors agree within LAG_MERGE_TOL_KM are averaged
    (complex mean of their coherences) into a single row; ``members``
    records which pair indices went into each row.
    """

    lags: np.ndarray     # (L, d) distinct spatial lags
    modulus: np.ndarray  # (L, F) in [0, 1]
    angle: np.ndarray    # (L, F) principal values in (-pi, pi]
    valid: np.ndarray    # (L, F) False where a site spectrum degenerated
    tau: np.ndarray      # (F,)
    span: int
    members: tuple       # tuple of tuples of pair indices per row
    pair_ids: tuple      # human-readable labels like "0-3"


@dataclass(frozen=True)
class PhaseTable:
    """Unwound real-valued phase per spatial lag over increasing frequency."""

    lags: np.ndarray     # (L, d)
    unwound: np.ndarray  # (L, F) continuous phase, radians
    valid: np.ndarray    # (L, F)
    tau: np.ndarray      # (F,)
    big_step: np.ndarray  # (L,) True where some step exceeded pi/2
    pair_ids: tuple = ()


def center(data: np.ndarray) -> np.ndarray:
    """Subtract each site's sample mean; rows end up with mean zero."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValidationError("data must be a (S, T) array")
    return data - data.mean(axis=1, keepdims=True)


def half_fft(data: np.ndarray) -> HalfTransform:
    """Half-Fourier transform of centered data onto the grid j/T.

    The input must already be centered per site.  Total power is
    conserved: (2 * sum_j |J_j|^2 - [T even] * |J_Nyquist|^2) / T equals
    sum_t Z(t)^2 to 1e-8 relative, which is verified before returning.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] < 4:
        raise ValidationError("data must be (S, T) with T >= 4")
    scale = np.sqrt(np.mean(data ** 2, axis=1)) + 1e-30
    if np.any(np.abs(data.mean(axis=1)) > 1e-8 * scale):
        raise ValidationError("data must be centered per site (see center())")
    T = data.shape[1]
    J = np.fft.rfft(data, axis=1)[:, 1:]
    tau = np.arange(1, T // 2 + 1) / T

    energy = 2.0 * np.sum(np.abs(J) ** 2, axis=1)
    if T % 2 == 0:
        energy -= np.abs(J[:, -1]) ** 2
    target = T * np.sum(data ** 2, axis=1)
    if np.any(np.abs(energy - target) > 1e-8 * np.maximum(target, 1e-300)):
        raise NumericalError("half transform failed the power conservation check")
    return HalfTransform(values=J, tau=tau, nobs=T)


def raw_cross_spectra(transform: HalfTransform, layout: SiteLayout) -> CrossSpectraTable:
    """Raw cross-periodogram table: J_i * conj(J_j) / T for all pairs i < j.

    The per-pair coherence of this table has modulus exactly one, so it
    must be smoothed before any coherence-based estimation.
    """
    J = transform.values
    if J.shape[0] != layout.nsites:
        raise ValidationError("transform and layout disagree on the number of sites")
    T = transform.nobs
    i, j = layout.pairs[:, 0], layout.pairs[:, 1]
    return CrossSpectraTable(
        pairs=layout.pairs,
        lags=layout.pair_lags,
        pair_values=J[i] * np.conj(J[j]) / T,
        auto_values=(np.abs(J) ** 2) / T,
        tau=transform.tau,
        nobs=T,
    )


def daniell_weights(span: int) -> np.ndarray:
    """Modified Daniell kernel: flat interior with half-weight endpoints."""
    span = int(span)
    if span < 1 or span % 2 == 0:
        raise ValidationError("span must be an odd integer >= 1")
    if span == 1:
        return np.ones(1)
    w = np.full(span, 1.0 / (span - 1))
    w[0] = w[-1] = 0.5 / (span - 1)
    return w


def daniell_smooth(series: np.ndarray, span: int) -> np.ndarray:
    """Smooth along the last axis with a modified Daniell kernel.

    Boundaries are handled by reflecting the series about each end
    (constants pass through unchanged); span = 1 is the identity.
    """
    series = np.asarray(series)
    w = daniell_weights(span)
    if span == 1:
        return series.copy()
    if span > series.shape[-1]:
        raise ValidationError("span exceeds the grid length")
    half = (span - 1) // 2
    pad = [(0, 0)] * (series.ndim - 1) + [(half, half)]
    padded = np.pad(series, pad, mode="reflect")
    out = np.empty_like(series)
    flat_in = padded.reshape(-1, padded.shape[-1])
    flat_out = out.reshape(-1, out.shape[-1])
    for r in range(flat_in.shape[0]):
        flat_out[r] = np.convolve(flat_in[r], w, mode="valid")
    return out


def smooth_cross_spectra(table: CrossSpectraTable, span: int) -> CrossSpectraTable:
    """Apply the same Daniell smoother to every pair and auto entry."""
    if table.smoothed:
        raise ValidationError("table is already smoothed")
    return CrossSpectraTable(
        pairs=table.pairs,
        lags=table.lags,
        pair_values=daniell_smooth(table.pair_values, span),
        auto_values=daniell_smooth(table.auto_values, span),
        tau=table.tau,
        nobs=table.nobs,
        smoothed=True,
        span=int(span),
    )


def _lag_groups(lags: np.ndarray):
    """Group pair indices whose lag vectors agree within LAG_MERGE_TOL_KM."""
    keys = np.round(lags / LAG_MERGE_TOL_KM).astype(np.int64)
    groups: dict[tuple, list[int]] = {}
    for p, key in enumerate(map(tuple, keys)):
        groups.setdefault(key, []).append(p)
    return list(groups.values())


def coherence_phase(table: CrossSpectraTable) -> CoherencePhaseTable:
    """Coherence modulus and principal phase from a smoothed table.

    Each pair coherence is the smoothed cross-spectrum divided by the
    geometric mean of the two smoothed site spectra; shared smoothing
    weights keep the modulus at or below one (Cauchy-Schwarz).
    Frequencies where a site spectrum vanishes are flagged invalid and
    excluded downstream.  Replicated lags are merged by averaging the
    complex coherences.
    """
    if not table.smoothed or table.span is None or table.span < 3:
        raise ValidationError("coherence needs a table smoothed with span >= 3")
    i, j = table.pairs[:, 0], table.pairs[:, 1]
    denom_sq = table.auto_values[i] * table.auto_values[j]
    valid = denom_sq > 0.0
    rho = np.zeros_like(table.pair_values)
    np.divide(table.pair_values, np.sqrt(denom_sq, where=valid, out=np.ones_like(denom_sq)),
              out=rho, where=valid)

    groups = _lag_groups(table.lags)
    L, F = len(groups), table.tau.size
    lags = np.empty((L, table.lags.shape[1]))
    modulus = np.zeros((L, F))
    angle = np.zeros((L, F))
    merged_valid = np.zeros((L, F), dtype=bool)
    pair_ids = []
    for r, members in enumerate(groups):
        lags[r] = table.lags[members[0]]
        counts = valid[members].sum(axis=0)
        ok = counts > 0
        mean_rho = np.where(ok, rho[members].sum(axis=0) / np.maximum(counts, 1), 0.0)
        modulus[r] = np.abs(mean_rho)
        angle[r] = np.angle(mean_rho)
        merged_valid[r] = ok
        pair_ids.append("+".join(f"{table.pairs[p, 0]}-{table.pairs[p, 1]}" for p in members))

    if np.max(modulus, initial=0.0) > 1.0 + 1e-12:
        raise NumericalError("coherence modulus exceeded 1 beyond tolerance")
    return CoherencePhaseTable(
        lags=lags,
        modulus=np.minimum(modulus, 1.0),
        angle=angle,
        valid=merged_valid,
        tau=table.tau,
        span=table.span,
        members=tuple(tuple(m) for m in groups),
        pair_ids=tuple(pair_ids),
    )


def unwind_angles(angles: np.ndarray) -> np.ndarray:
    """Resolve principal angles into continuous real phase curves.

    The first grid value keeps its principal value; each later value is
    shifted by the multiple of 2*pi that minimizes the jump from its
    predecessor (ties resolved toward the smaller winding number, which
    is what numpy's unwrap does).
    """
    angles = np.asarray(angles, dtype=float)
    if angles.shape[-1] == 0:
        return angles.copy()
    return np.unwrap(angles, axis=-1)


def unwind(table: CoherencePhaseTable) -> PhaseTable:
    """Unwind every lag's phase series; flag rows with steps above pi/2.

    A large step means neighbouring grid angles moved by more than a
    quarter turn, where the winding-number choice starts to be driven by
    noise rather than the underlying smooth phase.
    """
    unwound = unwind_angles(table.angle)
    steps = np.abs(np.diff(unwound, axis=-1))
    big = steps.max(axis=-1, initial=0.0) > np.pi / 2
    if np.any(big):
        warnings.warn(
            f"phase unwinding saw steps above pi/2 for {int(big.sum())} lag(s); "
            "winding numbers may be unreliable",
            stacklevel=2,
        )
    return PhaseTable(
        lags=table.lags,
        unwound=unwound,
        valid=table.valid,
        tau=table.tau,
        big_step=big,
        pair_ids=table.pair_ids,
    )
