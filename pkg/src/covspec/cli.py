"""Data ingestion, preprocessing, and pipeline orchestration.

Subcommands: ``simulate`` draws a Gaussian sample from a model JSON,
``fit`` runs the full estimation pipeline on a station panel,
``spectra`` dumps the smoothed cross-spectral tables, and ``report``
re-renders a saved report.  Data travel as CSV, models and reports as
JSON; every ``fit``/``simulate`` run writes a manifest with the
configuration and input hashes so results can be reproduced exactly.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import estimate as est
from . import spectra as sp
from .errors import CovspecError, NumericalError, ValidationError
from .model import (CosinePoly, CovarianceSpectralModel, FracExpSpectrum,
                    SinePoly, SiteLayout)
from .simulate import sample_field

__all__ = [
    "RunConfig",
    "StationTable",
    "ingest",
    "preprocess",
    "run_fit",
    "run_simulate",
    "run_spectra",
    "model_from_dict",
    "model_to_dict",
    "load_model",
    "read_coherence_csv",
    "main",
]

EARTH_RADIUS_KM = 6371.0
AUTO_MAX_ORDER = 6


@dataclass(frozen=True)
class RunConfig:
    """Every tunable that affects the numbers a run produces."""

    data: str
    stations: str
    out_dir: str
    span: int = 255                      # Daniell span for estimation
    display_spans: tuple = (5, 55)       # (averaged, per-site) marginal display
    mask_fraction: float = 300.0 / 3287.0  # low-frequency exclusion for the decay fit
    k_order: int | str = "auto"          # spectrum cosine order, or AIC over 0..6
    decay_order: int | str = "auto"      # log-decay cosine order, or AIC over 0..6
    phase_order: int | str = "auto"      # phase-rate sine order, or AIC over 1..6
    nonparametric: bool = True           # also compute kernel-regression curves
    deseasonalize: bool = False          # sqrt + day-of-year adjustment (wind data)
    origin: tuple | None = None          # projection origin (lon, lat); centroid if None
    seed: int | None = None              # recorded for provenance only

    def __post_init__(self):
        for s in (self.span, *self.display_spans):
            if int(s) < 1 or int(s) % 2 == 0:
                raise ValidationError(f"spans must be odd and positive, got {s}")
        if not (0.0 <= self.mask_fraction < 0.5):
            raise ValidationError("mask_fraction must lie in [0, 0.5)")
        for name, lo in (("k_order", 0), ("decay_order", 0), ("phase_order", 1)):
            v = getattr(self, name)
            if v == "auto":
                continue
            if int(v) < lo or int(v) > AUTO_MAX_ORDER:
                raise ValidationError(f"{name} must be 'auto' or in [{lo}, {AUTO_MAX_ORDER}]")


@dataclass(frozen=True)
class StationTable:
    """Station ids with projected planar coordinates."""

    ids: tuple
    coords: np.ndarray  # (S, 2) km
    origin: tuple | None = None  # (lon, lat) used for the projection, if any

    def layout(self) -> SiteLayout:
        return SiteLayout(coords=self.coords)


def _project_lonlat(lon: np.ndarray, lat: np.ndarray, origin=None):
    """Equirectangular projection to km about the given or centroid origin."""
    lon0, lat0 = origin if origin is not None else (lon.mean(), lat.mean())
    x = EARTH_RADIUS_KM * np.cos(np.deg2rad(lat0)) * np.deg2rad(lon - lon0)
    y = EARTH_RADIUS_KM * np.deg2rad(lat - lat0)
    return np.column_stack([x, y]), (float(lon0), float(lat0))


def read_stations(path, origin=None) -> StationTable:
    """Station CSV with either lon/lat (degrees) or x_km/y_km columns."""
    df = pd.read_csv(path)
    if "station_id" not in df.columns:
        raise ValidationError("stations file needs a 'station_id' column")
    ids = df["station_id"].astype(str).tolist()
    if len(set(ids)) != len(ids):
        raise ValidationError("station ids must be unique")
    if {"x_km", "y_km"}.issubset(df.columns):
        coords = df[["x_km", "y_km"]].to_numpy(dtype=float)
        used_origin = None
    elif {"lon", "lat"}.issubset(df.columns):
        coords, used_origin = _project_lonlat(
            df["lon"].to_numpy(dtype=float), df["lat"].to_numpy(dtype=float), origin
        )
    else:
        raise ValidationError("stations file needs lon/lat or x_km/y_km columns")
    if not np.all(np.isfinite(coords)):
        raise ValidationError("station coordinates must be finite")
    return StationTable(ids=tuple(ids), coords=coords, origin=used_origin)


def _time_column(df: pd.DataFrame) -> str:
    for name in ("date", "t"):
        if name in df.columns:
            return name
    raise ValidationError("data file needs a 'date' or 't' time column")


def ingest(data_path, stations_path, origin=None):
    """Load a complete rectangular station panel.

    Accepts long format (station_id, date|t, value) or wide format
    (date|t plus one column per station id).  Every (station, time) cell
    must be present; wide-format columns without a station entry are
    ignored, which is how a station is excluded from an analysis.

    Returns (panel, stations, times): panel is (S, T) in station-table
    order, times is sorted and unique.
    """
    stations = read_stations(stations_path, origin=origin)
    df = pd.read_csv(data_path, comment="#", float_precision="round_trip")
    tcol = _time_column(df)

    if "station_id" in df.columns:
        if "value" not in df.columns:
            raise ValidationError("long-format data needs a 'value' column")
        df["station_id"] = df["station_id"].astype(str)
        unknown = sorted(set(df["station_id"]) - set(stations.ids))
        if unknown:
            raise ValidationError(f"unknown station ids in data: {unknown[:5]}")
        wide = df.pivot_table(index=tcol, columns="station_id", values="value",
                              aggfunc="first", dropna=False)
    else:
        wide = df.set_index(tcol)
        wide = wide[[c for c in wide.columns if c in stations.ids]]

    missing_sites = [s for s in stations.ids if s not in wide.columns]
    if missing_sites:
        raise ValidationError(f"no data for stations: {missing_sites[:5]}")
    wide = wide[list(stations.ids)].sort_index()
    if wide.index.duplicated().any():
        raise ValidationError("duplicate time stamps in data")
    if wide.isna().any().any():
        holes = [(str(c), str(i)) for c, col in wide.items()
                 for i in col.index[col.isna()]][:10]
        raise ValidationError(f"panel has missing cells (station, time): {holes}")
    panel = wide.to_numpy(dtype=float).T
    return panel, stations, wide.index.to_numpy()


def _day_keys(times: np.ndarray) -> np.ndarray:
    """Day-of-year keys with Feb 29 pooled into Feb 28."""
    arr = np.asarray(times)
    if np.issubdtype(arr.dtype, np.number):
        raise ValidationError("deseasonalization needs calendar dates, "
                              "not numeric time indices")
    try:
        idx = pd.DatetimeIndex(pd.to_datetime(times))
    except (ValueError, TypeError) as exc:
        raise ValidationError("deseasonalization needs parseable dates") from exc
    month, day = idx.month.to_numpy(), idx.day.to_numpy()
    day = np.where((month == 2) & (day == 29), 28, day)
    return month * 100 + day


def preprocess(panel: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Square-root transform, remove the pooled day-of-year mean, center.

    The seasonal curve is one mean per calendar day, pooled across years
    and stations; each station series is then centered.  Negative values
    are rejected (the transform targets nonnegative speeds).
    """
    panel = np.asarray(panel, dtype=float)
    if np.any(panel < 0):
        raise ValidationError("preprocessing expects nonnegative values")
    out = np.sqrt(panel)
    keys = _day_keys(times)
    for key in np.unique(keys):
        cols = keys == key
        out[:, cols] -= out[:, cols].mean()
    return sp.center(out)


def model_from_dict(d: dict) -> CovarianceSpectralModel:
    """Model from the JSON fields {beta, c, a, b, v, p}."""
    try:
        return CovarianceSpectralModel(
            spectrum=FracExpSpectrum(long_memory=d["beta"], cosine=CosinePoly(d["c"])),
            log_decay=CosinePoly(d["a"]),
            phase=SinePoly(d["b"]),
            drift=d["v"],
            power=d["p"],
        )
    except KeyError as exc:
        raise ValidationError(f"model JSON is missing field {exc}") from exc


def model_to_dict(model: CovarianceSpectralModel) -> dict:
    return {
        "beta": model.spectrum.long_memory,
        "c": model.spectrum.cosine.coeffs.tolist(),
        "a": model.log_decay.coeffs.tolist(),
        "b": model.phase.coeffs.tolist(),
        "v": model.drift.tolist(),
        "p": model.power,
    }


def load_model(path) -> CovarianceSpectralModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def _atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.remove(tmp)
        raise


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(config: RunConfig, out_dir, extra=None):
    manifest = {
        "config": asdict(config),
        "inputs": {
            "data": _sha256(config.data),
            "stations": _sha256(config.stations),
        },
        "seed": config.seed,
    }
    if extra:
        manifest.update(extra)
    _atomic_write(Path(out_dir) / "manifest.json", json.dumps(manifest, indent=2))


@contextlib.contextmanager
def _stage(name: str):
    """Prefix pipeline errors with the stage that raised them."""
    try:
        yield
    except CovspecError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


def run_simulate(model_path, stations_path, length: int, seed: int, out_path,
                 origin=None) -> Path:
    """Draw one sample and write it as long-format CSV with the seed recorded."""
    model = load_model(model_path)
    stations = read_stations(stations_path, origin=origin)
    sample = sample_field(model, stations.layout(), length, seed)
    lines = [f"# seed={seed}", "station_id,t,value"]
    for s, sid in enumerate(stations.ids):
        for t in range(sample.length):
            lines.append(f"{sid},{t},{float(sample.values[s, t])!r}")
    _atomic_write(out_path, "\n".join(lines) + "\n")
    return Path(out_path)


def _resolve_order(setting, lo: int, fitter):
    """Fit either the fixed order or the AIC winner over lo..AUTO_MAX_ORDER."""
    if setting == "auto":
        fits = [fitter(k) for k in range(lo, AUTO_MAX_ORDER + 1)]
        best, aics = est.aic_select(fits)
        return lo + best, fits[best], aics
    fit = fitter(int(setting))
    return int(setting), fit, np.array([np.nan])


def build_tables(panel, stations: StationTable, span: int):
    """Center -> half FFT -> raw cross-spectra -> smooth -> coherence -> unwind."""
    layout = stations.layout()
    with _stage("center"):
        centered = sp.center(panel)
    with _stage("half_fft"):
        transform = sp.half_fft(centered)
    with _stage("cross_spectra"):
        raw = sp.raw_cross_spectra(transform, layout)
    with _stage("smooth"):
        smoothed = sp.smooth_cross_spectra(raw, span)
    with _stage("coherence"):
        coh = sp.coherence_phase(smoothed)
    with _stage("unwind"):
        phase = sp.unwind(coh)
    return raw, smoothed, coh, phase


def run_fit(config: RunConfig) -> est.FitReport:
    """Full estimation pipeline; writes report, curves, and manifest."""
    with _stage("ingest"):
        panel, stations, times = ingest(config.data, config.stations, config.origin)
        if config.deseasonalize:
            panel = preprocess(panel, times)
    _, smoothed, coh, phase = build_tables(panel, stations, config.span)

    tau = smoothed.tau
    kcurve = smoothed.overall_spectrum()
    mask_count = int(np.ceil(config.mask_fraction * tau.size))
    mask = np.arange(tau.size) >= mask_count

    with _stage("fit_spectrum"):
        k_order, spectrum_fit, k_aic = _resolve_order(
            config.k_order, 0, lambda k: est.fit_spectrum(tau, kcurve, k))
    with _stage("fit_decay"):
        d_order, decay_fit, d_aic = _resolve_order(
            config.decay_order, 0, lambda k: est.fit_coherence_decay(coh, k, mask=mask))
        slopes = est.slope_per_frequency(coh, mask=mask)
        decay_np = (est.fit_coherence_decay(coh, None, mask=mask)
                    if config.nonparametric else None)
    with _stage("fit_drift"):
        drift = est.estimate_drift(phase)
        theta_init = est.phase_rate_initial(phase, drift.direction)
    with _stage("fit_phase"):
        p_order, phase_fit, p_aic = _resolve_order(
            config.phase_order, 1,
            lambda k: est.fit_phase_rate(theta_init, tau, k, phase=phase,
                                         drift=drift.direction))
    with _stage("nonparametric"):
        spectrum_np = (est.kernel_regression(tau, kcurve) if config.nonparametric
                       else np.full_like(tau, np.nan))
        phase_np = (est.kernel_regression(tau, theta_init) if config.nonparametric
                    else np.full_like(tau, np.nan))

    report = est.FitReport(
        tau=tau,
        empirical_spectrum=kcurve,
        spectrum=spectrum_fit,
        spectrum_np=spectrum_np,
        decay=decay_fit,
        decay_np=decay_np,
        slopes=slopes,
        drift=drift,
        theta_init=theta_init,
        phase=phase_fit,
        phase_np=phase_np,
        aic={"spectrum": k_aic, "decay": d_aic, "phase": p_aic},
        orders={"spectrum": k_order, "decay": d_order, "phase": p_order},
        span=config.span,
        mask_fraction=config.mask_fraction,
        mask_count=mask_count,
    )

    out = Path(config.out_dir)
    _atomic_write(out / "report.json", json.dumps(report.to_dict(), indent=2))
    _atomic_write(out / "curves.csv", _curves_csv(report))
    _write_manifest(config, out)
    return report


def _curves_csv(report: est.FitReport) -> str:
    lo, hi = est.pointwise_ci(report.spectrum.fitted_log, report.spectrum.fitted_log_se)
    cols = {
        "tau": report.tau,
        "k_emp": report.empirical_spectrum,
        "k_fit": np.exp(report.spectrum.fitted_log),
        "k_fit_lo": np.exp(lo),
        "k_fit_hi": np.exp(hi),
        "k_np": report.spectrum_np,
        "gamma_fit": report.decay.gamma_curve,
        "gamma_np": (np.full_like(report.tau, np.nan) if report.decay_np is None
                     else report.decay_np.gamma_curve),
        "theta_init": report.theta_init,
        "theta_fit": report.phase.fitted,
        "theta_np": report.phase_np,
        "slope": report.slopes,
    }
    return pd.DataFrame(cols).to_csv(index=False, lineterminator="\n")


def coherence_frame(coh: sp.CoherencePhaseTable, phase: sp.PhaseTable) -> pd.DataFrame:
    """Flat table (pair_id, lag, tau, re, im, modulus, angle, unwound)."""
    rows = []
    rho = coh.modulus * np.exp(1j * coh.angle)
    for r in range(coh.lags.shape[0]):
        rows.append(pd.DataFrame({
            "pair_id": coh.pair_ids[r],
            "lag_x_km": coh.lags[r, 0],
            "lag_y_km": coh.lags[r, 1] if coh.lags.shape[1] > 1 else 0.0,
            "tau": coh.tau,
            "re": np.where(coh.valid[r], rho[r].real, np.nan),
            "im": np.where(coh.valid[r], rho[r].imag, np.nan),
            "modulus": np.where(coh.valid[r], coh.modulus[r], np.nan),
            "angle": np.where(coh.valid[r], coh.angle[r], np.nan),
            "unwound": np.where(coh.valid[r], phase.unwound[r], np.nan),
        }))
    return pd.concat(rows, ignore_index=True)


def read_coherence_csv(path):
    """Rebuild the coherence and phase tables from an exported CSV."""
    df = pd.read_csv(path, float_precision="round_trip")
    tables = []
    for pid, grp in df.groupby("pair_id", sort=False):
        grp = grp.sort_values("tau")
        tables.append((pid, grp))
    if not tables:
        raise ValidationError("coherence table is empty")
    tau = tables[0][1]["tau"].to_numpy()
    L = len(tables)
    lags = np.zeros((L, 2))
    modulus = np.zeros((L, tau.size))
    angle = np.zeros((L, tau.size))
    unwound = np.zeros((L, tau.size))
    valid = np.zeros((L, tau.size), dtype=bool)
    ids = []
    for r, (pid, grp) in enumerate(tables):
        if grp.shape[0] != tau.size or not np.allclose(grp["tau"].to_numpy(), tau):
            raise ValidationError("pair groups disagree on the frequency grid")
        lags[r] = (grp["lag_x_km"].iloc[0], grp["lag_y_km"].iloc[0])
        m = grp["modulus"].to_numpy()
        ok = np.isfinite(m)
        modulus[r] = np.where(ok, m, 0.0)
        angle[r] = np.where(ok, np.nan_to_num(grp["angle"].to_numpy()), 0.0)
        unwound[r] = np.where(ok, np.nan_to_num(grp["unwound"].to_numpy()), 0.0)
        valid[r] = ok
        ids.append(str(pid))
    # the export schema carries no span column; mark as minimally smoothed
    coh = sp.CoherencePhaseTable(
        lags=lags, modulus=modulus, angle=angle, valid=valid, tau=tau,
        span=3, members=tuple((r,) for r in range(L)), pair_ids=tuple(ids),
    )
    phase = sp.PhaseTable(
        lags=lags, unwound=unwound, valid=valid, tau=tau,
        big_step=np.zeros(L, dtype=bool), pair_ids=tuple(ids),
    )
    return coh, phase


def run_spectra(config: RunConfig) -> Path:
    """Dump smoothed marginal spectra and the coherence/phase table."""
    with _stage("ingest"):
        panel, stations, times = ingest(config.data, config.stations, config.origin)
        if config.deseasonalize:
            panel = preprocess(panel, times)
    raw, smoothed, coh, phase = build_tables(panel, stations, config.span)

    avg_span, site_span = config.display_spans
    marg = {
        "tau": smoothed.tau,
        "overall": sp.daniell_smooth(raw.overall_spectrum(), avg_span),
    }
    site_smoothed = sp.daniell_smooth(raw.auto_values, site_span)
    for s, sid in enumerate(stations.ids):
        marg[f"site_{sid}"] = site_smoothed[s]

    out = Path(config.out_dir)
    _atomic_write(out / "marginal.csv",
                  pd.DataFrame(marg).to_csv(index=False, lineterminator="\n"))
    _atomic_write(out / "coherence.csv",
                  coherence_frame(coh, phase).to_csv(index=False, lineterminator="\n"))
    _write_manifest(config, out)
    return out


def render_report(path) -> str:
    """Human-readable summary of a saved report JSON."""
    with open(path) as fh:
        rep = json.load(fh)

    def line(name, block, idx=None):
        e, s = block["estimate"], block["se"]
        if idx is None:
            pieces = [f"{v:+.4g} (se {w:.3g})" for v, w in zip(e, s)]
            return f"  {name}: " + ", ".join(pieces)
        return f"  {name}: {e[idx]:+.4g} (se {s[idx]:.3g})"

    out = [
        f"span={rep['span']}  masked={rep['mask_count']} low frequencies",
        f"orders: {rep['orders']}",
        "temporal spectrum:",
        line("long-memory exponent", rep["spectrum"]["long_memory"], 0),
        line("cosine coefficients", rep["spectrum"]["cos_coeffs"]),
        "coherence decay:",
        line("shape exponent p", rep["decay"]["power"], 0),
        line("log-decay coefficients", rep["decay"]["log_coeffs"]),
        f"  entries used {rep['decay']['used']}, dropped {rep['decay']['dropped']}",
        "drift and phase:",
        f"  direction: {np.round(rep['drift']['direction'], 4).tolist()}",
        line("sine coefficients", rep["phase"]["coeffs"]),
    ]
    return "\n".join(out)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covspec",
                                 description="Covariance-spectral modelling pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a Gaussian sample from a model JSON")
    sim.add_argument("--model", required=True)
    sim.add_argument("--stations", required=True)
    sim.add_argument("--length", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.add_argument("--origin", type=float, nargs=2, default=None,
                     metavar=("LON", "LAT"))

    def add_fit_args(p):
        p.add_argument("--data", required=True)
        p.add_argument("--stations", required=True)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--span", type=int, default=255)
        p.add_argument("--mask-fraction", type=float, default=300.0 / 3287.0)
        p.add_argument("--deseasonalize", action="store_true")
        p.add_argument("--origin", type=float, nargs=2, default=None,
                       metavar=("LON", "LAT"))

    fit = sub.add_parser("fit", help="run the estimation pipeline")
    add_fit_args(fit)
    fit.add_argument("--k-order", default="auto")
    fit.add_argument("--decay-order", default="auto")
    fit.add_argument("--phase-order", default="auto")
    fit.add_argument("--no-nonparametric", action="store_true")

    spc = sub.add_parser("spectra", help="dump smoothed spectral tables")
    add_fit_args(spc)
    spc.add_argument("--display-spans", type=int, nargs=2, default=(5, 55))

    rep = sub.add_parser("report", help="render a saved report JSON")
    rep.add_argument("--report", required=True)
    return ap


def _order_arg(v):
    return v if v == "auto" else int(v)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            path = run_simulate(args.model, args.stations, args.length, args.seed,
                                args.out, origin=args.origin)
            print(f"wrote {path}")
        elif args.command == "fit":
            config = RunConfig(
                data=args.data, stations=args.stations, out_dir=args.out_dir,
                span=args.span, mask_fraction=args.mask_fraction,
                k_order=_order_arg(args.k_order),
                decay_order=_order_arg(args.decay_order),
                phase_order=_order_arg(args.phase_order),
                nonparametric=not args.no_nonparametric,
                deseasonalize=args.deseasonalize,
                origin=tuple(args.origin) if args.origin else None,
            )
            run_fit(config)
            print(render_report(Path(config.out_dir) / "report.json"))
        elif args.command == "spectra":
            config = RunConfig(
                data=args.data, stations=args.stations, out_dir=args.out_dir,
                span=args.span, mask_fraction=args.mask_fraction,
                display_spans=tuple(args.display_spans),
                deseasonalize=args.deseasonalize,
                origin=tuple(args.origin) if args.origin else None,
            )
            out = run_spectra(config)
            print(f"wrote {out}")
        elif args.command == "report":
            print(render_report(args.report))
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
