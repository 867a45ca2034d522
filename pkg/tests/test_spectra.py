"""Empirical pipeline: transforms, smoothing, coherence, phase unwinding."""

import numpy as np
import pytest
from helpers import simple_model

import covspec as cv
from covspec.errors import ValidationError
from covspec.spectra import daniell_weights


def make_tables(data, layout, span):
    transform = cv.half_fft(cv.center(data))
    raw = cv.raw_cross_spectra(transform, layout)
    return raw, cv.smooth_cross_spectra(raw, span)


class TestCenter:
    def test_constant_to_zero(self):
        out = cv.center(np.full((2, 8), 5.0))
        np.testing.assert_array_equal(out, 0.0)

    def test_centered_unchanged(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 64))
        x -= x.mean(axis=1, keepdims=True)
        np.testing.assert_allclose(cv.center(x), x, atol=1e-15)

    def test_zero_mean(self):
        rng = np.random.default_rng(1)
        out = cv.center(rng.normal(5.0, 2.0, (4, 100)))
        assert np.max(np.abs(out.mean(axis=1))) < 1e-12


class TestHalfFFT:
    def test_zero_series(self):
        J = cv.half_fft(np.zeros((2, 16)))
        np.testing.assert_array_equal(J.values, 0.0)
        assert J.tau[0] == pytest.approx(1.0 / 16)
        assert J.tau[-1] == pytest.approx(0.5)

    def test_pure_cosine_line(self):
        T, j0 = 64, 5
        t = np.arange(T)
        z = np.cos(2 * np.pi * t * j0 / T)[None, :]
        J = cv.half_fft(z)
        mags = np.abs(J.values[0])
        assert mags[j0 - 1] == pytest.approx(T / 2, rel=1e-10)
        others = np.delete(mags, j0 - 1)
        assert np.max(others) < 1e-9

    @pytest.mark.parametrize("T", [64, 101])
    def test_power_conservation(self, T):
        rng = np.random.default_rng(2)
        z = cv.center(rng.normal(size=(3, T)))
        J = cv.half_fft(z)
        energy = 2.0 * np.sum(np.abs(J.values) ** 2, axis=1)
        if T % 2 == 0:
            energy -= np.abs(J.values[:, -1]) ** 2
        np.testing.assert_allclose(energy / T, np.sum(z ** 2, axis=1), rtol=1e-10)

    def test_rejects_short_or_uncentered(self):
        with pytest.raises(ValidationError):
            cv.half_fft(np.zeros((1, 3)))
        with pytest.raises(ValidationError):
            cv.half_fft(np.ones((1, 16)))


class TestRawCrossSpectra:
    def test_raw_coherence_modulus_one(self):
        rng = np.random.default_rng(3)
        layout = cv.SiteLayout(rng.uniform(0, 100, (4, 2)))
        raw, _ = make_tables(rng.normal(size=(4, 128)), layout, 5)
        i, j = raw.pairs[:, 0], raw.pairs[:, 1]
        denom = np.sqrt(raw.auto_values[i] * raw.auto_values[j])
        modulus = np.abs(raw.pair_values) / denom
        np.testing.assert_allclose(modulus, 1.0, atol=1e-10)

    def test_auto_entries_real_nonnegative(self):
        rng = np.random.default_rng(4)
        layout = cv.SiteLayout(rng.uniform(0, 100, (3, 2)))
        raw, _ = make_tables(rng.normal(size=(3, 64)), layout, 5)
        assert raw.auto_values.dtype == np.float64
        assert np.all(raw.auto_values >= 0.0)
        np.testing.assert_allclose(raw.overall_spectrum(),
                                   raw.auto_values.mean(axis=0))

    def test_conjugate_on_pair_reversal(self):
        rng = np.random.default_rng(5)
        layout = cv.SiteLayout(rng.uniform(0, 100, (3, 2)))
        raw, _ = make_tables(rng.normal(size=(3, 64)), layout, 5)
        np.testing.assert_array_equal(raw.pair_value(1, 0),
                                      np.conj(raw.pair_value(0, 1)))


class TestDaniellSmooth:
    def test_weights(self):
        w = daniell_weights(5)
        np.testing.assert_allclose(w, [0.125, 0.25, 0.25, 0.25, 0.125])
        assert w.sum() == pytest.approx(1.0)

    def test_constant_unchanged(self):
        out = cv.daniell_smooth(np.full(50, 3.7), 11)
        np.testing.assert_allclose(out, 3.7, rtol=1e-12)

    def test_span_one_identity(self):
        x = np.random.default_rng(6).normal(size=32) + 1j
        np.testing.assert_array_equal(cv.daniell_smooth(x, 1), x)

    def test_even_span_rejected(self):
        with pytest.raises(ValidationError):
            cv.daniell_smooth(np.zeros(32), 4)
        with pytest.raises(ValidationError):
            cv.daniell_smooth(np.zeros(8), 11)

    def test_white_noise_variance_shrinks_by_weight_norm(self):
        span, n, reps = 11, 101, 1000
        rng = np.random.default_rng(7)
        mids = np.empty(reps)
        for r in range(reps):
            mids[r] = cv.daniell_smooth(rng.normal(size=n), span)[n // 2]
        target = np.sum(daniell_weights(span) ** 2)
        assert np.var(mids) == pytest.approx(target, rel=0.10)


class TestCoherencePhase:
    def test_requires_smoothing(self):
        rng = np.random.default_rng(8)
        layout = cv.SiteLayout(rng.uniform(0, 100, (2, 2)))
        raw, smoothed = make_tables(rng.normal(size=(2, 64)), layout, 5)
        with pytest.raises(ValidationError):
            cv.coherence_phase(raw)

    def test_identical_series_full_coherence(self):
        rng = np.random.default_rng(9)
        z = rng.normal(size=64)
        data = np.stack([z, z])
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [10.0, 0.0]]))
        _, smoothed = make_tables(data, layout, 9)
        coh = cv.coherence_phase(smoothed)
        np.testing.assert_allclose(coh.modulus, 1.0, atol=1e-10)
        np.testing.assert_allclose(coh.angle, 0.0, atol=1e-10)

    def test_modulus_at_most_one(self):
        rng = np.random.default_rng(10)
        layout = cv.SiteLayout(rng.uniform(0, 100, (4, 2)))
        _, smoothed = make_tables(rng.normal(size=(4, 256)), layout, 15)
        coh = cv.coherence_phase(smoothed)
        assert np.max(coh.modulus) <= 1.0 + 1e-12

    def test_separable_mean_angle_near_zero(self):
        # replicate-level Monte-Carlo: with zero phase rate the average
        # smoothed phase angle must be statistically indistinguishable from 0
        m = cv.separable_model(cv.FracExpSpectrum(0.2, cv.CosinePoly([0.0, 0.3])),
                               decay=0.01, power=1.0)
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [60.0, 20.0], [150.0, -40.0]]))
        means = []
        for seed in range(20):
            s = cv.sample_field(m, layout, 512, seed=500 + seed)
            _, smoothed = make_tables(s.values, layout, 31)
            coh = cv.coherence_phase(smoothed)
            means.append(coh.angle.mean())
        means = np.asarray(means)
        se = means.std(ddof=1) / np.sqrt(means.size)
        assert abs(means.mean()) <= 3.0 * se

    def test_duplicate_lags_merged(self):
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]]))
        rng = np.random.default_rng(11)
        _, smoothed = make_tables(rng.normal(size=(3, 128)), layout, 9)
        coh = cv.coherence_phase(smoothed)
        assert coh.lags.shape[0] == 2  # (-10, 0) twice, (-20, 0) once
        sizes = sorted(len(m) for m in coh.members)
        assert sizes == [1, 2]
        # merged modulus is the modulus of the averaged complex coherence
        pair_idx = next(m for m in coh.members if len(m) == 2)
        i, j = smoothed.pairs[pair_idx[0]]
        r1 = smoothed.pair_value(i, j) / np.sqrt(
            smoothed.auto_values[i] * smoothed.auto_values[j])
        i2, j2 = smoothed.pairs[pair_idx[1]]
        r2 = smoothed.pair_value(i2, j2) / np.sqrt(
            smoothed.auto_values[i2] * smoothed.auto_values[j2])
        row = list(coh.members).index(tuple(pair_idx))
        np.testing.assert_allclose(coh.modulus[row], np.abs((r1 + r2) / 2), atol=1e-12)

    def test_degenerate_site_flagged(self):
        rng = np.random.default_rng(12)
        data = rng.normal(size=(2, 64))
        data[1] = 0.0
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [10.0, 0.0]]))
        _, smoothed = make_tables(data, layout, 5)
        coh = cv.coherence_phase(smoothed)
        assert not coh.valid.any()
        assert np.all(np.isfinite(coh.modulus))

    def test_deterministic(self):
        rng = np.random.default_rng(13)
        data = rng.normal(size=(3, 128))
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [15.0, 5.0], [40.0, -10.0]]))
        a = cv.coherence_phase(make_tables(data, layout, 9)[1])
        b = cv.coherence_phase(make_tables(data, layout, 9)[1])
        np.testing.assert_array_equal(a.modulus, b.modulus)
        np.testing.assert_array_equal(a.angle, b.angle)

    def test_larger_span_tracks_model_better_on_averaged_table(self):
        # average the raw cross-spectra over replicates, then compare the
        # smoothed coherence against the model coherence for growing spans
        m = simple_model(beta=0.2, c=(0.0,), a=(-4.6, -0.1), b=(0.0,), p=1.0)
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [70.0, 0.0]]))
        T, reps = 1024, 40
        pair_sum = None
        auto_sum = None
        for seed in range(reps):
            s = cv.sample_field(m, layout, T, seed=7000 + seed)
            raw, _ = make_tables(s.values, layout, 5)
            pair_sum = raw.pair_values if pair_sum is None else pair_sum + raw.pair_values
            auto_sum = raw.auto_values if auto_sum is None else auto_sum + raw.auto_values
        avg = cv.CrossSpectraTable(
            pairs=layout.pairs, lags=layout.pair_lags,
            pair_values=pair_sum / reps, auto_values=auto_sum / reps,
            tau=np.arange(1, T // 2 + 1) / T, nobs=T)
        truth = np.abs(m.coherence(layout.pair_lags[0], avg.tau))
        errs = []
        for span in (9, 63, 255):
            coh = cv.coherence_phase(cv.smooth_cross_spectra(avg, span))
            errs.append(np.max(np.abs(coh.modulus[0] - truth)))
        assert errs[0] > errs[1] > errs[2]


class TestUnwind:
    def test_slowly_varying_unchanged(self):
        angles = 0.8 * np.sin(np.linspace(0, np.pi, 50))
        np.testing.assert_array_equal(cv.unwind_angles(angles), angles)

    def test_wrap_crossing(self):
        # crossing +pi continues upward instead of jumping to -pi
        angles = np.array([np.pi - 0.1, -np.pi + 0.1])
        out = cv.unwind_angles(angles)
        np.testing.assert_allclose(out, [np.pi - 0.1, np.pi + 0.1], atol=1e-12)

    def test_step_bound(self):
        rng = np.random.default_rng(14)
        angles = np.angle(np.exp(1j * rng.normal(0, 4, (5, 200))))
        out = cv.unwind_angles(angles)
        assert np.max(np.abs(np.diff(out, axis=-1))) <= np.pi + 1e-12

    def test_big_step_warning(self):
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [10.0, 0.0]]))
        coh = cv.CoherencePhaseTable(
            lags=layout.pair_lags,
            modulus=np.full((1, 4), 0.5),
            angle=np.array([[0.0, 3.0, 0.0, -3.0]]),
            valid=np.ones((1, 4), dtype=bool),
            tau=np.arange(1, 5) / 10,
            span=5, members=((0,),), pair_ids=("0-1",))
        with pytest.warns(UserWarning, match="unwinding"):
            table = cv.unwind(coh)
        assert table.big_step[0]

    def test_frozen_phase_slope(self):
        # unwound phase of a frozen field grows linearly with slope v.h * scale
        frozen = cv.FrozenFieldModel(
            spectrum=cv.FracExpSpectrum(0.0, cv.CosinePoly([0.0])),
            drift=(1.0, 0.0), scale=2.0)
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [1.5, 0.0]]))
        s = cv.sample_field(frozen, layout, 2048, seed=21)
        _, smoothed = make_tables(s.values, layout, 65)
        phase = cv.unwind(cv.coherence_phase(smoothed))
        slope = np.polyfit(phase.tau, phase.unwound[0], 1)[0]
        expected = 2.0 * float(phase.lags[0] @ np.array([1.0, 0.0]))
        assert slope == pytest.approx(expected, rel=0.05)
