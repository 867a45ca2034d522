"""Simulator: spectral matrix structure, exactness of grid cross-spectra."""

import numpy as np
import pytest
from helpers import random_layout, random_model, simple_model

import covspec as cv
from covspec.errors import NumericalError, ValidationError


class TestCrossSpectralMatrix:
    def test_two_site_eigenvalues(self):
        # 2x2 Hermitian with equal diagonal k: eigenvalues k*(1 +- |rho|)
        m = simple_model()
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [80.0, 30.0]]))
        for tau in (0.05, 0.2, 0.45):
            M = cv.cross_spectral_matrix(m, layout, tau)
            k = float(m.temporal_spectrum(tau))
            d = abs(m.coherence(layout.coords[0] - layout.coords[1], tau))
            w = np.sort(np.linalg.eigvalsh(M))
            np.testing.assert_allclose(w, [k * (1 - d), k * (1 + d)], rtol=1e-10)
            assert w.min() >= 0.0

    def test_single_site_scalar(self):
        m = simple_model()
        layout = cv.SiteLayout(np.array([[5.0, 5.0]]))
        M = cv.cross_spectral_matrix(m, layout, 0.3)
        assert M.shape == (1, 1)
        assert M[0, 0] == pytest.approx(float(m.temporal_spectrum(0.3)))

    def test_zero_phase_real_symmetric(self):
        rng = np.random.default_rng(3)
        m = simple_model(b=[0.0])
        layout = random_layout(rng, 4)
        M = cv.cross_spectral_matrix(m, layout, 0.2)
        np.testing.assert_array_equal(M.imag, 0.0)
        np.testing.assert_array_equal(M, M.T)

    def test_batched_frequencies(self):
        m = simple_model()
        layout = random_layout(np.random.default_rng(4), 3)
        taus = np.array([0.1, 0.2, 0.3])
        M = cv.cross_spectral_matrix(m, layout, taus)
        assert M.shape == (3, 3, 3)
        np.testing.assert_allclose(M[1], cv.cross_spectral_matrix(m, layout, 0.2))


class TestSampleField:
    def test_validation(self):
        m = simple_model()
        layout = random_layout(np.random.default_rng(0), 2)
        with pytest.raises(ValidationError):
            cv.sample_field(m, layout, 257, seed=0)
        with pytest.raises(ValidationError):
            cv.sample_field(m, layout, 2, seed=0)

    def test_reproducible(self):
        m = simple_model()
        layout = random_layout(np.random.default_rng(1), 3)
        a = cv.sample_field(m, layout, 128, seed=42)
        b = cv.sample_field(m, layout, 128, seed=42)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.seed == 42
        c = cv.sample_field(m, layout, 128, seed=43)
        assert not np.array_equal(a.values, c.values)

    def test_vanishing_spectrum_gives_vanishing_field(self):
        m = simple_model(beta=0.0, c=[-60.0])
        layout = random_layout(np.random.default_rng(2), 3)
        s = cv.sample_field(m, layout, 256, seed=5)
        assert np.max(np.abs(s.values)) < 1e-10

    def test_real_and_finite(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            m = random_model(rng)
            layout = random_layout(rng, int(rng.integers(1, 5)))
            s = cv.sample_field(m, layout, 64, seed=seed)
            assert s.values.dtype == np.float64
            assert np.all(np.isfinite(s.values))

    def test_non_psd_model_rejected(self):
        class Indefinite:
            def cov_spectrum(self, h, tau):
                bad = np.array([[1.0, 2.0], [2.0, 1.0]], dtype=complex)
                return np.ones_like(np.asarray(tau, dtype=float))[..., :1] * bad

        layout = cv.SiteLayout(np.array([[0.0, 0.0], [10.0, 0.0]]))
        with pytest.raises(NumericalError):
            cv.sample_field(Indefinite(), layout, 32, seed=0)

    def test_periodogram_matches_spectrum(self):
        # Monte-Carlo oracle: mean raw periodogram equals k on the grid.
        m = simple_model(beta=0.4, c=(0.0, 0.6), b=(0.0,))
        layout = cv.SiteLayout(np.array([[0.0, 0.0]]))
        T, reps = 256, 400
        pgrams = np.empty((reps, T // 2))
        for r in range(reps):
            z = cv.sample_field(m, layout, T, seed=1000 + r).values
            J = np.fft.rfft(z[0])[1:]
            pgrams[r] = np.abs(J) ** 2 / T
        mean = pgrams.mean(axis=0)
        se = pgrams.std(axis=0, ddof=1) / np.sqrt(reps)
        k = np.asarray(m.temporal_spectrum(np.arange(1, T // 2 + 1) / T))
        assert np.all(np.abs(mean - k) <= 3.0 * se)

    def test_variance_matches_covariance_synthesis(self):
        m = simple_model(beta=0.2, c=(0.0, 0.3), b=(0.0,))
        layout = cv.SiteLayout(np.array([[0.0, 0.0]]))
        T, reps = 128, 600
        rng_vals = np.empty(reps)
        for r in range(reps):
            z = cv.sample_field(m, layout, T, seed=2000 + r).values
            rng_vals[r] = np.mean(z ** 2)
        target = m.covariance(np.zeros(2), 0, T)
        assert np.mean(rng_vals) == pytest.approx(target, rel=0.05)

    def test_cross_periodogram_matches_model(self):
        # entrywise Monte-Carlo check of E[(1/T) J_i conj(J_j)] = H(h, tau)
        m = simple_model(beta=0.3, c=(0.0, 0.4), a=(-4.6,), b=(0.02,), p=1.0)
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [40.0, 0.0], [10.0, 60.0]]))
        T, reps = 128, 500
        cross = np.empty((reps, 3, 3, T // 2), dtype=complex)
        for r in range(reps):
            z = cv.sample_field(m, layout, T, seed=3000 + r).values
            J = np.fft.rfft(z, axis=1)[:, 1:]
            cross[r] = J[:, None, :] * np.conj(J[None, :, :]) / T
        taus = np.arange(1, T // 2 + 1) / T
        H = cv.cross_spectral_matrix(m, layout, taus)          # (F, S, S)
        H = np.moveaxis(H, 0, -1)                               # (S, S, F)
        mean = cross.mean(axis=0)
        se_re = cross.real.std(axis=0, ddof=1) / np.sqrt(reps)
        se_im = cross.imag.std(axis=0, ddof=1) / np.sqrt(reps)
        assert np.all(np.abs(mean.real - H.real) <= 4.0 * se_re + 1e-12)
        assert np.all(np.abs(mean.imag - H.imag) <= 4.0 * se_im + 1e-12)

    def test_lagged_cross_covariance_matches_synthesis(self):
        # dual route: time-domain moments of the sampler against the
        # frequency-grid synthesis of C(h, u)
        m = simple_model(beta=0.2, c=(0.0, 0.3), a=(-4.6,), b=(0.03,), p=1.0)
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [35.0, 20.0]]))
        T, reps = 128, 800
        lagged = {u: [] for u in (0, 1, 3)}
        for r in range(reps):
            z = cv.sample_field(m, layout, T, seed=4000 + r).values
            for u in lagged:
                lagged[u].append(np.mean(z[0] * np.roll(z[1], -u)))
        h = layout.coords[0] - layout.coords[1]
        for u, vals in lagged.items():
            vals = np.asarray(vals)
            se = vals.std(ddof=1) / np.sqrt(reps)
            # E[Z_0(t) Z_1(t+u)] = C(h, -u) on the sampling circle
            target = m.covariance(h, -u, T)
            assert abs(vals.mean() - target) <= 4.0 * se

    def test_frozen_field_sampling(self):
        # rank-one spectral matrices must still factor and simulate
        frozen = cv.FrozenFieldModel(
            spectrum=cv.FracExpSpectrum(0.1, cv.CosinePoly([0.0])),
            drift=(1.0, 0.0), scale=1.0)
        layout = cv.SiteLayout(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]]))
        s = cv.sample_field(frozen, layout, 256, seed=9)
        assert np.all(np.isfinite(s.values))
        assert np.std(s.values) > 0.0
