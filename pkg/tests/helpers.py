"""Shared factories for randomized model and layout construction."""

import numpy as np

import covspec as cv


def random_model(rng, d=2, max_order=3):
    """A valid random model with coherence decay scaled for ~100 km layouts."""
    k1 = int(rng.integers(0, max_order + 1))
    k2 = int(rng.integers(0, max_order + 1))
    k3 = int(rng.integers(1, max_order + 1))
    spectrum = cv.FracExpSpectrum(
        long_memory=float(rng.uniform(0.0, 0.9)),
        cosine=cv.CosinePoly(rng.normal(0.0, 0.5, k1 + 1)),
    )
    log_decay = np.concatenate([[rng.uniform(-6.0, -3.5)], rng.normal(0.0, 0.3, k2)])
    drift = rng.normal(size=d)
    return cv.CovarianceSpectralModel(
        spectrum=spectrum,
        log_decay=cv.CosinePoly(log_decay),
        phase=cv.SinePoly(rng.normal(0.0, 0.01, k3)),
        drift=drift,
        power=float(rng.uniform(0.2, 2.0)),
    )


def random_layout(rng, nsites, box_km=300.0, d=2):
    return cv.SiteLayout(rng.uniform(0.0, box_km, (nsites, d)))


def simple_model(beta=0.3, c=(0.0, 0.5), a=(-5.5, -0.5), b=(0.01,),
                 v=(1.0, 0.0), p=1.2):
    return cv.CovarianceSpectralModel(
        spectrum=cv.FracExpSpectrum(long_memory=beta, cosine=cv.CosinePoly(c)),
        log_decay=cv.CosinePoly(a),
        phase=cv.SinePoly(b),
        drift=v,
        power=p,
    )
