"""Generalized inverse Gaussian distribution GIG(psi, chi, lambda).

Density on w > 0::

    (psi/chi)^(lam/2) w^(lam-1) exp{-(psi w + chi/w)/2} / (2 K_lam(sqrt(psi chi)))
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import DomainError
from .special import d_log_bessel_k_dorder, log_bessel_k

__all__ = [
    "GigParams",
    "gig_log_density",
    "gig_log_normalizer",
    "gig_moment",
    "gig_expected_log",
    "gig_sample",
]


@dataclass(frozen=True)
class GigParams:
    """Parameters of GIG(psi, chi, lam); both psi and chi must be positive."""

    psi: float
    chi: float
    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.psi) and self.psi > 0):
            raise DomainError(f"psi must be positive and finite, got {self.psi}")
        if not (np.isfinite(self.chi) and self.chi > 0):
            raise DomainError(f"chi must be positive and finite, got {self.chi}")
        if not np.isfinite(self.lam):
            raise DomainError("lambda must be finite")


def gig_log_normalizer(psi, chi, lam):
    """log of the integral of w^(lam-1) exp{-(psi w + chi/w)/2} over w > 0.

    Vectorized; equals ``log 2 + log K_lam(sqrt(psi chi)) + (lam/2) log(chi/psi)``.
    """
    psi = np.asarray(psi, float)
    chi = np.asarray(chi, float)
    return np.log(2.0) + log_bessel_k(lam, np.sqrt(psi * chi)) + 0.5 * lam * (np.log(chi) - np.log(psi))


def gig_log_density(w, params):
    """Log density of GIG(psi, chi, lam) at ``w`` (scalar or array)."""
    w = np.asarray(w, float)
    if np.any(~(w > 0)):
        raise DomainError("GIG density is defined for w > 0")
    psi, chi, lam = params.psi, params.chi, params.lam
    out = (lam - 1.0) * np.log(w) - 0.5 * (psi * w + chi / w) - gig_log_normalizer(psi, chi, lam)
    return out[()] if out.ndim == 0 else out


def gig_moment(params, t):
    """E[W^t] = (chi/psi)^(t/2) K_(lam+t)(sqrt(psi chi)) / K_lam(sqrt(psi chi))."""
    psi, chi, lam = params.psi, params.chi, params.lam
    if t == 0:
        return 1.0
    s = np.sqrt(psi * chi)
    log_m = 0.5 * t * np.log(chi / psi) + log_bessel_k(lam + t, s) - log_bessel_k(lam, s)
    return float(np.exp(log_m))


def gig_expected_log(params):
    """E[log W] = d/dlam log K_lam(sqrt(psi chi)) + log sqrt(chi/psi)."""
    psi, chi, lam = params.psi, params.chi, params.lam
    return float(d_log_bessel_k_dorder(lam, np.sqrt(psi * chi)) + 0.5 * np.log(chi / psi))


def gig_sample(params, rng, size=None):
    """Draw from GIG(psi, chi, lam) with an explicit numpy Generator.

    Uses scipy's ``geninvgauss`` (ratio-of-uniforms, valid for every lam) on the
    standardized law GIG(b, b, lam) with b = sqrt(psi chi), then rescales by
    sqrt(chi/psi).
    """
    b = np.sqrt(params.psi * params.chi)
    scale = np.sqrt(params.chi / params.psi)
    draws = stats.geninvgauss.rvs(params.lam, b, scale=scale, size=size, random_state=rng)
    if size is None:
        return float(draws)
    return np.asarray(draws)
