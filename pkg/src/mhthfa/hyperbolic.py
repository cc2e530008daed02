"""Symmetric hyperbolic family, skew-normal density and orthant integrals.

The workhorse is :func:`gig_orthant_integrals`, which integrates
``w^(lam-1) exp{-(psi w + chi/w)/2} * Phi_r(k / sqrt(w) | S)`` over w > 0 on
a shared Gauss-Legendre grid in ``log w``, optionally together with the
truncated-normal moments of ``k + sqrt(w) Z`` restricted to the positive
orthant.  The hyperbolic CDF, truncated-hyperbolic moments, the HTH/HTHFA
densities and the E-step expectations are all thin layers on top of it.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import DegenerateTruncationError, DomainError, NonSPDError, UnsupportedDimensionError
from .gig import gig_log_normalizer
from .quadrature import QuadratureSpec, gig_log_window, window_nodes
from .special import log_bessel_k, mvn_orthant_log_cdf
from .truncnorm import assemble_moments, orthant_log_terms

__all__ = [
    "SymHypParams",
    "SkewNormalParams",
    "mahalanobis_sq",
    "sym_hyp_log_density",
    "sym_hyp_cdf",
    "skew_normal_log_density",
    "trunc_hyp_orthant_moments",
    "gig_orthant_integrals",
    "OrthantIntegrals",
]

_LOG_2PI = np.log(2.0 * np.pi)
DEFAULT_SPEC = QuadratureSpec()


def _spd_factor(mat, name="matrix"):
    mat = np.atleast_2d(np.asarray(mat, float))
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(mat, mat.T, rtol=1e-10, atol=1e-12):
        raise NonSPDError(f"{name} is not symmetric")
    try:
        return cho_factor(mat, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NonSPDError(f"{name} is not positive definite") from exc


def _logdet(factor):
    return 2.0 * np.sum(np.log(np.diag(factor[0])))


@dataclass(frozen=True)
class SymHypParams:
    """Symmetric hyperbolic law: X = mu + sqrt(W) Z, Z ~ N(0, sigma), W ~ GIG(psi, chi, lam)."""

    mu: np.ndarray
    sigma: np.ndarray
    lam: float
    psi: float
    chi: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, float))
        sigma = np.atleast_2d(np.asarray(self.sigma, float))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if sigma.shape != (mu.size, mu.size):
            raise ValueError("sigma must be d x d with d = len(mu)")
        if not (self.psi > 0 and self.chi > 0):
            raise DomainError("psi and chi must be positive")
        _spd_factor(sigma, "sigma")


@dataclass(frozen=True)
class SkewNormalParams:
    """Skew-normal law with location mu, scale sigma (p x p) and skewness matrix (p x r)."""

    mu: np.ndarray
    sigma: np.ndarray
    skew: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, float))
        sigma = np.atleast_2d(np.asarray(self.sigma, float))
        skew = np.asarray(self.skew, float)
        if skew.ndim == 1:
            skew = skew[:, None]
        for name, val in (("mu", mu), ("sigma", sigma), ("skew", skew)):
            object.__setattr__(self, name, val)
        if sigma.shape != (mu.size, mu.size) or skew.shape[0] != mu.size:
            raise ValueError("inconsistent skew-normal dimensions")

    @property
    def omega(self):
        return self.sigma + self.skew @ self.skew.T

    @property
    def delta(self):
        omega = self.omega
        return np.eye(self.skew.shape[1]) - self.skew.T @ np.linalg.solve(omega, self.skew)


def mahalanobis_sq(x, mu, sigma):
    """Squared Mahalanobis distance (x - mu)' sigma^{-1} (x - mu).

    ``x`` may be a single vector or an (n, d) array of rows.
    """
    x = np.asarray(x, float)
    mu = np.atleast_1d(np.asarray(mu, float))
    sigma = np.atleast_2d(np.asarray(sigma, float))
    if x.shape[-1] != mu.size or sigma.shape != (mu.size, mu.size):
        raise ValueError("dimension mismatch")
    try:
        factor = cho_factor(sigma, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NonSPDError("sigma is singular or not positive definite") from exc
    diff = x - mu
    sol = cho_solve(factor, np.atleast_2d(diff).T).T
    out = np.maximum(np.sum(np.atleast_2d(diff) * sol, axis=1), 0.0)
    return float(out[0]) if x.ndim == 1 else out


def _sym_hyp_log_density(delta, logdet, p, lam, psi, chi):
    nu = lam - 0.5 * p
    arg = np.sqrt(psi * (chi + delta))
    return (
        0.5 * nu * (np.log(chi + delta) - np.log(psi))
        + 0.5 * lam * (np.log(psi) - np.log(chi))
        + log_bessel_k(nu, arg)
        - 0.5 * p * _LOG_2PI
        - 0.5 * logdet
        - log_bessel_k(lam, np.sqrt(psi * chi))
    )


def sym_hyp_log_density(x, params):
    """Log density h_d(x | mu, sigma, lam, psi, chi) of the symmetric hyperbolic law."""
    x = np.asarray(x, float)
    factor = _spd_factor(params.sigma, "sigma")
    d = params.mu.size
    delta = mahalanobis_sq(x, params.mu, params.sigma)
    out = _sym_hyp_log_density(delta, _logdet(factor), d, params.lam, params.psi, params.chi)
    return out[()] if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# shared GIG x Gaussian-orthant quadrature
# ---------------------------------------------------------------------------


@dataclass
class OrthantIntegrals:
    """Per-row results of :func:`gig_orthant_integrals`.

    ``log_i0`` is ``log int w^(lam-1) e^{-(psi w + chi/w)/2} Phi_r(k/sqrt w|S) dw``;
    ``ratio_up``/``ratio_down``/``mean_log`` are E[W], E[1/W], E[log W] under
    the tilted law; ``mean``/``second`` are E[W^t0 V] and E[W^t0 VV'] for
    V | w ~ N(k, wS) restricted to V > 0 (present only when requested).
    """

    log_i0: np.ndarray
    ratio_up: np.ndarray
    ratio_down: np.ndarray
    mean_log: np.ndarray
    mean: np.ndarray = None
    second: np.ndarray = None


def _orthant_shift(k, S):
    """min over y <= k of y' S^{-1} y: the exponential decay rate of Phi_r(k/sqrt w | S) as w -> 0."""
    n, r = k.shape
    best = np.where(np.all(k >= 0, axis=1), 0.0, np.inf)
    idx = np.arange(r)
    for size in range(1, r + 1):
        for act in combinations(range(r), size):
            act = np.array(act)
            free = idx[~np.isin(idx, act)]
            Saa = S[np.ix_(act, act)]
            ks = k[:, act]
            sol = np.linalg.solve(Saa, ks.T).T
            val = np.sum(ks * sol, axis=1)
            ok = np.ones(n, bool)
            if free.size:
                yf = sol @ S[np.ix_(act, free)]
                ok = np.all(yf <= k[:, free] + 1e-12 * (1.0 + np.abs(k[:, free])), axis=1)
            best = np.where(ok, np.minimum(best, val), best)
    return best


def _windows(k, S, psi, chi, lam, offsets, drop):
    extra = _orthant_shift(k, S)
    chis = np.stack([chi, chi + extra])[:, None, :]
    shifts = lam + np.asarray(offsets, float)[None, :, None]
    lo, hi = gig_log_window(psi, chis, shifts, drop)
    return lo.min(axis=(0, 1)), hi.max(axis=(0, 1))


def _evaluate(k, S, psi, chi, lam, lo, hi, n_nodes, t0, moments, spec):
    m, r = k.shape
    u, logwt = window_nodes(lo, hi, n_nodes, spec)
    logg = logwt + lam * u - 0.5 * (psi[:, None] * np.exp(u) + chi[:, None] * np.exp(-u))
    sw = np.exp(-0.5 * u)  # 1/sqrt(w)
    kw = k[:, None, :] * sw[..., None]
    flat = kw.reshape(-1, r)
    if moments:
        log_alpha, log_f1, log_f2 = orthant_log_terms(-flat, S)
    else:
        log_alpha = np.atleast_1d(mvn_orthant_log_cdf(flat, S))
    log_alpha = log_alpha.reshape(m, n_nodes)
    tot = logg + log_alpha
    shift = np.max(tot, axis=1)
    if np.any(~np.isfinite(shift)):
        raise DegenerateTruncationError("orthant probability underflowed at every quadrature node")
    e0 = np.exp(tot - shift[:, None])
    i0 = e0.sum(axis=1)
    w = np.exp(u)
    out = {
        "log_i0": np.log(i0) + shift,
        "ratio_up": (e0 * w).sum(axis=1) / i0,
        "ratio_down": (e0 / w).sum(axis=1) / i0,
        "mean_log": (e0 * u).sum(axis=1) / i0,
    }
    if moments:
        base = logg - shift[:, None]
        f1 = np.exp(base[..., None] + log_f1.reshape(m, n_nodes, r)).reshape(-1, r)
        f2 = np.exp(base[..., None, None] + log_f2.reshape(m, n_nodes, r, r)).reshape(-1, r, r)
        G1, G2 = assemble_moments(-flat, S, f1, f2)
        G1 = G1.reshape(m, n_nodes, r)
        G2 = G2.reshape(m, n_nodes, r, r)
        wt0 = np.exp(t0 * u)
        T0 = (e0 * wt0).sum(axis=1)
        T1 = np.einsum("mn,mnr->mr", wt0 / sw, G1)
        T2 = np.einsum("mn,mnij->mij", wt0 * w, G2) + np.einsum("mn->m", e0 * wt0 * w)[:, None, None] * S
        mean = k * T0[:, None] + T1
        second = (
            k[:, :, None] * k[:, None, :] * T0[:, None, None]
            + k[:, :, None] * T1[:, None, :]
            + T1[:, :, None] * k[:, None, :]
            + T2
        )
        second = 0.5 * (second + np.swapaxes(second, 1, 2))
        out["mean"] = mean / i0[:, None]
        out["second"] = second / i0[:, None, None]
    return out


def _discrepancy(a, b):
    worst = np.abs(a["log_i0"] - b["log_i0"])
    for key in ("ratio_up", "ratio_down"):
        worst = np.maximum(worst, np.abs(a[key] - b[key]) / np.abs(b[key]))
    worst = np.maximum(worst, np.abs(a["mean_log"] - b["mean_log"]) / np.maximum(1.0, np.abs(b["mean_log"])))
    if "mean" in b:
        scale = np.maximum(np.max(np.abs(b["mean"]), axis=1), 1e-300)
        worst = np.maximum(worst, np.max(np.abs(a["mean"] - b["mean"]), axis=1) / scale)
        scale2 = np.maximum(np.max(np.abs(b["second"]), axis=(1, 2)), 1e-300)
        worst = np.maximum(worst, np.max(np.abs(a["second"] - b["second"]), axis=(1, 2)) / scale2)
    return worst


def gig_orthant_integrals(k, S, psi, chi, lam, *, t0=0.0, moments=False, spec=None):
    """Integrate a GIG kernel against Gaussian orthant probabilities, row by row.

    Parameters
    ----------
    k : array_like, shape (n, r)
        Location of the Gaussian part per row (r <= 3).
    S : array_like, shape (r, r)
        Gaussian scale, SPD.
    psi, chi : array_like, shape (n,) or scalar
    lam : float
    t0 : float
        Power of w weighting the truncated moments (``-1`` for the E-step,
        ``0`` for plain truncated-hyperbolic moments).
    moments : bool
        Also return E[W^t0 V] and E[W^t0 V V'] (normalized by the tilted mass).
    spec : QuadratureSpec, optional

    Returns
    -------
    OrthantIntegrals
    """
    spec = spec or DEFAULT_SPEC
    k = np.atleast_2d(np.asarray(k, float))
    S = np.atleast_2d(np.asarray(S, float))
    n, r = k.shape
    if r > 3:
        raise UnsupportedDimensionError("orthant integrals are limited to r <= 3")
    chi = np.broadcast_to(np.asarray(chi, float), (n,)).copy()
    psi = np.broadcast_to(np.asarray(psi, float), (n,)).copy()
    if np.any(~(psi > 0)) or np.any(~(chi > 0)):
        raise DomainError("psi and chi must be positive")
    offsets = (-1.0, 0.0, 1.0)
    if moments:
        offsets = offsets + (t0, t0 + 1.0)
    lo, hi = _windows(k, S, psi, chi, lam, offsets, spec.drop)

    n_nodes = spec.node_count
    fine = _evaluate(k, S, psi, chi, lam, lo, hi, n_nodes, t0, moments, spec)
    if spec.max_doublings == 0:
        return OrthantIntegrals(**fine)
    coarse = _evaluate(k, S, psi, chi, lam, lo, hi, max(2, n_nodes // 2), t0, moments, spec)
    bad = np.flatnonzero(_discrepancy(coarse, fine) > spec.relative_tolerance)
    for _ in range(spec.max_doublings):
        if bad.size == 0:
            break
        n_nodes *= 2
        sub = {key: val[bad] for key, val in fine.items()}
        new = _evaluate(k[bad], S, psi[bad], chi[bad], lam, lo[bad], hi[bad], n_nodes, t0, moments, spec)
        still = _discrepancy(sub, new) > spec.relative_tolerance
        for key in fine:
            fine[key][bad] = new[key]
        bad = bad[still]
    return OrthantIntegrals(**fine)


def sym_hyp_cdf(x, params, spec=None):
    """H_r(x | mu, sigma, lam, psi, chi) = E[Phi_r((x - mu)/sqrt(W) | sigma)], r <= 3."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    d = params.mu.size
    if d > 3:
        raise UnsupportedDimensionError("the hyperbolic CDF is limited to r <= 3")
    diff = np.atleast_2d(x) - params.mu
    diff = np.clip(diff, -1e300, 1e300)
    res = gig_orthant_integrals(diff, params.sigma, params.psi, params.chi, params.lam, spec=spec)
    out = np.exp(res.log_i0 - gig_log_normalizer(params.psi, params.chi, params.lam))
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if single else out


def skew_normal_log_density(y, params):
    """log of 2^r phi_p(y | mu, Omega) Phi_r(Lambda' Omega^{-1} (y - mu) | Delta)."""
    y = np.asarray(y, float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    omega = params.omega
    fo = _spd_factor(omega, "Omega")
    delta = params.delta
    _spd_factor(delta, "Delta")
    r = params.skew.shape[1]
    diff = Y - params.mu
    sol = cho_solve(fo, diff.T).T
    maha = np.sum(diff * sol, axis=1)
    p = params.mu.size
    log_phi = -0.5 * (p * _LOG_2PI + _logdet(fo) + maha)
    upper = sol @ params.skew
    out = r * np.log(2.0) + log_phi + np.atleast_1d(mvn_orthant_log_cdf(upper, delta))
    return float(out[0]) if single else out


def trunc_hyp_orthant_moments(params, spec=None):
    """Mean and second moment of the symmetric hyperbolic law restricted to the positive orthant.

    Raises
    ------
    DegenerateTruncationError
        If the orthant probability is below 1e-300.
    """
    r = params.mu.size
    if r > 3:
        raise UnsupportedDimensionError("truncated moments are limited to r <= 3")
    res = gig_orthant_integrals(
        params.mu[None, :], params.sigma, params.psi, params.chi, params.lam, t0=0.0, moments=True, spec=spec
    )
    log_prob = res.log_i0[0] - gig_log_normalizer(params.psi, params.chi, params.lam)
    if log_prob < np.log(1e-300):
        raise DegenerateTruncationError(f"orthant probability exp({log_prob:.1f}) is below 1e-300")
    return res.mean[0], res.second[0]
