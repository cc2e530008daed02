"""Hidden-truncation hyperbolic (HTH) law and the HTH factor-analysis model.

A single HTHFA component has the hierarchical form::

    W ~ GIG(omega, omega, lam)
    V | w ~ N_r(0, w I) restricted to V > 0
    U | v, w ~ N_q(Lam (v - a_lam), w I)
    X | u, v, w ~ N_p(mu + B_tilde u, w D)

so that X is HTH_p(r_vec, Sigma, alpha, lam, omega) with
``Sigma = B_tilde B_tilde' + D``, ``alpha = B_tilde Lam`` and
``r_vec = mu - alpha a_lam``.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import ConstraintViolation, DomainError, NonSPDError
from .gig import GigParams, gig_log_normalizer, gig_sample
from .hyperbolic import (
    _LOG_2PI,
    SymHypParams,
    _spd_factor,
    _sym_hyp_log_density,
    gig_orthant_integrals,
    sym_hyp_log_density,
)
from .special import log_bessel_k

__all__ = [
    "HthParams",
    "FactorComponentParams",
    "DerivedComponent",
    "ConstraintReport",
    "a_lambda_scalar",
    "derive_component",
    "derive_from_tilde",
    "hth_log_density",
    "hthfa_log_density",
    "component_integrals",
    "sample_hthfa",
    "check_constraints",
    "require_constraints",
    "sym_sqrt",
]


def sym_sqrt(mat, inverse=False):
    """Symmetric (eigen) square root of an SPD matrix, or of its inverse."""
    vals, vecs = np.linalg.eigh(mat)
    if np.any(vals <= 0):
        raise NonSPDError("matrix is not positive definite")
    root = np.sqrt(vals)
    if inverse:
        root = 1.0 / root
    return (vecs * root) @ vecs.T


@dataclass(frozen=True)
class HthParams:
    """HTH_p(mu, sigma, skew, lam, omega) with skew of shape (p, r)."""

    mu: np.ndarray
    sigma: np.ndarray
    skew: np.ndarray
    lam: float
    omega: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, float))
        sigma = np.atleast_2d(np.asarray(self.sigma, float))
        skew = np.asarray(self.skew, float)
        if skew.ndim == 1:
            skew = skew[:, None]
        for name, val in (("mu", mu), ("sigma", sigma), ("skew", skew)):
            object.__setattr__(self, name, val)
        p, r = skew.shape
        if mu.size != p or sigma.shape != (p, p):
            raise ValueError("inconsistent HTH dimensions")
        if not 1 <= r <= p:
            raise DomainError("the skewness dimension must satisfy 1 <= r <= p")
        if not self.omega > 0:
            raise DomainError("omega must be positive")


@dataclass(frozen=True)
class FactorComponentParams:
    """Free parameters of one HTHFA component.

    ``D`` holds the diagonal of the noise matrix; ``B`` is p x q and ``Lam``
    is q x r.
    """

    mu: np.ndarray
    B: np.ndarray
    D: np.ndarray
    Lam: np.ndarray
    omega: float
    lam: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, float))
        B = np.atleast_2d(np.asarray(self.B, float))
        D = np.asarray(self.D, float)
        if D.ndim == 2:
            D = np.diag(D).copy()
        Lam = np.atleast_2d(np.asarray(self.Lam, float))
        for name, val in (("mu", mu), ("B", B), ("D", D), ("Lam", Lam)):
            object.__setattr__(self, name, val)
        p = mu.size
        if B.shape[0] != p or D.shape != (p,) or Lam.shape[0] != B.shape[1]:
            raise ValueError("inconsistent factor-model dimensions")
        if np.any(~(D > 0)):
            raise DomainError("D must be strictly positive")
        if not self.omega > 0:
            raise DomainError("omega must be positive")

    @property
    def dims(self):
        return self.mu.size, self.B.shape[1], self.Lam.shape[1]


@dataclass(frozen=True)
class DerivedComponent:
    """Cached transforms of a component (see module docstring)."""

    A: np.ndarray
    a_lambda: np.ndarray
    B_tilde: np.ndarray
    sigma: np.ndarray
    alpha: np.ndarray
    omega_mat: np.ndarray
    delta_mat: np.ndarray
    r_vec: np.ndarray
    mu: np.ndarray
    D: np.ndarray
    Lam: np.ndarray
    omega: float
    lam: float
    omega_chol: Tuple = field(repr=False, default=None)
    omega_inv_alpha: np.ndarray = field(repr=False, default=None)
    logdet_omega: float = field(repr=False, default=0.0)

    @property
    def dims(self):
        return self.B_tilde.shape[0], self.B_tilde.shape[1], self.Lam.shape[1]

    @property
    def B(self):
        return self.B_tilde @ sym_sqrt(self.A)


def a_lambda_scalar(lam, omega):
    """sqrt(2/pi) K_(lam+1/2)(omega) / K_lam(omega), the common entry of a_lam."""
    return np.sqrt(2.0 / np.pi) * np.exp(log_bessel_k(lam + 0.5, omega) - log_bessel_k(lam, omega))


def _a_matrix(Lam, lam, omega):
    r = Lam.shape[1]
    kappa = a_lambda_scalar(lam, omega)
    ratio = np.exp(log_bessel_k(lam + 1.0, omega) - log_bessel_k(lam, omega))
    bracket = 1.0 - r * kappa * kappa * ratio
    A = np.eye(Lam.shape[0]) + bracket * (Lam @ Lam.T)
    return A, np.full(r, kappa)


def derive_from_tilde(mu, B_tilde, D, Lam, omega, lam, A=None):
    """Build a :class:`DerivedComponent` from the B_tilde parameterization."""
    mu = np.asarray(mu, float)
    B_tilde = np.asarray(B_tilde, float)
    D = np.asarray(D, float)
    Lam = np.asarray(Lam, float)
    A_new, a_lam = _a_matrix(Lam, lam, omega)
    if A is None:
        A = A_new
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NonSPDError("A is not positive definite for this skewness") from exc
    sigma = B_tilde @ B_tilde.T + np.diag(D)
    alpha = B_tilde @ Lam
    omega_mat = sigma + alpha @ alpha.T
    try:
        chol = cho_factor(omega_mat, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NonSPDError("Omega is not positive definite") from exc
    oia = cho_solve(chol, alpha)
    delta = np.eye(Lam.shape[1]) - alpha.T @ oia
    delta = 0.5 * (delta + delta.T)
    return DerivedComponent(
        A=A,
        a_lambda=a_lam,
        B_tilde=B_tilde,
        sigma=sigma,
        alpha=alpha,
        omega_mat=omega_mat,
        delta_mat=delta,
        r_vec=mu - alpha @ a_lam,
        mu=mu,
        D=D,
        Lam=Lam,
        omega=float(omega),
        lam=float(lam),
        omega_chol=chol,
        omega_inv_alpha=oia,
        logdet_omega=2.0 * float(np.sum(np.log(np.diag(chol[0])))),
    )


def derive_component(params):
    """Derived quantities of a component.

    Raises
    ------
    NonSPDError
        If A (or Omega) is not positive definite.
    """
    A, _ = _a_matrix(params.Lam, params.lam, params.omega)
    try:
        B_tilde = params.B @ sym_sqrt(A, inverse=True)
    except NonSPDError as exc:
        raise NonSPDError("A is not positive definite for this skewness") from exc
    return derive_from_tilde(params.mu, B_tilde, params.D, params.Lam, params.omega, params.lam, A=A)


def hth_log_density(x, params, spec=None):
    """Log density of HTH_p(mu, sigma, skew, lam, omega).

    Evaluated as ``2^r h_p(x | mu, Omega, lam, omega, omega)`` times the
    hyperbolic CDF ``H_r(k (omega/(omega+delta))^(1/4) | 0, Delta, lam - p/2, gamma, gamma)``
    with ``gamma = sqrt(omega (omega + delta))``.
    """
    x = np.asarray(x, float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    p, r = params.skew.shape
    if r > 3:
        raise DomainError("the skewness dimension is limited to r <= 3")
    omega_mat = params.sigma + params.skew @ params.skew.T
    fo = _spd_factor(omega_mat, "Omega")
    oia = cho_solve(fo, params.skew)
    delta_mat = np.eye(r) - params.skew.T @ oia
    delta_mat = 0.5 * (delta_mat + delta_mat.T)
    _spd_factor(delta_mat, "Delta")
    w = params.omega
    sym = SymHypParams(params.mu, omega_mat, params.lam, w, w)
    log_h = np.atleast_1d(sym_hyp_log_density(X, sym))
    diff = X - params.mu
    dist = np.maximum(np.sum(diff * cho_solve(fo, diff.T).T, axis=1), 0.0)
    k = diff @ oia
    y = k * ((w / (w + dist)) ** 0.25)[:, None]
    gamma = np.sqrt(w * (w + dist))
    lam_p = params.lam - 0.5 * p
    res = gig_orthant_integrals(y, delta_mat, gamma, gamma, lam_p, spec=spec)
    log_cdf = res.log_i0 - gig_log_normalizer(gamma, gamma, lam_p)
    out = r * np.log(2.0) + log_h + log_cdf
    return float(out[0]) if single else out


def component_integrals(X, dc, *, moments=False, spec=None):
    """Conditional-GIG integrals of one component for each row of X.

    Returns ``(log_density, delta, k, OrthantIntegrals)`` where the integrals
    are taken against W | x ~ GIG(omega, omega + delta, lam - p/2) tilted by
    ``Phi_r(k / sqrt(w) | Delta)``, with ``t0 = -1`` for the moments.
    """
    X = np.atleast_2d(np.asarray(X, float))
    p, q, r = dc.dims
    diff = X - dc.r_vec
    sol = cho_solve(dc.omega_chol, diff.T).T
    delta = np.maximum(np.sum(diff * sol, axis=1), 0.0)
    k = diff @ dc.omega_inv_alpha
    w = dc.omega
    lam_p = dc.lam - 0.5 * p
    chi = w + delta
    res = gig_orthant_integrals(k, dc.delta_mat, w, chi, lam_p, t0=-1.0, moments=moments, spec=spec)
    log_h = _sym_hyp_log_density(delta, dc.logdet_omega, p, dc.lam, w, w)
    log_cdf = res.log_i0 - gig_log_normalizer(w, chi, lam_p)
    return r * np.log(2.0) + log_h + log_cdf, delta, k, res


def hthfa_log_density(x, dc, lam=None, omega=None, spec=None):
    """Log density of the HTHFA component ``dc`` at x (vector or rows).

    ``lam`` and ``omega`` default to the values stored on ``dc``; if given they
    must agree with it.
    """
    if (lam is not None and not np.isclose(lam, dc.lam, rtol=0, atol=0)) or (
        omega is not None and not np.isclose(omega, dc.omega, rtol=0, atol=0)
    ):
        raise ValueError("lam/omega disagree with the derived component")
    x = np.asarray(x, float)
    out, _, _, _ = component_integrals(x, dc, spec=spec)
    return float(out[0]) if x.ndim == 1 else out


def sample_hthfa(dc, params, n, rng, latents=False):
    """Draw n rows from an HTHFA component through its hierarchical form.

    Parameters
    ----------
    dc : DerivedComponent
    params : FactorComponentParams
        Must be the parameters ``dc`` was derived from.
    n : int
    rng : numpy.random.Generator
    latents : bool
        Also return a dict with the draws of ``w`` (n,), ``v`` (n, r) and
        ``u`` (n, q) (the latter in the B_tilde basis).
    """
    p, q, r = dc.dims
    if not np.allclose(params.mu, dc.mu) or not np.allclose(params.Lam, dc.Lam):
        raise ValueError("params and derived component disagree")
    w = gig_sample(GigParams(params.omega, params.omega, params.lam), rng, size=n)
    sw = np.sqrt(w)[:, None]
    v = sw * np.abs(rng.standard_normal((n, r)))
    u = (v - dc.a_lambda) @ dc.Lam.T + sw * rng.standard_normal((n, q))
    x = dc.mu + u @ dc.B_tilde.T + sw * rng.standard_normal((n, p)) * np.sqrt(dc.D)
    if latents:
        return x, {"w": w, "v": v, "u": u}
    return x


@dataclass(frozen=True)
class ConstraintReport:
    """Outcome of :func:`check_constraints`; truthy when every constraint holds."""

    ok: bool
    failed: Tuple[str, ...] = ()

    def __bool__(self):
        return self.ok


def check_constraints(p, q, r):
    """Check (p - q)^2 > p + q, q < p and 1 <= r <= q."""
    failed = []
    if not (p - q) ** 2 > p + q:
        failed.append(f"(p-q)^2 > p+q: {(p - q) ** 2} > {p + q} is false")
    if not q < p:
        failed.append(f"q < p: {q} < {p} is false")
    if not 1 <= r:
        failed.append(f"1 <= r: r = {r}")
    if not r <= q:
        failed.append(f"r <= q: {r} <= {q} is false")
    if not q >= 1:
        failed.append(f"q >= 1: q = {q}")
    return ConstraintReport(ok=not failed, failed=tuple(failed))


def require_constraints(p, q, r):
    report = check_constraints(p, q, r)
    if not report:
        raise ConstraintViolation("; ".join(report.failed), failed=report.failed)
    return report
