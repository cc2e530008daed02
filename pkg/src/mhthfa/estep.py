"""Conditional expectations of the latent variables given an observation.

For a component with derived quantities ``dc`` and an observation x let
``delta = (x - r)' Omega^{-1} (x - r)``, ``k = alpha' Omega^{-1} (x - r)`` and
``lam_p = lam - p/2``.  Then

* W | x has density proportional to
  ``w^(lam_p - 1) exp{-(omega w + (omega + delta)/w)/2} Phi_r(k/sqrt(w) | Delta)``;
* V | x, w ~ N_r(k, w Delta) restricted to the positive orthant;
* U | x, v, w ~ N_q(C {d + Lam (v - a_lam)}, w C) with
  ``C = (I + B_tilde' D^{-1} B_tilde)^{-1}`` and ``d = B_tilde' D^{-1} (x - mu)``.

The quantities needed by the CM step are a = E[W|x], b = E[1/W|x],
c = E[log W|x], s3 = E[V/W|x], s4 = E[VV'/W|x], s1 = E[U/W|x],
s2 = E[UU'/W|x] and s5 = E[VU'/W|x].
"""

from dataclasses import dataclass

import numpy as np

from .gig import gig_log_normalizer
from .hthfa import component_integrals
from .hyperbolic import SymHypParams, gig_orthant_integrals, trunc_hyp_orthant_moments

__all__ = [
    "EStepQuantities",
    "component_expectations",
    "factor_moments",
    "expected_w_and_inv",
    "expected_log_w",
    "expected_v_moments",
    "expected_u_moments",
]


@dataclass
class EStepQuantities:
    """Responsibilities and conditional expectations, indexed (observation, component, ...)."""

    z: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray
    s4: np.ndarray
    s5: np.ndarray
    log_dens: np.ndarray = None
    log_likelihood: float = None


def factor_moments(X, dc, s3, s4, b):
    """s1, s2, s5 for each row from the V-moments (vectorized over rows).

    Parameters
    ----------
    X : (n, p)
    dc : DerivedComponent
    s3 : (n, r)
    s4 : (n, r, r)
    b : (n,)
    """
    Bt = dc.B_tilde
    q = Bt.shape[1]
    BtDinv = Bt.T / dc.D  # q x p
    C = np.linalg.inv(np.eye(q) + BtDinv @ Bt)
    C = 0.5 * (C + C.T)
    d = (X - dc.mu) @ BtDinv.T  # n x q
    Lam = dc.Lam
    e = d - (Lam @ dc.a_lambda)[None, :]  # d - Lam a
    s1 = (e * b[:, None] + s3 @ Lam.T) @ C
    Ls3 = s3 @ Lam.T  # n x q
    M = (
        b[:, None, None] * e[:, :, None] * e[:, None, :]
        + e[:, :, None] * Ls3[:, None, :]
        + Ls3[:, :, None] * e[:, None, :]
        + Lam @ s4 @ Lam.T
    )
    s2 = C @ M @ C + C[None]
    s2 = 0.5 * (s2 + np.swapaxes(s2, 1, 2))
    s5 = (s3[:, :, None] * e[:, None, :] + s4 @ Lam.T) @ C
    return s1, s2, s5


def component_expectations(X, dc, spec=None):
    """All E-step expectations for one component (batched over rows of X).

    Returns a dict with ``log_dens`` (n,), ``a``, ``b``, ``c`` (n,), ``s1`` (n, q),
    ``s2`` (n, q, q), ``s3`` (n, r), ``s4`` (n, r, r), ``s5`` (n, r, q).
    """
    X = np.atleast_2d(np.asarray(X, float))
    log_dens, _, _, res = component_integrals(X, dc, moments=True, spec=spec)
    b = res.ratio_down
    s3 = res.mean
    s4 = res.second
    s1, s2, s5 = factor_moments(X, dc, s3, s4, b)
    return {
        "log_dens": log_dens,
        "a": res.ratio_up,
        "b": b,
        "c": res.mean_log,
        "s1": s1,
        "s2": s2,
        "s3": s3,
        "s4": s4,
        "s5": s5,
    }


def _conditional(x, dc):
    x = np.atleast_2d(np.asarray(x, float))
    p = dc.dims[0]
    diff = x - dc.r_vec
    sol = np.linalg.solve(dc.omega_mat, diff.T).T
    delta = float(max(np.sum(diff * sol), 0.0))
    k = (diff @ dc.omega_inv_alpha)[0]
    return delta, k, dc.lam - 0.5 * p


def _log_cdf_at(k, dc, chi, lam_p, spec):
    res = gig_orthant_integrals(k[None, :], dc.delta_mat, dc.omega, chi, lam_p, spec=spec)
    return res.log_i0[0] - gig_log_normalizer(dc.omega, chi, lam_p)


def expected_w_and_inv(x, dc, lam=None, omega=None, spec=None):
    """(E[W|x], E[1/W|x]) as Bessel ratios times hyperbolic-CDF ratios.

    The conditional law is GIG(omega, omega + delta, lam - p/2) tilted by the
    orthant probability, so E[W^(+-1)|x] equals the untilted GIG moment times
    ``H(lam_p +- 1) / H(lam_p)``.  If that ratio is numerically 0/0 the
    integrals are taken directly.
    """
    _check_lam_omega(dc, lam, omega)
    delta, k, lam_p = _conditional(x, dc)
    w = dc.omega
    chi = w + delta
    h0 = _log_cdf_at(k, dc, chi, lam_p, spec)
    out = []
    for s in (1.0, -1.0):
        bessel = gig_log_normalizer(w, chi, lam_p + s) - gig_log_normalizer(w, chi, lam_p)
        hs = _log_cdf_at(k, dc, chi, lam_p + s, spec)
        val = np.exp(bessel + hs - h0)
        if not np.isfinite(val):
            res = gig_orthant_integrals(k[None, :], dc.delta_mat, w, chi, lam_p, spec=spec)
            val = res.ratio_up[0] if s > 0 else res.ratio_down[0]
        out.append(float(val))
    return out[0], out[1]


def expected_log_w(x, dc, lam=None, omega=None, spec=None):
    """E[log W | x] by quadrature against the conditional density of W."""
    _check_lam_omega(dc, lam, omega)
    delta, k, lam_p = _conditional(x, dc)
    res = gig_orthant_integrals(k[None, :], dc.delta_mat, dc.omega, dc.omega + delta, lam_p, spec=spec)
    return float(res.mean_log[0])


def expected_v_moments(x, dc, lam=None, omega=None, spec=None):
    """(s3, s4) = E[1/W|x] times the truncated-hyperbolic moments at index lam - p/2 - 1."""
    _check_lam_omega(dc, lam, omega)
    delta, k, lam_p = _conditional(x, dc)
    _, b = expected_w_and_inv(x, dc, spec=spec)
    th = SymHypParams(k, dc.delta_mat, lam_p - 1.0, dc.omega, dc.omega + delta)
    mean, second = trunc_hyp_orthant_moments(th, spec=spec)
    return b * mean, b * second


def expected_u_moments(x, dc, s3, s4, b):
    """(s1, s2, s5) for a single observation given its V-moments and E[1/W|x]."""
    x = np.atleast_2d(np.asarray(x, float))
    s1, s2, s5 = factor_moments(x, dc, np.atleast_2d(s3), np.asarray(s4)[None], np.atleast_1d(float(b)))
    return s1[0], s2[0], s5[0]


def _check_lam_omega(dc, lam, omega):
    if lam is not None and lam != dc.lam:
        raise ValueError("lam disagrees with the derived component")
    if omega is not None and omega != dc.omega:
        raise ValueError("omega disagrees with the derived component")
