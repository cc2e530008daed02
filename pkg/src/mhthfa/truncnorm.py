"""Moments of a zero-mean normal vector truncated below, r <= 3.

For Y ~ N_r(0, S) restricted to Y > a, the first two moments follow from the
one- and two-dimensional marginal densities of the truncated law evaluated on
the boundary (Tallis' formulas for a lower orthant):

    alpha * E[Y_i]    = sum_k S_ik F_k
    alpha * E[Y_i Y_j] = alpha * S_ij + sum_k S_ik S_jk a_k F_k / S_kk
                        + sum_k S_ik sum_{q != k} (S_jq - S_kq S_jk / S_kk) F_kq

where alpha = P(Y > a), F_k is the density of Y_k at a_k times the conditional
probability that the other coordinates exceed their bounds, and F_kq is the
analogous bivariate quantity.  Everything is returned in log space so that the
caller can rescale before exponentiating.
"""

from itertools import combinations

import numpy as np
from scipy import special as sc

from .special import mvn_orthant_log_cdf

__all__ = ["orthant_log_terms", "truncated_normal_moments", "assemble_moments"]

_LOG_2PI = np.log(2.0 * np.pi)


def _log_upper_prob(c_minus_a, cov):
    """log P(Z > a) for Z ~ N(c, cov) given ``c - a`` of shape (m, d)."""
    if c_minus_a.shape[1] == 0:
        return np.zeros(c_minus_a.shape[0])
    return np.atleast_1d(mvn_orthant_log_cdf(c_minus_a, cov))


def orthant_log_terms(a, S):
    """Boundary terms for N(0, S) truncated to ``Y > a``.

    Parameters
    ----------
    a : ndarray, shape (m, r)
        Finite lower bounds.
    S : ndarray, shape (r, r)

    Returns
    -------
    log_alpha : (m,)
    log_f1 : (m, r)
        log F_k.
    log_f2 : (m, r, r)
        log F_kq, symmetric with ``-inf`` on the diagonal.
    """
    a = np.asarray(a, float)
    m, r = a.shape
    log_alpha = np.atleast_1d(mvn_orthant_log_cdf(-a, S))
    idx = np.arange(r)

    log_f1 = np.empty((m, r))
    for k in range(r):
        rest = idx[idx != k]
        skk = S[k, k]
        dens = -0.5 * (_LOG_2PI + np.log(skk)) - 0.5 * a[:, k] ** 2 / skk
        coef = S[rest, k] / skk
        cond_cov = S[np.ix_(rest, rest)] - np.outer(S[rest, k], S[k, rest]) / skk
        cmean = a[:, [k]] * coef[None, :]
        log_f1[:, k] = dens + _log_upper_prob(cmean - a[:, rest], cond_cov)

    log_f2 = np.full((m, r, r), -np.inf)
    for k, q in combinations(range(r), 2):
        pair = np.array([k, q])
        rest = idx[(idx != k) & (idx != q)]
        Sp = S[np.ix_(pair, pair)]
        Sp_inv = np.linalg.inv(Sp)
        ap = a[:, pair]
        quad = np.einsum("mi,ij,mj->m", ap, Sp_inv, ap)
        dens = -_LOG_2PI - 0.5 * np.log(np.linalg.det(Sp)) - 0.5 * quad
        if rest.size:
            Srp = S[np.ix_(rest, pair)]
            coef = Srp @ Sp_inv
            cond_cov = S[np.ix_(rest, rest)] - coef @ Srp.T
            cmean = ap @ coef.T
            dens = dens + _log_upper_prob(cmean - a[:, rest], cond_cov)
        log_f2[:, k, q] = dens
        log_f2[:, q, k] = dens
    return log_alpha, log_f1, log_f2


def assemble_moments(a, S, f1, f2):
    """Combine (rescaled) boundary terms into alpha-weighted moment pieces.

    ``f1`` and ``f2`` are ``exp(log_f - shift)`` for any common per-row shift.
    Returns ``(G1, G2)`` with ``G1 = S f1`` (alpha * mean, same shift) and
    ``G2`` the boundary part of ``alpha * E[YY']`` (add ``alpha * S`` for the
    full second moment).
    """
    r = S.shape[0]
    diag = np.diag(S)
    G1 = f1 @ S.T
    # sum_k S_ik S_jk a_k F_k / S_kk
    G2 = np.einsum("ik,jk,mk->mij", S, S, a * f1 / diag)
    for k in range(r):
        for q in range(r):
            if q == k:
                continue
            coef = S[:, q] - S[k, q] * S[:, k] / S[k, k]  # indexed by j
            G2 += f2[:, k, q][:, None, None] * np.outer(S[:, k], coef)[None, :, :]
    return G1, G2


def truncated_normal_moments(a, S):
    """Mean and second moment of N(0, S) truncated to ``Y > a`` (rows of ``a``).

    Returns
    -------
    log_alpha : (m,)
    mean : (m, r)
    second : (m, r, r)
    """
    a = np.atleast_2d(np.asarray(a, float))
    S = np.atleast_2d(np.asarray(S, float))
    log_alpha, log_f1, log_f2 = orthant_log_terms(a, S)
    f1 = np.exp(log_f1 - log_alpha[:, None])
    f2 = np.exp(log_f2 - log_alpha[:, None, None])
    G1, G2 = assemble_moments(a, S, f1, f2)
    second = S[None] + G2
    second = 0.5 * (second + np.swapaxes(second, 1, 2))
    return log_alpha, G1, second
