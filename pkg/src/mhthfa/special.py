"""Scalar special functions and low-dimensional Gaussian orthant probabilities.

Modified Bessel functions of the second kind are taken from ``scipy.special``
(AMOS ``kve``) and extended with Debye's uniform asymptotic expansion wherever
the scaled value overflows.  Orthant probabilities of the multivariate normal
are deterministic: r = 1 is ``log_ndtr``, r = 2 uses Genz's BVNU quadrature
(with a log-space fallback deep in the tails) and r = 3 integrates the bivariate
routine over the most restrictive coordinate with Gauss-Legendre nodes.
"""

import math

import numpy as np
from scipy import special as sc
from scipy.special import logsumexp

from .exceptions import DomainError, NonSPDError, UnsupportedDimensionError

__all__ = [
    "bessel_k",
    "log_bessel_k",
    "d_log_bessel_k_dorder",
    "std_normal_cdf",
    "mvn_orthant_cdf",
    "mvn_orthant_log_cdf",
]

_LOG_2PI = np.log(2.0 * np.pi)


def _check_positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("Bessel K requires a strictly positive argument")
    return x


def _debye_log_k(nu, x):
    """log K_nu(x) from the uniform asymptotic expansion (nu > 0)."""
    z = x / nu
    sq = np.sqrt(1.0 + z * z)
    t = 1.0 / sq
    eta = sq + np.log(z / (1.0 + sq))
    t2 = t * t
    u1 = t * (3.0 - 5.0 * t2) / 24.0
    u2 = t2 * (81.0 - 462.0 * t2 + 385.0 * t2 * t2) / 1152.0
    u3 = t * t2 * (30375.0 - 369603.0 * t2 + 765765.0 * t2**2 - 425425.0 * t2**3) / 414720.0
    u4 = t2 * t2 * (
        4465125.0
        - 94121676.0 * t2
        + 349922430.0 * t2**2
        - 446185740.0 * t2**3
        + 185910725.0 * t2**4
    ) / 39813120.0
    series = 1.0 - u1 / nu + u2 / nu**2 - u3 / nu**3 + u4 / nu**4
    return (
        0.5 * np.log(np.pi / (2.0 * nu))
        - nu * eta
        - 0.5 * np.log(sq)
        + np.log(series)
    )


def log_bessel_k(order, x):
    """Natural log of K_order(x), finite even where K itself overflows.

    Parameters
    ----------
    order : float or array_like
        Real order; K is even in the order so only ``abs(order)`` is used.
    x : float or array_like
        Strictly positive argument.
    """
    if np.ndim(order) == 0 and np.ndim(x) == 0:
        # scalar fast path; the CM step calls this thousands of times
        xf = float(x)
        if not xf > 0:
            raise DomainError("Bessel K requires a strictly positive argument")
        scaled = sc.kve(abs(float(order)), xf)
        if 0.0 < scaled < math.inf:
            return np.float64(math.log(scaled) - xf)
    x = _check_positive(x)
    nu = np.abs(np.asarray(order, dtype=float))
    nu, x = np.broadcast_arrays(nu, x)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        scaled = sc.kve(nu, x)
        out = np.log(scaled) - x
    bad = ~np.isfinite(out)
    if np.any(bad):
        out = np.array(out, dtype=float)
        out[bad] = _debye_log_k(nu[bad], x[bad])
    return out[()] if out.ndim == 0 else out


def bessel_k(order, x):
    """Modified Bessel function of the second kind K_order(x) for real order.

    Raises
    ------
    DomainError
        If ``x <= 0``.
    OverflowError
        If the value is not representable; use :func:`log_bessel_k` instead.
    """
    x = _check_positive(x)
    nu = np.abs(np.asarray(order, dtype=float))
    with np.errstate(over="ignore"):
        val = sc.kv(nu, x)
    if np.any(np.isinf(val)):
        raise OverflowError("K_nu(x) overflows double precision; use log_bessel_k")
    return val[()] if np.ndim(val) == 0 else val


def d_log_bessel_k_dorder(order, x):
    """Derivative of log K_nu(x) with respect to the order nu.

    Central difference with step ``h = max(1e-5, 1e-5 * |order|)``.  The result
    is exactly odd in ``order`` because :func:`log_bessel_k` is exactly even.
    """
    order = np.asarray(order, dtype=float)
    h = np.maximum(1e-5, 1e-5 * np.abs(order))
    return (log_bessel_k(order + h, x) - log_bessel_k(order - h, x)) / (2.0 * h)


def std_normal_cdf(x):
    """Standard normal CDF."""
    return sc.ndtr(x)


# ---------------------------------------------------------------------------
# bivariate normal
# ---------------------------------------------------------------------------

_GL20_X, _GL20_W = np.polynomial.legendre.leggauss(20)
_GL_BVN = [np.polynomial.legendre.leggauss(n) for n in (6, 12, 20)]
_GL48_X, _GL48_W = np.polynomial.legendre.leggauss(48)
_GL32_X, _GL32_W = np.polynomial.legendre.leggauss(32)
_GL_TVN_X, _GL_TVN_W = np.polynomial.legendre.leggauss(24)


def _bvnu(h, k, r):
    """P(X > h, Y > k) for a standard bivariate normal with correlation r.

    Vectorized port of Genz's BVNU algorithm (Drezner-Wesolowsky type
    quadrature over the correlation, with the |r| > 0.925 expansion).
    Absolute accuracy is near machine precision.
    """
    scalar_r = np.ndim(r) == 0
    h, k, r = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(r, dtype=float)
    )
    out = np.empty(h.shape)
    hk = h * k
    x = _GL20_X
    w = _GL20_W

    low = np.abs(r) < 0.925
    if np.any(low):
        hl, kl, rl, hkl = h[low], k[low], r[low], hk[low]
        hs = 0.5 * (hl * hl + kl * kl)
        # Genz's rule: fewer nodes suffice for weak correlation
        top = float(np.max(np.abs(rl)))
        xl, wl = _GL_BVN[0 if top < 0.3 else (1 if top < 0.75 else 2)]
        if scalar_r:
            asr = float(np.arcsin(rl.flat[0]))
            sn = np.sin(asr * (xl + 1.0) / 2.0)
            inv = 1.0 / (1.0 - sn * sn)
            with np.errstate(over="ignore", under="ignore"):
                vals = np.exp((hkl[:, None] * (sn * inv) - hs[:, None] * inv))
            bvn = vals @ wl * (asr / (4.0 * np.pi))
        else:
            asr = np.arcsin(rl)
            sn = np.sin(asr[:, None] * (xl[None, :] + 1.0) / 2.0)
            with np.errstate(over="ignore", under="ignore"):
                vals = np.exp((sn * hkl[:, None] - hs[:, None]) / (1.0 - sn * sn))
            bvn = vals @ wl * asr / (4.0 * np.pi)
        out[low] = bvn + sc.ndtr(-hl) * sc.ndtr(-kl)

    high = ~low
    if np.any(high):
        hh, kh, rh, hkh = h[high], k[high].copy(), r[high], hk[high].copy()
        neg = rh < 0
        kh[neg] = -kh[neg]
        hkh[neg] = -hkh[neg]
        bvn = np.zeros(hh.shape)
        inner = np.abs(rh) < 1.0
        if np.any(inner):
            hi, ki, ri, hki = hh[inner], kh[inner], rh[inner], hkh[inner]
            as_ = (1.0 - ri) * (1.0 + ri)
            a = np.sqrt(as_)
            bs = (hi - ki) ** 2
            c = (4.0 - hki) / 8.0
            d = (12.0 - hki) / 16.0
            with np.errstate(over="ignore", under="ignore", invalid="ignore"):
                val = a * np.exp(-(bs / as_ + hki) / 2.0) * (
                    1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0
                )
                b = np.sqrt(bs)
                tail = np.where(
                    hki > -160.0,
                    np.exp(-hki / 2.0) * np.sqrt(2.0 * np.pi) * sc.ndtr(-b / a) * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0),
                    0.0,
                )
                val = val - tail
                ah = a / 2.0
                xs = (ah[:, None] * (x[None, :] + 1.0)) ** 2
                rs = np.sqrt(1.0 - xs)
                term = np.exp(-bs[:, None] / (2.0 * xs) - hki[:, None] / (1.0 + rs)) / rs - np.exp(
                    -(bs[:, None] / xs + hki[:, None]) / 2.0
                ) * (1.0 + c[:, None] * xs * (1.0 + d[:, None] * xs))
                term = np.where(np.isfinite(term), term, 0.0)
            val = val + ah * (term @ w)
            bvn[inner] = -val / (2.0 * np.pi)
        pos = ~neg
        bvn[pos] += sc.ndtr(-np.maximum(hh[pos], kh[pos]))
        bvn[neg] = -bvn[neg] + np.maximum(0.0, sc.ndtr(-hh[neg]) - sc.ndtr(-kh[neg]))
        out[high] = bvn
    return np.clip(out, 0.0, 1.0)


def _window_nodes(lo, hi, xg, wg):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    z = mid[..., None] + half[..., None] * xg
    logw = np.log(np.maximum(half, 1e-300))[..., None] + np.log(wg)
    return z, logw


def _outer_window(h):
    """Integration window for z <= h under a standard normal weight."""
    h = np.minimum(h, 10.0)
    lo = np.where(h > -4.0, -10.0 + np.minimum(h, 0.0), h - 40.0 / np.maximum(np.abs(h), 1.0))
    return lo, h


def _bisect(f, lo, hi, iters=80):
    """Vectorized bisection for a decreasing function with f(lo) > 0 >= f(hi)."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = f(mid) > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return 0.5 * (lo + hi)


def _logconcave_log_integral(g, dg, upper, drop=40.0):
    """log of the integral of exp(g) over (-inf, upper] for log-concave g.

    The mode is located by bisection on ``dg``; each side of the mode is then
    truncated where ``g`` has fallen by ``drop`` and covered by its own
    Gauss-Legendre panel, so sharp one-sided decay is resolved.
    """
    upper = np.asarray(upper, dtype=float)
    lo = np.minimum(upper, 0.0) - 1.0
    for _ in range(200):
        need = dg(lo) <= 0
        if not np.any(need):
            break
        lo = np.where(need, lo - 2.0 * (upper - lo + 1.0), lo)
    interior = dg(upper) < 0
    mode = np.where(interior, _bisect(dg, lo, upper), upper)
    gmax = g(mode)

    def below(z):
        return g(z) - gmax + drop

    step = np.ones_like(mode)
    left = mode - step
    for _ in range(200):
        need = below(left) > 0
        if not np.any(need):
            break
        step = np.where(need, 2.0 * step, step)
        left = np.where(need, mode - step, left)
    left = _bisect(below, mode, left, iters=50)  # decreasing towards -inf

    right = upper.copy()
    if np.any(interior):
        step = np.ones_like(mode)
        cand = np.minimum(mode + step, upper)
        for _ in range(200):
            need = interior & (cand < upper) & (below(cand) > 0)
            if not np.any(need):
                break
            step = np.where(need, 2.0 * step, step)
            cand = np.where(need, np.minimum(mode + step, upper), cand)
        stop = interior & (below(cand) <= 0)
        if np.any(stop):
            cand = np.where(stop, _bisect(below, mode, cand, iters=50), cand)
        right = np.where(interior, cand, upper)

    zl, wl = _window_nodes(left, mode, _GL32_X, _GL32_W)
    parts = [wl + g(zl)]
    if np.any(interior):
        zr, wr = _window_nodes(mode, right, _GL32_X, _GL32_W)
        vr = wr + g(zr)
        vr = np.where(interior[..., None], vr, -np.inf)
        parts.append(vr)
    return logsumexp(np.concatenate(parts, axis=-1), axis=-1)


def _log_bvn_quad(h, k, rho):
    """log P(X <= h, Y <= k) by log-space quadrature; accurate in far tails."""
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    swap = h > k
    h, k = np.where(swap, k, h), np.where(swap, h, k)
    s = np.sqrt(max(1.0 - rho * rho, 1e-300))

    def g(z):
        kk = k[..., None] if z.ndim > k.ndim else k
        return -0.5 * z * z - 0.5 * _LOG_2PI + sc.log_ndtr((kk - rho * z) / s)

    def dg(z):
        a = (k - rho * z) / s
        mills = np.exp(-0.5 * a * a - 0.5 * _LOG_2PI - sc.log_ndtr(a))
        return -z - rho / s * mills

    return _logconcave_log_integral(g, dg, h)


def _log_bvn(h, k, rho):
    """log P(X <= h, Y <= k), standard margins, scalar correlation ``rho``."""
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    if rho == 0.0:
        return sc.log_ndtr(h) + sc.log_ndtr(k)
    p = _bvnu(-h, -k, rho)
    with np.errstate(divide="ignore"):
        out = np.log(p)
    tiny = p < 1e-10
    if np.any(tiny):
        out = np.array(out)
        out[tiny] = _log_bvn_quad(h[tiny], k[tiny], rho)
    return out


def _corr(cov):
    sd = np.sqrt(np.diag(cov))
    return cov / np.outer(sd, sd), sd


def _log_tvn(u, corr):
    """log P(Z <= u) for a standardized trivariate normal; u has shape (m, 3)."""
    m = u.shape[0]
    out = np.empty(m)
    first = np.argmin(u, axis=1)
    for i in range(3):
        rows = np.flatnonzero(first == i)
        if rows.size == 0:
            continue
        j, l = [c for c in range(3) if c != i]
        rij, ril = corr[i, j], corr[i, l]
        sj = np.sqrt(max(1.0 - rij * rij, 1e-300))
        sl = np.sqrt(max(1.0 - ril * ril, 1e-300))
        rc = float(np.clip((corr[j, l] - rij * ril) / (sj * sl), -1.0, 1.0))
        lo, hi = _outer_window(u[rows, i])
        z, logw = _window_nodes(lo, hi, _GL_TVN_X, _GL_TVN_W)
        hj = (u[rows, j][:, None] - rij * z) / sj
        hl = (u[rows, l][:, None] - ril * z) / sl
        base = logw - 0.5 * z * z - 0.5 * _LOG_2PI
        p = _bvnu(-hj, -hl, rc)
        with np.errstate(divide="ignore"):
            vals = base + np.log(p)
        res = logsumexp(vals, axis=-1)
        # tiny inner values only matter when the whole probability is small
        redo = res < np.log(1e-10)
        if np.any(redo):
            inner = _log_bvn(hj[redo].ravel(), hl[redo].ravel(), rc).reshape(hj[redo].shape)
            res[redo] = logsumexp(base[redo] + inner, axis=-1)
        out[rows] = res
    return out


def _check_cov(cov):
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    r = cov.shape[0]
    if cov.shape != (r, r):
        raise ValueError("covariance must be square")
    if r > 3:
        raise UnsupportedDimensionError(f"orthant probabilities are limited to r <= 3, got {r}")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise NonSPDError("covariance is not symmetric")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NonSPDError("covariance is not positive definite") from exc
    return cov


def mvn_orthant_log_cdf(upper, cov):
    """log P(Z <= upper) for Z ~ N_r(0, cov), vectorized over leading axes.

    Parameters
    ----------
    upper : array_like, shape (..., r)
    cov : array_like, shape (r, r)
        Symmetric positive definite, r <= 3.
    """
    cov = _check_cov(cov)
    r = cov.shape[0]
    upper = np.asarray(upper, dtype=float)
    if upper.shape[-1] != r:
        raise ValueError("upper and covariance dimensions disagree")
    lead = upper.shape[:-1]
    corr, sd = _corr(cov)
    u = np.clip(upper / sd, -1e4, 1e4).reshape(-1, r)
    if r == 1:
        out = sc.log_ndtr(u[:, 0])
    elif r == 2:
        out = _log_bvn(u[:, 0], u[:, 1], float(corr[0, 1]))
    else:
        out = _log_tvn(u, corr)
    out = np.asarray(out).reshape(lead)
    return out[()] if out.ndim == 0 else out


def mvn_orthant_cdf(upper, cov):
    """P(Z <= upper) for Z ~ N_r(0, cov), 1 <= r <= 3."""
    return np.exp(mvn_orthant_log_cdf(upper, cov))
