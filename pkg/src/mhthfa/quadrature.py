"""Gauss-Legendre quadrature over a GIG mixing variable.

Every one-dimensional integral over the mixing variable w is taken in
``u = log w`` on a finite window around the mode of the (possibly shifted)
GIG kernel.  The kernel ``lam*u - (psi*e^u + chi*e^-u)/2`` is concave in u,
so the window edges, where the log-kernel has fallen by ``drop`` nats, are
found by bracketing and Newton iteration.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .exceptions import DomainError

__all__ = ["QuadratureSpec", "gig_log_mode", "gig_log_window", "window_nodes"]


@dataclass(frozen=True)
class QuadratureSpec:
    """Controls the 1-D integrals over the mixing variable.

    Parameters
    ----------
    node_count : int
        Gauss-Legendre nodes per window at the first level.
    lower, upper : float
        Optional hard limits on w.  ``upper=None`` means the tail is found
        adaptively from the kernel.
    relative_tolerance : float
        Rows whose results change by more than this between ``node_count/2``
        and ``node_count`` nodes are recomputed with doubled node counts.
    max_doublings : int
        Cap on the number of doublings.  Zero disables the check entirely and
        uses a fixed ``node_count`` rule, which keeps results smooth in the
        parameters (the fitter relies on this).
    drop : float
        Log-kernel decrease (nats) that defines the window edges.
    """

    node_count: int = 96
    lower: float = 0.0
    upper: Optional[float] = None
    relative_tolerance: float = 1e-8
    max_doublings: int = 3
    drop: float = 40.0

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 2:
            raise DomainError("node_count must be an integer >= 2")
        if not self.lower >= 0:
            raise DomainError("lower must be nonnegative")
        if self.upper is not None and not self.upper > self.lower:
            raise DomainError("upper must exceed lower")
        if not self.relative_tolerance > 0:
            raise DomainError("relative_tolerance must be positive")
        if self.max_doublings < 0 or self.drop <= 0:
            raise DomainError("max_doublings must be >= 0 and drop > 0")


@lru_cache(maxsize=None)
def _legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gig_log_mode(psi, chi, lam):
    """Mode in u = log w of w^lam * exp(-(psi*w + chi/w)/2) (density of u)."""
    psi, chi, lam = np.broadcast_arrays(
        np.asarray(psi, float), np.asarray(chi, float), np.asarray(lam, float)
    )
    root = np.sqrt(lam * lam + psi * chi)
    # the two algebraically equal forms avoid cancellation on either sign of lam
    w = np.where(lam >= 0, (lam + root) / psi, chi / np.maximum(root - lam, 1e-300))
    return np.log(w)


def _log_kernel(u, psi, chi, lam):
    return lam * u - 0.5 * (psi * np.exp(u) + chi * np.exp(-u))


def _edge(mode, psi, chi, lam, sign, drop):
    """Offset from the mode (in the direction ``sign``) where the kernel drops by ``drop``."""
    top = _log_kernel(mode, psi, chi, lam)
    curv = 0.5 * (psi * np.exp(mode) + chi * np.exp(-mode))
    step = 1.0 / np.sqrt(curv)

    def deficit(off):
        with np.errstate(over="ignore"):
            return top - _log_kernel(mode + sign * off, psi, chi, lam) - drop

    hi = np.broadcast_to(step, np.broadcast(step, sign).shape).copy()
    for _ in range(200):
        short = deficit(hi) < 0
        if not np.any(short):
            break
        hi = np.where(short, 2.0 * hi, hi)
    # deficit is convex and increasing in the offset, so Newton from the
    # right of the root decreases monotonically onto it
    for _ in range(50):
        u = mode + sign * hi
        with np.errstate(over="ignore"):
            slope = -sign * (lam - 0.5 * (psi * np.exp(u) - chi * np.exp(-u)))
            step = deficit(hi) / slope
        step = np.where(np.isfinite(step) & (slope > 0), step, 0.0)
        hi = np.maximum(hi - step, 0.0)
        if np.all(np.abs(step) <= 1e-10 * (1.0 + hi)):
            break
    return hi


def gig_log_window(psi, chi, lam, drop=40.0):
    """Window ``(lo, hi)`` in u = log w covering the GIG(psi, chi, lam) kernel.

    All arguments broadcast; the window is offset-parameterized around the
    mode, so rescaling w shifts the window by exactly ``log`` of the scale.
    """
    psi, chi, lam = np.broadcast_arrays(
        np.asarray(psi, float), np.asarray(chi, float), np.asarray(lam, float)
    )
    if np.any(~(psi > 0)) or np.any(~(chi > 0)):
        raise DomainError("psi and chi must be positive")
    mode = gig_log_mode(psi, chi, lam)
    # both edges in one vectorized solve
    sign = np.stack([np.full(mode.shape, -1.0), np.ones(mode.shape)])
    left, right = _edge(mode[None], psi[None], chi[None], lam[None], sign, drop)
    return mode - left, mode + right


def window_nodes(lo, hi, n, spec=None):
    """Nodes ``u`` and log weights on ``[lo, hi]`` (broadcast over rows).

    The log weights include the Jacobian-free Gauss-Legendre weights only; the
    caller supplies the integrand in u (including the ``w`` from ``dw = w du``).
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if spec is not None:
        if spec.lower > 0:
            lo = np.maximum(lo, np.log(spec.lower))
        if spec.upper is not None:
            hi = np.minimum(hi, np.log(spec.upper))
    x, w = _legendre(int(n))
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    u = mid[..., None] + half[..., None] * x
    logw = np.log(np.maximum(half, 1e-300))[..., None] + np.log(w)
    return u, logw
