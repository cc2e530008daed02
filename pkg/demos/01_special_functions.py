"""Bessel K, the GIG law and Gaussian orthant probabilities.

Everything in the model rests on these three pieces, so it is worth seeing
them on their own first.
"""

import numpy as np
from scipy import integrate

from mhthfa.gig import GigParams, gig_expected_log, gig_moment, gig_sample
from mhthfa.special import bessel_k, d_log_bessel_k_dorder, log_bessel_k, mvn_orthant_cdf

# K_{1/2} has a closed form: sqrt(pi / 2x) exp(-x)
print("K_0.5(1) =", bessel_k(0.5, 1.0), "closed form", np.sqrt(np.pi / 2) * np.exp(-1))

# the order is symmetric, and the integral representation gives an independent value
nu, x = 2.3, 1.7
direct = integrate.quad(lambda t: np.exp(-x * np.cosh(t)) * np.cosh(nu * t), 0, 12.0)[0]
print(f"K_{nu}({x}) = {bessel_k(nu, x):.12g}, K_-{nu} = {bessel_k(-nu, x):.12g}, integral = {direct:.12g}")

# large orders overflow K itself, but log K stays finite
print("log K_400(0.01) =", log_bessel_k(400.0, 0.01))
try:
    bessel_k(400.0, 0.01)
except OverflowError as exc:
    print("bessel_k reports:", exc)

# the order derivative feeds E[log W]
print("d/dnu log K_nu(2) at nu = 1.2:", d_log_bessel_k_dorder(1.2, 2.0))

# GIG(psi, chi, lam): moments come from Bessel ratios; compare with sampling
par = GigParams(psi=1.5, chi=0.8, lam=-0.7)
draws = gig_sample(par, np.random.default_rng(0), size=200_000)
for t in (1, -1):
    print(f"E[W^{t:+d}] exact {gig_moment(par, t):.5f}   sample {np.mean(draws ** t):.5f}")
print(f"E[log W] exact {gig_expected_log(par):.5f}   sample {np.mean(np.log(draws)):.5f}")

# orthant probabilities P(Y <= u) for Y ~ N(0, S), r = 1, 2, 3
S = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, -0.3], [0.2, -0.3, 1.0]])
for r in (1, 2, 3):
    print(f"r={r}: P(Y <= 0) = {mvn_orthant_cdf(np.zeros(r), S[:r, :r]):.6f}")
Y = np.random.default_rng(1).multivariate_normal(np.zeros(3), S, size=400_000)
print("Monte Carlo, r=3:", np.mean(np.all(Y <= 0, axis=1)))
