"""One hidden-truncation hyperbolic factor analyzer.

A component is X = mu + B_tilde U + sqrt(W) e where U carries the skewness
through a half-normal V.  Here we build one, look at its derived transforms,
sample from it and check the density against a histogram.
"""

import numpy as np

from mhthfa.hthfa import FactorComponentParams, check_constraints, derive_component, hthfa_log_density, sample_hthfa

p, q, r = 6, 2, 1
print("(p, q, r) admissible:", bool(check_constraints(p, q, r)))
print("(4, 2, 1) admissible:", bool(check_constraints(4, 2, 1)), check_constraints(4, 2, 1).failed)

rng = np.random.default_rng(3)
params = FactorComponentParams(
    mu=np.zeros(p),
    B=0.8 * rng.normal(size=(p, q)),
    D=np.full(p, 0.3),
    Lam=np.array([[1.2], [-0.6]]),
    omega=1.5,
    lam=-0.5,
)
dc = derive_component(params)
print("a_lambda =", dc.a_lambda, " eigenvalues of A:", np.linalg.eigvalsh(dc.A).round(3))
print("skewness direction alpha =", dc.alpha.ravel().round(3))

X, lat = sample_hthfa(dc, params, 50_000, rng, latents=True)
# the location mu is also the mean: the skew term is centred by a_lambda
print("sample mean", X.mean(axis=0).round(3))
print("third moment along alpha:", np.mean(((X - X.mean(axis=0)) @ dc.alpha[:, 0]) ** 3).round(3))

# skewness in the density: the mode sits on the -alpha side of the mean and
# the long tail on the +alpha side
step = dc.alpha[:, 0] / np.linalg.norm(dc.alpha[:, 0])
for t in (1.0, 4.0, 8.0):
    up, down = hthfa_log_density(params.mu + t * step, dc), hthfa_log_density(params.mu - t * step, dc)
    print(f"log f(mu + {t} e) = {up:.3f}   log f(mu - {t} e) = {down:.3f}")
print("latent W mean:", lat["w"].mean().round(4))
