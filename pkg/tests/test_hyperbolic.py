import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from mhthfa.exceptions import DegenerateTruncationError, NonSPDError, UnsupportedDimensionError
from mhthfa.gig import GigParams, gig_sample
from mhthfa.hyperbolic import (
    SkewNormalParams,
    SymHypParams,
    mahalanobis_sq,
    skew_normal_log_density,
    sym_hyp_cdf,
    sym_hyp_log_density,
    trunc_hyp_orthant_moments,
)
from mhthfa.truncnorm import truncated_normal_moments


def random_spd(rng, d, jitter=0.5):
    m = rng.normal(size=(d, d))
    return m @ m.T / d + jitter * np.eye(d)


def gig_pdf(w, psi, chi, lam):
    return stats.geninvgauss.pdf(w, lam, np.sqrt(psi * chi), scale=np.sqrt(chi / psi))


def mixture_density(x, par):
    """int phi_d(x | mu, w sigma) GIG(w) dw by adaptive quadrature."""
    d = par.mu.size
    diff = x - par.mu
    q = diff @ np.linalg.solve(par.sigma, diff)
    logdet = np.linalg.slogdet(par.sigma)[1]

    def f(w):
        return np.exp(-0.5 * q / w - 0.5 * d * np.log(2 * np.pi * w) - 0.5 * logdet) * gig_pdf(w, par.psi, par.chi, par.lam)

    return integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-11, limit=400)[0]


def sym_hyp_draws(par, n, rng):
    w = gig_sample(GigParams(par.psi, par.chi, par.lam), rng, size=n)
    z = rng.multivariate_normal(np.zeros(par.mu.size), par.sigma, size=n)
    return par.mu + np.sqrt(w)[:, None] * z


class TestMahalanobis:
    def test_zero_at_mean(self):
        assert mahalanobis_sq([1.0, 2.0], [1.0, 2.0], np.diag([3.0, 4.0])) == 0.0

    def test_identity_is_euclidean(self):
        x, mu = np.array([1.0, -2.0, 0.5]), np.array([0.2, 0.1, 0.0])
        assert mahalanobis_sq(x, mu, np.eye(3)) == pytest.approx(np.sum((x - mu) ** 2), rel=1e-15)

    def test_explicit_inverse(self, rng):
        S = random_spd(rng, 3)
        x, mu = rng.normal(size=3), rng.normal(size=3)
        oracle = (x - mu) @ np.linalg.inv(S) @ (x - mu)
        assert mahalanobis_sq(x, mu, S) == pytest.approx(oracle, rel=1e-12)

    def test_rows(self, rng):
        S = random_spd(rng, 2)
        X = rng.normal(size=(5, 2))
        np.testing.assert_allclose(mahalanobis_sq(X, np.zeros(2), S), [mahalanobis_sq(x, np.zeros(2), S) for x in X])

    def test_errors(self):
        with pytest.raises(ValueError):
            mahalanobis_sq([1.0, 2.0], [0.0], np.eye(2))
        with pytest.raises(NonSPDError):
            mahalanobis_sq([1.0, 2.0], [0.0, 0.0], np.ones((2, 2)))


class TestSymHypDensity:
    def test_p1_normalized(self):
        par = SymHypParams([0.0], [[1.0]], 1.0, 1.0, 1.0)
        f = lambda x: np.exp(sym_hyp_log_density(np.array([x]), par))  # noqa: E731
        assert integrate.quad(f, -np.inf, np.inf, epsabs=1e-12)[0] == pytest.approx(1.0, abs=1e-6)

    def test_gig_mixture_identity(self, rng):
        for _ in range(20):
            d = int(rng.integers(1, 4))
            par = SymHypParams(rng.normal(size=d), random_spd(rng, d), rng.uniform(-3, 3), rng.uniform(0.3, 4), rng.uniform(0.3, 4))
            x = par.mu + rng.normal(size=d) * 1.5
            assert np.exp(sym_hyp_log_density(x, par)) == pytest.approx(mixture_density(x, par), rel=1e-6)

    def test_symmetric(self, rng):
        par = SymHypParams(rng.normal(size=3), random_spd(rng, 3), -0.8, 1.3, 2.0)
        t = rng.normal(size=3)
        assert sym_hyp_log_density(par.mu + t, par) == pytest.approx(sym_hyp_log_density(par.mu - t, par), rel=1e-14)


class TestSymHypCdf:
    def test_median(self):
        par = SymHypParams([0.4], [[2.0]], -1.0, 0.7, 1.9)
        assert sym_hyp_cdf(np.array([0.4]), par) == pytest.approx(0.5, abs=1e-12)

    def test_upper_limit(self):
        par = SymHypParams(np.zeros(2), np.array([[1.0, 0.3], [0.3, 2.0]]), 0.5, 1.0, 1.0)
        assert sym_hyp_cdf(np.array([1e6, 1e6]), par) == pytest.approx(1.0, abs=1e-12)
        assert sym_hyp_cdf(np.array([-1e6, 0.0]), par) == pytest.approx(0.0, abs=1e-12)

    def test_r1_against_density_quadrature(self):
        par = SymHypParams([0.2], [[1.5]], 1.3, 0.8, 2.2)
        f = lambda x: np.exp(sym_hyp_log_density(np.array([x]), par))  # noqa: E731
        oracle = integrate.quad(f, -np.inf, 1.1, epsabs=1e-13)[0]
        assert sym_hyp_cdf(np.array([1.1]), par) == pytest.approx(oracle, abs=1e-9)

    def test_r2_monte_carlo(self):
        rng = np.random.default_rng(17)
        par = SymHypParams([0.1, -0.2], np.array([[1.0, 0.5], [0.5, 1.4]]), -0.5, 1.2, 0.9)
        x = np.array([0.6, 0.3])
        hits, total = 0, 0
        for _ in range(10):
            draws = sym_hyp_draws(par, 1_000_000, rng)
            hits += np.sum(np.all(draws <= x, axis=1))
            total += draws.shape[0]
        assert sym_hyp_cdf(x, par) == pytest.approx(hits / total, abs=5e-4)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), r=st.sampled_from([1, 2]), step=st.floats(0.05, 2))
    def test_monotone(self, seed, r, step):
        rng = np.random.default_rng(seed)
        par = SymHypParams(np.zeros(r), random_spd(rng, r), rng.uniform(-2, 2), rng.uniform(0.3, 3), rng.uniform(0.3, 3))
        x = rng.normal(size=r)
        lo = sym_hyp_cdf(x, par)
        hi = sym_hyp_cdf(x + step, par)
        assert 0.0 <= lo <= hi + 1e-12 <= 1.0 + 1e-12

    def test_too_many_dimensions(self):
        par = SymHypParams(np.zeros(4), np.eye(4), 1.0, 1.0, 1.0)
        with pytest.raises(UnsupportedDimensionError):
            sym_hyp_cdf(np.zeros(4), par)


class TestSkewNormal:
    def test_zero_skew(self, rng):
        S = random_spd(rng, 3)
        par = SkewNormalParams(np.zeros(3), S, np.zeros((3, 2)))
        y = rng.normal(size=3)
        assert skew_normal_log_density(y, par) == pytest.approx(stats.multivariate_normal(np.zeros(3), S).logpdf(y), rel=1e-12)

    def test_p1_normalized(self):
        par = SkewNormalParams([0.3], [[0.8]], [[1.7]])
        f = lambda y: np.exp(skew_normal_log_density(np.array([y]), par))  # noqa: E731
        assert integrate.quad(f, -np.inf, np.inf, epsabs=1e-13)[0] == pytest.approx(1.0, abs=1e-8)

    def test_hidden_truncation_sampler(self):
        # Y = mu + Lam |V| + eps reproduces the density's interval probabilities
        rng = np.random.default_rng(4)
        mu, S, L = 0.3, 0.8, 1.7
        par = SkewNormalParams([mu], [[S]], [[L]])
        y = mu + L * np.abs(rng.standard_normal(1_000_000)) + np.sqrt(S) * rng.standard_normal(1_000_000)
        edges = np.linspace(-1.5, 4.5, 11)
        f = lambda t: np.exp(skew_normal_log_density(np.array([t]), par))  # noqa: E731
        for a, b in zip(edges[:-1], edges[1:]):
            prob = integrate.quad(f, a, b)[0]
            freq = np.mean((y > a) & (y <= b))
            assert abs(freq - prob) < 4 * np.sqrt(prob * (1 - prob) / y.size) + 1e-6

    def test_invalid(self):
        with pytest.raises(NonSPDError):
            skew_normal_log_density(np.zeros(2), SkewNormalParams(np.zeros(2), -np.eye(2), np.ones((2, 1))))


class TestTruncatedHyperbolicMoments:
    def test_r1_direct_quadrature(self):
        par = SymHypParams([0.0], [[1.0]], 0.6, 1.4, 0.9)
        h = lambda y: np.exp(sym_hyp_log_density(np.array([y]), par))  # noqa: E731
        z = integrate.quad(h, 0, np.inf, epsabs=0, epsrel=1e-12)[0]
        m1 = integrate.quad(lambda y: y * h(y), 0, np.inf, epsabs=0, epsrel=1e-12)[0] / z
        m2 = integrate.quad(lambda y: y * y * h(y), 0, np.inf, epsabs=0, epsrel=1e-12)[0] / z
        mean, second = trunc_hyp_orthant_moments(par)
        assert mean[0] == pytest.approx(m1, rel=1e-8)
        assert second[0, 0] == pytest.approx(m2, rel=1e-8)

    def test_r2_rejection_sampling(self):
        rng = np.random.default_rng(9)
        par = SymHypParams([0.3, -0.2], np.array([[1.0, -0.4], [-0.4, 0.7]]), -1.2, 1.5, 0.8)
        kept = []
        count = 0
        while count < 1_000_000:
            d = sym_hyp_draws(par, 1_000_000, rng)
            d = d[np.all(d > 0, axis=1)]
            kept.append(d)
            count += d.shape[0]
        y = np.concatenate(kept)[:1_000_000]
        mean, second = trunc_hyp_orthant_moments(par)
        np.testing.assert_allclose(mean, y.mean(axis=0), rtol=0.01)
        np.testing.assert_allclose(second, y.T @ y / y.shape[0], rtol=0.01)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), r=st.sampled_from([1, 2, 3]))
    def test_covariance_psd(self, seed, r):
        rng = np.random.default_rng(seed)
        par = SymHypParams(rng.normal(size=r), random_spd(rng, r), rng.uniform(-2, 2), rng.uniform(0.3, 3), rng.uniform(0.3, 3))
        mean, second = trunc_hyp_orthant_moments(par)
        assert np.all(mean > 0)
        np.testing.assert_allclose(second, second.T, atol=1e-12)
        cov = second - np.outer(mean, mean)
        assert np.linalg.eigvalsh(cov)[0] > -1e-9 * np.abs(cov).max()

    def test_deep_orthant_reduces_to_untruncated(self):
        S = np.array([[1.0, 0.3], [0.3, 0.5]])
        mu = 8.0 * np.sqrt(np.diag(S)) * 6
        par = SymHypParams(mu, S, 2.0, 3.0, 3.0)
        ew = special.kv(3.0, 3.0) / special.kv(2.0, 3.0)
        mean, second = trunc_hyp_orthant_moments(par)
        np.testing.assert_allclose(mean, mu, rtol=1e-3)
        np.testing.assert_allclose(second, np.outer(mu, mu) + ew * S, rtol=1e-3)

    def test_degenerate(self):
        par = SymHypParams([-400.0], [[1e-4]], 5.0, 50.0, 0.01)
        with pytest.raises(DegenerateTruncationError):
            trunc_hyp_orthant_moments(par)


class TestTruncatedNormalMoments:
    def test_r1_matches_scipy(self):
        a = np.array([[-0.4], [1.3], [-3.0]])
        s2 = 2.5
        _, mean, second = truncated_normal_moments(a, [[s2]])
        for i, ai in enumerate(a[:, 0]):
            dist = stats.truncnorm(ai / np.sqrt(s2), np.inf, scale=np.sqrt(s2))
            assert mean[i, 0] == pytest.approx(dist.mean(), rel=1e-10)
            assert second[i, 0, 0] == pytest.approx(dist.moment(2), rel=1e-10)

    @pytest.mark.parametrize("r", [2, 3])
    def test_monte_carlo(self, r):
        rng = np.random.default_rng(r)
        S = random_spd(rng, r)
        a = rng.normal(size=r) * 0.5
        z = rng.multivariate_normal(np.zeros(r), S, size=4_000_000)
        z = z[np.all(z > a, axis=1)]
        log_alpha, mean, second = truncated_normal_moments(a[None], S)
        assert np.exp(log_alpha[0]) == pytest.approx(z.shape[0] / 4_000_000, rel=0.01)
        np.testing.assert_allclose(mean[0], z.mean(axis=0), atol=0.01 * np.abs(z.mean(axis=0)).max())
        np.testing.assert_allclose(second[0], z.T @ z / z.shape[0], atol=0.01 * np.abs(second[0]).max())
