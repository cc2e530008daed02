import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from conftest import admissible_component
from mhthfa.estep import (
    component_expectations,
    expected_log_w,
    expected_u_moments,
    expected_v_moments,
    expected_w_and_inv,
    factor_moments,
)
from mhthfa.fit import MixtureModel, e_step
from mhthfa.gig import GigParams, gig_expected_log, gig_moment
from mhthfa.hthfa import FactorComponentParams, derive_component, sample_hthfa
from oracles import latent_monte_carlo, nested_quadrature, package_expectations, relative_errors


def conditional_w_oracle(x, dc, f):
    """E[f(W) | x] for r = 1 by adaptive quadrature over w, written from the definitions."""
    p = dc.dims[0]
    diff = x - dc.r_vec
    Om_inv = np.linalg.inv(dc.omega_mat)
    delta = diff @ Om_inv @ diff
    k = float(dc.alpha[:, 0] @ Om_inv @ diff)
    sd = np.sqrt(dc.delta_mat[0, 0])
    lam_p = dc.lam - p / 2
    om = dc.omega
    mode = ((lam_p - 1) + np.sqrt((lam_p - 1) ** 2 + om * (om + delta))) / om

    def kernel(w):
        return w ** (lam_p - 1) * np.exp(-0.5 * (om * w + (om + delta) / w) - (lam_p - 1) * np.log(mode)) * special.ndtr(k / np.sqrt(w) / sd)

    def integral(g):
        parts = [(0, mode), (mode, 10 * mode), (10 * mode, np.inf)]
        return sum(integrate.quad(lambda w: g(w) * kernel(w), lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0] for lo, hi in parts)

    return integral(f) / integral(lambda w: 1.0)


def unskewed_component(rng, p=4, q=2):
    return FactorComponentParams(rng.normal(size=p), rng.normal(size=(p, q)), rng.uniform(0.3, 1, p), np.zeros((q, 1)), 1.7, 0.6)


class TestWMoments:
    def test_zero_skew_reduces_to_gig(self, rng):
        par = unskewed_component(rng)
        dc = derive_component(par)
        x = rng.normal(size=4)
        diff = x - par.mu
        delta = diff @ np.linalg.solve(dc.sigma, diff)
        g = GigParams(par.omega, par.omega + delta, par.lam - 2.0)
        a, b = expected_w_and_inv(x, dc)
        assert a == pytest.approx(gig_moment(g, 1), rel=1e-10)
        assert b == pytest.approx(gig_moment(g, -1), rel=1e-10)

    def test_quadrature_oracle(self, rng):
        par = admissible_component(rng, 4, 2, 1)
        dc = derive_component(par)
        x = sample_hthfa(dc, par, 1, rng)[0]
        a, b = expected_w_and_inv(x, dc)
        assert a == pytest.approx(conditional_w_oracle(x, dc, lambda w: w), rel=1e-6)
        assert b == pytest.approx(conditional_w_oracle(x, dc, lambda w: 1 / w), rel=1e-6)
        assert expected_log_w(x, dc) == pytest.approx(conditional_w_oracle(x, dc, np.log), rel=1e-6, abs=1e-8)

    def test_batched_path_agrees(self, rng):
        par = admissible_component(rng, 5, 2, 2)
        dc = derive_component(par)
        X = sample_hthfa(dc, par, 4, rng)
        out = component_expectations(X, dc)
        for i, x in enumerate(X):
            a, b = expected_w_and_inv(x, dc)
            np.testing.assert_allclose([a, b], [out["a"][i], out["b"][i]], rtol=1e-8)
            np.testing.assert_allclose(expected_log_w(x, dc), out["c"][i], rtol=1e-8, atol=1e-10)

    def test_lam_omega_checked(self, rng):
        dc = derive_component(admissible_component(rng, 4, 2, 1))
        with pytest.raises(ValueError):
            expected_w_and_inv(np.zeros(4), dc, lam=dc.lam + 0.1)


class TestLogW:
    def test_reduction_to_gig_log_moment(self, rng):
        par = unskewed_component(rng)
        dc = derive_component(par)
        # at x = r_vec the distance vanishes, so W | x ~ GIG(omega, omega, lam - p/2)
        val = expected_log_w(dc.r_vec, dc)
        assert val == pytest.approx(gig_expected_log(GigParams(par.omega, par.omega, par.lam - 2.0)), abs=1e-8)

    def test_increases_with_distance(self, rng):
        par = unskewed_component(rng)
        dc = derive_component(par)
        direction = rng.normal(size=4)
        vals = [expected_log_w(dc.r_vec + t * direction, dc) for t in np.linspace(0, 5, 11)]
        assert np.all(np.diff(vals) > 0)


class TestVMoments:
    def test_agrees_with_batched_expectations(self, rng):
        for r in (1, 2, 3):
            par = admissible_component(rng, 6, 3, r)
            dc = derive_component(par)
            x = sample_hthfa(dc, par, 1, rng)[0]
            s3, s4 = expected_v_moments(x, dc)
            out = component_expectations(x[None], dc)
            np.testing.assert_allclose(s3, out["s3"][0], rtol=1e-7)
            np.testing.assert_allclose(s4, out["s4"][0], rtol=1e-7)

    def test_nested_quadrature(self, rng):
        par = admissible_component(rng, 3, 1, 1)
        dc = derive_component(par)
        x = sample_hthfa(dc, par, 1, rng)[0]
        ref = nested_quadrature(x, dc)
        s3, s4 = expected_v_moments(x, dc)
        np.testing.assert_allclose(s3, ref["s3"], rtol=1e-6)
        np.testing.assert_allclose(s4, ref["s4"], rtol=1e-6)


class TestUMoments:
    def test_zero_skew_is_factor_analysis(self, rng):
        par = unskewed_component(rng, p=5, q=2)
        dc = derive_component(par)
        x = rng.normal(size=5)
        b = 1.3
        s1, s2, s5 = expected_u_moments(x, dc, np.array([0.4]), np.array([[0.5]]), b)
        Bt = dc.B_tilde
        C = np.linalg.inv(np.eye(2) + Bt.T @ np.diag(1 / dc.D) @ Bt)
        d = Bt.T @ np.diag(1 / dc.D) @ (x - par.mu)
        np.testing.assert_allclose(s1, b * C @ d, rtol=1e-12)
        np.testing.assert_allclose(s2, C @ (b * np.outer(d, d) @ C + np.eye(2)), rtol=1e-12)
        np.testing.assert_allclose(s5, 0.4 * (C @ d)[None, :], rtol=1e-12)

    def test_large_noise_limit(self, rng):
        base = admissible_component(rng, 5, 2, 1)
        s3, s4, b = np.array([0.8]), np.array([[1.1]]), 0.9
        x = rng.normal(size=5)
        errs = []
        for scale in (1e2, 1e4, 1e6, 1e8):
            par = FactorComponentParams(base.mu, base.B, base.D * scale, base.Lam, base.omega, base.lam)
            dc = derive_component(par)
            s1, _, _ = expected_u_moments(x, dc, s3, s4, b)
            errs.append(np.max(np.abs(s1 - dc.Lam @ (s3 - dc.a_lambda * b))))
        assert errs[-1] < 1e-6
        assert np.all(np.diff(errs) < 0)


class TestOracles:
    """Every expectation against nested quadrature and latent Monte Carlo."""

    @pytest.mark.parametrize("p,q", [(2, 1), (4, 2)])
    def test_nested_quadrature(self, rng, p, q):
        par = admissible_component(rng, p, q, 1)
        dc = derive_component(par)
        x = sample_hthfa(dc, par, 1, rng)[0]
        errs = relative_errors(package_expectations(x, dc), nested_quadrature(x, dc))
        assert max(errs.values()) < 1e-6, errs

    @pytest.mark.parametrize("r", [1, 2, 3])
    def test_latent_monte_carlo(self, r):
        rng = np.random.default_rng(100 + r)
        par = admissible_component(rng, 6, 3, r)
        dc = derive_component(par)
        x = sample_hthfa(dc, par, 1, rng)[0]
        mc, ess = latent_monte_carlo(x, dc, 4_000_000, rng)
        errs = relative_errors(package_expectations(x, dc), mc)
        assert ess > 10_000
        assert max(errs.values()) < 0.015, errs


class TestInvariants:
    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31), r=st.sampled_from([1, 2, 3]))
    def test_consistency(self, seed, r):
        rng = np.random.default_rng(seed)
        par = admissible_component(rng, 7, 3, r)
        dc = derive_component(par)
        X = sample_hthfa(dc, par, 5, rng) + rng.normal(size=(5, 7))
        out = component_expectations(X, dc)
        assert np.all(out["b"] > 0)
        assert np.all(out["a"] * out["b"] >= 1 - 1e-10)
        for i in range(5):
            b = out["b"][i]
            for m, s in (("s1", "s2"), ("s3", "s4")):
                S = out[s][i]
                np.testing.assert_allclose(S, S.T, atol=1e-12)
                cov = S - np.outer(out[m][i], out[m][i]) / b
                assert np.linalg.eigvalsh(cov)[0] > -1e-9 * np.abs(S).max()

    def test_factor_moments_shapes(self, rng):
        par = admissible_component(rng, 7, 3, 2)
        dc = derive_component(par)
        n = 4
        s1, s2, s5 = factor_moments(rng.normal(size=(n, 7)), dc, np.ones((n, 2)), np.tile(np.eye(2), (n, 1, 1)), np.ones(n))
        assert s1.shape == (n, 3) and s2.shape == (n, 3, 3) and s5.shape == (n, 2, 3)

    def test_mixture_e_step(self, rng):
        comps = [admissible_component(rng, 5, 2, 1, shift=s) for s in (0.0, 3.0)]
        model = MixtureModel(np.array([0.4, 0.6]), comps)
        X = rng.normal(size=(30, 5)) + 1.5
        eq = e_step(X, model)
        np.testing.assert_allclose(eq.z.sum(axis=1), 1.0, rtol=1e-12)
        assert eq.s2.shape == (30, 2, 2, 2) and eq.s5.shape == (30, 2, 1, 2)
        labels = np.zeros(30, int)
        labels[:5] = 2
        eq = e_step(X, model, labels=labels)
        np.testing.assert_array_equal(eq.z[:5], np.tile([0.0, 1.0], (5, 1)))
