"""Mixtures of HTH factor analyzers and their ECM fitter.

The fitter works in the ``B_tilde`` parameterization.  One iteration is an
E-step at the current parameters followed by conditional maximizations of the
expected complete-data log-likelihood in the order pi, mu, B_tilde, D, Lam,
omega, lam.  The pi/mu/B_tilde/D/Lam updates are exact conditional maxima; the
omega (Newton) and lam (fixed-point) steps are accepted only if they do not
decrease the (Lam, omega, lam) part of the objective, so each sweep is a generalized
EM step and the observed log-likelihood cannot decrease.
"""

import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .estep import EStepQuantities, component_expectations
from .exceptions import (
    ComponentCollapseError,
    ConstraintViolation,
    DegenerateLikelihoodError,
    FitFailure,
    NonSPDError,
)
from .hthfa import (
    FactorComponentParams,
    _a_matrix,
    a_lambda_scalar,
    check_constraints,
    component_integrals,
    derive_component,
    sample_hthfa,
    derive_from_tilde,
    require_constraints,
    sym_sqrt,
)
from .quadrature import QuadratureSpec
from .special import d_log_bessel_k_dorder, log_bessel_k

__all__ = [
    "MixtureModel",
    "FitConfig",
    "FitResult",
    "GridEntry",
    "FIT_QUADRATURE",
    "component_log_densities",
    "observed_log_likelihood",
    "responsibilities",
    "e_step",
    "cm_step",
    "newton_omega",
    "update_lambda",
    "omega_lambda_objective",
    "shape_objective",
    "shrink_to_spd",
    "update_omega",
    "update_skewness",
    "n_free_parameters",
    "bic",
    "aitken_stop",
    "initial_models",
    "sample_mixture",
    "fit",
    "fit_from",
    "grid_search",
]

log = logging.getLogger(__name__)

# fixed rule: accurate to ~1e-12 and smooth in the parameters, so that the
# monotonicity of the likelihood trace is not masked by adaptive refinement
FIT_QUADRATURE = QuadratureSpec(node_count=48, max_doublings=0)

OMEGA_BOUNDS = (1e-4, 1e4)
LAMBDA_BOUNDS = (-50.0, 50.0)


@dataclass(frozen=True)
class MixtureModel:
    """Mixing weights plus one component per cluster, with cached transforms."""

    weights: np.ndarray
    components: Tuple[FactorComponentParams, ...]
    derived: Tuple = field(default=None, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if w.ndim != 1 or w.size != len(self.components) or np.any(w <= 0):
            raise ValueError("weights must be a positive vector with one entry per component")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", tuple(self.components))
        dims = {c.dims for c in self.components}
        if len(dims) != 1:
            raise ValueError("all components must share (p, q, r)")
        if self.derived is None:
            object.__setattr__(self, "derived", tuple(derive_component(c) for c in self.components))

    @property
    def dims(self):
        p, q, r = self.components[0].dims
        return len(self.components), p, q, r

    @classmethod
    def from_derived(cls, weights, derived):
        """Build from derived components (B is reconstructed as B_tilde A^{1/2})."""
        comps = tuple(
            FactorComponentParams(dc.mu, dc.B, dc.D, dc.Lam, dc.omega, dc.lam) for dc in derived
        )
        return cls(weights, comps, tuple(derived))

    def rederived(self):
        """Same parameters with every cached transform recomputed from B."""
        return MixtureModel(self.weights, self.components)


@dataclass(frozen=True)
class FitConfig:
    """Fitting controls; ``labels`` uses 0 for unlabelled rows and 1..G otherwise."""

    max_iterations: int = 500
    epsilon: float = 0.01
    n_starts: int = 5
    seed: int = 0
    labels: Optional[np.ndarray] = None
    kmeans_restarts: int = 5
    ascent_slack: float = 1e-8
    quadrature: QuadratureSpec = FIT_QUADRATURE

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n_starts < 1 or self.max_iterations < 1:
            raise ValueError("n_starts and max_iterations must be positive")


@dataclass
class FitResult:
    """Outcome of :func:`fit`.  ``map_labels`` are 1-based component indices."""

    model: MixtureModel
    log_likelihood_trace: np.ndarray
    bic: float
    responsibilities: np.ndarray
    map_labels: np.ndarray
    converged: bool
    iterations: int
    ascent_violations: int = 0
    start_index: int = 0
    seed: int = 0

    @property
    def log_likelihood(self):
        return float(self.log_likelihood_trace[-1])


# ---------------------------------------------------------------------------
# likelihood and responsibilities
# ---------------------------------------------------------------------------


def _check_labels(labels, n, G):
    if labels is None:
        return None
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError("labels must have one entry per row")
    if np.any((labels < 0) | (labels > G)) or np.any(labels != np.round(labels)):
        raise ValueError(f"labels must be integers in 0..{G}")
    return labels.astype(int)


def component_log_densities(X, model, spec=None):
    """(n, G) matrix of log f_HTHFA(x_i | theta_g)."""
    spec = spec or FIT_QUADRATURE
    X = np.atleast_2d(np.asarray(X, float))
    return np.column_stack([component_integrals(X, dc, spec=spec)[0] for dc in model.derived])


def _loglik_and_z(log_dens, log_pi, labels):
    joint = log_dens + log_pi
    if np.any(np.all(~np.isfinite(joint), axis=1)):
        raise DegenerateLikelihoodError("every component density underflowed for some observation")
    norm = logsumexp(joint, axis=1)
    z = np.exp(joint - norm[:, None])
    row_ll = norm
    if labels is not None:
        lab = labels > 0
        if np.any(lab):
            idx = labels[lab] - 1
            row_ll = row_ll.copy()
            row_ll[lab] = joint[lab, idx]
            z[lab] = 0.0
            z[lab, idx] = 1.0
    total = float(np.sum(row_ll))
    if not np.isfinite(total):
        raise DegenerateLikelihoodError("log-likelihood is not finite")
    return total, z


def observed_log_likelihood(data, model, labels=None, spec=None):
    """Clustering log-likelihood, with labelled rows entering through their own class."""
    X = np.atleast_2d(np.asarray(data, float))
    labels = _check_labels(labels, X.shape[0], model.dims[0])
    ll, _ = _loglik_and_z(component_log_densities(X, model, spec), np.log(model.weights), labels)
    return ll


def responsibilities(data, model, labels=None, spec=None):
    """Posterior membership probabilities (labelled rows are one-hot)."""
    X = np.atleast_2d(np.asarray(data, float))
    labels = _check_labels(labels, X.shape[0], model.dims[0])
    _, z = _loglik_and_z(component_log_densities(X, model, spec), np.log(model.weights), labels)
    return z


def e_step(X, model, labels=None, spec=None):
    """Responsibilities, all conditional expectations and the log-likelihood."""
    spec = spec or FIT_QUADRATURE
    parts = [component_expectations(X, dc, spec) for dc in model.derived]
    log_dens = np.column_stack([pt["log_dens"] for pt in parts])
    ll, z = _loglik_and_z(log_dens, np.log(model.weights), labels)

    def stack(key):
        return np.stack([pt[key] for pt in parts], axis=1)

    return EStepQuantities(
        z=z,
        a=stack("a"),
        b=stack("b"),
        c=stack("c"),
        s1=stack("s1"),
        s2=stack("s2"),
        s3=stack("s3"),
        s4=stack("s4"),
        s5=stack("s5"),
        log_dens=log_dens,
        log_likelihood=ll,
    )


# ---------------------------------------------------------------------------
# CM step
# ---------------------------------------------------------------------------


def _log_k_derivs(lam, omega):
    """log K, d/dw log K and d2/dw2 log K at (lam, omega), from the Bessel recurrences."""
    lk = log_bessel_k(lam, omega)
    ratio = np.exp(log_bessel_k(lam - 1.0, omega) - lk)
    d1 = -ratio - lam / omega  # K'/K
    k2 = 1.0 + lam * lam / (omega * omega) - d1 / omega  # K''/K
    return float(lk), float(d1), float(k2 - d1 * d1)


def _t_objective(omega, a_bar, b_bar, c_bar, lam):
    return -float(log_bessel_k(lam, omega)) + (lam - 1.0) * c_bar - 0.5 * omega * (a_bar + b_bar)


def newton_omega(omega, a_bar, b_bar, c_bar, lam, max_halvings=10):
    """One safeguarded Newton step on t(w) = -log K_lam(w) + (lam-1) c - w (a + b)/2.

    Derivatives of log K in its argument come from K' = -K_(lam-1) - (lam/w) K
    and the Bessel equation.  The step is halved (up to ``max_halvings``
    times) until t does not decrease and the result lies in [1e-4, 1e4];
    otherwise ``omega`` is returned unchanged.
    """
    lo, hi = OMEGA_BOUNDS
    _, d1, d2 = _log_k_derivs(lam, omega)
    g = -d1 - 0.5 * (a_bar + b_bar)
    h = -d2
    if not np.isfinite(g) or g == 0.0:
        return omega
    step = -g / h if h < 0 else g * omega * omega  # t is concave; fallback is a scaled ascent step
    t0 = _t_objective(omega, a_bar, b_bar, c_bar, lam)
    for _ in range(max_halvings + 1):
        cand = omega + step
        if lo <= cand <= hi:
            if _t_objective(cand, a_bar, b_bar, c_bar, lam) >= t0:
                return float(cand)
        elif cand > 0:
            cand = min(max(cand, lo), hi)
            if _t_objective(cand, a_bar, b_bar, c_bar, lam) >= t0:
                return float(cand)
        step *= 0.5
    return omega


def shape_objective(Lam, omega, lam, stats):
    """Part of the expected complete-data log-likelihood that depends on (Lam, omega, lam).

    ``stats`` holds the component sums n, a_bar, b_bar, c_bar, S1 = sum z s1,
    S3 = sum z s3, S4 = sum z s4, S5 = sum z s5 (r x q) and Sb = sum z b.
    """
    n = stats["n"]
    r = Lam.shape[1]
    a_vec = np.full(r, a_lambda_scalar(lam, omega))
    gig = n * (
        (lam - 1.0) * stats["c_bar"]
        - float(log_bessel_k(lam, omega))
        - 0.5 * omega * (stats["a_bar"] + stats["b_bar"])
    )
    S3a = np.outer(stats["S3"], a_vec)
    den = stats["S4"] - S3a - S3a.T + stats["Sb"] * np.outer(a_vec, a_vec)
    lin = float(np.trace(Lam @ (stats["S5"] - np.outer(a_vec, stats["S1"]))))
    quad = -0.5 * float(np.trace(Lam.T @ Lam @ den))
    return gig + lin + quad


def omega_lambda_objective(omega, lam, Lam, stats):
    """:func:`shape_objective` with the arguments ordered for 1-D searches."""
    return shape_objective(Lam, omega, lam, stats)


def _a_is_spd(Lam, lam, omega):
    A, _ = _a_matrix(Lam, lam, omega)
    try:
        np.linalg.cholesky(A)
        return True
    except np.linalg.LinAlgError:
        return False


def _a_bracket(lam, omega, r):
    a = a_lambda_scalar(lam, omega)
    ratio = float(np.exp(log_bessel_k(lam + 1.0, omega) - log_bessel_k(lam, omega)))
    return 1.0 - r * a * a * ratio


def shrink_to_spd(Lam, lam, omega, margin=1e-3):
    """Scale Lam toward zero so that A(Lam, lam, omega) is positive definite.

    A = I + beta Lam Lam' with a scalar bracket beta, so the largest
    admissible scale is available in closed form.  Returns ``Lam`` itself when
    it is already admissible.
    """
    if _a_is_spd(Lam, lam, omega):
        return Lam
    beta = _a_bracket(lam, omega, Lam.shape[1])
    top = float(np.linalg.eigvalsh(Lam.T @ Lam)[-1])
    if not (beta < 0 and top > 0 and np.isfinite(beta)):
        return np.zeros_like(Lam)
    scale = np.sqrt((1.0 - margin) / (-beta * top))
    out = Lam * scale
    while not _a_is_spd(out, lam, omega):
        out = 0.5 * out
    return out


def _m_value(lam, omega, Lam, stats):
    """The denominator m of the fixed-point lam update."""
    kap = float(np.exp(log_bessel_k(lam + 0.5, omega) - log_bessel_k(lam, omega)))
    dlog_kap = float(d_log_bessel_k_dorder(lam + 0.5, omega) - d_log_bessel_k_dorder(lam, omega))
    dkap = kap * dlog_kap
    dkap2 = 2.0 * kap * dkap
    r = Lam.shape[1]
    one = np.ones(r)
    L1 = Lam @ one
    term1 = np.sqrt(2.0 / np.pi) * dkap * float(L1 @ (stats["S1"] - Lam @ stats["S3"]))
    term2 = (1.0 / np.pi) * dkap2 * stats["Sb"] * float(L1 @ L1)
    return float(d_log_bessel_k_dorder(lam, omega)) + (term1 + term2) / stats["n"]


def _guarded_move(base, steps, evaluate, max_halvings=10):
    """First halving of any proposed step whose evaluation is admissible and >= base."""
    for step in steps:
        for _ in range(max_halvings + 1):
            if step != 0.0:
                out = evaluate(step)
                if out is not None and out[0] >= base:
                    return out
            step *= 0.5
    return None


def update_skewness(Lam, omega, lam, stats):
    """Conditional maximizer of Lam, backtracked toward ``Lam`` until A is positive definite."""
    r = Lam.shape[1]
    a_vec = np.full(r, a_lambda_scalar(lam, omega))
    S3a = np.outer(stats["S3"], a_vec)
    den = stats["S4"] - S3a - S3a.T + stats["Sb"] * np.outer(a_vec, a_vec)
    num = stats["S5"].T - np.outer(stats["S1"], a_vec)
    try:
        target = np.linalg.solve(den.T, num.T).T
    except np.linalg.LinAlgError:
        return Lam
    if not np.all(np.isfinite(target)):
        return Lam
    step = target - Lam
    for _ in range(40):
        if _a_is_spd(Lam + step, lam, omega):
            return Lam + step
        step = 0.5 * step
    return Lam


def _profile(Lam, omega, lam, stats):
    """Shape objective at (omega, lam) after moving Lam to its best admissible value.

    Lam is first shrunk onto the set where A is positive definite and then
    moved toward its conditional maximizer, so the pair can travel along the
    boundary of that set instead of being pinned by it.
    """
    L = update_skewness(shrink_to_spd(Lam, lam, omega), omega, lam, stats)
    return shape_objective(L, omega, lam, stats), L


def _fd_newton(f, x, base, h):
    f_plus, f_minus = f(x + h), f(x - h)
    g = (f_plus - f_minus) / (2 * h)
    c2 = (f_plus - 2 * base + f_minus) / (h * h)
    if not np.isfinite(g) or g == 0.0:
        return None
    return -g / c2 if c2 < 0 else np.sign(g) * min(abs(g), 1.0)


def update_lambda(lam, omega, Lam, stats, max_halvings=10):
    """Fixed-point update lam <- c_bar lam / m, safeguarded.

    A proposal is accepted if the shape objective, with Lam re-fitted at the
    new lam, does not decrease; otherwise the step is halved.  If no fraction
    of the fixed-point step helps (it points the wrong way when lam and m
    differ in sign), a halved Newton step on the same objective is tried.

    Returns
    -------
    (lam, Lam)
    """
    lo, hi = LAMBDA_BOUNDS
    base = shape_objective(Lam, omega, lam, stats)

    def evaluate(step):
        cand = float(lam + step)
        if not (np.isfinite(cand) and lo <= cand <= hi):
            return None
        value, L = _profile(Lam, omega, cand, stats)
        return value, cand, L

    def proposals():
        m = _m_value(lam, omega, Lam, stats)
        if np.isfinite(m) and m != 0.0:
            yield float(np.clip(stats["c_bar"] * lam / m, lo, hi)) - lam
        # the fallback costs two profile evaluations, so build it only when needed
        newton = _fd_newton(lambda t: _profile(Lam, omega, t, stats)[0], lam, base, 1e-4 * max(1.0, abs(lam)))
        if newton is not None:
            yield newton

    out = _guarded_move(base, proposals(), evaluate, max_halvings)
    if out is None:
        return lam, Lam
    return out[1], out[2]


def update_omega(omega, lam, Lam, stats, max_halvings=10):
    """Newton step on t, kept only if the shape objective (Lam re-fitted) does not decrease.

    When the Newton step on t does not help the full objective, a halved
    finite-difference Newton step on the full objective is tried.

    Returns
    -------
    (omega, Lam)
    """
    lo, hi = OMEGA_BOUNDS
    base = shape_objective(Lam, omega, lam, stats)

    def evaluate(step):
        trial = float(omega + step)
        if not (lo <= trial <= hi):
            return None
        value, L = _profile(Lam, trial, lam, stats)
        return value, trial, L

    def proposals():
        cand = newton_omega(omega, stats["a_bar"], stats["b_bar"], stats["c_bar"], lam)
        if cand != omega:
            yield cand - omega
        newton = _fd_newton(lambda t: _profile(Lam, t, lam, stats)[0], omega, base, 1e-4 * omega)
        if newton is not None:
            yield newton

    out = _guarded_move(base, proposals(), evaluate, max_halvings)
    if out is None:
        return omega, Lam
    return out[1], out[2]


def cm_step(data, eq, model, min_size=1e-8, labels=None):
    """One sweep of conditional maximizations (pi, mu, B_tilde, D, Lam, omega, lam).

    When a new omega or lam would make A indefinite, Lam is shrunk onto the
    admissible set and the move is kept only if the (Lam, omega, lam) part of
    the objective does not decrease.

    Raises
    ------
    ComponentCollapseError
        If a component's total responsibility falls below ``min_size``.
    """
    X = np.atleast_2d(np.asarray(data, float))
    n, p = X.shape
    sizes = eq.z.sum(axis=0)
    if np.any(sizes < min_size):
        raise ComponentCollapseError(f"component sizes {np.round(sizes, 3)} fall below {min_size}")
    weights = sizes / n
    weights = weights / weights.sum()
    new = []
    for g, dc in enumerate(model.derived):
        z = eq.z[:, g]
        n_g = sizes[g]
        b = eq.b[:, g]
        s1, s2, s3, s4, s5 = eq.s1[:, g], eq.s2[:, g], eq.s3[:, g], eq.s4[:, g], eq.s5[:, g]
        zb = z * b
        mu = (zb @ X - (z @ s1) @ dc.B_tilde.T) / zb.sum()
        xc = X - mu
        S2 = np.einsum("n,nij->ij", z, s2)
        num = (z[:, None] * xc).T @ s1
        try:
            Bt = np.linalg.solve(S2.T, num.T).T
        except np.linalg.LinAlgError:
            warnings.warn("singular factor second moment; ridge-regularizing", RuntimeWarning)
            Bt = np.linalg.solve(S2.T + 1e-8 * np.eye(S2.shape[0]), num.T).T
        zs1 = z[:, None] * s1
        diag = (
            np.einsum("n,ni,ni->i", zb, xc, xc)
            - 2.0 * np.einsum("ni,ni->i", xc, zs1 @ Bt.T)
            + np.einsum("ij,jk,ik->i", Bt, S2, Bt)
        )
        D = np.maximum(diag / n_g, 1e-10 * np.maximum(np.var(X, axis=0), 1e-300))
        Sb = float(zb.sum())
        stats = {
            "n": float(n_g),
            "a_bar": float(z @ eq.a[:, g]) / n_g,
            "b_bar": Sb / n_g,
            "c_bar": float(z @ eq.c[:, g]) / n_g,
            "S1": z @ s1,
            "S3": z @ s3,
            "S4": np.einsum("n,nij->ij", z, s4),
            "S5": np.einsum("n,nrq->rq", z, s5),
            "Sb": Sb,
        }
        Lam = update_skewness(dc.Lam, dc.omega, dc.lam, stats)
        omega, Lam = update_omega(dc.omega, dc.lam, Lam, stats)
        lam, Lam = update_lambda(dc.lam, omega, Lam, stats)
        new.append(derive_from_tilde(mu, Bt, D, Lam, omega, lam))
    return MixtureModel.from_derived(weights, new)


# ---------------------------------------------------------------------------
# model selection and stopping
# ---------------------------------------------------------------------------


def n_free_parameters(G, p, q, r):
    """G - 1 + G [p + q r + 2 + p q + p - q (q - 1)/2]."""
    return G - 1 + G * (p + q * r + 2 + p * q + p - q * (q - 1) // 2)


def bic(log_likelihood, dims, n):
    """2 l - rho log n (larger is better); ``dims`` is (G, p, q, r)."""
    if n <= 0:
        raise ValueError("n must be positive")
    G, p, q, r = dims
    return 2.0 * log_likelihood - n_free_parameters(G, p, q, r) * np.log(n)


def aitken_stop(l_prev2, l_prev, l_curr, epsilon):
    """Aitken-accelerated stopping rule: stop iff 0 <= l_inf - l_curr < epsilon."""
    denom = l_prev - l_prev2
    if abs(denom) < 1e-14:
        return True
    acc = (l_curr - l_prev) / denom
    if abs(1.0 - acc) < 1e-14:
        return True
    l_inf = l_prev + (l_curr - l_prev) / (1.0 - acc)
    return bool(0.0 <= l_inf - l_curr < epsilon)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def _start_rng(seed, start):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(start)]))


def _kmeans_assign(Xs, G, rng, restarts, labels):
    from sklearn.cluster import KMeans

    if labels is not None and np.all(np.isin(np.arange(1, G + 1), labels[labels > 0])):
        centres = np.stack([Xs[labels == g + 1].mean(axis=0) for g in range(G)])
        km = KMeans(n_clusters=G, init=centres, n_init=1, algorithm="lloyd")
    else:
        seed = int(rng.integers(2**31 - 1))
        km = KMeans(n_clusters=G, n_init=restarts, algorithm="lloyd", random_state=seed)
    assign = km.fit_predict(Xs)
    if labels is not None:
        lab = labels > 0
        assign = assign.copy()
        assign[lab] = labels[lab] - 1
    return assign


def _init_component(X, weights_row, q, r, rng):
    n_g = weights_row.sum()
    mu = weights_row @ X / n_g
    xc = X - mu
    cov = (weights_row[:, None] * xc).T @ xc / n_g
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:q]
    # the fitter works with B_tilde, which carries the covariance scale
    Bt = vecs[:, order] * np.sqrt(np.maximum(vals[order], 1e-12))
    D = np.maximum(np.diag(cov - Bt @ Bt.T), 1e-6)
    Lam = rng.standard_normal((q, r))
    for _ in range(60):
        A, _ = _a_matrix(Lam, 1.0, 1.0)
        if np.linalg.eigvalsh(A)[0] >= 0.5:
            break
        Lam = 0.5 * Lam
        log.info("halving initial skewness so that A is positive definite")
    B = Bt @ sym_sqrt(A)
    return FactorComponentParams(mu, B, D, Lam, 1.0, 1.0)


def initial_models(X, G, q, r, config):
    """Candidate starting models, sorted by initial log-likelihood (best first).

    Each start runs k-means (Lloyd, ``kmeans_restarts`` internal restarts) on
    the standardized data; labelled rows keep their class and, when every
    class is labelled, seed the centres.  Starts whose clusters are too small
    are dropped.
    """
    n, p = X.shape
    labels = config.labels
    sd = X.std(axis=0)
    Xs = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    min_size = max(q + 1, 2)
    out = []
    for s in range(config.n_starts):
        rng = _start_rng(config.seed, s)
        assign = _kmeans_assign(Xs, G, rng, config.kmeans_restarts, labels)
        z = np.zeros((n, G))
        z[np.arange(n), assign] = 1.0
        sizes = z.sum(axis=0)
        if np.any(sizes < min_size):
            continue
        try:
            comps = [_init_component(X, z[:, g], q, r, rng) for g in range(G)]
            model = MixtureModel(sizes / n, comps)
            ll = observed_log_likelihood(X, model, labels, config.quadrature)
        except (NonSPDError, DegenerateLikelihoodError, np.linalg.LinAlgError) as exc:
            log.info("start %d discarded: %s", s, exc)
            continue
        out.append((ll, s, model))
    out.sort(key=lambda t: (-t[0], t[1]))
    return out


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def fit_from(X, model, config, start_index=0):
    """Run ECM from a given model until the Aitken rule stops or iterations run out."""
    X = np.atleast_2d(np.asarray(X, float))
    G, p, q, r = model.dims
    labels = _check_labels(config.labels, X.shape[0], G)
    min_size = max(q + 1, 2)
    spec = config.quadrature
    eq = e_step(X, model, labels, spec)
    trace = [eq.log_likelihood]
    converged = False
    violations = 0
    iterations = 0
    for it in range(config.max_iterations):
        model = cm_step(X, eq, model, min_size=min_size)
        eq = e_step(X, model, labels, spec)
        trace.append(eq.log_likelihood)
        iterations = it + 1
        if trace[-1] < trace[-2] - config.ascent_slack:
            violations += 1
            warnings.warn(
                f"log-likelihood decreased by {trace[-2] - trace[-1]:.3e} at iteration {iterations}",
                RuntimeWarning,
            )
        if len(trace) >= 3 and aitken_stop(trace[-3], trace[-2], trace[-1], config.epsilon):
            converged = True
            break
    final = model.rederived()
    ll, z = _loglik_and_z(component_log_densities(X, final, spec), np.log(final.weights), labels)
    trace = np.asarray(trace)
    return FitResult(
        model=final,
        log_likelihood_trace=trace,
        bic=float(bic(trace[-1], (G, p, q, r), X.shape[0])),
        responsibilities=z,
        map_labels=np.argmax(z, axis=1) + 1,
        converged=converged,
        iterations=iterations,
        ascent_violations=violations,
        start_index=start_index,
        seed=config.seed,
    )


def fit(data, dims, config=None):
    """Fit a G-component MHTHFA model with (q, r) = dims[1:].

    The start with the largest initial log-likelihood is iterated; if a
    component collapses (or a transform stops being positive definite) the
    next-best start is used instead.

    Raises
    ------
    ConstraintViolation
        If (p, q, r) violate the model constraints.
    FitFailure
        If every start fails.
    """
    config = config or FitConfig()
    X = np.atleast_2d(np.asarray(data, float))
    n, p = X.shape
    G, q, r = dims
    require_constraints(p, q, r)
    if n <= G:
        raise ValueError("need more observations than components")
    if config.labels is not None:
        config = replace(config, labels=_check_labels(config.labels, n, G))
    starts = initial_models(X, G, q, r, config)
    errors = []
    for ll0, s, model in starts:
        try:
            return fit_from(X, model, config, start_index=s)
        except (ComponentCollapseError, NonSPDError, DegenerateLikelihoodError) as exc:
            log.info("start %d failed (%s); trying the next one", s, exc)
            errors.append(f"start {s}: {exc}")
    raise FitFailure("all starts failed: " + ("; ".join(errors) or "no usable initialization"))


@dataclass
class GridEntry:
    """One (G, q, r) cell of a grid search."""

    G: int
    q: int
    r: int
    result: Optional[FitResult] = None
    error: Optional[str] = None
    seconds: float = 0.0

    @property
    def bic(self):
        return self.result.bic if self.result is not None else -np.inf


def _cell_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def _run_cell(args):
    X, G, q, r, config = args
    t0 = time.perf_counter()
    try:
        res = fit(X, (G, q, r), config)
        return GridEntry(G, q, r, result=res, seconds=time.perf_counter() - t0)
    except (FitFailure, ConstraintViolation, DegenerateLikelihoodError, NonSPDError) as exc:
        return GridEntry(G, q, r, error=f"{type(exc).__name__}: {exc}", seconds=time.perf_counter() - t0)


def grid_search(data, G_set, q_set, r_set, config=None, n_jobs=1):
    """Fit every admissible (G, q, r) and rank the cells by BIC (best first).

    Cells violating the dimension constraints are skipped.  Each cell's seed
    is derived from ``(config.seed, cell index)`` so results do not depend on
    execution order.  Failed cells are kept (with ``error`` set) at the end of
    the list; :class:`FitFailure` is raised only if every cell fails.
    """
    config = config or FitConfig()
    X = np.atleast_2d(np.asarray(data, float))
    p = X.shape[1]
    cells = []
    for G in sorted(set(G_set)):
        for q in sorted(set(q_set)):
            for r in sorted(set(r_set)):
                if check_constraints(p, q, r):
                    cells.append((G, q, r))
    if not cells:
        raise ConstraintViolation("no admissible (G, q, r) cell in the grid")
    jobs = [(X, G, q, r, replace(config, seed=_cell_seed(config.seed, i))) for i, (G, q, r) in enumerate(cells)]
    if n_jobs == 1:
        entries = [_run_cell(job) for job in jobs]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            entries = list(pool.map(_run_cell, jobs))
    if all(e.result is None for e in entries):
        raise FitFailure("every grid cell failed")
    entries.sort(key=lambda e: (e.result is None, -e.bic))
    return entries


def sample_mixture(model, n, rng, latents=False):
    """Draw n rows from a fitted mixture.

    Returns ``(x, labels)`` with 1-based component labels, or
    ``(x, labels, latent)`` where ``latent`` holds ``w`` (n,), ``v`` (n, r)
    and ``u`` (n, q) in the B_tilde basis.
    """
    G, p, q, r = model.dims
    comp = rng.choice(G, size=n, p=model.weights)
    x = np.empty((n, p))
    lat = {"w": np.empty(n), "v": np.empty((n, r)), "u": np.empty((n, q))}
    for g in range(G):
        idx = np.flatnonzero(comp == g)
        if idx.size == 0:
            continue
        xs, ls = sample_hthfa(model.derived[g], model.components[g], idx.size, rng, latents=True)
        x[idx] = xs
        for key in lat:
            lat[key][idx] = ls[key]
    if latents:
        return x, comp + 1, lat
    return x, comp + 1
