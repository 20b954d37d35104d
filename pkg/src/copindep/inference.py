"""Independence test, asymptotic variance plug-ins, power and sample size.

The test rejects independence when T_n exceeds the chi-square quantile
with p = dim(theta) degrees of freedom.  Power approximation and sample
size planning follow the normal limit of sqrt(n) (T_n/2n - chi^2) with
population quantities computed by quadrature at the alternative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import optimize
from scipy.stats import chi2, norm

from . import dual_divergence as dd
from .copulas import get_model, _check_admissible, density
from .dual_divergence import DualCriterion, EstimationResult, gauss_legendre_01
from .empirical import PseudoSample, make_pseudo

__all__ = [
    "VarianceEstimates",
    "TestReport",
    "PowerPlan",
    "PseudoLikelihoodResult",
    "w_term",
    "y_term",
    "variance_estimates",
    "independence_test",
    "power_approx",
    "sample_size",
    "pseudo_mle_and_Sn",
]


@dataclass(frozen=True)
class VarianceEstimates:
    """Plug-in estimates of the asymptotic variance quantities."""

    xi_hat: float
    sigma2_hat: float
    sigma2_chi2_hat: float

    def to_dict(self):
        return {
            "xi_hat": self.xi_hat,
            "sigma2_hat": self.sigma2_hat,
            "sigma2_chi2_hat": self.sigma2_chi2_hat,
        }


@dataclass(frozen=True)
class TestReport:
    """Everything needed to reproduce one independence test."""

    t_n: float
    dof: int
    p_value: float
    alpha: float
    reject: bool | None
    theta_hat: np.ndarray
    theta0: np.ndarray
    variances: VarianceEstimates | None
    n: int
    family_id: str
    converged: bool
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "t_n": self.t_n,
            "dof": self.dof,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "theta_hat": list(map(float, np.atleast_1d(self.theta_hat))),
            "theta0": list(map(float, np.atleast_1d(self.theta0))),
            "variances": self.variances.to_dict() if self.variances else None,
            "n": self.n,
            "family": self.family_id,
            "converged": self.converged,
            "config": self.config,
        }


@dataclass(frozen=True)
class PowerPlan:
    """Sample-size plan for a target power against a fixed alternative."""

    theta_alt: np.ndarray
    alpha: float
    beta_target: float
    chi2_div: float
    sigma2_chi2: float
    n_star: int
    a: float
    b: float
    n0_numeric: float
    n0_closed_form: float
    closed_form_disagrees: bool
    family_id: str

    def to_dict(self):
        return {
            "theta_alt": list(map(float, np.atleast_1d(self.theta_alt))),
            "alpha": self.alpha,
            "beta_target": self.beta_target,
            "chi2_div": self.chi2_div,
            "sigma2_chi2": self.sigma2_chi2,
            "n_star": self.n_star,
            "a": self.a,
            "b": self.b,
            "n0_numeric": self.n0_numeric,
            "n0_closed_form": self.n0_closed_form,
            "closed_form_disagrees": self.closed_form_disagrees,
            "family": self.family_id,
        }


# ---------------------------------------------------------------------------
# indicator-restricted integrals W_i and Y_i
# ---------------------------------------------------------------------------

def _restricted_integral(dc: DualCriterion, theta, x: float, i: int, integrand,
                         order: int) -> float:
    """Integral of integrand(u1,u2)*c(u1,u2) over {u_i >= x} by mapped quadrature."""
    ti, wi = gauss_legendre_01(order)
    to, wo = gauss_legendre_01(order, x, 1.0)
    if i == 1:
        U1, U2 = np.meshgrid(to, ti, indexing="ij")
        W = np.outer(wo, wi)
    else:
        U1, U2 = np.meshgrid(ti, to, indexing="ij")
        W = np.outer(wi, wo)
    g = integrand(U1.ravel(), U2.ravel())
    c = np.asarray(density(dc.model, theta, U1.ravel(), U2.ravel()), dtype=float)
    return float(np.sum(W.ravel() * g * c))


def w_term(dc: DualCriterion, theta, x_pseudo, i: int, order: int = 32,
           form: str = "indicator") -> float:
    """W_i adjustment term at one pseudo-observation.

    ``form="indicator"`` integrates the mixed partial d^2 m / dtheta du_i
    (the definition used by the variance plug-ins).  ``form="score-product"``
    evaluates the alternative expression -integral of
    (dm/dtheta)(dm/du_i) c; the two agree at the independence point but are
    genuinely different functions elsewhere (verified numerically), so the
    indicator form is authoritative.
    """
    if dc.model.dim_theta != 1:
        raise NotImplementedError("w_term implemented for p = 1")
    x = float(np.atleast_1d(x_pseudo)[i - 1])
    if form == "indicator":
        fn = lambda a, b: dd.m_theta_u_partial(dc, theta, a, b, i)[0]
    elif form == "score-product":
        def fn(a, b):
            return -dd.m_theta(dc, theta, a, b)[0] * dd.m_u_partial(dc, theta, a, b, i)
    else:
        raise ValueError("form must be 'indicator' or 'score-product'")
    return _restricted_integral(dc, theta, x, i, fn, order)


def y_term(dc: DualCriterion, theta, x_pseudo, i: int, order: int = 32) -> float:
    """Y_i adjustment term: indicator-restricted integral of (dm/du_i) c."""
    if dc.model.dim_theta != 1:
        raise NotImplementedError("y_term implemented for p = 1")
    x = float(np.atleast_1d(x_pseudo)[i - 1])
    fn = lambda a, b: dd.m_u_partial(dc, theta, a, b, i)
    return _restricted_integral(dc, theta, x, i, fn, order)


def _per_obs_terms(dc, theta, xs: np.ndarray, i: int, integrand, order: int,
                   chunk: int = 64) -> np.ndarray:
    """Vectorized indicator-restricted integrals for many observations."""
    ti, wi = gauss_legendre_01(order)
    tg, wg = np.polynomial.legendre.leggauss(order)
    out = np.empty(len(xs))
    for start in range(0, len(xs), chunk):
        x = xs[start:start + chunk]  # (m,)
        half = 0.5 * (1.0 - x)
        to = x[:, None] + half[:, None] * (tg[None, :] + 1.0)   # (m, order)
        wo = half[:, None] * wg[None, :]
        if i == 1:
            U1 = to[:, :, None] * np.ones((1, 1, order))
            U2 = np.broadcast_to(ti[None, None, :], U1.shape)
            W = wo[:, :, None] * wi[None, None, :]
        else:
            U2 = to[:, :, None] * np.ones((1, 1, order))
            U1 = np.broadcast_to(ti[None, None, :], U2.shape)
            W = wo[:, :, None] * wi[None, None, :]
        g = integrand(U1.ravel(), U2.ravel()).reshape(U1.shape)
        c = np.asarray(
            density(dc.model, theta, U1.ravel(), U2.ravel()), dtype=float
        ).reshape(U1.shape)
        out[start:start + chunk] = np.sum(W * g * c, axis=(1, 2))
    return out


def _profile_terms(dc, theta, xs: np.ndarray, i: int, integrand,
                   n_knots: int = 33, inner_order: int = 32) -> np.ndarray:
    spline = dd._indicator_profile(dc, theta, integrand, i, n_knots, inner_order)
    return spline(xs)


def variance_estimates(dc: DualCriterion, ps: PseudoSample, theta_hat,
                       order: int = 32, method: str = "per-obs") -> VarianceEstimates:
    """Sample plug-ins for Xi, Sigma^2 and sigma^2_chi2 at theta_hat.

    Xi-hat is the mean squared theta-score at the (clamped)
    pseudo-observations; Sigma^2-hat is the sample variance of
    score + W_1 + W_2 per observation; sigma^2_chi2-hat the sample
    variance of m + Y_1 + Y_2.  ``method="per-obs"`` runs one mapped
    ``order x order`` quadrature per observation (the default contract);
    ``method="profile"`` integrates a spline profile once and evaluates it
    at the observations, which is much faster for large n.
    """
    if dc.model.dim_theta != 1:
        raise NotImplementedError("variance plug-ins implemented for p = 1")
    theta = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if not dd.theta_accepted(dc, theta):
        raise ValueError("theta_hat rejected by the density-floor check")
    pts = ps.clamped_pseudo
    u1, u2 = pts[:, 0], pts[:, 1]
    mt = dd.m_theta(dc, theta, u1, u2)[0]
    xi_hat = float(np.mean(mt * mt))

    mtu = {i: (lambda a, b, i=i: dd.m_theta_u_partial(dc, theta, a, b, i)[0]) for i in (1, 2)}
    mu = {i: (lambda a, b, i=i: dd.m_u_partial(dc, theta, a, b, i)) for i in (1, 2)}
    runner = _per_obs_terms if method == "per-obs" else _profile_terms
    if method not in ("per-obs", "profile"):
        raise ValueError("method must be 'per-obs' or 'profile'")
    kw = {"order": order} if method == "per-obs" else {"inner_order": order}
    w1 = runner(dc, theta, u1, 1, mtu[1], **kw)
    w2 = runner(dc, theta, u2, 2, mtu[2], **kw)
    sigma2_hat = float(np.var(mt + w1 + w2))

    A = dd.bias_integral(dc, theta)
    c = np.asarray(density(dc.model, theta, u1, u2), dtype=float)
    mvals = A - 0.5 * c**-2 + 0.5
    y1 = runner(dc, theta, u1, 1, mu[1], **kw)
    y2 = runner(dc, theta, u2, 2, mu[2], **kw)
    sigma2_chi2_hat = float(np.var(mvals + y1 + y2))
    return VarianceEstimates(xi_hat, sigma2_hat, sigma2_chi2_hat)


# ---------------------------------------------------------------------------
# the test
# ---------------------------------------------------------------------------

def independence_test(data, family: str, alpha: float = 0.05,
                      quad_order: int = 64, engine: str = "quadrature",
                      mc_points: int = 100_000, seed: int = 0,
                      with_variances: bool = True,
                      variance_method: str = "per-obs") -> TestReport:
    """Run the full pipeline: ranks -> estimate -> T_n -> decision.

    The decision is data, not an exit status; estimation failure yields a
    report with ``reject=None`` and diagnostics.
    """
    import warnings

    ps = make_pseudo(data)
    if ps.n < 20:
        warnings.warn(f"n = {ps.n} is below the soft floor of 20", stacklevel=2)
    model = get_model(family)
    dc = DualCriterion(model, quad_order=quad_order, engine=engine,
                       mc_points=mc_points, seed=seed)
    res = dd.estimate(dc, ps)
    t_n = dd.statistic_Tn(dc, ps, res)
    dof = model.dim_theta
    p_value = float(chi2.sf(t_n, dof))
    variances = None
    if with_variances and model.dim_theta == 1 and res.converged:
        try:
            variances = variance_estimates(dc, ps, res.theta_hat,
                                           method=variance_method)
        except Exception:
            variances = None
    reject = bool(t_n > chi2.ppf(1 - alpha, dof)) if res.converged else None
    return TestReport(
        t_n=float(t_n),
        dof=dof,
        p_value=p_value,
        alpha=alpha,
        reject=reject,
        theta_hat=res.theta_hat,
        theta0=model.theta0,
        variances=variances,
        n=ps.n,
        family_id=family,
        converged=res.converged,
        config={
            "quad_order": quad_order,
            "engine": engine,
            "mc_points": mc_points,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# power approximation and sample size
# ---------------------------------------------------------------------------

def _population_power_inputs(family: str, theta_alt, quad_order: int):
    model = get_model(family)
    theta = _check_admissible(model, theta_alt)
    if np.allclose(theta, model.theta0):
        raise ValueError("theta_alt must differ from the independence point")
    dc = DualCriterion(model, quad_order=quad_order)
    chi2_div = dd.bias_integral(dc, theta) / 2.0
    pv = dd.population_variances(dc, theta)
    return model, theta, chi2_div, pv["sigma2_chi2"]


def power_approx(theta_alt, family: str, n: int, alpha: float = 0.05,
                 quad_order: int = 64, paper_variance_convention: bool = False,
                 _inputs=None) -> float:
    """Approximate power of the level-alpha test against C_theta_alt.

    The denominator uses the standard deviation sigma_chi2 (the scaling the
    central limit theorem implies); pass ``paper_variance_convention=True``
    to divide by the variance instead, as printed in the source formula.
    """
    if _inputs is None:
        model, theta, chi2_div, s2 = _population_power_inputs(family, theta_alt, quad_order)
    else:
        model, theta, chi2_div, s2 = _inputs
    if s2 <= 0:
        raise ValueError("sigma^2_chi2 is not positive at this alternative")
    denom = s2 if paper_variance_convention else math.sqrt(s2)
    q = float(chi2.ppf(1 - alpha, model.dim_theta))
    arg = math.sqrt(n) / denom * (q / (2 * n) - chi2_div)
    return float(1.0 - norm.cdf(arg))


def sample_size(theta_alt, family: str, alpha: float = 0.05,
                beta_target: float = 0.9, quad_order: int = 64,
                paper_variance_convention: bool = False) -> PowerPlan:
    """Smallest sample size whose approximate power reaches ``beta_target``.

    Computes the root of the power equation numerically and also evaluates
    the closed-form expression n0 = ((a+b) - sqrt(a(a+2b))) / (2 chi^2);
    when the two disagree by more than one unit the numeric root wins and
    a discrepancy flag is set.
    """
    if not (alpha < beta_target < 1.0):
        raise ValueError("beta_target must lie in (alpha, 1)")
    model, theta, chi2_div, s2 = _population_power_inputs(family, theta_alt, quad_order)
    if chi2_div <= 0:
        raise ValueError("chi^2 divergence vanishes at this alternative")
    inputs = (model, theta, chi2_div, s2)

    def gap(nn):
        return power_approx(theta, family, nn, alpha, quad_order,
                            paper_variance_convention, _inputs=inputs) - beta_target

    lo, hi = 1.0, 2.0
    while gap(hi) < 0 and hi < 1e12:
        lo, hi = hi, hi * 4.0
    if gap(hi) < 0:
        raise RuntimeError("power target unreachable")
    n0_numeric = float(optimize.brentq(gap, lo, hi, xtol=1e-9, rtol=1e-12)) if gap(lo) < 0 else lo

    z = float(norm.ppf(1 - beta_target))
    a = s2 * z * z
    b = float(chi2.ppf(1 - alpha, model.dim_theta)) * chi2_div
    n0_closed = (a + b - math.sqrt(a * (a + 2 * b))) / (2 * chi2_div)
    disagrees = abs(n0_closed - n0_numeric) > 1.0

    n_star = int(math.floor(n0_numeric)) + 1
    return PowerPlan(
        theta_alt=theta,
        alpha=alpha,
        beta_target=beta_target,
        chi2_div=float(chi2_div),
        sigma2_chi2=float(s2),
        n_star=n_star,
        a=float(a),
        b=float(b),
        n0_numeric=n0_numeric,
        n0_closed_form=float(n0_closed),
        closed_form_disagrees=bool(disagrees),
        family_id=family,
    )


# ---------------------------------------------------------------------------
# pseudo-likelihood baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PseudoLikelihoodResult:
    theta_tilde: np.ndarray
    s_n: float
    boundary_flag: bool
    loglik: float

    def to_dict(self):
        return {
            "theta_tilde": list(map(float, np.atleast_1d(self.theta_tilde))),
            "s_n": self.s_n,
            "boundary_flag": self.boundary_flag,
            "loglik": self.loglik,
        }


_PMLE_CAP = 50.0
_PMLE_BOUNDARY_TOL = 1e-5


def pseudo_mle_and_Sn(data, family: str) -> PseudoLikelihoodResult:
    """Pseudo maximum likelihood on the admissible set and the ratio statistic.

    The log-likelihood sums log c_theta at the n/(n+1)-scaled pseudo-
    observations; theta is constrained to the admissible set (capped at
    50 per coordinate for unbounded families).  S_n = 2 [l(theta~) -
    l(theta0)]; for boundary families it is exactly 0 whenever theta~ is
    pinned at the independence point.
    """
    model = get_model(family)
    ps = make_pseudo(data)
    u1 = ps.pseudo_u_scaled[:, 0]
    u2 = ps.pseudo_u_scaled[:, 1]

    def negll(th_vec):
        th = np.atleast_1d(np.asarray(th_vec, dtype=float))
        try:
            c = np.asarray(density(model, th, u1, u2), dtype=float)
        except Exception:
            return 1e12
        if not np.all(np.isfinite(c)) or np.min(c) <= 0:
            return 1e12
        return -float(np.sum(np.log(c)))

    bounds = [
        (lo, min(hi, _PMLE_CAP)) for (lo, hi) in model.admissible_set
    ]
    if model.dim_theta == 1:
        res = optimize.minimize_scalar(
            lambda t: negll([t]), bounds=bounds[0], method="bounded",
            options={"xatol": 1e-10},
        )
        theta_tilde = np.array([res.x])
        # a bounded minimizer can stall a hair inside the boundary; snap when
        # the boundary value is at least as good
        for edge in bounds[0]:
            if abs(res.x - edge) < 1e-4 and negll([edge]) <= res.fun + 1e-9:
                theta_tilde = np.array([float(edge)])
        ll = -negll(theta_tilde)
    else:
        x0 = np.clip(model.theta0, [b[0] + 1e-3 for b in bounds],
                     [b[1] - 1e-3 for b in bounds])
        res = optimize.minimize(negll, x0, method="L-BFGS-B", bounds=bounds)
        theta_tilde = np.asarray(res.x)
        ll = -float(res.fun)

    ll0 = -negll(model.theta0)
    s_n = max(2.0 * (ll - ll0), 0.0)
    boundary = any(
        min(abs(theta_tilde[k] - lo), abs(theta_tilde[k] - hi)) < _PMLE_BOUNDARY_TOL
        for k, (lo, hi) in enumerate(bounds)
    )
    return PseudoLikelihoodResult(theta_tilde, float(s_n), bool(boundary), float(ll))
