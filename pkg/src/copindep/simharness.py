"""Seeded Monte Carlo experiments: null calibration, power, estimator law.

Replications are independent; each derives its own sub-seed from
(seed, replication index) through a SplitMix64-style integer hash, so any
single replication can be replayed and results are identical across
thread counts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2, norm

from . import dual_divergence as dd
from .copulas import get_model, sample
from .dual_divergence import DualCriterion
from .empirical import make_pseudo
from .inference import power_approx, variance_estimates

__all__ = [
    "derive_subseed",
    "SimulationSummary",
    "PowerSimResult",
    "EstimatorSimResult",
    "simulate_null",
    "simulate_power",
    "simulate_estimator",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def derive_subseed(seed: int, index: int) -> int:
    """64-bit mix of (seed, replication index): SplitMix64 finalizer."""
    z = ((seed & _MASK64) + _GOLDEN * (index + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class SimulationSummary:
    family_id: str
    theta_true: list
    n: int
    replications: int
    statistics: np.ndarray  # sorted T_n values of successful runs
    ks_distance: float
    rejection_rates: dict
    failures: int
    failed_subseeds: list
    seed: int
    dof: int

    def ecdf_table(self):
        """Rows (t, ECDF(t), chi2_cdf(t)) at the sorted statistic values."""
        t = self.statistics
        k = len(t)
        ecdf = np.arange(1, k + 1) / k if k else np.array([])
        return np.column_stack([t, ecdf, chi2.cdf(t, self.dof)]) if k else np.empty((0, 3))

    def to_dict(self):
        return {
            "family": self.family_id,
            "theta_true": self.theta_true,
            "n": self.n,
            "replications": self.replications,
            "ks_distance": self.ks_distance,
            "rejection_rates": {str(a): r for a, r in self.rejection_rates.items()},
            "failures": self.failures,
            "failed_subseeds": self.failed_subseeds,
            "seed": self.seed,
            "dof": self.dof,
            "statistics": [float(t) for t in self.statistics],
        }


def _ks_to_chi2(sorted_t: np.ndarray, dof: int) -> float:
    k = len(sorted_t)
    if k == 0:
        return float("nan")
    ref = chi2.cdf(sorted_t, dof)
    up = np.max(np.arange(1, k + 1) / k - ref)
    down = np.max(ref - np.arange(0, k) / k)
    return float(max(up, down))


def _run_replications(worker, replications: int, threads: int):
    results = [None] * replications
    if threads <= 1:
        for idx in range(replications):
            results[idx] = worker(idx)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for idx, out in zip(range(replications), pool.map(worker, range(replications))):
                results[idx] = out
    return results


def simulate_null(family: str, n: int, replications: int, seed: int,
                  alphas=(0.05,), threads: int = 1,
                  quad_order: int = 64) -> SimulationSummary:
    """Null distribution of T_n versus its chi-square limit.

    Each replication draws n independent uniform pairs (exact independence
    regardless of the family), runs the estimate and records T_n.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    model = get_model(family)
    dc = DualCriterion(model, quad_order=quad_order)
    dof = model.dim_theta

    def worker(idx):
        sub = derive_subseed(seed, idx)
        rng = np.random.default_rng(sub)
        data = rng.random((n, 2))
        ps = make_pseudo(data, keep_raw=False)
        try:
            res = dd.estimate(dc, ps)
            if not res.converged:
                return ("fail", sub)
            return ("ok", dd.statistic_Tn(dc, ps, res))
        except Exception:
            return ("fail", sub)

    results = _run_replications(worker, replications, threads)
    stats = np.sort(np.array([r[1] for r in results if r[0] == "ok"]))
    failed = [int(r[1]) for r in results if r[0] == "fail"]
    rates = {
        float(a): float(np.mean(stats > chi2.ppf(1 - a, dof))) if len(stats) else float("nan")
        for a in alphas
    }
    return SimulationSummary(
        family_id=family,
        theta_true=list(map(float, model.theta0)),
        n=n,
        replications=replications,
        statistics=stats,
        ks_distance=_ks_to_chi2(stats, dof),
        rejection_rates=rates,
        failures=len(failed),
        failed_subseeds=failed,
        seed=seed,
        dof=dof,
    )


@dataclass(frozen=True)
class PowerSimResult:
    family_id: str
    theta_true: list
    n: int
    replications: int
    alpha: float
    rejection_rate: float
    power_prediction: float
    failures: int
    seed: int

    def to_dict(self):
        return {
            "family": self.family_id,
            "theta_true": self.theta_true,
            "n": self.n,
            "replications": self.replications,
            "alpha": self.alpha,
            "rejection_rate": self.rejection_rate,
            "power_prediction": self.power_prediction,
            "failures": self.failures,
            "seed": self.seed,
        }


def simulate_power(family: str, theta_true, n: int, replications: int,
                   seed: int, alpha: float = 0.05, threads: int = 1,
                   quad_order: int = 64) -> PowerSimResult:
    """Empirical rejection rate under C_theta_true next to the predicted power."""
    model = get_model(family)
    dc = DualCriterion(model, quad_order=quad_order)
    dof = model.dim_theta
    q = float(chi2.ppf(1 - alpha, dof))
    theta = np.atleast_1d(np.asarray(theta_true, dtype=float))

    def worker(idx):
        sub = derive_subseed(seed, idx)
        data = sample(model, theta, n, sub)
        ps = make_pseudo(data, keep_raw=False)
        try:
            res = dd.estimate(dc, ps)
            if not res.converged:
                return None
            return dd.statistic_Tn(dc, ps, res) > q
        except Exception:
            return None

    results = _run_replications(worker, replications, threads)
    ok = [r for r in results if r is not None]
    if np.allclose(theta, model.theta0):
        prediction = alpha
    else:
        prediction = power_approx(theta, family, n, alpha, quad_order=quad_order)
    return PowerSimResult(
        family_id=family,
        theta_true=list(map(float, theta)),
        n=n,
        replications=replications,
        alpha=alpha,
        rejection_rate=float(np.mean(ok)) if ok else float("nan"),
        power_prediction=float(prediction),
        failures=len(results) - len(ok),
        seed=seed,
    )


@dataclass(frozen=True)
class EstimatorSimResult:
    family_id: str
    theta_true: list
    n: int
    replications: int
    bias: float
    sd: float
    coverage: float
    theta_hats: np.ndarray = field(repr=False)
    failures: int = 0
    seed: int = 0

    def to_dict(self):
        return {
            "family": self.family_id,
            "theta_true": self.theta_true,
            "n": self.n,
            "replications": self.replications,
            "bias": self.bias,
            "sd": self.sd,
            "coverage": self.coverage,
            "failures": self.failures,
            "seed": self.seed,
            "theta_hats": [float(t) for t in self.theta_hats],
        }


def simulate_estimator(family: str, theta_true, n: int, replications: int,
                       seed: int, threads: int = 1, quad_order: int = 64,
                       wy_order: int = 32) -> EstimatorSimResult:
    """Sampling distribution of theta-hat and coverage of the CLT interval.

    Coverage counts how often theta_true falls inside
    theta_hat +- z_0.975 (Sigma-hat / Xi-hat) / sqrt(n).  Per-observation
    variance terms use the fast profile quadrature.
    """
    model = get_model(family)
    if model.dim_theta != 1:
        raise NotImplementedError("estimator simulation implemented for p = 1")
    dc = DualCriterion(model, quad_order=quad_order)
    theta = np.atleast_1d(np.asarray(theta_true, dtype=float))
    z = float(norm.ppf(0.975))

    def worker(idx):
        sub = derive_subseed(seed, idx)
        if np.allclose(theta, model.theta0):
            rng = np.random.default_rng(sub)
            data = rng.random((n, 2))
        else:
            data = sample(model, theta, n, sub)
        ps = make_pseudo(data, keep_raw=False)
        try:
            res = dd.estimate(dc, ps)
            if not res.converged:
                return None
            ve = variance_estimates(dc, ps, res.theta_hat, order=wy_order,
                                    method="profile")
            se = math.sqrt(ve.sigma2_hat) / max(ve.xi_hat, 1e-300) / math.sqrt(n)
            th = float(res.theta_hat[0])
            covered = abs(th - float(theta[0])) <= z * se
            return th, covered
        except Exception:
            return None

    results = _run_replications(worker, replications, threads)
    ok = [r for r in results if r is not None]
    ths = np.array([r[0] for r in ok])
    cov = np.array([r[1] for r in ok])
    return EstimatorSimResult(
        family_id=family,
        theta_true=list(map(float, theta)),
        n=n,
        replications=replications,
        bias=float(np.mean(ths) - theta[0]) if len(ths) else float("nan"),
        sd=float(np.std(ths, ddof=1)) if len(ths) > 1 else float("nan"),
        coverage=float(np.mean(cov)) if len(cov) else float("nan"),
        theta_hats=ths,
        failures=len(results) - len(ok),
        seed=seed,
    )
