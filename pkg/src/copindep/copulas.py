"""Parametric bivariate copula families with extended (possibly signed) densities.

Each family provides the copula CDF on its admissible parameter set, the
density as the closed-form mixed partial of the CDF, derivatives of the
density with respect to the parameter, and an exact sampler based on
conditional-distribution inversion.

The density formulas remain evaluable on an enlarged parameter region
(``extended_bounds``) that contains the independence point in its
interior.  Outside the admissible set a "density" may take negative
values or vanish on part of the unit square; downstream code screens such
parameters numerically (see :mod:`copindep.dual_divergence`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

__all__ = [
    "CopulaModel",
    "ParameterError",
    "DomainError",
    "get_model",
    "available_families",
    "density",
    "cdf",
    "dtheta_density",
    "conditional_cdf",
    "sample",
]

# parameter values closer to the independence point than this are snapped
# onto it so that the density is exactly the uniform density there
_INDEP_TOL = 1e-10


class ParameterError(ValueError):
    """Raised when a parameter vector is outside the allowed region."""


class DomainError(ValueError):
    """Raised when (u1, u2) is outside the domain of an operation."""


@dataclass(frozen=True)
class CopulaModel:
    """A parametric copula family.

    Attributes
    ----------
    family_id : str
        Registry name, e.g. ``"clayton"``.
    dim_theta : int
        Dimension p of the parameter vector.
    theta0 : np.ndarray
        Independence point: ``cdf(theta0, u, v) == u*v``.
    admissible_set : tuple of (low, high)
        Per-coordinate closed bounds of the admissible set where the
        family is a genuine copula.
    extended_bounds : tuple of (low, high)
        Per-coordinate open bounds of the enlarged search region; contains
        ``theta0`` in its interior.
    corner_unbounded : bool
        True when the density is unbounded or degenerate at corners of the
        unit square, requiring interior evaluation points.
    """

    family_id: str
    dim_theta: int
    theta0: np.ndarray
    admissible_set: tuple
    extended_bounds: tuple
    corner_unbounded: bool = True
    _cdf: Callable = field(repr=False, default=None)
    _density: Callable = field(repr=False, default=None)
    _cond_cdf: Callable = field(repr=False, default=None)
    _dtheta: Callable = field(repr=False, default=None)  # analytic, optional
    _sampler: Callable = field(repr=False, default=None)  # closed form, optional


def _as_theta(model: CopulaModel, theta) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if th.shape != (model.dim_theta,):
        raise ParameterError(
            f"{model.family_id}: expected {model.dim_theta} parameter(s), got {th.shape}"
        )
    return th


def _check_extended(model: CopulaModel, theta) -> np.ndarray:
    th = _as_theta(model, theta)
    for k, (lo, hi) in enumerate(model.extended_bounds):
        if not (lo < th[k] < hi):
            raise ParameterError(
                f"{model.family_id}: theta[{k}]={th[k]} outside extended bounds ({lo}, {hi})"
            )
    return th


def _check_admissible(model: CopulaModel, theta) -> np.ndarray:
    th = _as_theta(model, theta)
    for k, (lo, hi) in enumerate(model.admissible_set):
        if not (lo <= th[k] <= hi):
            raise ParameterError(
                f"{model.family_id}: theta[{k}]={th[k]} outside admissible set [{lo}, {hi}]"
            )
    return th


def _is_indep(model: CopulaModel, th: np.ndarray) -> bool:
    return bool(np.all(np.abs(th - model.theta0) < _INDEP_TOL))


def _check_interior_u(u1, u2, open_domain: bool):
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    lo, hi = (0.0, 1.0)
    if open_domain:
        if np.any(u1 <= lo) or np.any(u1 >= hi) or np.any(u2 <= lo) or np.any(u2 >= hi):
            raise DomainError("u1, u2 must lie strictly inside (0, 1) for this family")
    else:
        if np.any(u1 < lo) or np.any(u1 > hi) or np.any(u2 < lo) or np.any(u2 > hi):
            raise DomainError("u1, u2 must lie in [0, 1]")
    return u1, u2


# ---------------------------------------------------------------------------
# FGM (interior independence point)
# ---------------------------------------------------------------------------

def _fgm_cdf(th, u, v):
    t = th[0]
    return u * v + t * u * v * (1 - u) * (1 - v)


def _fgm_density(th, u, v):
    t = th[0]
    return 1.0 + t * (1 - 2 * u) * (1 - 2 * v)


def _fgm_cond(th, u, v):
    # dC/du1, increasing in v for |theta| <= 1
    t = th[0]
    return v + t * v * (1 - v) * (1 - 2 * u)


def _fgm_dtheta(th, u, v, order):
    ab = (1 - 2 * u) * (1 - 2 * v)
    if order == 1:
        return ab[None, ...] if np.ndim(ab) else np.array([ab])
    z = np.zeros_like(np.asarray(ab, dtype=float))
    return z[None, None, ...] if np.ndim(ab) else np.array([[z]])


def _fgm_sample(th, n, rng):
    t = th[0]
    u = rng.random(n)
    w = rng.random(n)
    a = t * (1 - 2 * u)
    # root in [0,1] of -a v^2 + (1+a) v - w = 0
    with np.errstate(invalid="ignore"):
        v = (1 + a - np.sqrt((1 + a) ** 2 - 4 * a * w)) / (2 * a)
    v = np.where(np.abs(a) < 1e-12, w, v)
    return np.column_stack([u, v])


# ---------------------------------------------------------------------------
# Clayton (standard sign convention; see module notes)
# ---------------------------------------------------------------------------

def _clayton_cdf(th, u, v):
    t = th[0]
    if abs(t) < _INDEP_TOL:
        return u * v
    s = np.power(u, -t) + np.power(v, -t) - 1.0
    return np.power(np.maximum(s, 0.0), -1.0 / t)


def _clayton_logc_parts(t, u, v):
    """Return (c, g', g'') with g = log c, handling the removable theta->0 limit.

    For s = u^-t + v^-t - 1 <= 0 (possible only for t < 0) the density is 0.
    """
    x = -np.log(u)
    y = -np.log(v)
    if abs(t) < 1e-4:
        # series: log c = t*(1-x)(1-y) + t^2*(4xy - xy(x+y) - 1)/2 + O(t^3)
        a1 = (1 - x) * (1 - y)
        b2 = 2 * x * y - x * y * (x + y) / 2.0 - 0.5
        gp = a1 + 2 * t * b2
        gpp = 2 * b2
        c = np.exp(t * a1 + t * t * b2)
        return c, gp, gpp
    sm1 = np.expm1(t * x) + np.expm1(t * y)
    s = 1.0 + sm1
    bad = s <= 0.0
    s_safe = np.where(bad, 1.0, s)
    logs = np.log1p(np.where(bad, 0.0, sm1))
    e1 = np.exp(t * x)
    e2 = np.exp(t * y)
    logc = np.log1p(t) + (1 + t) * (x + y) - (2 + 1 / t) * logs
    c = np.exp(logc)
    sp = x * e1 + y * e2
    spp = x * x * e1 + y * y * e2
    gp = 1 / (1 + t) + (x + y) + logs / t**2 - (2 + 1 / t) * sp / s_safe
    gpp = (
        -1 / (1 + t) ** 2
        - 2 * logs / t**3
        + 2 * sp / (s_safe * t**2)
        - (2 + 1 / t) * (spp / s_safe - (sp / s_safe) ** 2)
    )
    c = np.where(bad, 0.0, c)
    return c, np.where(bad, 0.0, gp), np.where(bad, 0.0, gpp)


def _clayton_density(th, u, v):
    c, _, _ = _clayton_logc_parts(th[0], u, v)
    return c


def _clayton_dtheta(th, u, v, order):
    c, gp, gpp = _clayton_logc_parts(th[0], u, v)
    d1 = c * gp
    if order == 1:
        return d1[None, ...] if np.ndim(d1) else np.array([d1])
    d2 = c * (gpp + gp * gp)
    return d2[None, None, ...] if np.ndim(d2) else np.array([[d2]])


def _clayton_cond(th, u, v):
    t = th[0]
    if abs(t) < _INDEP_TOL:
        return v * np.ones_like(u * v)
    s = np.power(u, -t) + np.power(v, -t) - 1.0
    return np.power(u, -t - 1.0) * np.power(np.maximum(s, 1e-300), -1.0 / t - 1.0)


def _clayton_sample(th, n, rng):
    t = th[0]
    u = rng.random(n)
    w = rng.random(n)
    if abs(t) < _INDEP_TOL:
        return np.column_stack([u, w])
    v = np.power(np.power(u, -t) * (np.power(w, -t / (1 + t)) - 1.0) + 1.0, -1.0 / t)
    return np.column_stack([u, v])


# ---------------------------------------------------------------------------
# Gumbel
# ---------------------------------------------------------------------------

def _gumbel_cdf(th, u, v):
    t = th[0]
    x = -np.log(u)
    y = -np.log(v)
    return np.exp(-np.power(np.power(x, t) + np.power(y, t), 1.0 / t))


def _gumbel_density(th, u, v):
    t = th[0]
    if abs(t - 1.0) < _INDEP_TOL:
        return np.ones_like(np.asarray(u, dtype=float) * v)
    x = -np.log(u)
    y = -np.log(v)
    s = np.power(x, t) + np.power(y, t)
    a = np.power(s, 1.0 / t)
    return (
        np.exp(-a)
        * np.power(x * y, t - 1.0)
        * np.power(s, 1.0 / t - 2.0)
        * (a + t - 1.0)
        / (u * v)
    )


def _gumbel_cond(th, u, v):
    t = th[0]
    if abs(t - 1.0) < _INDEP_TOL:
        return v * np.ones_like(u * v)
    x = -np.log(u)
    y = -np.log(v)
    s = np.power(x, t) + np.power(y, t)
    return np.exp(-np.power(s, 1.0 / t)) * np.power(s, 1.0 / t - 1.0) * np.power(x, t - 1.0) / u


# ---------------------------------------------------------------------------
# Joe
# ---------------------------------------------------------------------------

def _joe_cdf(th, u, v):
    t = th[0]
    a = np.power(1 - u, t)
    b = np.power(1 - v, t)
    return 1.0 - np.power(a + b - a * b, 1.0 / t)


def _joe_density(th, u, v):
    t = th[0]
    if abs(t - 1.0) < _INDEP_TOL:
        return np.ones_like(np.asarray(u, dtype=float) * v)
    ub = 1 - u
    vb = 1 - v
    a = np.power(ub, t)
    b = np.power(vb, t)
    T = a + b - a * b
    return np.power(T, 1.0 / t - 2.0) * np.power(ub * vb, t - 1.0) * (t - (1 - a) * (1 - b))


def _joe_cond(th, u, v):
    t = th[0]
    if abs(t - 1.0) < _INDEP_TOL:
        return v * np.ones_like(u * v)
    a = np.power(1 - u, t)
    b = np.power(1 - v, t)
    T = a + b - a * b
    return np.power(T, 1.0 / t - 1.0) * np.power(1 - u, t - 1.0) * (1 - b)


# ---------------------------------------------------------------------------
# Galambos
# ---------------------------------------------------------------------------

def _galambos_cdf(th, u, v):
    t = th[0]
    if abs(t) < _INDEP_TOL:
        return u * v
    x = -np.log(u)
    y = -np.log(v)
    with np.errstate(over="ignore", divide="ignore"):
        p = np.power(x, -t) + np.power(y, -t)
        g = np.power(p, -1.0 / t)
    return u * v * np.exp(g)


def _galambos_density(th, u, v):
    t = th[0]
    if abs(t) < _INDEP_TOL:
        return np.ones_like(np.asarray(u, dtype=float) * v)
    x = -np.log(u)
    y = -np.log(v)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        p = np.power(x, -t) + np.power(y, -t)
        g = np.power(p, -1.0 / t)
        r = np.power(p, -1.0 / t - 1.0) * np.power(x, -t - 1.0)
        q = np.power(p, -1.0 / t - 1.0) * np.power(y, -t - 1.0)
        out = np.exp(g) * (
            (1 - r) * (1 - q)
            + (1 + t) * np.power(p, -1.0 / t - 2.0) * np.power(x * y, -t - 1.0)
        )
    return out


def _galambos_cond(th, u, v):
    t = th[0]
    if abs(t) < _INDEP_TOL:
        return v * np.ones_like(u * v)
    x = -np.log(u)
    y = -np.log(v)
    with np.errstate(over="ignore", divide="ignore"):
        p = np.power(x, -t) + np.power(y, -t)
        g = np.power(p, -1.0 / t)
        r = np.power(p, -1.0 / t - 1.0) * np.power(x, -t - 1.0)
    return v * np.exp(g) * (1 - r)


# ---------------------------------------------------------------------------
# Husler-Reiss
# ---------------------------------------------------------------------------

def _hr_parts(t, u, v):
    x = -np.log(u)
    y = -np.log(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        la = 1.0 / t + (t / 2.0) * np.log(x / y)
        lb = 1.0 / t + (t / 2.0) * np.log(y / x)
    return x, y, la, lb


def _hr_cdf(th, u, v):
    t = th[0]
    if abs(t) < _INDEP_TOL:
        return u * v
    x, y, la, lb = _hr_parts(t, u, v)
    return np.exp(-(x * ndtr(la) + y * ndtr(lb)))


def _hr_density(th, u, v):
    t = th[0]
    if abs(t) < _INDEP_TOL:
        return np.ones_like(np.asarray(u, dtype=float) * v)
    x, y, la, lb = _hr_parts(t, u, v)
    cdf = np.exp(-(x * ndtr(la) + y * ndtr(lb)))
    phib = np.exp(-0.5 * lb * lb) / math.sqrt(2 * math.pi)
    return cdf / (u * v) * (ndtr(la) * ndtr(lb) + (t / (2 * x)) * phib)


def _hr_cond(th, u, v):
    t = th[0]
    if abs(t) < _INDEP_TOL:
        return v * np.ones_like(u * v)
    x, y, la, lb = _hr_parts(t, u, v)
    cdf = np.exp(-(x * ndtr(la) + y * ndtr(lb)))
    return cdf * ndtr(la) / u


# ---------------------------------------------------------------------------
# Gumbel-Barnett
# ---------------------------------------------------------------------------

def _gb_cdf(th, u, v):
    t = th[0]
    eta = 1.0 - t
    x = -np.log(u)
    y = -np.log(v)
    return u * v * np.exp(-eta * x * y)


def _gb_density(th, u, v):
    t = th[0]
    if abs(t - 1.0) < _INDEP_TOL:
        return np.ones_like(np.asarray(u, dtype=float) * v)
    eta = 1.0 - t
    x = -np.log(u)
    y = -np.log(v)
    return np.exp(-eta * x * y) * ((1 + eta * x) * (1 + eta * y) - eta)


def _gb_cond(th, u, v):
    t = th[0]
    eta = 1.0 - t
    x = -np.log(u)
    y = -np.log(v)
    return v * np.exp(-eta * x * y) * (1 + eta * y)


# ---------------------------------------------------------------------------
# Two-parameter family (7): BB1-type, theta = (t1, t2), theta0 = (0, 1)
# C = (1 + [(u^-t1 - 1)^t2 + (v^-t1 - 1)^t2]^(1/t2))^(-1/t1)
# limit t1 -> 0 is the Gumbel(t2) copula.
# ---------------------------------------------------------------------------

_BB1_T1_TOL = 1e-8


def _bb1_cdf(th, u, v):
    t1, t2 = th
    if t1 < _BB1_T1_TOL:
        return _gumbel_cdf(np.array([t2]), u, v)
    a = np.power(np.power(u, -t1) - 1.0, t2)
    b = np.power(np.power(v, -t1) - 1.0, t2)
    w0 = np.power(a + b, 1.0 / t2)
    return np.power(1.0 + w0, -1.0 / t1)


def _bb1_density(th, u, v):
    t1, t2 = th
    if t1 < _BB1_T1_TOL:
        return _gumbel_density(np.array([t2]), u, v)
    pu = np.power(u, -t1) - 1.0
    pv = np.power(v, -t1) - 1.0
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        a = np.power(pu, t2)
        b = np.power(pv, t2)
        s = a + b
        w0 = np.power(s, 1.0 / t2)
        out = (
            np.power(u * v, -t1 - 1.0)
            * np.power(pu * pv, t2 - 1.0)
            * np.power(s, 1.0 / t2 - 2.0)
            * np.power(1.0 + w0, -1.0 / t1 - 2.0)
            * ((t1 + 1.0) * w0 + t1 * (t2 - 1.0) * (1.0 + w0))
        )
    return out


def _bb1_cond(th, u, v):
    t1, t2 = th
    if t1 < _BB1_T1_TOL:
        return _gumbel_cond(np.array([t2]), u, v)
    pu = np.power(u, -t1) - 1.0
    pv = np.power(v, -t1) - 1.0
    a = np.power(pu, t2)
    b = np.power(pv, t2)
    s = a + b
    w0 = np.power(s, 1.0 / t2)
    return (
        np.power(1.0 + w0, -1.0 / t1 - 1.0)
        * np.power(s, 1.0 / t2 - 1.0)
        * np.power(pu, t2 - 1.0)
        * np.power(u, -t1 - 1.0)
    )


# ---------------------------------------------------------------------------
# Two-parameter family (8): outer Gumbel(t1) glued by a Clayton/Frank-type
# inner parameter t2; theta0 = (1, 0).
# Archimedean generator phi(u) = exp(t2 * (-log u)^t1) - 1,
# psi(s) = exp(-(log1p(s)/t2)^(1/t1)); t2 -> 0 gives Gumbel(t1).
# ---------------------------------------------------------------------------

_BB8_T2_TOL = 1e-8


def _bb8_g(th, u, v):
    t1, t2 = th
    x = -np.log(u)
    y = -np.log(v)
    Tu = np.expm1(t2 * np.power(x, t1))
    Tv = np.expm1(t2 * np.power(y, t1))
    s = Tu + Tv
    return x, y, Tu, Tv, s


def _bb8_cdf(th, u, v):
    t1, t2 = th
    if abs(t2) < _BB8_T2_TOL:
        return _gumbel_cdf(np.array([t1]), u, v)
    x, y, Tu, Tv, s = _bb8_g(th, u, v)
    bad = 1.0 + s <= 0.0
    g = np.log1p(np.where(bad, 0.0, s)) / t2
    out = np.exp(-np.power(g, 1.0 / t1))
    return np.where(bad, 0.0, out)


def _bb8_density(th, u, v):
    t1, t2 = th
    if abs(t2) < _BB8_T2_TOL:
        return _gumbel_density(np.array([t1]), u, v)
    x, y, Tu, Tv, s = _bb8_g(th, u, v)
    bad = 1.0 + s <= 0.0
    s_safe = np.where(bad, 0.0, s)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        g = np.log1p(s_safe) / t2
        gp = 1.0 / (t2 * (1.0 + s_safe))
        gpp = -1.0 / (t2 * (1.0 + s_safe) ** 2)
        psi = np.exp(-np.power(g, 1.0 / t1))
        r = 1.0 / t1
        term = (
            r * r * np.power(g, 2 * r - 2.0) * gp * gp
            - r * (r - 1.0) * np.power(g, r - 2.0) * gp * gp
            - r * np.power(g, r - 1.0) * gpp
        )
        psi2 = psi * term
        # phi'(u) = -exp(t2 x^t1) * t2 * t1 * x^(t1-1) / u
        fpu = np.exp(t2 * np.power(x, t1)) * t2 * t1 * np.power(x, t1 - 1.0) / u
        fpv = np.exp(t2 * np.power(y, t1)) * t2 * t1 * np.power(y, t1 - 1.0) / v
        out = psi2 * fpu * fpv
    return np.where(bad, 0.0, out)


def _bb8_cond(th, u, v):
    t1, t2 = th
    if abs(t2) < _BB8_T2_TOL:
        return _gumbel_cond(np.array([t1]), u, v)
    x, y, Tu, Tv, s = _bb8_g(th, u, v)
    bad = 1.0 + s <= 0.0
    s_safe = np.where(bad, 0.0, s)
    g = np.log1p(s_safe) / t2
    r = 1.0 / t1
    psi = np.exp(-np.power(g, r))
    psip = -psi * r * np.power(g, r - 1.0) / (t2 * (1.0 + s_safe))
    fpu = -np.exp(t2 * np.power(x, t1)) * t2 * t1 * np.power(x, t1 - 1.0) / u
    return np.where(bad, 0.0, psip * fpu)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_INF = math.inf

_FAMILIES = {
    "fgm": CopulaModel(
        "fgm", 1, np.array([0.0]), ((-1.0, 1.0),), ((-5.0, 5.0),),
        corner_unbounded=False,
        _cdf=_fgm_cdf, _density=_fgm_density, _cond_cdf=_fgm_cond,
        _dtheta=_fgm_dtheta, _sampler=_fgm_sample,
    ),
    "clayton": CopulaModel(
        "clayton", 1, np.array([0.0]), ((0.0, _INF),), ((-0.9, 50.0),),
        _cdf=_clayton_cdf, _density=_clayton_density, _cond_cdf=_clayton_cond,
        _dtheta=_clayton_dtheta, _sampler=_clayton_sample,
    ),
    "gumbel": CopulaModel(
        "gumbel", 1, np.array([1.0]), ((1.0, _INF),), ((0.5, 50.0),),
        _cdf=_gumbel_cdf, _density=_gumbel_density, _cond_cdf=_gumbel_cond,
    ),
    "joe": CopulaModel(
        "joe", 1, np.array([1.0]), ((1.0, _INF),), ((0.5, 50.0),),
        _cdf=_joe_cdf, _density=_joe_density, _cond_cdf=_joe_cond,
    ),
    "galambos": CopulaModel(
        "galambos", 1, np.array([0.0]), ((0.0, _INF),), ((-0.9, 50.0),),
        _cdf=_galambos_cdf, _density=_galambos_density, _cond_cdf=_galambos_cond,
    ),
    "husler-reiss": CopulaModel(
        "husler-reiss", 1, np.array([0.0]), ((0.0, _INF),), ((-0.9, 50.0),),
        _cdf=_hr_cdf, _density=_hr_density, _cond_cdf=_hr_cond,
    ),
    "gumbel-barnett": CopulaModel(
        "gumbel-barnett", 1, np.array([1.0]), ((0.0, 1.0),), ((-1.0, 2.0),),
        _cdf=_gb_cdf, _density=_gb_density, _cond_cdf=_gb_cond,
    ),
    "bb1-like7": CopulaModel(
        "bb1-like7", 2, np.array([0.0, 1.0]),
        ((0.0, _INF), (1.0, _INF)), ((-0.5, 50.0), (0.5, 50.0)),
        _cdf=_bb1_cdf, _density=_bb1_density, _cond_cdf=_bb1_cond,
    ),
    "bb-like8": CopulaModel(
        "bb-like8", 2, np.array([1.0, 0.0]),
        ((1.0, _INF), (0.0, _INF)), ((0.5, 50.0), (-2.0, 50.0)),
        _cdf=_bb8_cdf, _density=_bb8_density, _cond_cdf=_bb8_cond,
    ),
}


def available_families() -> Sequence[str]:
    return tuple(_FAMILIES)


def get_model(family_id: str) -> CopulaModel:
    try:
        return _FAMILIES[family_id]
    except KeyError:
        raise ParameterError(
            f"unknown family {family_id!r}; choose from {sorted(_FAMILIES)}"
        ) from None


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def density(model: CopulaModel, theta, u1, u2):
    """Copula density c_theta(u1, u2), possibly signed on the extension.

    At the independence point the result is exactly 1.  Vectorized over
    ``u1, u2``.
    """
    th = _check_extended(model, theta)
    u1, u2 = _check_interior_u(u1, u2, open_domain=model.corner_unbounded)
    if _is_indep(model, th):
        return np.ones_like(np.asarray(u1, dtype=float) * u2)
    return model._density(th, u1, u2)


def cdf(model: CopulaModel, theta, u1, u2):
    """Copula CDF C_theta(u1, u2) for theta in the admissible set."""
    th = _check_admissible(model, theta)
    u1, u2 = _check_interior_u(u1, u2, open_domain=False)
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if _is_indep(model, th):
        return u1 * u2
    scalar = u1.ndim == 0 and u2.ndim == 0
    u1b, u2b = np.broadcast_arrays(np.atleast_1d(u1), np.atleast_1d(u2))
    out = np.empty(u1b.shape, dtype=float)
    edge0 = (u1b == 0.0) | (u2b == 0.0)
    edge1u = (u1b == 1.0) & ~edge0
    edge1v = (u2b == 1.0) & ~edge0 & ~edge1u
    inner = ~(edge0 | edge1u | edge1v)
    out[edge0] = 0.0
    out[edge1u] = u2b[edge1u]
    out[edge1v] = u1b[edge1v]
    if np.any(inner):
        out[inner] = model._cdf(th, u1b[inner], u2b[inner])
    return float(out[()]) if scalar else out.reshape(np.broadcast(u1, u2).shape)


def dtheta_density(model: CopulaModel, theta, u1, u2, order: int = 1):
    """Derivatives of the density in theta.

    Returns an array of shape ``(p,) + u.shape`` for ``order=1`` and
    ``(p, p) + u.shape`` for ``order=2``.  FGM and Clayton use analytic
    formulas; other families use central finite differences with step
    ``1e-5 * max(1, |theta|)`` (``1e-4`` scaling for second order).
    """
    th = _check_extended(model, theta)
    u1, u2 = _check_interior_u(u1, u2, open_domain=model.corner_unbounded)
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if model._dtheta is not None:
        return model._dtheta(th, u1, u2, order)
    p = model.dim_theta
    shape = np.broadcast(np.asarray(u1), np.asarray(u2)).shape

    def f(t):
        return np.asarray(model._density(t, u1, u2), dtype=float)

    if order == 1:
        out = np.empty((p,) + shape)
        for k in range(p):
            h = 1e-5 * max(1.0, abs(th[k]))
            tp, tm = th.copy(), th.copy()
            tp[k] += h
            tm[k] -= h
            out[k] = (f(tp) - f(tm)) / (2 * h)
        return out
    out = np.empty((p, p) + shape)
    f0 = f(th)
    for k in range(p):
        hk = 1e-4 * max(1.0, abs(th[k]))
        tp, tm = th.copy(), th.copy()
        tp[k] += hk
        tm[k] -= hk
        out[k, k] = (f(tp) - 2 * f0 + f(tm)) / hk**2
        for j in range(k + 1, p):
            hj = 1e-4 * max(1.0, abs(th[j]))
            tpp, tpm, tmp, tmm = th.copy(), th.copy(), th.copy(), th.copy()
            tpp[[k, j]] += (hk, hj)
            tpm[k] += hk
            tpm[j] -= hj
            tmp[k] -= hk
            tmp[j] += hj
            tmm[[k, j]] -= (hk, hj)
            mixed = (f(tpp) - f(tpm) - f(tmp) + f(tmm)) / (4 * hk * hj)
            out[k, j] = mixed
            out[j, k] = mixed
    return out


def conditional_cdf(model: CopulaModel, theta, u1, u2):
    """Conditional CDF of U2 given U1 = u1, i.e. dC/du1 (theta in Theta)."""
    th = _check_admissible(model, theta)
    u1, u2 = _check_interior_u(u1, u2, open_domain=True)
    if _is_indep(model, th):
        return u2 * np.ones_like(np.asarray(u1, dtype=float))
    return model._cond_cdf(th, u1, u2)


def sample(model: CopulaModel, theta, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. pairs from C_theta by conditional inversion.

    FGM and Clayton invert in closed form; the other families solve
    ``dC/du1(u1, v) = w`` by bracketed bisection to 1e-12.  The same seed
    always reproduces the same output.
    """
    th = _check_admissible(model, theta)
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if _is_indep(model, th):
        return rng.random((n, 2))
    if model._sampler is not None:
        return model._sampler(th, n, rng)
    u = rng.random(n)
    w = rng.random(n)
    lo = np.full(n, 1e-14)
    hi = np.full(n, 1.0 - 1e-14)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        val = model._cond_cdf(th, u, mid)
        go_up = val < w
        lo = np.where(go_up, mid, lo)
        hi = np.where(go_up, hi, mid)
        if np.max(hi - lo) < 1e-12:
            break
    return np.column_stack([u, 0.5 * (lo + hi)])
