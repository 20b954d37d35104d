"""Rank-based pseudo-observations and empirical copulas.

Two empirical copula variants are provided: the right-continuous
rank-indicator form C_n and the quantile-transform (Deheuvels) form.
They coincide on the grid {(i/n, j/n)} and differ by at most 2/n anywhere
on the unit square.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "PseudoSample",
    "make_pseudo",
    "empirical_copula",
    "deheuvels_copula",
    "integrate_dCn",
]


@dataclass(frozen=True)
class PseudoSample:
    """Ranked bivariate data.

    ``pseudo_u`` holds (R1k/n, R2k/n); ``pseudo_u_scaled`` holds
    (R1k/(n+1), R2k/(n+1)) for the pseudo-likelihood baseline.  Each
    margin of ``pseudo_u`` is exactly a permutation of {1/n, ..., 1}.
    """

    n: int
    pseudo_u: np.ndarray
    pseudo_u_scaled: np.ndarray
    ranks: np.ndarray
    has_ties: bool
    raw: np.ndarray | None = field(default=None, repr=False)

    @property
    def clamped_pseudo(self) -> np.ndarray:
        """Pseudo-observations clipped to [1/(2n), 1 - 1/(2n)].

        Only coordinates equal to 1 actually move (ranks/n >= 1/n), which
        keeps density evaluations away from corner singularities without
        affecting the rank structure.
        """
        lo = 1.0 / (2 * self.n)
        return np.clip(self.pseudo_u, lo, 1.0 - lo)


def make_pseudo(data, keep_raw: bool = True) -> PseudoSample:
    """Build a :class:`PseudoSample` from an (n, 2) array of observations.

    Ranks are assigned in input order on ties ("ordinal"); a warning is
    emitted when ties are present since the model assumes continuous
    margins.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array, got shape {arr.shape}")
    n = arr.shape[0]
    if n < 2:
        raise ValueError("need at least 2 observations")
    if not np.all(np.isfinite(arr)):
        raise ValueError("data must be finite")
    has_ties = bool(
        len(np.unique(arr[:, 0])) < n or len(np.unique(arr[:, 1])) < n
    )
    if has_ties:
        warnings.warn(
            "ties detected; broken by input order (continuous margins assumed)",
            stacklevel=2,
        )
    ranks = np.column_stack(
        [rankdata(arr[:, 0], method="ordinal"), rankdata(arr[:, 1], method="ordinal")]
    ).astype(float)
    return PseudoSample(
        n=n,
        pseudo_u=ranks / n,
        pseudo_u_scaled=ranks / (n + 1),
        ranks=ranks,
        has_ties=has_ties,
        raw=arr if keep_raw else None,
    )


def empirical_copula(ps: PseudoSample, u1, u2):
    """Modified empirical copula C_n(u1, u2) = mean of joint rank indicators."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if np.any(u1 < 0) or np.any(u1 > 1) or np.any(u2 < 0) or np.any(u2 > 1):
        raise ValueError("u1, u2 must lie in [0, 1]")
    r1 = ps.pseudo_u[:, 0]
    r2 = ps.pseudo_u[:, 1]
    ind = (r1[..., :] <= np.expand_dims(u1, -1)) & (r2[..., :] <= np.expand_dims(u2, -1))
    out = ind.mean(axis=-1)
    return float(out) if out.ndim == 0 else out


def deheuvels_copula(ps: PseudoSample, u1, u2):
    """Quantile-transform empirical copula.

    Equals ``empirical_copula`` evaluated at (ceil(n u1)/n, ceil(n u2)/n);
    the two agree exactly on the grid {(i/n, j/n)}.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    n = ps.n
    k1 = np.ceil(n * u1)
    k2 = np.ceil(n * u2)
    r1 = ps.ranks[:, 0]
    r2 = ps.ranks[:, 1]
    ind = (r1[..., :] <= np.expand_dims(k1, -1)) & (r2[..., :] <= np.expand_dims(k2, -1))
    out = ind.mean(axis=-1)
    return float(out) if out.ndim == 0 else out


def integrate_dCn(ps: PseudoSample, f):
    """Integrate ``f`` against dC_n: the mean of f over pseudo-observations.

    ``f`` is called vectorized with the two pseudo coordinate arrays and
    must be finite there (coordinates can equal 1 exactly).
    """
    vals = np.asarray(f(ps.pseudo_u[:, 0], ps.pseudo_u[:, 1]), dtype=float)
    if not np.all(np.isfinite(vals)):
        k = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise ValueError(
            f"integrand not finite at pseudo-observation {tuple(ps.pseudo_u[k])}"
        )
    return float(vals.mean())
