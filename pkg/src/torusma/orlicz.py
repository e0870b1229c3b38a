"""Orlicz gauges, Luxemburg norms, and the conjugate-pair Hoelder inequality.

The three gauge families are Power(p) with P(t) = t^p, PBeta(beta) with
P(t) = t log^beta(e + t), and QBeta(beta) with Q(t) = e^(t^(1/beta)) - 1.
Power and PBeta satisfy the doubling property P(2t) <= 2^C P(t); QBeta does
not, so its Luxemburg norm is only the infimum of the bracketed lambda with
integral <= 1 rather than a root of the equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import optimize

from .errors import NormInfinite
from .fields import ScalarField, _same_grid

_REL_TOL = 1e-12


@dataclass(frozen=True)
class OrliczGauge:
    """Convex gauge P defining an Orlicz norm."""

    variant: str          # "power" | "plog" | "exp"
    beta: float

    def __post_init__(self):
        if self.variant not in ("power", "plog", "exp"):
            raise ValueError(f"unknown gauge variant {self.variant!r}")
        if self.beta < 1.0:
            raise ValueError("gauge exponent must be >= 1")

    @property
    def doubling(self) -> bool:
        return self.variant in ("power", "plog")


def power_gauge(p: float) -> OrliczGauge:
    return OrliczGauge("power", p)


def plog_gauge(beta: float) -> OrliczGauge:
    """P_beta(t) = t log^beta(e + t), the L log^beta L gauge."""
    return OrliczGauge("plog", beta)


def exp_gauge(beta: float) -> OrliczGauge:
    """Q_beta(t) = e^(t^(1/beta)) - 1, the Exp^(1/beta) L gauge."""
    return OrliczGauge("exp", beta)


def gauge_eval(g: OrliczGauge, t) -> np.ndarray:
    """P(t) for t >= 0 (scalar or array); monotone, P(0) = 0."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("gauge argument must be >= 0")
    if g.variant == "power":
        return t ** g.beta
    if g.variant == "plog":
        return t * np.log(np.e + t) ** g.beta
    # exp gauge; clip the exponent so oversized brackets saturate at inf
    with np.errstate(over="ignore"):
        return np.expm1(t ** (1.0 / g.beta))


def luxemburg_norm(
    f: ScalarField,
    g: OrliczGauge,
    vol_weight: Optional[ScalarField] = None,
) -> float:
    """inf{lambda > 0 : integral P(|f|/lambda) Omega <= 1} by bisection.

    For doubling gauges the returned lambda* satisfies the defining equality
    integral P(|f|/lambda*) = 1 to within 1e-10.  Order preserving in |f|.
    """
    absf = np.abs(f.values)
    if vol_weight is None:
        w = None
        total = 1.0
    else:
        _same_grid(f, vol_weight)
        w = vol_weight.values
        if np.any(w < 0) or not np.any(w > 0):
            raise ValueError("volume weight must be >= 0 with positive mass")
        total = float(np.mean(w))
    if not np.any(absf > 0):
        return 0.0

    def mean_gauge(lam: float) -> float:
        vals = gauge_eval(g, absf / lam)
        if w is not None:
            vals = vals * w
        m = float(np.mean(vals))
        return m if np.isfinite(m) else math.inf

    # bracket: grow hi until integral <= 1, shrink lo until > 1
    hi = max(float(np.max(absf)), 1e-300)
    for _ in range(2000):
        if mean_gauge(hi) <= 1.0:
            break
        hi *= 2.0
    else:
        raise NormInfinite("no lambda with integral <= 1 found")
    lo = hi
    for _ in range(2000):
        lo *= 0.5
        if mean_gauge(lo) > 1.0:
            break
    else:
        # integral stays <= 1 down to tiny lambda: norm is effectively 0
        return lo
    while (hi - lo) > _REL_TOL * hi:
        mid = 0.5 * (lo + hi)
        if mean_gauge(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


@lru_cache(maxsize=16)
def young_constant(beta: float) -> float:
    """Best C_beta in x y <= C_beta (P_beta(x) + Q_beta(y)).

    C_1 = 1; for beta > 1 the constant is estimated by maximizing the ratio
    x y / (P_beta(x) + Q_beta(y)) over a log-spaced 400 x 400 grid followed
    by local ascent.  The numerical value is an estimate, not claimed sharp.
    """
    if beta == 1.0:
        return 1.0
    pg, qg = plog_gauge(beta), exp_gauge(beta)

    def ratio(logx, logy):
        x, y = math.exp(logx), math.exp(logy)
        denom = float(gauge_eval(pg, x) + gauge_eval(qg, y))
        return x * y / denom if denom > 0 else 0.0

    grid = np.linspace(math.log(1e-6), math.log(1e6), 400)
    best, best_xy = 0.0, (0.0, 0.0)
    for lx in grid:
        vals = [ratio(lx, ly) for ly in grid]
        j = int(np.argmax(vals))
        if vals[j] > best:
            best, best_xy = vals[j], (lx, grid[j])
    res = optimize.minimize(
        lambda v: -ratio(v[0], v[1]), x0=np.array(best_xy), method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12},
    )
    return max(best, float(-res.fun))


def holder_orlicz(
    f: ScalarField,
    g: ScalarField,
    beta: float = 1.0,
    vol_weight: Optional[ScalarField] = None,
) -> Tuple[float, float]:
    """(lhs, rhs) of |int f g| <= 2 C_beta ||f||_{Llog^bL} ||g||_{Exp^(1/b)L}."""
    _same_grid(f, g)
    w = vol_weight.values if vol_weight is not None else 1.0
    lhs = abs(float(np.mean(f.values * g.values * w)))
    nf = luxemburg_norm(f, plog_gauge(beta), vol_weight)
    ng = luxemburg_norm(g, exp_gauge(beta), vol_weight)
    rhs = 2.0 * young_constant(beta) * nf * ng
    return lhs, rhs


def exp_norm_of_one(beta: float, vol: float) -> float:
    """Closed form ||1||_{Exp^(1/beta)L} = 1 / log^beta(1 + 1/Vol)."""
    if vol <= 0:
        raise ValueError("volume must be > 0")
    return 1.0 / math.log(1.0 + 1.0 / vol) ** beta


def llogl_upper_bound(
    f: ScalarField,
    beta: float = 1.0,
    vol_weight: Optional[ScalarField] = None,
) -> Tuple[float, float]:
    """(norm, bound) with norm = ||f||_{Llog^bL} and the integral upper bound.

    bound = integral f log^beta(e + f / ||f||_L1) Omega; norm <= bound
    because ||f||_L1 <= ||f||_{Llog^bL}.
    """
    if np.any(f.values < 0):
        raise ValueError("f must be >= 0")
    if not np.any(f.values > 0):
        raise ValueError("f is identically zero")
    w = vol_weight.values if vol_weight is not None else 1.0
    l1 = float(np.mean(f.values * w))
    norm = luxemburg_norm(f, plog_gauge(beta), vol_weight)
    bound = float(np.mean(f.values * np.log(np.e + f.values / l1) ** beta * w))
    return norm, bound


def i_functional(
    f: ScalarField,
    class_mass: float,
    eps: float,
    vol_weight: Optional[ScalarField] = None,
) -> float:
    """mass^{-1} int f log^(n+eps)(e + mass^{-1} f) Omega with mass = {gamma}^n."""
    if class_mass <= 0:
        raise ValueError("class mass must be > 0")
    if np.any(f.values < 0):
        raise ValueError("f must be >= 0")
    n = f.grid.complex_dim
    w = vol_weight.values if vol_weight is not None else 1.0
    scaled = f.values / class_mass
    return float(np.mean(scaled * np.log(np.e + scaled) ** (n + eps) * w))
