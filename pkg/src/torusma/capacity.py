"""Monge-Ampere capacities, sublevel profiles, and the iteration lemma.

Capacities are computed as maxima over a finite test family of potentials
with values in [0, 1]; each member's mass is normalized by its own total
Monge-Ampere mass, so the reported value is a certified lower bound of the
true supremum and Cap(X) = 1 holds bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import HypothesisFailed, NonMassiveSet, SweepStalled
from .fields import (
    HermitianFormField,
    ScalarField,
    det_array,
    min_eigenvalue_array,
)
from .ma_core import PotentialInClass, cone_check, potential_in_class
from .samples import cone_interior_potential
from .spectral import hessian_array


@dataclass(frozen=True)
class TestFamily:
    """Finite family of class potentials with 0 <= phi <= 1."""

    __test__ = False   # not a pytest item despite the name

    members: Tuple[PotentialInClass, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("test family must not be empty")
        for m in self.members:
            ok, me = cone_check(m.gamma_phi)
            if not ok:
                raise ValueError(f"family member leaves the cone: min eig {me:.3e}")
            v = m.potential.values
            if np.min(v) < -1e-10 or np.max(v) > 1 + 1e-10:
                raise ValueError("family member range is not within [0, 1]")

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class CapacityProfile:
    """s -> a(s) = Cap({psi < s})^(1/n) on a negative increasing s grid."""

    s: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.float64)
        a = np.asarray(self.a, dtype=np.float64)
        if s.ndim != 1 or s.shape != a.shape:
            raise ValueError("profile arrays must be 1-d and congruent")
        if np.any(np.diff(s) <= 0) or np.any(s > 0):
            raise ValueError("s grid must be negative and strictly increasing")
        if np.any(np.diff(a) < -1e-14):
            raise ValueError("a must be monotone non-decreasing")
        if np.min(a) < 0 or np.max(a) > 1 + 1e-12:
            raise ValueError("a values must lie in [0, 1]")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "a", a)

    def __call__(self, x) -> np.ndarray:
        """Left-continuous step evaluation; a(x) = a[i] for x in (s[i-1], s[i]]."""
        idx = np.searchsorted(self.s, np.asarray(x), side="left")
        idx = np.clip(idx, 0, len(self.a) - 1)
        return self.a[idx]


def bundled_family(
    gamma: HermitianFormField,
    seed_rng,
    size: int = 8,
    kmax: int = 3,
    extra: Sequence[PotentialInClass] = (),
) -> TestFamily:
    """Clipped, rescaled random cone-interior potentials (plus extras)."""
    grid = gamma.grid
    members: List[PotentialInClass] = []
    for _ in range(size):
        psi = cone_interior_potential(grid, seed_rng, base_mat=None, kmax=kmax, safety=0.5)
        v = psi.values - np.min(psi.values)
        osc = float(np.max(v))
        if osc > 1.0:
            v = v / osc
        members.append(potential_in_class(gamma, ScalarField(grid, v)))
    members.extend(extra)
    return TestFamily(tuple(members))


def smoothed_family_member(
    gamma: HermitianFormField,
    raw: ScalarField,
    smoothing_cells: float = 1.5,
) -> PotentialInClass:
    """Mollify, range-normalize and cone-fit a raw potential into [0, 1].

    Envelope outputs are kinked; a light Gaussian mollification plus a
    bisected damping factor restores smooth-scale cone membership while
    keeping most of the mass concentration.
    """
    grid = gamma.grid
    from .spectral import mollify

    v = mollify(raw, smoothing_cells / grid.resolution).values
    v = v - np.min(v)
    top = float(np.max(v))
    if top > 1.0:
        v = v / top
    hess = hessian_array(v, grid)
    lo, hi = 0.0, 1.0
    if np.min(min_eigenvalue_array(gamma.mat + hess)) >= 0:
        lo = 1.0
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if np.min(min_eigenvalue_array(gamma.mat + mid * hess)) >= 0:
                lo = mid
            else:
                hi = mid
        lo *= 0.98
    return potential_in_class(gamma, ScalarField(grid, lo * v))


def capacity_estimate(
    gamma: HermitianFormField,
    mask: Union[ScalarField, np.ndarray],
    family: TestFamily,
) -> float:
    """max over the family of (own MA mass)^-1 int_E gamma_phi^n; in [0, 1].

    Monotone in the mask and a lower bound of the true capacity.
    """
    m = mask.values.astype(bool) if isinstance(mask, ScalarField) else np.asarray(mask, dtype=bool)
    if m.shape != gamma.grid.shape:
        raise ValueError("mask shape does not match the grid")
    best = 0.0
    for member in family.members:
        dens = det_array(member.gamma_phi.mat)
        total = float(np.sum(dens))
        if total <= 0:
            continue
        best = max(best, float(np.sum(dens[m])) / total)
    return min(best, 1.0)


def integral_bounds_estimate(
    gamma: HermitianFormField,
    vol_weight: Optional[ScalarField],
    samples: Sequence[ScalarField],
    ladder: Sequence[float] = tuple(2.0 ** (-k) for k in range(13)),
    moment_cap_factor: float = 50.0,
) -> Tuple[float, float]:
    """(alpha, C) with int -psi Omega <= C and int e^(-alpha psi) Omega <= C.

    Samples must be sup-normalized.  alpha is the largest dyadic ladder
    value whose exponential moment stays within `moment_cap_factor` times
    (1 + the first-moment bound); C carries a 2x slack over the worst
    observed sample so fresh draws of comparable roughness satisfy it.
    """
    if not samples:
        raise ValueError("need at least one sample")
    w = vol_weight.values if vol_weight is not None else 1.0
    first = 0.0
    for psi in samples:
        if np.max(psi.values) > 1e-9:
            raise ValueError("samples must be sup-normalized (sup psi = 0)")
        first = max(first, float(np.mean(-psi.values * w)))
    cap = moment_cap_factor * (1.0 + first)
    for alpha in sorted(ladder, reverse=True):
        worst = max(float(np.mean(np.exp(-alpha * psi.values) * w)) for psi in samples)
        if worst <= cap:
            return alpha, 2.0 * max(first, worst)
    alpha = min(ladder)
    worst = max(float(np.mean(np.exp(-alpha * psi.values) * w)) for psi in samples)
    return alpha, 2.0 * max(first, worst)


def sublevel_profile(
    gamma: HermitianFormField,
    psi: PotentialInClass,
    s_grid: Sequence[float],
    family: TestFamily,
    decay_constant: Optional[float] = None,
) -> CapacityProfile:
    """Capacity profile of the sublevel sets {psi < s}.

    psi must be sup-normalized.  When `decay_constant` C is given the decay
    envelope a(-t) <= (C/t)^(1/n) is enforced (raises on violation).
    """
    if not psi.normalized:
        raise ValueError("psi must be sup-normalized (sup psi = 0)")
    n = gamma.grid.complex_dim
    s = np.asarray(list(s_grid), dtype=np.float64)
    vals = []
    for si in s:
        mask = psi.potential.values < si
        vals.append(capacity_estimate(gamma, mask, family) ** (1.0 / n))
    a = np.maximum.accumulate(np.array(vals))
    prof = CapacityProfile(s, a)
    if decay_constant is not None:
        for si, ai in zip(s, a):
            bound = (decay_constant / max(-si, 1e-300)) ** (1.0 / n)
            if ai > bound + 1e-12:
                raise ValueError(
                    f"capacity decay envelope violated at s={si}: {ai:.3e} > {bound:.3e}"
                )
    return prof


ProfileLike = Union[CapacityProfile, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class IterationVerdict:
    hypothesis_ok: bool
    constant: float          # e (3 + 2/delta) B
    conclusion_applicable: bool
    margin: float            # constant * a(S+D)^delta - D (when applicable)


def kolodziej_bound(
    a: ProfileLike,
    B: float,
    delta: float,
    S: float,
    D: float,
    s_samples: int = 200,
    t_samples: int = 200,
    s_min: float = -4.0,
) -> IterationVerdict:
    """Two-phase check of the capacity iteration lemma.

    Phase 1 verifies t a(s) <= B a(s+t)^(1+delta) on a dense (s, t) grid and
    raises HypothesisFailed with the witnessing pair otherwise.  Phase 2
    evaluates the conclusion D <= e (3 + 2/delta) B a(S+D)^delta whenever
    a(S) > 0 and returns the margin.
    """
    if B <= 0 or delta <= 0:
        raise ValueError("B and delta must be > 0")
    if S >= 0 or D < 0 or D > 1 or S + D > 0:
        raise ValueError("need S < 0, D in [0, 1], S + D <= 0")
    fn = a if callable(a) else a.__call__
    ss = np.linspace(s_min, 0.0, s_samples)
    ts = np.linspace(0.0, 1.0, t_samples)
    av = np.asarray(fn(ss), dtype=np.float64)
    for t in ts:
        ok = ss + t <= 0.0
        if not np.any(ok):
            continue
        lhs = t * av[ok]
        rhs = B * np.asarray(fn(ss[ok] + t), dtype=np.float64) ** (1.0 + delta)
        bad = lhs > rhs + 1e-12
        if np.any(bad):
            i = int(np.argmax(bad))
            s_bad = ss[ok][i]
            raise HypothesisFailed(float(s_bad), float(t), float(lhs[i]), float(rhs[i]))
    const = math.e * (3.0 + 2.0 / delta) * B
    a_S = float(np.asarray(fn(np.array([S])))[0])
    if a_S <= 0.0:
        return IterationVerdict(True, const, False, math.inf)
    a_SD = float(np.asarray(fn(np.array([S + D])))[0])
    margin = const * a_SD ** delta - D
    return IterationVerdict(True, const, True, margin)


def random_monotone_profiles(
    rng, count: int, nodes: int = 200, s_min: float = -2.0
) -> Tuple[np.ndarray, np.ndarray]:
    """(s grid, profiles) with rows monotone non-decreasing into [0, 1].

    A random fraction of each row is an exact-zero prefix and a random
    scale keeps maxima spread over (0, 1].
    """
    s = np.linspace(s_min, 0.0, nodes)
    jumps = rng.exponential(1.0, size=(count, nodes))
    zero_len = rng.integers(0, nodes // 2, size=count)
    cols = np.arange(nodes)
    jumps[cols[None, :] < zero_len[:, None]] = 0.0
    prof = np.cumsum(jumps, axis=1)
    tops = prof[:, -1].copy()
    tops[tops == 0] = 1.0
    scale = rng.uniform(0.05, 1.0, size=count)
    prof = prof / tops[:, None] * scale[:, None]
    return s, prof


def fit_hypothesis_constant(s: np.ndarray, prof: np.ndarray, delta: float) -> np.ndarray:
    """Smallest conservative B per profile row on a uniform s grid.

    The fit uses (t_j + ds) in the numerator so that the hypothesis holds
    for all real (s, t) pairs of the step profile, not just grid pairs.
    """
    count, nodes = prof.shape
    ds = s[1] - s[0]
    power = prof ** (1.0 + delta)
    # j = 0 term: within-cell t < ds needs B >= ds * a_i^(-delta) wherever
    # a_i > 0, otherwise the hypothesis fails for real off-grid pairs
    with np.errstate(divide="ignore", invalid="ignore"):
        same_cell = np.where(prof > 0, ds * prof / power, 0.0)
    B = same_cell.max(axis=1)
    t_steps = min(nodes - 1, int(round(1.0 / ds)))
    for j in range(1, t_steps + 1):
        t = j * ds
        num = (t + ds) * prof[:, : nodes - j]
        den = power[:, j:]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(den > 0, num / den, np.where(num > 0, np.inf, 0.0))
        B = np.maximum(B, ratio.max(axis=1))
    return B


def batch_conclusion_check(
    s: np.ndarray, prof: np.ndarray, delta: float, B: np.ndarray
) -> float:
    """Worst conclusion violation over all grid (S, D) pairs; <= 0 means pass."""
    count, nodes = prof.shape
    ds = s[1] - s[0]
    const = math.e * (3.0 + 2.0 / delta) * B[:, None]
    apow = prof ** delta
    t_steps = min(nodes - 1, int(round(1.0 / ds)))
    worst = -math.inf
    for j in range(1, t_steps + 1):
        D = j * ds
        # S runs over nodes with index i, S + D at index i + j (<= 0 ok)
        applicable = prof[:, : nodes - j] > 0
        bound = const * apow[:, j:]
        viol = np.where(applicable, D - bound, -math.inf)
        worst = max(worst, float(viol.max()))
    return worst


def volume_capacity_check(
    gamma: HermitianFormField,
    vol_weight: Optional[ScalarField],
    mask: Union[ScalarField, np.ndarray],
    alpha: float,
    C: float,
    family: TestFamily,
    augment_with_extremal: bool = True,
) -> Tuple[float, float, float]:
    """(vol, bound, margin) for vol(E) <= e^alpha C e^(-alpha / cap^(1/n)).

    The capacity estimate is a lower bound, which tightens the right side,
    so the family is augmented with the extremal potential of the mask (its
    normalization is what the proof of the bound actually uses) unless
    disabled.
    """
    grid = gamma.grid
    n = grid.complex_dim
    m = mask.values.astype(bool) if isinstance(mask, ScalarField) else np.asarray(mask, dtype=bool)
    w = vol_weight.values if vol_weight is not None else 1.0
    vol = float(np.mean(m * w))
    if not np.any(m):
        return vol, math.exp(alpha) * C * math.exp(-alpha / 1e-300), 0.0 - vol if vol else 0.0

    members = list(family.members)
    if augment_with_extremal:
        ext = extremal_function(gamma, m)
        members.append(smoothed_family_member(gamma, ext.potential))
    cap = capacity_estimate(gamma, m, TestFamily(tuple(members)))
    if cap <= 0.0:
        if vol > 1e-12:
            raise ValueError(f"capacity 0 but volume {vol:.3e}: genuine violation")
        return vol, 0.0, -vol
    bound = math.exp(alpha) * C * math.exp(-alpha / cap ** (1.0 / n))
    return vol, bound, bound - vol


# ---------------------------------------------------------------------------
# extremal functions by monotone wide-stencil envelope sweeps
# ---------------------------------------------------------------------------

def _complex_line_offsets(n: int) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
    """Grid offsets (v, Jv) spanning the stencil's complex lines.

    Axes are ordered (x1, y1[, x2, y2]); J maps x_j -> y_j.  For n = 2 the
    diagonal lines e1 +- e2 and e1 +- i e2 complete the 3^(2n) stencil.
    """
    if n == 1:
        return [((1, 0), (0, 1))]
    return [
        ((1, 0, 0, 0), (0, 1, 0, 0)),
        ((0, 0, 1, 0), (0, 0, 0, 1)),
        ((1, 0, 1, 0), (0, 1, 0, 1)),    # e1 + e2
        ((1, 0, -1, 0), (0, 1, 0, -1)),  # e1 - e2
        ((1, 0, 0, 1), (0, 1, -1, 0)),   # e1 + i e2
        ((1, 0, 0, -1), (0, 1, 1, 0)),   # e1 - i e2
    ]


def _line_curvature(gamma: HermitianFormField, v: Tuple[int, ...]) -> np.ndarray:
    """gamma(w, wbar) for the complex tangent w of the line through offset v."""
    n = gamma.grid.complex_dim
    wvec = np.array([v[2 * j] + 1j * v[2 * j + 1] for j in range(n)])
    g = gamma.mat
    out = np.zeros(gamma.grid.shape)
    for j in range(n):
        for k in range(n):
            out = out + (g[..., j, k] * wvec[j] * np.conj(wvec[k])).real
    return out


def _roll(a: np.ndarray, off: Tuple[int, ...]) -> np.ndarray:
    return np.roll(a, shift=tuple(-o for o in off), axis=tuple(range(len(off))))


def extremal_function(
    gamma: HermitianFormField,
    mask: Union[ScalarField, np.ndarray],
    max_sweeps: int = 200000,
    tol: float = 1e-11,
) -> PotentialInClass:
    """Largest discretely gamma-psh function <= 0 on the mask (envelope sweep).

    Alternates the obstacle projection on K with pointwise concave
    adjustment along the stencil's complex lines until the sweep stalls.
    Raises NonMassiveSet for an empty mask and SweepStalled if the update
    still moves at the iteration cap.
    """
    grid = gamma.grid
    n = grid.complex_dim
    m = mask.values.astype(bool) if isinstance(mask, ScalarField) else np.asarray(mask, dtype=bool)
    if not np.any(m):
        raise NonMassiveSet("mask has zero volume: the envelope is unbounded")
    h = 1.0 / grid.resolution
    lines = _complex_line_offsets(n)
    # discrete line constraint: 4-point mean + h^2 gamma(w, wbar) bounds psi
    curvs = [_line_curvature(gamma, v) * h * h for v, _ in lines]

    psi = np.where(m, 0.0, 1e3)
    last_change = np.inf
    for sweep in range(max_sweeps):
        cand = psi
        for (v, jv), cv in zip(lines, curvs):
            means = 0.25 * (
                _roll(psi, v) + _roll(psi, tuple(-x for x in v))
                + _roll(psi, jv) + _roll(psi, tuple(-x for x in jv))
            )
            cand = np.minimum(cand, means + cv)
        cand = np.where(m, np.minimum(cand, 0.0), cand)
        last_change = float(np.max(np.abs(cand - psi)))
        psi = cand
        if last_change <= tol:
            break
    else:
        raise SweepStalled(f"envelope sweep still moving after {max_sweeps} sweeps "
                           f"(last change {last_change:.3e})")
    psi = np.maximum(psi, 0.0)
    # the envelope is only C^{1,1}; its spectral Hessian carries Gibbs
    # artifacts, so the class pair is assembled directly (the smooth-scale
    # cone validation of potential_in_class does not apply to kinks)
    from .spectral import spectral_dd_bar

    field = ScalarField(grid, psi)
    return PotentialInClass(gamma, field, gamma + spectral_dd_bar(field), normalized=False)


def stencil_ma_mass(
    gamma: HermitianFormField,
    psi: ScalarField,
) -> ScalarField:
    """Monotone finite-difference MA density consistent with the sweep.

    Uses the product over the axis complex lines of the (clipped) discrete
    line curvatures gamma(w,wbar) + Lap_line psi / 4; this is the natural
    residual audit for envelope outputs, whose kinks rule out spectral
    differentiation.
    """
    grid = gamma.grid
    n = grid.complex_dim
    h = 1.0 / grid.resolution
    axis_lines = _complex_line_offsets(n)[:n]
    dens = np.ones(grid.shape)
    for (v, jv) in axis_lines:
        lap = (
            _roll(psi.values, v) + _roll(psi.values, tuple(-x for x in v))
            + _roll(psi.values, jv) + _roll(psi.values, tuple(-x for x in jv))
            - 4.0 * psi.values
        ) / (h * h)
        curv = _line_curvature(gamma, v)
        dens = dens * np.maximum(curv + 0.25 * lap, 0.0)
    return ScalarField(grid, dens)
