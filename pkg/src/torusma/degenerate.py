"""Degenerate densities with zeros and poles, and the regularized continuation.

A density spec is a factored product

    G_eps = prod_j (|sigma_j|^2 + eps^A)^(l_j) * prod_r (|tau_r|^2 + eps)^(-h_r)

built from smooth periodic section analogues.  The continuation solves the
regularized equations (omega + eps*alpha + i d dbar phi)^n = e^(c_eps) G_eps
e^(lambda phi) Omega down a decreasing eps schedule with warm starts, and
monitors oscillations, Laplacian suprema and the normalizing constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ScheduleInvalid
from .fields import (
    ComplexField,
    HermitianFormField,
    ScalarField,
    TorusGrid,
    _same_grid,
    det_array,
    inv_array,
    oscillation,
)
from .samples import refine_complex_field
from .solver import SolveOptions, SolveReport, solve_ma
from .spectral import density_floor


@dataclass(frozen=True)
class Density:
    """Factored degenerate density with regularization eps and pole exponent A."""

    sigmas: Tuple[Tuple[ComplexField, float], ...] = ()
    taus: Tuple[Tuple[ComplexField, float], ...] = ()
    eps: float = 0.0
    pole_exponent: Optional[float] = None   # A; None selects the default rule

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.pole_exponent is not None and self.pole_exponent < 0:
            raise ValueError("pole exponent A must be >= 0")
        for s, l in self.sigmas:
            if l < 0:
                raise ValueError("zero orders l must be >= 0")
            if not np.any(np.abs(s.values) > 0):
                raise ValueError("sigma section is identically zero")
        for t, h in self.taus:
            if h < 0:
                raise ValueError("pole orders h must be >= 0")
            if not np.any(np.abs(t.values) > 0):
                raise ValueError("tau section is identically zero")

    def with_eps(self, eps: float) -> "Density":
        return replace(self, eps=eps)

    @property
    def exponent(self) -> float:
        """The pole-matching exponent actually used.

        Defaults: h/l for a single sigma/tau pair, (sum h_r)/(min l_j) when
        several factors are present, and 1 when there are no poles.
        """
        if self.pole_exponent is not None:
            return self.pole_exponent
        h_total = sum(h for _, h in self.taus)
        pos_l = [l for _, l in self.sigmas if l > 0]
        if h_total == 0.0 or not pos_l:
            return 1.0
        return h_total / min(pos_l)


def build_density(spec: Density, grid: Optional[TorusGrid] = None) -> ScalarField:
    """Pointwise evaluation of the factored product at spec.eps."""
    if grid is None:
        if spec.sigmas:
            grid = spec.sigmas[0][0].grid
        elif spec.taus:
            grid = spec.taus[0][0].grid
        else:
            raise ValueError("empty spec needs an explicit grid")
    vals = np.ones(grid.shape)
    A = spec.exponent
    eps_a = spec.eps ** A if spec.eps > 0 else 0.0
    for s, l in spec.sigmas:
        _same_grid_check(s.grid, grid)
        vals = vals * (s.abs2().values + eps_a) ** l
    for t, h in spec.taus:
        _same_grid_check(t.grid, grid)
        base = t.abs2().values + spec.eps
        if spec.eps == 0.0 and h > 0 and np.min(base) <= 1e-30:
            raise ValueError("tau vanishes on a grid point: zeros must be grid-resolved")
        vals = vals * base ** (-h)
    return ScalarField(grid, vals)


def _same_grid_check(a: TorusGrid, b: TorusGrid) -> None:
    if a != b:
        raise ValueError("section grids differ")


def refine_density_spec(spec: Density, factor: int) -> Density:
    """Spec with all sections Fourier-interpolated onto a finer grid."""
    return replace(
        spec,
        sigmas=tuple((refine_complex_field(s, factor), l) for s, l in spec.sigmas),
        taus=tuple((refine_complex_field(t, factor), h) for t, h in spec.taus),
    )


def normalize_c_eps(
    spec: Density,
    omega: HermitianFormField,
    alpha: HermitianFormField,
    eps: float,
    vol_weight: Optional[ScalarField] = None,
) -> float:
    """c_eps = log( int (omega + eps alpha)^n / int G_eps Omega )."""
    grid = omega.grid
    g_eps = build_density(spec.with_eps(eps), grid)
    w = vol_weight.values if vol_weight is not None else 1.0
    denom = float(np.mean(g_eps.values * w))
    if denom <= 0:
        raise ValueError("density integral vanishes")
    numer = float(np.mean(det_array(omega.mat + eps * alpha.mat)))
    return math.log(numer / denom)


@dataclass
class ContinuationRow:
    eps: float
    c_eps: float
    osc: float
    sup_laplacian: float
    residual: float
    warm_dist: float


@dataclass
class ContinuationReport:
    rows: List[ContinuationRow] = field(default_factory=list)
    solve_reports: List[SolveReport] = field(default_factory=list)


def _dead_mode_content(values: np.ndarray, grid: TorusGrid) -> float:
    """Sup norm of the part of `values` on derivative-annihilated modes (k != 0).

    This is the piece of a lambda = 0 log target no potential can match, so
    it lower-bounds the achievable sup residual.
    """
    from .solver import _visible_mode_mask
    from .spectral import fftn, ifftn

    dead = ~_visible_mode_mask(grid)
    dead[(0,) * grid.real_dim] = False
    spec = fftn(values)
    spec[~dead] = 0.0
    return float(np.max(np.abs(ifftn(spec).real)))


def _damp_into_cone(base: HermitianFormField, phi: ScalarField, safety: float = 0.9) -> ScalarField:
    """Scale a warm start toward zero until base + i d dbar phi is positive."""
    from .fields import min_eigenvalue_array
    from .spectral import hessian_array

    hess = hessian_array(phi.values, base.grid)
    if np.min(min_eigenvalue_array(base.mat + hess)) > 0:
        return phi
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.min(min_eigenvalue_array(base.mat + mid * hess)) > 0:
            lo = mid
        else:
            hi = mid
    return ScalarField(phi.grid, phi.values * (safety * lo))


def _sup_laplacian(base: HermitianFormField, phi: ScalarField) -> float:
    """max over X of 2 tr_base(base + i d dbar phi)."""
    from .solver import _solver_multipliers, _hessian_entries, _assemble_metric

    grid = base.grid
    n = grid.complex_dim
    A = _assemble_metric(base.mat, _hessian_entries(phi.values, grid, _solver_multipliers(grid)), n)
    ginv = inv_array(base.mat)
    if n == 1:
        tr = (ginv[..., 0, 0] * A[..., 0, 0]).real
    else:
        tr = (
            ginv[..., 0, 0] * A[..., 0, 0]
            + ginv[..., 1, 1] * A[..., 1, 1]
            + ginv[..., 0, 1] * A[..., 1, 0]
            + ginv[..., 1, 0] * A[..., 0, 1]
        ).real
    return float(np.max(2.0 * tr))


def default_schedule(start: float = 1e-1, floor: float = 1e-5, ratio: float = 10 ** -0.5) -> List[float]:
    """Geometric schedule from start down to floor (inclusive within rounding)."""
    if not (0 < floor <= start) or not (0 < ratio < 1):
        raise ScheduleInvalid("need 0 < floor <= start and ratio in (0, 1)")
    out = [start]
    while out[-1] * ratio >= floor * (1 - 1e-12):
        out.append(out[-1] * ratio)
    return out


def continuation_path(
    omega: HermitianFormField,
    alpha: HermitianFormField,
    spec: Density,
    lam: float,
    schedule: Sequence[float],
    opts: Optional[SolveOptions] = None,
    vol_weight: Optional[ScalarField] = None,
) -> Tuple[ScalarField, ContinuationReport]:
    """Warm-started solves of the regularized equations down the schedule.

    omega + eps alpha must be positive definite for every scheduled eps;
    solve errors propagate with the offending eps attached.
    """
    eps_list = list(schedule)
    if not eps_list or any(e <= 0 for e in eps_list) or any(
        b >= a for a, b in zip(eps_list, eps_list[1:])
    ):
        raise ScheduleInvalid("schedule must be strictly decreasing with floor > 0")
    grid = omega.grid
    report = ContinuationReport()
    phi_prev: Optional[ScalarField] = None
    for eps in eps_list:
        base = omega + eps * alpha
        c_eps = normalize_c_eps(spec, omega, alpha, eps, vol_weight)
        g_eps = build_density(spec.with_eps(eps), grid)
        dens = ScalarField(grid, g_eps.values * math.exp(c_eps))
        inner = opts or SolveOptions()
        tol = inner.residual_tol
        if lam == 0.0:
            # sup residuals cannot beat the log-target content on modes the
            # discrete operator annihilates; widen the tolerance accordingly
            tol = max(tol, 10.0 * _dead_mode_content(np.log(density_floor(dens.values)), grid))
        inner = SolveOptions(
            max_newton_iters=inner.max_newton_iters,
            residual_tol=tol,
            max_halvings=inner.max_halvings,
            rescale_mass=False,
            cg_maxiter=inner.cg_maxiter,
            cone_margin_factor=inner.cone_margin_factor,
        )
        initial = None
        if phi_prev is not None:
            initial = _damp_into_cone(base, phi_prev)
        try:
            phi, srep = solve_ma(base, dens, lam, vol_weight, inner, initial=initial)
        except Exception as exc:
            raise type(exc)(f"continuation failed at eps={eps:.3e}: {exc}") from exc
        warm = 0.0 if phi_prev is None else float(np.max(np.abs(phi.values - phi_prev.values)))
        report.rows.append(
            ContinuationRow(
                eps=eps,
                c_eps=c_eps,
                osc=oscillation(phi),
                sup_laplacian=_sup_laplacian(base, phi),
                residual=srep.residual_history[-1],
                warm_dist=warm,
            )
        )
        report.solve_reports.append(srep)
        phi_prev = phi
    return phi_prev, report


@dataclass
class LpRow:
    eps: float
    distance: float


@dataclass
class LpReport:
    rows: List[LpRow]
    integrable: bool
    exponent_used: float
    coarse_integral: float
    fine_integral: float


def lp_convergence_check(
    spec: Density,
    p: float,
    schedule: Sequence[float],
    refine_factor: int = 2,
    stability_rtol: float = 0.01,
) -> LpReport:
    """||G_eps - G_0||_Lp along the schedule, on a refined quadrature grid.

    The limit density must pass the refinement test: its p-th moment is
    stable under grid doubling to within `stability_rtol`.  With the spec's
    own exponent below the matching threshold the distances are reported as
    is (no monotonicity is imposed here; callers compare).
    """
    if p <= 1:
        raise ValueError("p must be > 1")
    eps_list = list(schedule)
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ScheduleInvalid("schedule must be strictly decreasing with floor > 0")

    fine = refine_density_spec(spec, refine_factor)
    g0_coarse = build_density(spec.with_eps(0.0))
    g0_fine = build_density(fine.with_eps(0.0))
    coarse_int = float(np.mean(density_floor(g0_coarse.values) ** p))
    fine_int = float(np.mean(density_floor(g0_fine.values) ** p))
    integrable = abs(fine_int - coarse_int) <= stability_rtol * max(coarse_int, fine_int)
    if not integrable:
        raise ValueError(
            f"limit density fails the L^{p} refinement test: "
            f"{coarse_int:.6g} vs {fine_int:.6g} under refinement"
        )
    rows = []
    for eps in eps_list:
        g_eps = build_density(fine.with_eps(eps))
        dist = float(np.mean(np.abs(g_eps.values - g0_fine.values) ** p)) ** (1.0 / p)
        rows.append(LpRow(eps, dist))
    return LpReport(rows, integrable, fine.exponent, coarse_int, fine_int)


# ---------------------------------------------------------------------------
# the degenerating product-family scenario
# ---------------------------------------------------------------------------

@dataclass
class TianRow:
    t: float
    K_t: float
    osc: float
    residual: float


def product_torus_forms(grid: TorusGrid) -> Tuple[HermitianFormField, HermitianFormField]:
    """(pullback of the base form, product form) on a two-factor torus."""
    if grid.complex_dim != 2:
        raise ValueError("the product scenario needs complex dimension 2")
    from .fields import constant_form, flat_form

    return constant_form(grid, np.diag([1.0, 0.0]), semipositive=True), flat_form(grid)


def tian_family_run(
    omega_y: HermitianFormField,
    omega_x: HermitianFormField,
    f: ScalarField,
    ts: Sequence[float],
    opts: Optional[SolveOptions] = None,
) -> List[TianRow]:
    """Solve (omega_y + t omega_x + i d dbar psi)^n = K_t f omega_x^n per t.

    f must have unit mass against omega_x^n; the forms degenerate only in
    the limit, every scheduled t must be positive.  Runs are warm-started
    down the schedule.
    """
    grid = _same_grid(omega_y, omega_x, f)
    ts = list(ts)
    if any(t <= 0 for t in ts) or any(b >= a for a, b in zip(ts, ts[1:])):
        raise ScheduleInvalid("t schedule must be strictly decreasing and positive")
    w = ScalarField(grid, det_array(omega_x.mat))
    fw_mass = float(np.mean(f.values * w.values)) / float(np.mean(w.values))
    if abs(fw_mass - 1.0) > 1e-8:
        raise ValueError(f"f must have unit mass against the product volume, got {fw_mass:.6g}")
    rows: List[TianRow] = []
    phi_prev: Optional[ScalarField] = None
    for t in ts:
        base = omega_y + t * omega_x
        K_t = float(np.mean(det_array(base.mat)))
        phi, srep = solve_ma(base, f, 0.0, w, opts, initial=phi_prev)
        rows.append(TianRow(t, K_t, oscillation(phi), srep.residual_history[-1]))
        phi_prev = phi
    return rows
