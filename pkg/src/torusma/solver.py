"""Newton solver for (omega + i d dbar phi)^n = f e^(lambda phi) Omega.

The equation is solved in log form: F(phi) = log det(g + H phi) - log(f
Omega) - lambda phi, whose linearization tr(A^{-1} H delta) - lambda delta
is the phi-metric Laplacian minus lambda.  Newton systems are solved by
LGMRES with the frozen-coefficient flat operator as a spectral
preconditioner (the discrete trace operator is not exactly symmetric, which
rules plain conjugate gradients out near the cone boundary).  For lambda = 0
the gauge freedom is fixed by a mean-zero constraint during the iteration
and a final shift to sup phi = 0; every iterate keeps omega + i d dbar phi
inside the positive cone through step halving with a fraction-to-the-
boundary rule.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ChainViolation, ConeExit, MassMismatch, NoConvergence
from .fields import (
    HermitianFormField,
    ScalarField,
    TorusGrid,
    _same_grid,
    det_array,
    inv_array,
    min_eigenvalue_array,
    oscillation,
)
from .spectral import _kappa, density_floor, fftn, ifftn


@dataclass
class SolveOptions:
    """Knobs for one Newton run; tolerances must be positive.

    cg_maxiter is the Krylov matvec budget of each linearized solve;
    cone_margin_factor scales the positivity floor relative to the smallest
    eigenvalue of the reference form.
    """

    max_newton_iters: int = 60
    residual_tol: float = 1e-10
    max_halvings: int = 40
    rescale_mass: bool = True
    cg_maxiter: int = 400
    cone_margin_factor: float = 1e-8

    def __post_init__(self):
        if self.residual_tol <= 0 or self.max_newton_iters <= 0 or self.max_halvings <= 0:
            raise ValueError("solver tolerances and budgets must be positive")


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: List[float] = field(default_factory=list)
    final_oscillation: float = 0.0
    min_cone_eig: float = np.inf
    normalizing_constant: float = 1.0
    wall_time: float = 0.0


def _hessian_entries(vals: np.ndarray, grid: TorusGrid, mults) -> list:
    """Unique Hessian entries of real samples: [H00] or [H00, H11, H01]."""
    spec = fftn(vals)
    if grid.complex_dim == 1:
        return [ifftn(mults[0] * spec).real]
    return [
        ifftn(mults[0] * spec).real,
        ifftn(mults[1] * spec).real,
        ifftn(mults[2] * spec),
    ]


def _assemble_metric(g0: np.ndarray, hess: list, n: int) -> np.ndarray:
    """g0 + H phi from the unique entries."""
    A = g0.copy()
    if n == 1:
        A[..., 0, 0] += hess[0]
        return A
    A[..., 0, 0] += hess[0]
    A[..., 1, 1] += hess[1]
    A[..., 0, 1] += hess[2]
    A[..., 1, 0] += np.conj(hess[2])
    return A


def _solver_multipliers(grid: TorusGrid) -> list:
    """Fourier multipliers of the unique Hessian entries."""
    kap = _kappa(grid)
    if grid.complex_dim == 1:
        return [(-np.pi ** 2) * (kap[0] * np.conj(kap[0])).real]
    return [
        (-np.pi ** 2) * (kap[0] * np.conj(kap[0])).real,
        (-np.pi ** 2) * (kap[1] * np.conj(kap[1])).real,
        (-np.pi ** 2) * kap[0] * np.conj(kap[1]),
    ]


def _trace_inv_hessian(Ainv: np.ndarray, hess: list, n: int) -> np.ndarray:
    """tr(A^{-1} H v) from unique entries of H v (real output)."""
    if n == 1:
        return Ainv[..., 0, 0].real * hess[0]
    return (
        Ainv[..., 0, 0].real * hess[0]
        + Ainv[..., 1, 1].real * hess[1]
        + 2.0 * (Ainv[..., 1, 0] * hess[2]).real
    )


def _visible_mode_mask(grid: TorusGrid) -> np.ndarray:
    """False on modes annihilated by every derivative multiplier.

    Axis wavenumbers 0 and Nyquist both map to kappa = 0, so potentials
    supported on such modes are kernel directions of the discrete equation;
    Newton directions are projected onto the complement and the returned
    potential is the canonical representative without such content.
    """
    N = grid.resolution
    k = np.fft.fftfreq(N) * N
    k[N // 2] = 0.0
    dead_axis = (k == 0.0)
    mask = np.zeros(grid.shape, dtype=bool)
    for a in range(grid.real_dim):
        shape = [1] * grid.real_dim
        shape[a] = N
        mask = mask | (~dead_axis).reshape(shape)
    return mask


def _project_visible(v: np.ndarray, mask: np.ndarray) -> np.ndarray:
    spec = fftn(v)
    spec[~mask] = 0.0
    return ifftn(spec).real


def _solve_newton_system(apply_op, apply_prec, rhs: np.ndarray, rtol: float,
                         max_matvecs: int) -> np.ndarray:
    """Preconditioned LGMRES solve of the linearized (nonsymmetric) system.

    The variable-coefficient trace operator is only approximately symmetric
    on the grid and plain conjugate gradients diverge near the cone
    boundary, so a Krylov method without a symmetry assumption is used with
    the frozen-coefficient spectral preconditioner.
    """
    shape = rhs.shape
    size = rhs.size
    op = spla.LinearOperator(
        (size, size), matvec=lambda v: apply_op(v.reshape(shape)).ravel(),
        dtype=np.float64,
    )
    prec = spla.LinearOperator(
        (size, size), matvec=lambda v: apply_prec(v.reshape(shape)).ravel(),
        dtype=np.float64,
    )
    outer = max(2, max_matvecs // 30)
    x, _ = spla.lgmres(op, rhs.ravel(), M=prec, rtol=rtol, atol=0.0,
                       maxiter=outer, inner_m=30)
    return x.reshape(shape)


def solve_ma(
    omega: HermitianFormField,
    f: ScalarField,
    lam: float = 0.0,
    vol_weight: Optional[ScalarField] = None,
    opts: Optional[SolveOptions] = None,
    initial: Optional[ScalarField] = None,
    iterate_hook: Optional[Callable[[np.ndarray], None]] = None,
) -> Tuple[ScalarField, SolveReport]:
    """Solve (omega + i d dbar phi)^n = f e^(lambda phi) Omega.

    `omega` must be positive definite pointwise; f >= 0 with positive mass.
    For lambda = 0 the density is rescaled so that its total mass matches
    the class mass (the multiplicative constant lands in the report); with
    rescaling disabled a mismatch raises MassMismatch.  On success the
    residual sup norm is <= opts.residual_tol and the returned potential is
    sup-normalized (lambda = 0) or left as the equation fixes it (lambda > 0).
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    opts = opts or SolveOptions()
    grid = _same_grid(omega, f)
    n = grid.complex_dim
    t0 = time.monotonic()

    g0 = omega.mat
    base_mineig = float(np.min(min_eigenvalue_array(g0)))
    if base_mineig <= 0:
        raise ValueError(f"omega must be positive definite: min eigenvalue {base_mineig:.3e}")
    if np.any(f.values < 0):
        raise ValueError("density f must be >= 0")

    w = vol_weight.values if vol_weight is not None else np.ones(grid.shape)
    fw = f.values * w
    mass_f = float(np.mean(fw))
    if mass_f <= 0:
        raise ValueError("density has zero total mass")
    mass_omega = float(np.mean(det_array(g0)))

    c_norm = 1.0
    if lam == 0.0:
        c_norm = mass_omega / mass_f
        if not opts.rescale_mass and abs(c_norm - 1.0) > 1e-12:
            raise MassMismatch(
                f"int f Omega = {mass_f:.17g} but int omega^n = {mass_omega:.17g}"
            )
    target = np.log(density_floor(fw * c_norm))

    report = SolveReport(normalizing_constant=c_norm)
    mults = _solver_multipliers(grid)
    cone_floor = opts.cone_margin_factor * base_mineig
    visible = _visible_mode_mask(grid)

    phi = np.zeros(grid.shape) if initial is None else _project_visible(initial.values, visible)
    if lam == 0.0:
        phi -= np.mean(phi)

    def residual(phi_vals):
        A = _assemble_metric(g0, _hessian_entries(phi_vals, grid, mults), n)
        mineig = float(np.min(min_eigenvalue_array(A)))
        if mineig <= 0:
            return A, mineig, None, np.inf
        F = np.log(det_array(A)) - target - lam * phi_vals
        return A, mineig, F, float(np.max(np.abs(F)))

    A, mineig, F, res = residual(phi)
    if mineig <= cone_floor:
        raise ConeExit(f"initial guess leaves the cone: min eigenvalue {mineig:.3e}")
    report.min_cone_eig = mineig
    report.residual_history.append(res)
    if iterate_hook is not None:
        iterate_hook(phi)

    for it in range(opts.max_newton_iters):
        if res <= opts.residual_tol:
            break
        Ainv = inv_array(A)
        mean_Ainv = Ainv.reshape(-1, n, n).mean(axis=0)

        kap = _kappa(grid)
        pmult = np.zeros(grid.shape)
        for j in range(n):
            for k in range(n):
                pmult = pmult + (mean_Ainv[k, j] * np.pi ** 2 * kap[j] * np.conj(kap[k])).real
        pmult = pmult + lam
        # lambda = 0: modes with zeroed derivative multipliers (k = 0 and
        # Nyquist-only) are kernel directions of the discrete equation; the
        # whole solve is projected onto their complement.  lambda > 0: the
        # operator acts as lambda*Id there, pmult = lambda is exact.
        if lam == 0.0:
            inv_pmult = np.where(visible, 1.0 / np.where(visible, pmult, 1.0), 0.0)
        else:
            inv_pmult = 1.0 / pmult

        def apply_op(v):
            hv = _hessian_entries(v, grid, mults)
            out = -_trace_inv_hessian(Ainv, hv, n) + lam * v
            if lam == 0.0:
                out = _project_visible(out, visible)
            return out

        def apply_prec(v):
            return ifftn(inv_pmult * fftn(v)).real

        rhs = _project_visible(F, visible) if lam == 0.0 else F
        rtol = min(1e-2, max(np.sqrt(res) * 1e-2, 1e-13))
        delta = _solve_newton_system(apply_op, apply_prec, rhs, rtol, opts.cg_maxiter)
        if lam == 0.0:
            delta = _project_visible(delta, visible)

        step = 1.0
        accepted = False
        cone_blocked = True
        # fraction-to-the-boundary rule: an accepted step keeps at least a
        # tenth of the current cone margin, so linearizations stay sane
        eig_floor = max(cone_floor, 0.1 * mineig)
        for _ in range(opts.max_halvings):
            cand = phi + step * delta
            if lam == 0.0:
                cand -= np.mean(cand)
            A2, mineig2, F2, res2 = residual(cand)
            if mineig2 > eig_floor:
                cone_blocked = False
                if res2 < res:
                    phi, A, F, res, mineig = cand, A2, F2, res2, mineig2
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            if cone_blocked:
                raise ConeExit(
                    f"line search could not restore positivity at iteration {it}"
                )
            raise NoConvergence(
                f"line search failed to decrease the residual at iteration {it} "
                f"(residual {res:.3e})"
            )
        report.min_cone_eig = min(report.min_cone_eig, mineig)
        report.residual_history.append(res)
        report.iterations = it + 1
        if iterate_hook is not None:
            iterate_hook(phi)

    if res > opts.residual_tol:
        raise NoConvergence(
            f"no convergence after {opts.max_newton_iters} iterations "
            f"(residual {res:.3e})"
        )

    if lam == 0.0:
        phi = phi - np.max(phi)
    out = ScalarField(grid, phi)
    report.final_oscillation = oscillation(out)
    report.wall_time = time.monotonic() - t0
    return out, report


# ---------------------------------------------------------------------------
# Yau's monotone iteration scheme
# ---------------------------------------------------------------------------

@dataclass
class YauResult:
    upper_chain: List[ScalarField]
    lower_chain: List[ScalarField]
    limit: ScalarField
    chain_gaps: List[float]
    laplacian_bounds: Optional[List[float]] = None   # B_j = max(2n + Lap phi'_j)
    contraction_constant: Optional[float] = None     # fitted C2


def mass_matched_exponent(omega: HermitianFormField, h: ScalarField) -> ScalarField:
    """Shift h by a constant so that int e^h omega^n = int omega^n."""
    w = det_array(omega.mat)
    shift = np.log(float(np.mean(np.exp(h.values) * w)) / float(np.mean(w)))
    return ScalarField(h.grid, h.values - shift, h.label)


def yau_anchors(
    omega: HermitianFormField,
    h: ScalarField,
    opts: Optional[SolveOptions] = None,
    vol_weight: Optional[ScalarField] = None,
) -> Tuple[ScalarField, ScalarField]:
    """Solve the lambda = 0 equation with density e^h and return the two shifts.

    The upper anchor has min = 0, the lower anchor max = 0.
    """
    w = vol_weight or ScalarField(omega.grid, det_array(omega.mat))
    u, _ = solve_ma(omega, ScalarField(h.grid, np.exp(h.values)), 0.0, w, opts)
    upper = ScalarField(u.grid, u.values - np.min(u.values))
    lower = ScalarField(u.grid, u.values - np.max(u.values))
    return upper, lower


def _laplacian_bound(omega: HermitianFormField, phi: ScalarField, mults) -> float:
    """max over X of 2 tr_omega(omega + i d dbar phi) = 2n + Lap_omega phi."""
    grid = omega.grid
    n = grid.complex_dim
    hess = _hessian_entries(phi.values, grid, mults)
    A = _assemble_metric(omega.mat, hess, n)
    ginv = inv_array(omega.mat)
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


def yau_iteration(
    omega: HermitianFormField,
    h: ScalarField,
    lam: float,
    phi_upper0: ScalarField,
    phi_lower0: ScalarField,
    opts: Optional[SolveOptions] = None,
    chain_tol: float = 2e-9,
    max_chain_iters: int = 200,
    monitor_laplacian: bool = False,
    inequality_tol: float = 1e-8,
) -> YauResult:
    """Monotone two-sided iteration for (omega + i d dbar phi)^n = e^(h + lam phi) omega^n.

    Anchors must satisfy min(phi_upper0) = 0 = max(phi_lower0) and solve the
    lambda = 0 equation with density e^h (use `yau_anchors`).  Each inner
    step solves the equation with effective coefficient lam + 1 and density
    e^(h - previous iterate); the chains must stay ordered

        lower_0 <= lower_{j-1} <= lower_j <= upper_j <= upper_{j-1} <= upper_0

    pointwise to within `inequality_tol` or ChainViolation is raised.
    """
    if lam <= 0:
        raise ValueError("the iteration targets lambda > 0 equations")
    grid = _same_grid(omega, h, phi_upper0, phi_lower0)
    if abs(float(np.min(phi_upper0.values))) > 1e-9 or abs(float(np.max(phi_lower0.values))) > 1e-9:
        raise ValueError("anchors must be normalized min(upper) = 0 = max(lower)")
    opts = opts or SolveOptions()
    w = ScalarField(grid, det_array(omega.mat))
    mults = _solver_multipliers(grid) if monitor_laplacian else None

    upper = [phi_upper0]
    lower = [phi_lower0]
    gaps: List[float] = []
    bounds: List[float] = [] if monitor_laplacian else None
    if monitor_laplacian:
        bounds.append(_laplacian_bound(omega, phi_upper0, mults))

    def advance(prev: ScalarField) -> ScalarField:
        dens = ScalarField(grid, np.exp(h.values - prev.values))
        opts_inner = SolveOptions(
            max_newton_iters=opts.max_newton_iters,
            residual_tol=opts.residual_tol,
            max_halvings=opts.max_halvings,
            rescale_mass=False,
            cg_maxiter=opts.cg_maxiter,
            cone_margin_factor=opts.cone_margin_factor,
        )
        phi, _ = solve_ma(omega, dens, lam + 1.0, w, opts_inner, initial=prev)
        return phi

    def check_chain(j: int) -> None:
        pairs = [
            (phi_lower0.values, lower[j - 1].values),
            (lower[j - 1].values, lower[j].values),
            (lower[j].values, upper[j].values),
            (upper[j].values, upper[j - 1].values),
            (upper[j - 1].values, phi_upper0.values),
            (phi_lower0.values, phi_upper0.values),
        ]
        for idx, (lo, hi) in enumerate(pairs):
            worst = float(np.max(lo - hi))
            if worst > inequality_tol:
                raise ChainViolation(
                    f"chain inequality {idx} fails at step {j}: violation {worst:.3e}"
                )

    for j in range(1, max_chain_iters + 1):
        upper.append(advance(upper[-1]))
        lower.append(advance(lower[-1]))
        check_chain(j)
        if monitor_laplacian:
            bounds.append(_laplacian_bound(omega, upper[-1], mults))
        gap = float(np.max(upper[-1].values - lower[-1].values))
        gaps.append(gap)
        if gap <= chain_tol:
            break
    else:
        raise NoConvergence(f"chains did not close after {max_chain_iters} iterations")

    limit = ScalarField(grid, 0.5 * (upper[-1].values + lower[-1].values))
    c2 = None
    if monitor_laplacian and len(bounds) >= 2:
        c2 = max(2.0 * b - a for a, b in zip(bounds, bounds[1:]))
    return YauResult(upper, lower, limit, gaps, bounds, c2)


def uniqueness_probe(
    omega: HermitianFormField,
    f: ScalarField,
    lam: float,
    inits: Sequence[ScalarField],
    opts: Optional[SolveOptions] = None,
    vol_weight: Optional[ScalarField] = None,
) -> float:
    """Max pairwise sup distance between solves started from each init."""
    sols = []
    for init in inits:
        phi, _ = solve_ma(omega, f, lam, vol_weight, opts, initial=init)
        sols.append(phi.values)
    worst = 0.0
    for i in range(len(sols)):
        for j in range(i + 1, len(sols)):
            worst = max(worst, float(np.max(np.abs(sols[i] - sols[j]))))
    return worst


# ---------------------------------------------------------------------------
# stability ladder
# ---------------------------------------------------------------------------

@dataclass
class StabilityRow:
    l1_dist: float
    linf_dist: float
    bound: float


@dataclass
class StabilityResult:
    rows: List[StabilityRow]
    alpha0: float
    fitted_constant: float


def stability_probe(
    omega: HermitianFormField,
    f: ScalarField,
    perturbed: Sequence[ScalarField],
    eps0: float,
    opts: Optional[SolveOptions] = None,
    vol_weight: Optional[ScalarField] = None,
) -> StabilityResult:
    """Distances between sup-normalized solutions for f and each perturbation.

    The log-rate bound 2 C^alpha0 (log 1/||phi-psi||_L1)^(-alpha0) with
    alpha0 = 1/(n+1+n^2/eps0) uses the smallest constant C that makes the
    bound hold on the first (coarsest) perturbation; the same C is then
    reported for the finer ones.
    """
    grid = omega.grid
    n = grid.complex_dim
    alpha0 = 1.0 / (n + 1 + n ** 2 / eps0)
    w = vol_weight.values if vol_weight is not None else np.ones(grid.shape)

    phi, _ = solve_ma(omega, f, 0.0, vol_weight, opts)
    rows: List[StabilityRow] = []
    fitted: Optional[float] = None
    for g in perturbed:
        psi, _ = solve_ma(omega, g, 0.0, vol_weight, opts)
        diff = phi.values - psi.values
        l1 = float(np.mean(np.abs(diff) * w))
        linf = float(np.max(np.abs(diff)))
        if l1 <= 0.0:
            rows.append(StabilityRow(0.0, linf, 0.0))
            continue
        if l1 >= 0.5:
            rows.append(StabilityRow(l1, linf, np.inf))
            continue
        rate = np.log(1.0 / l1) ** (-alpha0)
        if fitted is None:
            fitted = (linf / (2.0 * rate)) ** (1.0 / alpha0)
        rows.append(StabilityRow(l1, linf, 2.0 * fitted ** alpha0 * rate))
    return StabilityResult(rows, alpha0, fitted if fitted is not None else 0.0)
