"""Seeded generators for band-limited fields, cone potentials and sections.

All randomness flows through `named_rng(seed, name)`, so any consumer that
fixes the pair (seed, name) reproduces the same field on any machine.
"""

from __future__ import annotations

import hashlib
from typing import Optional

import numpy as np

from .fields import (
    ComplexField,
    ScalarField,
    TorusGrid,
    min_eigenvalue_array,
)
from .spectral import hessian_array, fftn, ifftn


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Splittable generator: one root seed, independent stream per name."""
    digest = hashlib.sha256(name.encode()).digest()
    key = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def random_band_limited(
    grid: TorusGrid,
    rng: np.random.Generator,
    kmax: int = 3,
    amplitude: float = 1.0,
) -> ScalarField:
    """Random real trigonometric polynomial with |k|_inf <= kmax, sup-norm = amplitude."""
    if kmax >= grid.resolution // 2:
        raise ValueError("kmax must stay below the Nyquist frequency")
    shape = grid.shape
    spec = np.zeros(shape, dtype=np.complex128)
    ranges = [list(range(-kmax, kmax + 1))] * grid.real_dim
    idx = np.meshgrid(*ranges, indexing="ij")
    coords = np.stack([i.ravel() for i in idx], axis=1)
    for k in coords:
        if not np.any(k):
            continue
        c = rng.standard_normal() + 1j * rng.standard_normal()
        pos = tuple(int(ki) % grid.resolution for ki in k)
        neg = tuple((-int(ki)) % grid.resolution for ki in k)
        spec[pos] += 0.5 * c
        spec[neg] += 0.5 * np.conj(c)
    vals = ifftn(spec).real * grid.npoints
    m = np.max(np.abs(vals))
    if m == 0.0:
        return ScalarField(grid, vals)
    return ScalarField(grid, vals * (amplitude / m))


def cone_interior_potential(
    grid: TorusGrid,
    rng: np.random.Generator,
    base_mat: Optional[np.ndarray] = None,
    kmax: int = 3,
    safety: float = 0.5,
) -> ScalarField:
    """Random phi with base + i d dbar phi positive definite with margin.

    Draws a band-limited field and rescales so the smallest eigenvalue of
    base + Hessian stays above (1-safety) times the flat level.
    """
    n = grid.complex_dim
    if base_mat is None:
        base_mat = np.eye(n)
    psi = random_band_limited(grid, rng, kmax=kmax, amplitude=1.0)
    hess = hessian_array(psi.values, grid)
    base = np.broadcast_to(np.asarray(base_mat, dtype=np.complex128), hess.shape)
    # largest s with min_eig(base + s*H) >= 0 found by bisection on s
    lo, hi = 0.0, 1.0
    while np.min(min_eigenvalue_array(base + hi * hess)) > 0 and hi < 1e6:
        hi *= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.min(min_eigenvalue_array(base + mid * hess)) > 0:
            lo = mid
        else:
            hi = mid
    s = safety * lo
    return ScalarField(grid, psi.values * s)


def section_with_zero(
    grid: TorusGrid,
    coord: int = 0,
    x0: float = 0.2371,
    y0: float = 0.6131,
    winding: int = 1,
) -> ComplexField:
    """Smooth periodic complex field with isolated zeros in complex coordinate `coord`.

    sin(2 pi (x - x0)) + i sin(2 pi (y - y0)) vanishes at four points of the
    (x, y) torus, each resolved like a simple section zero; the default
    offsets keep all zeros away from dyadic grid points.  `winding` > 1
    takes the field to that power (an order-`winding` zero).
    """
    axes = grid.axes()
    x = axes[2 * coord] - x0
    y = axes[2 * coord + 1] - y0
    base = np.sin(2 * np.pi * x) + 1j * np.sin(2 * np.pi * y)
    vals = np.broadcast_to(base ** winding, grid.shape).copy()
    return ComplexField(grid, vals)


def constant_section(grid: TorusGrid, value: complex = 1.0) -> ComplexField:
    return ComplexField(grid, np.full(grid.shape, value, dtype=np.complex128))


def refine_complex_field(f: ComplexField, factor: int) -> ComplexField:
    """Exact Fourier interpolation onto a grid `factor` times finer."""
    if factor == 1:
        return f
    grid = f.grid
    fine = TorusGrid(grid.complex_dim, grid.resolution * factor)
    spec = fftn(f.values) / grid.npoints
    out = np.zeros(fine.shape, dtype=np.complex128)
    N = grid.resolution
    half = N // 2
    # scatter the coarse spectrum into the corners of the fine spectrum
    src = [np.r_[0:half, -half:0] for _ in range(grid.real_dim)]
    idx_coarse = np.ix_(*[np.r_[0:half, N - half:N] for _ in range(grid.real_dim)])
    idx_fine = np.ix_(*[np.r_[0:half, fine.resolution - half:fine.resolution]
                        for _ in range(grid.real_dim)])
    out[idx_fine] = spec[idx_coarse]
    vals = ifftn(out) * fine.npoints
    return ComplexField(fine, vals)


def refine_scalar_field(f: ScalarField, factor: int) -> ScalarField:
    c = refine_complex_field(ComplexField(f.grid, f.values.astype(np.complex128)), factor)
    return ScalarField(c.grid, c.values.real)


def bundled_density_specs(grid: TorusGrid):
    """Named degenerate-density specs used by the continuation scenarios.

    Zero orders use l = 1; pole orders stay below 0.3 so that the limit
    densities are comfortably integrable and the normalizing constants can
    reach |c_eps| < 1e-3 at the schedule floor.  The zero+pole spec pins
    the smoothing exponent at 1 (above the matching threshold h/l).
    """
    from .degenerate import Density

    if grid.complex_dim == 1:
        # the 1.3 scale keeps mean |sigma|^2 away from 1, so the normalized
        # density shape genuinely moves along the eps schedule
        raw = section_with_zero(grid, coord=0, x0=0.2371, y0=0.6131)
        sigma = ComplexField(grid, 1.3 * raw.values)
        tau = section_with_zero(grid, coord=0, x0=0.7417, y0=0.1693)
        return {
            "zeros": Density(sigmas=((sigma, 1.0),), pole_exponent=1.0),
            "poles": Density(taus=((tau, 0.25),)),
            "zeros-poles": Density(
                sigmas=((sigma, 1.0),), taus=((tau, 0.25),), pole_exponent=1.0
            ),
        }
    raw = section_with_zero(grid, coord=0, x0=0.2371, y0=0.6131)
    sigma = ComplexField(grid, 1.3 * raw.values)
    return {
        "zeros": Density(sigmas=((sigma, 1.0),), pole_exponent=1.0),
    }
