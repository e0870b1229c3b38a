"""Spectral differentiation and Monge-Ampere densities.

All derivatives are Fourier multipliers, exact for band-limited samples.
With z_j = x_j + i y_j the Wirtinger derivatives are

    d/dz_j    = (d/dx_j - i d/dy_j) / 2,
    d/dzbar_j = (d/dx_j + i d/dy_j) / 2,

so the mixed second derivative d^2/dz_j dzbar_k acts in Fourier space as
-pi^2 * kappa_j * conj(kappa_k) with kappa_j := kx_j - i ky_j in integer
wavenumbers.  Nyquist modes are zeroed in every derivative multiplier so
that all identities below stay conjugate-symmetric.
"""

from __future__ import annotations

import os
from functools import lru_cache
from typing import Tuple

import numpy as np
import scipy.fft as sfft

from .fields import (
    ComplexField,
    HermitianFormField,
    ScalarField,
    TorusGrid,
    _same_grid,
    det_array,
    min_eigenvalue_array,
    max_eigenvalue_array,
)

_DENSITY_FLOOR = 1e-300


def fft_workers() -> int:
    try:
        return max(1, int(os.environ.get("TORUSMA_THREADS", "0")) or (os.cpu_count() or 1))
    except ValueError:
        return 1


def fftn(a: np.ndarray) -> np.ndarray:
    return sfft.fftn(a, workers=fft_workers())


def ifftn(a: np.ndarray) -> np.ndarray:
    return sfft.ifftn(a, workers=fft_workers())


@lru_cache(maxsize=32)
def _wavenumbers(grid: TorusGrid) -> tuple:
    """Integer wavenumber arrays per real axis, Nyquist zeroed, broadcastable."""
    N = grid.resolution
    k = np.fft.fftfreq(N) * N
    k[N // 2] = 0.0
    out = []
    for a in range(grid.real_dim):
        shape = [1] * grid.real_dim
        shape[a] = N
        out.append(k.reshape(shape))
    return tuple(out)


@lru_cache(maxsize=32)
def _kappa(grid: TorusGrid) -> tuple:
    """kappa_j = kx_j - i ky_j per complex coordinate."""
    ks = _wavenumbers(grid)
    return tuple(ks[2 * j] - 1j * ks[2 * j + 1] for j in range(grid.complex_dim))


@lru_cache(maxsize=32)
def _ddbar_multipliers(grid: TorusGrid) -> np.ndarray:
    """Multiplier stack mu[j, k] = -pi^2 kappa_j conj(kappa_k), broadcast shape."""
    kap = _kappa(grid)
    n = grid.complex_dim
    mus = np.empty((n, n) + grid.shape, dtype=np.complex128)
    for j in range(n):
        for k in range(n):
            mus[j, k] = -np.pi ** 2 * (kap[j] * np.conj(kap[k]))
    return mus


def hessian_array(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Complex Hessian (d^2/dz_j dzbar_k) of real samples; shape grid+(n,n)."""
    n = grid.complex_dim
    spec = fftn(values)
    mus = _ddbar_multipliers(grid)
    out = np.empty(grid.shape + (n, n), dtype=np.complex128)
    for j in range(n):
        for k in range(n):
            out[..., j, k] = ifftn(mus[j, k] * spec)
    return out


def spectral_dd_bar(phi: ScalarField) -> HermitianFormField:
    """The (1,1)-form i d dbar phi as a Hermitian coefficient field.

    Linear in phi; output is Hermitian pointwise because the multipliers
    satisfy mu_{kj} = conj(mu_{jk}) and phi is real.
    """
    mat = hessian_array(phi.values, phi.grid)
    if not np.all(np.isfinite(mat)):
        raise ValueError("non-finite values after spectral differentiation")
    return HermitianFormField(phi.grid, mat)


def ma_density(g: HermitianFormField, reference: HermitianFormField) -> ScalarField:
    """det(g)/det(reference): density of g^n against reference^n.

    `g` is assumed positive semidefinite (not enforced); `reference` must be
    positive definite everywhere.
    """
    _same_grid(g, reference)
    dref = det_array(reference.mat)
    if np.min(dref) <= 0.0:
        raise ValueError(f"reference form singular: min det {np.min(dref):.3e}")
    return ScalarField(g.grid, det_array(g.mat) / dref)


def mixed_density_array(mats: list, grid: TorusGrid) -> np.ndarray:
    """Density of the wedge product of n forms against dV (det normalization).

    For n=1 this is the single coefficient; for n=2 the polarized mixed
    determinant D(A,B) = (a11 b22 + a22 b11)/2 - Re(a12 conj(b12)), which is
    exactly symmetric in its arguments (bit for bit).
    """
    n = grid.complex_dim
    if len(mats) != n:
        raise ValueError(f"need {n} forms, got {len(mats)}")
    if n == 1:
        return mats[0][..., 0, 0].real.copy()
    A, B = mats
    a, c = A[..., 0, 0].real, A[..., 1, 1].real
    b = A[..., 0, 1]
    p, r = B[..., 0, 0].real, B[..., 1, 1].real
    q = B[..., 0, 1]
    # Re(b conj(q)) in explicit real arithmetic: commutative bit for bit and
    # identical to det_array in the pure case A = B
    return 0.5 * (a * r + c * p) - (b.real * q.real + b.imag * q.imag)


def mollify(phi: ScalarField, eps: float) -> ScalarField:
    """Gaussian spectral mollification at length scale eps (heat-kernel weights)."""
    if eps < 0:
        raise ValueError("mollification scale must be >= 0")
    if eps == 0:
        return phi
    ks = _wavenumbers(phi.grid)
    k2 = np.zeros(phi.grid.shape)
    for k in ks:
        k2 = k2 + k * k
    weights = np.exp(-2.0 * np.pi ** 2 * eps ** 2 * k2)
    out = ifftn(weights * fftn(phi.values)).real
    return ScalarField(phi.grid, out, phi.label)


# ---------------------------------------------------------------------------
# regularized log Hessians of section analogues
# ---------------------------------------------------------------------------

def _gradient_z(sigma: ComplexField) -> np.ndarray:
    """Stack of d sigma / dz_j, shape grid + (n,)."""
    grid = sigma.grid
    n = grid.complex_dim
    out = np.empty(grid.shape + (n,), dtype=np.complex128)
    spec = fftn(sigma.values)
    kap = _kappa(grid)
    for j in range(n):
        out[..., j] = ifftn((1j * np.pi * kap[j]) * spec)
    return out


def regularized_log_hessian(
    sigma: ComplexField,
    eps: float,
    curvature: HermitianFormField,
) -> Tuple[HermitianFormField, ScalarField]:
    """i d dbar log(|sigma|^2 + eps) through its rank-one decomposition.

    Writing S = log(|sigma|^2 + eps) and d for the (1,0) derivative, the
    Hessian splits as a nonnegative tensor part

        T_{j kbar} = [ (|sigma|^2+eps) d_j sigma conj(d_k sigma)
                       - (d_j sigma sigmabar) conj(d_k sigma sigmabar) ]
                     / (|sigma|^2+eps)^2

    minus the curvature contribution |sigma|^2/(|sigma|^2+eps) * curvature.
    For scalar sections T equals eps/|sigma|^2 * i dS ^ dbarS exactly, and
    that product is smooth across zeros of sigma (computed here as
    eps * d_j sigma conj(d_k sigma) / (|sigma|^2+eps)^2).

    Returns the Hessian and a pointwise lower-bound margin: the smallest
    eigenvalue of hessian - [eps/|sigma|^2 i dS ^ dbarS - |curvature|_op *
    |sigma|^2/(|sigma|^2+eps) * identity], which must be >= -tolerance.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    grid = sigma.grid
    n = grid.complex_dim
    s2 = sigma.values.real ** 2 + sigma.values.imag ** 2
    if np.max(s2) == 0.0:
        raise ValueError("sigma is identically zero")
    w = s2 + eps

    grad = _gradient_z(sigma)
    gs = grad * np.conj(sigma.values)[..., None]   # d_j sigma * sigmabar
    outer_grad = grad[..., :, None] * np.conj(grad)[..., None, :]
    outer_gs = gs[..., :, None] * np.conj(gs)[..., None, :]

    w1 = w[..., None, None]
    t_mat = (w1 * outer_grad - outer_gs) / w1 ** 2
    ratio = (s2 / w)[..., None, None]
    hess = t_mat - ratio * curvature.mat

    # smooth form eps/|sigma|^2 * i dS ^ dbarS = eps * outer_grad / w^2
    lower_form = eps * outer_grad / w1 ** 2
    curv_norm = np.maximum(
        np.abs(min_eigenvalue_array(curvature.mat)),
        np.abs(max_eigenvalue_array(curvature.mat)),
    )
    bound = (curv_norm * s2 / w)[..., None, None] * np.eye(n)
    margin_mat = hess - lower_form + bound
    margin = min_eigenvalue_array(0.5 * (margin_mat + np.conj(np.swapaxes(margin_mat, -1, -2))))

    hess = 0.5 * (hess + np.conj(np.swapaxes(hess, -1, -2)))
    if not np.all(np.isfinite(hess)):
        raise ValueError("non-finite values in regularized log Hessian")
    return HermitianFormField(grid, hess), ScalarField(grid, margin)


def density_floor(values: np.ndarray) -> np.ndarray:
    """Floor used before taking logs of densities with zeros."""
    return np.maximum(values, _DENSITY_FLOOR)
