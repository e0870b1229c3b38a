"""Grids and field types on flat complex tori.

The torus is C^n / (Z^n + i Z^n) with n in {1, 2}. Real coordinates are
ordered (x_1, y_1[, x_2, y_2]) where z_j = x_j + i y_j; every real axis has
period 1 and carries `resolution` equispaced samples, so the total real
volume is 1 and uniform quadrature weights sum to 1.

Hermitian (1,1)-form fields store the coefficient matrix (a_{j kbar}) of
a = i * sum a_{j kbar} dz_j ^ dzbar_k per grid point.  All densities and
masses in this package are quoted against the unit-mass Lebesgue measure
dV of the torus, so the top power of a form enters only through
det(a_{j kbar}); the fixed combinatorial factor n! 2^n cancels from every
ratio and normalization used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GridMismatch

_HERMITIAN_TOL = 1e-12
_SEMIPOS_TOL = 1e-10


@dataclass(frozen=True)
class TorusGrid:
    """Equispaced periodic grid on the flat torus of complex dimension 1 or 2."""

    complex_dim: int
    resolution: int

    def __post_init__(self):
        if self.complex_dim not in (1, 2):
            raise ValueError(f"complex_dim must be 1 or 2, got {self.complex_dim}")
        n = self.resolution
        if n < 8 or (n & (n - 1)) != 0:
            raise ValueError(f"resolution must be a power of two >= 8, got {n}")

    @property
    def cell(self) -> float:
        """Unit period of every real direction (total real volume 1)."""
        return 1.0

    @property
    def real_dim(self) -> int:
        return 2 * self.complex_dim

    @property
    def shape(self) -> tuple:
        return (self.resolution,) * self.real_dim

    @property
    def npoints(self) -> int:
        return self.resolution ** self.real_dim

    @property
    def cell_weight(self) -> float:
        """Quadrature weight of one sample; weights sum to 1."""
        return 1.0 / self.npoints

    def axes(self) -> list:
        """Open (broadcastable) coordinate arrays, ordered x1, y1[, x2, y2]."""
        t = np.arange(self.resolution) / self.resolution
        out = []
        for a in range(self.real_dim):
            shape = [1] * self.real_dim
            shape[a] = self.resolution
            out.append(t.reshape(shape))
        return out


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ScalarField:
    """Real sample per grid point."""

    grid: TorusGrid
    values: np.ndarray
    label: Optional[str] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field contains non-finite values")
        object.__setattr__(self, "values", _freeze(v))

    def with_values(self, values: np.ndarray, label: Optional[str] = None) -> "ScalarField":
        return ScalarField(self.grid, values, label or self.label)

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - float(other))

    def __mul__(self, c):
        if isinstance(c, ScalarField):
            _same_grid(self, c)
            return ScalarField(self.grid, self.values * c.values)
        return ScalarField(self.grid, self.values * float(c))

    __rmul__ = __mul__


@dataclass(frozen=True)
class ComplexField:
    """Complex sample per grid point (section analogues sigma, tau, s)."""

    grid: TorusGrid
    values: np.ndarray
    label: Optional[str] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("complex field contains non-finite values")
        object.__setattr__(self, "values", _freeze(v))

    def abs2(self) -> ScalarField:
        return ScalarField(self.grid, (self.values.real ** 2 + self.values.imag ** 2))


@dataclass(frozen=True)
class HermitianFormField:
    """n x n complex coefficient matrix per grid point of a real (1,1)-form.

    `mat` has shape grid.shape + (n, n) and must be Hermitian pointwise to
    within 1e-12 in max norm.  When `semipositive` is set, the minimum
    eigenvalue must be >= -1e-10 at every point.
    """

    grid: TorusGrid
    mat: np.ndarray
    semipositive: bool = False

    def __post_init__(self):
        n = self.grid.complex_dim
        m = np.asarray(self.mat, dtype=np.complex128)
        if m.shape != self.grid.shape + (n, n):
            raise ValueError(f"mat shape {m.shape} != {self.grid.shape + (n, n)}")
        if not np.all(np.isfinite(m)):
            raise ValueError("form field contains non-finite values")
        herm_defect = np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2))))
        if herm_defect > _HERMITIAN_TOL:
            raise ValueError(f"form is not Hermitian: defect {herm_defect:.3e}")
        object.__setattr__(self, "mat", _freeze(m))
        if self.semipositive:
            me = float(np.min(min_eigenvalue_array(m)))
            if me < -_SEMIPOS_TOL:
                raise ValueError(f"semipositive flag set but min eigenvalue {me:.3e}")

    def __add__(self, other: "HermitianFormField") -> "HermitianFormField":
        _same_grid(self, other)
        return HermitianFormField(self.grid, self.mat + other.mat)

    def __sub__(self, other: "HermitianFormField") -> "HermitianFormField":
        _same_grid(self, other)
        return HermitianFormField(self.grid, self.mat - other.mat)

    def __mul__(self, c: float) -> "HermitianFormField":
        return HermitianFormField(self.grid, self.mat * float(c))

    __rmul__ = __mul__


def _same_grid(*fields) -> TorusGrid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatch(f"grids differ: {f.grid} vs {g}")
    return g


def constant_form(grid: TorusGrid, matrix, semipositive: bool = False) -> HermitianFormField:
    """Constant-coefficient form from a single n x n matrix."""
    n = grid.complex_dim
    m = np.asarray(matrix, dtype=np.complex128).reshape(n, n)
    full = np.broadcast_to(m, grid.shape + (n, n)).copy()
    return HermitianFormField(grid, full, semipositive=semipositive)


def flat_form(grid: TorusGrid, scale: float = 1.0) -> HermitianFormField:
    """scale * identity: the standard flat Kahler form."""
    return constant_form(grid, np.eye(grid.complex_dim) * scale, semipositive=scale >= 0)


def integrate(f: ScalarField, weight: Optional[ScalarField] = None) -> float:
    """Quadrature integral of f (against `weight` if given); linear in f."""
    if weight is None:
        return float(np.mean(f.values))
    _same_grid(f, weight)
    return float(np.mean(f.values * weight.values))


def oscillation(f: ScalarField) -> float:
    """sup - inf of the samples; >= 0 and invariant under constant shifts."""
    return float(np.max(f.values) - np.min(f.values))


def sup_norm(f: ScalarField) -> float:
    return float(np.max(np.abs(f.values)))


def det_array(mat: np.ndarray) -> np.ndarray:
    """Pointwise determinant of a 1x1 or 2x2 Hermitian matrix field (real)."""
    n = mat.shape[-1]
    if n == 1:
        return mat[..., 0, 0].real.copy()
    a = mat[..., 0, 0].real
    c = mat[..., 1, 1].real
    b = mat[..., 0, 1]
    return a * c - (b.real ** 2 + b.imag ** 2)


def min_eigenvalue_array(mat: np.ndarray) -> np.ndarray:
    """Pointwise smallest eigenvalue, closed form for n <= 2."""
    n = mat.shape[-1]
    if n == 1:
        return mat[..., 0, 0].real.copy()
    a = mat[..., 0, 0].real
    c = mat[..., 1, 1].real
    b = mat[..., 0, 1]
    half_tr = 0.5 * (a + c)
    rad = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b.real ** 2 + b.imag ** 2, 0.0))
    return half_tr - rad


def max_eigenvalue_array(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[-1]
    if n == 1:
        return mat[..., 0, 0].real.copy()
    a = mat[..., 0, 0].real
    c = mat[..., 1, 1].real
    b = mat[..., 0, 1]
    half_tr = 0.5 * (a + c)
    rad = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b.real ** 2 + b.imag ** 2, 0.0))
    return half_tr + rad


def inv_array(mat: np.ndarray) -> np.ndarray:
    """Pointwise inverse of a 1x1 or 2x2 matrix field."""
    n = mat.shape[-1]
    if n == 1:
        return 1.0 / mat
    det = det_array(mat)
    out = np.empty_like(mat)
    out[..., 0, 0] = mat[..., 1, 1] / det
    out[..., 1, 1] = mat[..., 0, 0] / det
    out[..., 0, 1] = -mat[..., 0, 1] / det
    out[..., 1, 0] = -mat[..., 1, 0] / det
    return out


def form_mass(form: HermitianFormField) -> float:
    """Integral of det(coefficients) dV: the class mass in det normalization."""
    return float(np.mean(det_array(form.mat)))


def mean_zero(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, f.values - np.mean(f.values), f.label)


def sup_normalized(f: ScalarField) -> ScalarField:
    """Shift so that sup f = 0."""
    return ScalarField(f.grid, f.values - np.max(f.values), f.label)


# ---------------------------------------------------------------------------
# serialization: one-line header "dim,resolution" then row-major samples
# ---------------------------------------------------------------------------

def save_scalar(f: ScalarField, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{f.grid.complex_dim},{f.grid.resolution}\n")
        for v in f.values.ravel():
            fh.write(f"{v:.17g}\n")


def load_scalar(path) -> ScalarField:
    with open(path) as fh:
        header = fh.readline().strip()
        dim, res = (int(x) for x in header.split(","))
        grid = TorusGrid(dim, res)
        data = np.loadtxt(fh, dtype=np.float64)
    return ScalarField(grid, data.reshape(grid.shape))


def save_form(f: HermitianFormField, path) -> None:
    n = f.grid.complex_dim
    with open(path, "w") as fh:
        fh.write(f"form,{f.grid.complex_dim},{f.grid.resolution}\n")
        flat = f.mat.reshape(-1, n * n)
        for row in flat:
            fh.write(",".join(f"{z.real:.17g},{z.imag:.17g}" for z in row) + "\n")


def load_form(path) -> HermitianFormField:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "form":
            raise ValueError(f"not a form file: header {header!r}")
        dim, res = int(header[1]), int(header[2])
        grid = TorusGrid(dim, res)
        n = dim
        data = np.loadtxt(fh, delimiter=",", dtype=np.float64)
    data = data.reshape(-1, n * n, 2)
    mat = (data[..., 0] + 1j * data[..., 1]).reshape(grid.shape + (n, n))
    return HermitianFormField(grid, mat)
