"""Mixed Monge-Ampere measures, comparison checks, and smoothing probes.

Everything here works at smooth desk scale: potentials are bounded sampled
fields, products of at most n = 2 forms are pointwise mixed determinants,
and set integrals use sharp per-point indicators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import GridMismatch, ScheduleInvalid
from .fields import (
    HermitianFormField,
    ScalarField,
    TorusGrid,
    _same_grid,
    det_array,
    min_eigenvalue_array,
)
from .spectral import mixed_density_array, mollify, spectral_dd_bar

_CONE_TOL = 1e-10


@dataclass(frozen=True)
class PotentialInClass:
    """A potential phi with base form gamma and cached gamma_phi = gamma + i d dbar phi."""

    base: HermitianFormField
    potential: ScalarField
    gamma_phi: HermitianFormField
    normalized: bool   # True when sup(phi) = 0

    @property
    def grid(self) -> TorusGrid:
        return self.base.grid


def potential_in_class(
    base: HermitianFormField,
    phi: ScalarField,
    require_normalized: bool = False,
) -> PotentialInClass:
    """Build the cached pair, enforcing cone membership to within -1e-10."""
    _same_grid(base, phi)
    gamma_phi = base + spectral_dd_bar(phi)
    me = float(np.min(min_eigenvalue_array(gamma_phi.mat)))
    if me < -_CONE_TOL:
        raise ValueError(f"potential leaves the positive cone: min eigenvalue {me:.3e}")
    normalized = abs(float(np.max(phi.values))) <= 1e-12
    if require_normalized and not normalized:
        raise ValueError("potential is not sup-normalized (sup phi must be 0)")
    return PotentialInClass(base, phi, gamma_phi, normalized)


def cone_check(form: HermitianFormField) -> Tuple[bool, float]:
    """(ok, min eigenvalue over the grid); ok iff min eigenvalue >= -1e-10."""
    me = float(np.min(min_eigenvalue_array(form.mat)))
    return me >= -_CONE_TOL, me


Entry = Tuple[Union[PotentialInClass, HermitianFormField], int]


def _entry_mat(entry) -> np.ndarray:
    obj = entry[0]
    if isinstance(obj, PotentialInClass):
        return obj.gamma_phi.mat
    return obj.mat


def mixed_ma_measure(
    entries: Sequence[Entry],
    ref: HermitianFormField,
) -> ScalarField:
    """Density of the wedge product of the entries against ref^n.

    Entries are (form, power) pairs with powers summing to n; the result is
    exactly symmetric under permutations because the polarized determinant
    is evaluated through a symmetric formula.
    """
    grid = ref.grid
    n = grid.complex_dim
    total = sum(p for _, p in entries)
    if total != n:
        raise ValueError(f"powers sum to {total}, expected {n}")
    mats: List[np.ndarray] = []
    for entry in entries:
        m = _entry_mat(entry)
        if m.shape[:-2] != grid.shape:
            raise GridMismatch("entry grid differs from reference grid")
        mats.extend([m] * entry[1])
    dref = det_array(ref.mat)
    if np.min(dref) <= 0:
        raise ValueError("reference form is singular")
    return ScalarField(grid, mixed_density_array(mats, grid) / dref)


def comparison_check(
    gamma: HermitianFormField,
    phi: PotentialInClass,
    psi: PotentialInClass,
) -> Tuple[float, float, float]:
    """Masses of gamma_psi^n and gamma_phi^n over the set {phi < psi}.

    Returns (lhs, rhs, margin) with lhs = integral over {phi < psi} of
    gamma_psi^n, rhs the same for gamma_phi^n, margin = rhs - lhs; the
    comparison principle demands margin >= -quadrature tolerance.
    """
    if phi.base is not gamma and np.max(np.abs(phi.base.mat - gamma.mat)) > 1e-14:
        raise ValueError("phi has a different base form")
    if psi.base is not gamma and np.max(np.abs(psi.base.mat - gamma.mat)) > 1e-14:
        raise ValueError("psi has a different base form")
    mask = phi.potential.values < psi.potential.values
    w = 1.0 / phi.grid.npoints
    lhs = float(np.sum(det_array(psi.gamma_phi.mat)[mask]) * w)
    rhs = float(np.sum(det_array(phi.gamma_phi.mat)[mask]) * w)
    return lhs, rhs, rhs - lhs


@dataclass(frozen=True)
class MonotoneProbeRow:
    eps: float
    probe: int
    pairing_potential: float   # int chi * phi_eps * (gamma_eps)^k ^ T^l ^ omega^(n-k-l)
    pairing_power: float       # int chi * (gamma_eps)^(k+1) ^ T^l ^ omega^(n-k-l-1)
    gap_potential: float       # distance to the unsmoothed pairing
    gap_power: float


def monotone_convergence_probe(
    gamma: HermitianFormField,
    phi: PotentialInClass,
    schedule: Sequence[float],
    probes: Sequence[Tuple[ScalarField, Optional[HermitianFormField], int, int]],
    omega: Optional[HermitianFormField] = None,
) -> List[MonotoneProbeRow]:
    """Pairings along a decreasing Gaussian-mollification family.

    Each probe is (chi, T, k, l): the first pairing tests phi_eps times the
    mixed measure (gamma_{phi_eps} + eps omega)^k ^ T^l ^ omega^(n-k-l)
    against the test function chi, the second the (k+1)-st power.  The raw
    mollified family is shifted by per-step constants so that it decreases
    pointwise; a violation beyond 1e-12 raises ScheduleInvalid.
    """
    grid = gamma.grid
    n = grid.complex_dim
    eps_list = list(schedule)
    if not eps_list or any(e <= 0 for e in eps_list) or any(
        b >= a for a, b in zip(eps_list, eps_list[1:])
    ):
        raise ScheduleInvalid("schedule must be strictly decreasing with floor > 0")
    if omega is None:
        from .fields import flat_form

        omega = flat_form(grid)

    def pairings(phi_field: ScalarField, eps: float) -> List[Tuple[float, float]]:
        gphi = gamma + spectral_dd_bar(phi_field)
        geps = gphi + eps * omega
        out = []
        for chi, T, k, l in probes:
            if k + l > n or (T is None and l > 0):
                raise ValueError("probe powers exceed dimension")
            mats1 = [geps.mat] * k + ([T.mat] * l if T is not None else []) \
                + [omega.mat] * (n - k - l)
            d1 = mixed_density_array(mats1, grid)
            p1 = float(np.mean(chi.values * phi_field.values * d1))
            mats2 = [geps.mat] * (k + 1) + ([T.mat] * l if T is not None else []) \
                + [omega.mat] * (n - k - l - 1)
            d2 = mixed_density_array(mats2, grid)
            p2 = float(np.mean(chi.values * d2))
            out.append((p1, p2))
        return out

    # unsmoothed targets at eps = 0
    gphi0 = phi.gamma_phi
    targets = []
    for chi, T, k, l in probes:
        mats1 = [gphi0.mat] * k + ([T.mat] * l if T is not None else []) \
            + [omega.mat] * (n - k - l)
        t1 = float(np.mean(chi.values * phi.potential.values * mixed_density_array(mats1, grid)))
        mats2 = [gphi0.mat] * (k + 1) + ([T.mat] * l if T is not None else []) \
            + [omega.mat] * (n - k - l - 1)
        t2 = float(np.mean(chi.values * mixed_density_array(mats2, grid)))
        targets.append((t1, t2))

    # backward pass: raise each coarser member just enough to dominate the
    # next finer one, so the family decreases pointwise and the floor member
    # keeps its raw mollification (its pairing converges to the target)
    raws = [mollify(phi.potential, eps).values for eps in eps_list]
    family = [None] * len(raws)
    family[-1] = raws[-1]
    for k in range(len(raws) - 2, -1, -1):
        c = max(0.0, float(np.max(family[k + 1] - raws[k])))
        family[k] = raws[k] + c
    for a, b in zip(family, family[1:]):
        if np.max(b - a) > 1e-12:
            raise ScheduleInvalid("smoothing family failed to decrease")

    rows: List[MonotoneProbeRow] = []
    for eps, vals in zip(eps_list, family):
        ps = pairings(ScalarField(grid, vals), eps)
        for i, ((p1, p2), (t1, t2)) in enumerate(zip(ps, targets)):
            rows.append(MonotoneProbeRow(eps, i, p1, p2, abs(p1 - t1), abs(p2 - t2)))
    return rows
