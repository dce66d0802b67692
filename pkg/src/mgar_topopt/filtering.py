"""Cone-weighted density filter and the decaying filter-radius schedule."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from mgar_topopt.model import ThermalModel


@dataclass(frozen=True, eq=False)
class FilterWeights:
    """Row-normalized filter matrix; row e holds w_{e,i} over the neighborhood of e."""

    matrix: sp.csr_matrix
    radius: float

    @property
    def stencil(self) -> int:
        return math.ceil(self.radius)


def build_filter(model: ThermalModel, r: float) -> FilterWeights:
    if not r > 0:
        raise ValueError(f"filter radius must be positive, got {r}")
    nel = model.nel
    dim = model.dim
    reach = math.ceil(r)
    ijk = model.grid.element_ijk
    strides = np.cumprod((1,) + nel[:-1])
    rows, cols, vals = [], [], []
    for offset in itertools.product(range(-reach, reach + 1), repeat=dim):
        dist = math.sqrt(sum(o * o for o in offset))
        weight = r - dist
        if weight <= 0:
            continue
        nb = ijk + np.array(offset)
        inside = np.all((nb >= 0) & (nb < np.array(nel)), axis=1)
        src = np.flatnonzero(inside)
        rows.append(src)
        cols.append(nb[inside] @ strides)
        vals.append(np.full(src.size, weight))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    raw = sp.csr_matrix((vals, (rows, cols)), shape=(model.n_elem, model.n_elem))
    rowsum = np.asarray(raw.sum(axis=1)).ravel()
    matrix = sp.diags(1.0 / rowsum) @ raw
    return FilterWeights(matrix.tocsr(), float(r))


def filter_density(rho, weights: FilterWeights) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (weights.matrix.shape[1],):
        raise ValueError("density field does not match filter size")
    return weights.matrix @ rho


def chain_sensitivity(dfdrho_phys, weights: FilterWeights) -> np.ndarray:
    """Transpose of :func:`filter_density`: maps d/d(rho_phys) to d/d(rho)."""
    s = np.asarray(dfdrho_phys, dtype=float)
    if s.shape != (weights.matrix.shape[0],):
        raise ValueError("sensitivity field does not match filter size")
    return weights.matrix.T @ s


@dataclass(frozen=True)
class RadiusSchedule:
    """Geometric decay of the filter radius from alpha*L down to r_min over lp cycles."""

    r_min: float
    alpha: float
    length: float
    lp: int

    @property
    def r0(self) -> float:
        return self.alpha * self.length

    @property
    def decay(self) -> float:
        if self.r0 <= self.r_min or self.lp <= 0:
            return 1.0
        return math.exp((math.log(self.r_min) - math.log(self.r0)) / self.lp)


def radius_at(k: int, sched: RadiusSchedule) -> float:
    if k < 0:
        raise ValueError("cycle index must be >= 0")
    if sched.r0 <= sched.r_min:
        # Nothing to decay from; hold the minimum radius.
        return sched.r_min
    if k >= sched.lp:
        return sched.r_min
    return max(sched.r_min, sched.r0 * sched.decay ** k)
