"""Multigrid-assisted combined-approximation reanalysis and solver dispatch.

The reference state holds the physical densities and the multigrid hierarchy
of the last full MGCG solve. For a new design the reduced basis is grown by
the binomial-series recursion, with each reference solve replaced by a single
V-cycle on the reference hierarchy; the basis is orthonormalized by a thin SVD
and the design's operator is projected onto it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from mgar_topopt.fem import apply_deltaK, apply_K
from mgar_topopt.mgcg import mgcg_solve
from mgar_topopt.model import ThermalModel
from mgar_topopt.multigrid import MgHierarchy, build_hierarchy, vcycle


class ReducedSystemError(np.linalg.LinAlgError):
    pass


@dataclass(eq=False)
class Reference:
    """Snapshot taken on every MGCG-path cycle."""

    rho_phys: np.ndarray
    hierarchy: MgHierarchy
    t0: np.ndarray


@dataclass(eq=False)
class Carm:
    reference: Reference
    basis: np.ndarray  # n x m, orthonormal columns
    raw_basis: np.ndarray  # n x m_requested, before orthogonalization
    singular_values: np.ndarray

    @property
    def m(self) -> int:
        return self.basis.shape[1]


def build_carm(rho_cur, reference: Reference, m: int = 2, t_start=None,
               warm_start: bool = True) -> Carm:
    """Grow ``m`` basis vectors from ``t_start`` (defaults to the reference solution).

    r_1 = t_start, r_i = V-cycle(K_ref, b = -dK r_{i-1}, x = r_{i-1}). With
    ``warm_start=False`` each V-cycle starts from zero instead of r_{i-1}.
    Directions whose singular value falls below 1e-12 * sigma_max are dropped.
    """
    if m < 1:
        raise ValueError("basis size must be >= 1")
    H = reference.hierarchy
    model = H.model
    r = np.array(reference.t0 if t_start is None else t_start, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("basis seed vector is not finite")
    columns = [r]
    for _ in range(1, m):
        b = -apply_deltaK(rho_cur, reference.rho_phys, r, model)
        r = vcycle(H, b, r if warm_start else None)
        columns.append(r)
    R = np.column_stack(columns)
    U, s, _ = np.linalg.svd(R, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise ReducedSystemError("basis is identically zero")
    keep = s >= 1e-12 * s[0]
    return Carm(reference, U[:, keep], R, s)


def reduced_solve(carm: Carm, rho_cur, q, model: ThermalModel):
    """Galerkin projection onto span(basis); returns (y, basis @ y)."""
    B = carm.basis
    KB = np.column_stack([apply_K(rho_cur, B[:, i], model) for i in range(B.shape[1])])
    K_red = B.T @ KB
    K_red = 0.5 * (K_red + K_red.T)
    q_red = B.T @ q
    try:
        factor = sla.cho_factor(K_red)
    except np.linalg.LinAlgError as exc:
        raise ReducedSystemError(f"reduced matrix is not positive definite: {exc}") from exc
    y = sla.cho_solve(factor, q_red)
    return y, B @ y


def residual_norm(rho_cur, t, q, model: ThermalModel) -> float:
    """||K t - q|| / ||q||."""
    qnorm = np.linalg.norm(q)
    if qnorm == 0:
        raise ValueError("zero load vector")
    return float(np.linalg.norm(apply_K(rho_cur, t, model) - q) / qnorm)


@dataclass(frozen=True)
class SolverSettings:
    method: str = "mgar"  # "mgar" or "mgcg"
    nl: int = 3
    eps1: float = 0.5
    eps2: float = 1e-6
    cg_max: int = 200
    m_basis: int = 2
    n_on: int = 40
    omega_jac: float = 0.6
    nu_pre: int = 1
    nu_post: int = 1
    basis_warm_start: bool = True

    def __post_init__(self):
        if self.method not in ("mgar", "mgcg"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if not 0 < self.eps2 <= self.eps1:
            raise ValueError("require 0 < eps2 <= eps1")


@dataclass(eq=False)
class SolveOutcome:
    t: np.ndarray
    path: str
    res: float
    cg_iters: int
    vcycles: int
    reference: Reference | None
    basis_orthonormality: float = 0.0


class SolveDispatcher:
    """Chooses MGCG or the reduced model per design cycle and keeps the reference."""

    def __init__(self, model: ThermalModel, q, settings: SolverSettings):
        self.model = model
        self.q = np.asarray(q, dtype=float)
        self.settings = settings
        self.reference: Reference | None = None

    def _full_solve(self, rho_phys, x0):
        s = self.settings
        H = build_hierarchy(self.model, rho_phys, s.nl, s.omega_jac, s.nu_pre, s.nu_post)
        t, stats = mgcg_solve(H, self.q, x0, s.eps2, s.cg_max)
        self.reference = Reference(np.array(rho_phys, copy=True), H, t.copy())
        return t, stats

    def solve(self, k: int, rho_phys, t_prev) -> SolveOutcome:
        s = self.settings
        use_full = s.method == "mgcg" or k < s.n_on or self.reference is None or t_prev is None
        if use_full:
            t, stats = self._full_solve(rho_phys, t_prev)
            return SolveOutcome(t, "mgcg", stats.final_rel_residual, stats.cg_iterations,
                                stats.vcycles_used, self.reference)

        carm = build_carm(rho_phys, self.reference, s.m_basis, t_start=t_prev,
                          warm_start=s.basis_warm_start)
        gram_err = float(np.abs(carm.basis.T @ carm.basis - np.eye(carm.m)).max())
        basis_vcycles = s.m_basis - 1
        try:
            _, t_red = reduced_solve(carm, rho_phys, self.q, self.model)
            res = residual_norm(rho_phys, t_red, self.q, self.model)
        except np.linalg.LinAlgError:
            t_red, res = t_prev, np.inf
        if res <= s.eps1:
            return SolveOutcome(t_red, "mgar", res, 0, basis_vcycles, self.reference, gram_err)
        t, stats = self._full_solve(rho_phys, t_red)
        return SolveOutcome(t, "mgcg-fallback", stats.final_rel_residual, stats.cg_iterations,
                            basis_vcycles + stats.vcycles_used, self.reference, gram_err)

