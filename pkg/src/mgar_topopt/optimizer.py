"""Outer design loop: filter, solve, sensitivities, optimality-criteria update."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from mgar_topopt.config import ParsedConfig
from mgar_topopt.fem import element_sensitivities, objective
from mgar_topopt.filtering import (
    FilterWeights,
    RadiusSchedule,
    build_filter,
    chain_sensitivity,
    filter_density,
    radius_at,
)
from mgar_topopt.metrics import IterationRecord, RunSummary, summarize
from mgar_topopt.model import ThermalModel, build_model, heat_load
from mgar_topopt.reanalysis import SolveDispatcher, SolverSettings

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OcParams:
    move: float = 0.2
    damping: float = 0.5
    vol_tol: float = 1e-4
    growth: float = 2.0
    max_bracket_steps: int = 200
    max_bisections: int = 200


def oc_update(rho, dfdrho, vol_target: float, weights: FilterWeights,
              params: OcParams = OcParams()) -> np.ndarray:
    """Optimality-criteria step with the filtered volume held at ``vol_target``.

    The Lagrange multiplier is bracketed geometrically and then bisected in
    log space until the bracket collapses.
    """
    rho = np.asarray(rho, dtype=float)
    if params.move == 0:
        return rho.copy()
    drive = -np.minimum(np.asarray(dfdrho, dtype=float), 0.0)
    lower = np.maximum(0.0, rho - params.move)
    upper = np.minimum(1.0, rho + params.move)

    def candidate(lam):
        return np.clip(rho * (drive / lam) ** params.damping, lower, upper)

    def volume(lam):
        return float(np.mean(filter_density(candidate(lam), weights)))

    scale = float(np.mean(drive))
    if not scale > 0 or not math.isfinite(scale):
        raise OptimizationError("sensitivities are all zero or non-finite")
    lo = hi = scale
    steps = 0
    while volume(hi) > vol_target:
        hi *= params.growth
        steps += 1
        if steps > params.max_bracket_steps:
            raise OptimizationError("could not bracket the volume multiplier from above")
    steps = 0
    while volume(lo) < vol_target:
        lo /= params.growth
        steps += 1
        if steps > params.max_bracket_steps:
            raise OptimizationError("could not bracket the volume multiplier from below")

    best_lam, best_err = hi, abs(volume(hi) - vol_target)
    for _ in range(params.max_bisections):
        if hi - lo <= 1e-12 * hi:
            break
        mid = math.sqrt(lo * hi)
        vol = volume(mid)
        err = abs(vol - vol_target)
        if err < best_err:
            best_lam, best_err = mid, err
        if vol > vol_target:
            lo = mid
        else:
            hi = mid
    for lam in (lo, hi):
        err = abs(volume(lam) - vol_target)
        if err < best_err:
            best_lam, best_err = lam, err
    return candidate(best_lam)


@dataclass(eq=False)
class OptResult:
    config: ParsedConfig
    model: ThermalModel
    rho: np.ndarray
    rho_phys: np.ndarray
    temperature: np.ndarray
    sensitivities: np.ndarray  # d f / d rho_phys of the last analyzed design
    history: list[IterationRecord]
    summary: RunSummary
    wall_ms: float
    basis_orthonormality: list[float] = field(default_factory=list)


def solver_settings(cfg: ParsedConfig) -> SolverSettings:
    return SolverSettings(
        method=cfg.method, nl=cfg.nl, eps1=cfg.eps1, eps2=cfg.eps2,
        cg_max=cfg.cg_max_iters, m_basis=cfg.m_basis, n_on=cfg.n_on_cycles,
        omega_jac=cfg.omega_jac, nu_pre=cfg.nu_pre, nu_post=cfg.nu_post,
        basis_warm_start=cfg.basis_start == "previous",
    )


def run(cfg: ParsedConfig, callback=None) -> OptResult:
    """Run the full design loop for ``cfg``.

    ``callback(record)`` is called after every cycle.
    """
    start = time.perf_counter()
    model = build_model(cfg)
    q = heat_load(model)
    sched = RadiusSchedule(cfg.r_min, cfg.alpha, cfg.domain_length, cfg.lp_cycles)
    params = OcParams(move=cfg.move, damping=cfg.damping, vol_tol=cfg.vol_tol)
    dispatcher = SolveDispatcher(model, q, solver_settings(cfg))

    rho = np.full(model.n_elem, cfg.volfrac)
    weights = build_filter(model, radius_at(0, sched))
    t = None
    history: list[IterationRecord] = []
    gram_errors: list[float] = []
    rho_phys = sens_phys = None

    for k in range(cfg.max_cycles):
        tic = time.perf_counter()
        radius = radius_at(k, sched)
        rho_phys = filter_density(rho, weights)
        outcome = dispatcher.solve(k, rho_phys, t)
        t = outcome.t
        if outcome.path != "mgcg":
            gram_errors.append(outcome.basis_orthonormality)
        f = objective(t, q)
        if not math.isfinite(f):
            raise OptimizationError(f"non-finite objective at cycle {k}")
        # |q.t - t.K t| <= ||t|| ||K t - q||; zero only for an exact solve
        log.debug("cycle %d objective discrepancy bound %.3e", k,
                  np.linalg.norm(t) * outcome.res * np.linalg.norm(q))
        sens_phys = element_sensitivities(t, rho_phys, model)
        sens = chain_sensitivity(sens_phys, weights)

        # the volume constraint is enforced on the densities analyzed next cycle
        next_weights = weights
        if k + 1 < cfg.max_cycles:
            r_next = radius_at(k + 1, sched)
            if cfg.rebuild_every_cycle or math.ceil(r_next) != weights.stencil:
                next_weights = build_filter(model, r_next)
        rho_new = oc_update(rho, sens, cfg.volfrac, next_weights, params)
        change = float(np.max(np.abs(rho_new - rho)))
        rho, weights = rho_new, next_weights

        rec = IterationRecord(
            cycle=k, objective=f, volume=float(np.mean(rho_phys)), radius=radius,
            solver_path=outcome.path, res=outcome.res, cg_iters=outcome.cg_iters,
            vcycles=outcome.vcycles, wall_ms=(time.perf_counter() - tic) * 1e3,
        )
        history.append(rec)
        log.info("cycle %3d  f=%.6g  vol=%.4f  r=%.3f  %-13s res=%.2e  cg=%d",
                 k, f, rec.volume, radius, rec.solver_path, rec.res, rec.cg_iters)
        if callback is not None:
            callback(rec)
        if cfg.change_tol is not None and change < cfg.change_tol:
            break

    wall = (time.perf_counter() - start) * 1e3
    return OptResult(cfg, model, rho, rho_phys, t, sens_phys, history,
                     summarize(history), wall, gram_errors)
