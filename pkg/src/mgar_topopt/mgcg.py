"""Conjugate gradients preconditioned by one multigrid V-cycle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mgar_topopt.multigrid import MgHierarchy, vcycle


class SolverBreakdown(RuntimeError):
    """CG hit a non-positive curvature direction; the operator is not SPD."""


@dataclass
class SolveStats:
    cg_iterations: int
    final_rel_residual: float
    vcycles_used: int
    converged: bool


def mgcg_solve(H: MgHierarchy, q, x0=None, eps2: float = 1e-6, cg_max: int = 200,
               callback=None) -> tuple[np.ndarray, SolveStats]:
    """Solve K t = q for the operator held by ``H``.

    Stops once ``||q - K t|| / ||q|| <= eps2`` or after ``cg_max`` iterations and
    returns the iterate with the smallest residual seen. ``callback(x)`` is
    invoked after every iteration.
    """
    q = np.asarray(q, dtype=float)
    qnorm = np.linalg.norm(q)
    if qnorm == 0:
        raise ValueError("zero load vector")
    constrained = H.levels[0].constrained
    x = np.zeros_like(q) if x0 is None else np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial guess is not finite")
    x[constrained] = q[constrained]

    r = q - H.matvec(0, x)
    res = np.linalg.norm(r) / qnorm
    best_x, best_res = x.copy(), res
    if res <= eps2:
        return x, SolveStats(0, res, 0, True)

    z = vcycle(H, r)
    vcycles = 1
    p = z.copy()
    rz = r @ z
    it = 0
    while it < cg_max:
        Ap = H.matvec(0, p)
        curvature = p @ Ap
        if curvature <= 0:
            raise SolverBreakdown(f"p.Kp = {curvature:.3e} at CG iteration {it}")
        alpha = rz / curvature
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = np.linalg.norm(r) / qnorm
        if callback is not None:
            callback(x)
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= eps2:
            break
        if it == cg_max:
            break
        z = vcycle(H, r)
        vcycles += 1
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new

    true_res = np.linalg.norm(q - H.matvec(0, best_x)) / qnorm
    return best_x, SolveStats(it, true_res, vcycles, true_res <= eps2)
