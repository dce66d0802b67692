"""One-shot boundary smoothing of a finished design.

Element sensitivities are projected to nodes with cone weights, an
iso-value is bisected so the smoothed design keeps the volume fraction, and
elements cut by the iso-value get the fraction of a sub-element lattice
lying above it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from mgar_topopt.fem import objective
from mgar_topopt.mgcg import mgcg_solve
from mgar_topopt.model import ThermalModel, corner_offsets, heat_load
from mgar_topopt.multigrid import build_hierarchy


class PostprocessError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NodalSensitivityField:
    values: np.ndarray
    r_proj: float


@dataclass(frozen=True, eq=False)
class SmoothedDensityField:
    density: np.ndarray
    level: float
    volume: float


def projection_matrix(model: ThermalModel, r_proj: float) -> sp.csr_matrix:
    """Row-normalized node-by-element cone weights max(0, r - |x_node - c_elem|)."""
    if not r_proj > 0:
        raise PostprocessError("projection radius must be positive")
    nodes = model.grid.node_coords.astype(np.int64)
    nel = np.array(model.nel)
    strides = np.cumprod((1,) + model.nel[:-1])
    reach = math.ceil(r_proj)
    rows, cols, vals = [], [], []
    for offset in itertools.product(range(-reach - 1, reach + 1), repeat=model.dim):
        dist = math.sqrt(sum((o + 0.5) ** 2 for o in offset))
        weight = r_proj - dist
        if weight <= 0:
            continue
        elem = nodes + np.array(offset)
        inside = np.all((elem >= 0) & (elem < nel), axis=1)
        idx = np.flatnonzero(inside)
        rows.append(idx)
        cols.append(elem[inside] @ strides)
        vals.append(np.full(idx.size, weight))
    if not rows:
        raise PostprocessError("projection radius too small to reach any element centroid")
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(model.n_nodes, model.n_elem))
    rowsum = np.asarray(W.sum(axis=1)).ravel()
    if np.any(rowsum == 0):
        raise PostprocessError("a node has no element within the projection radius")
    return (sp.diags(1.0 / rowsum) @ W).tocsr()


def nodal_projection(sens_elem, model: ThermalModel, r_proj: float) -> NodalSensitivityField:
    W = projection_matrix(model, r_proj)
    return NodalSensitivityField(W @ np.asarray(sens_elem, dtype=float), float(r_proj))


def lattice_shape_functions(dim: int, subdiv: int) -> np.ndarray:
    """Multilinear shape functions of the corners at the (subdiv+1)^dim local lattice."""
    if subdiv < 1:
        raise PostprocessError("subdivision count must be >= 1")
    xi = np.linspace(-1.0, 1.0, subdiv + 1)
    pts = np.array(list(itertools.product(xi, repeat=dim)))
    corners = 2.0 * corner_offsets(dim) - 1.0
    return np.prod(1.0 + pts[:, None, :] * corners[None, :, :], axis=2) / 2 ** dim


def _lattice_values(ns, model: ThermalModel, subdiv: int) -> np.ndarray:
    N = lattice_shape_functions(model.dim, subdiv)
    return np.asarray(ns)[model.grid.edof] @ N.T  # (n_elem, n_points)


def smooth_densities(ns, level: float, model: ThermalModel, subdiv: int = 4,
                     _lattice=None) -> SmoothedDensityField:
    """Element density from the share of lattice points whose value exceeds ``level``.

    Elements with all corners above (below) the level come out as 1 (0).
    """
    values = ns.values if isinstance(ns, NodalSensitivityField) else ns
    lattice = _lattice_values(values, model, subdiv) if _lattice is None else _lattice
    density = np.count_nonzero(lattice > level, axis=1) / lattice.shape[1]
    return SmoothedDensityField(density, float(level), float(density.mean()))


def find_level(ns, model: ThermalModel, vol_target: float, subdiv: int = 4,
               tol: float = 1e-3, max_steps: int = 100) -> float:
    values = ns.values if isinstance(ns, NodalSensitivityField) else np.asarray(ns)
    if not 0 <= vol_target <= 1:
        raise PostprocessError("target volume fraction must lie in [0, 1]")
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        raise PostprocessError("nodal field is constant; no level separates material")
    lattice = _lattice_values(values, model, subdiv)

    def volume(level):
        return np.count_nonzero(lattice > level) / lattice.size

    level = 0.5 * (lo + hi)
    for _ in range(max_steps):
        level = 0.5 * (lo + hi)
        vol = volume(level)
        if abs(vol - vol_target) <= tol:
            return level
        if vol > vol_target:
            lo = level
        else:
            hi = level
    raise PostprocessError(
        f"bisection did not reach volume {vol_target} within {tol} (last {volume(level)})"
    )


@dataclass(eq=False)
class PostprocessResult:
    field: SmoothedDensityField
    nodal: NodalSensitivityField
    volume_before: float
    objective_before: float
    objective_after: float


def postprocess(rho_phys, sens_phys, model: ThermalModel, cfg) -> PostprocessResult:
    """Smooth a finished design and re-solve before and after at full accuracy.

    ``sens_phys`` is d(compliance)/d(rho_phys) of the final design; it is
    negated so that larger nodal values mean more material.
    """
    rho_phys = np.asarray(rho_phys, dtype=float)
    nodal = nodal_projection(-np.asarray(sens_phys, dtype=float), model, cfg.r_proj)
    target = float(rho_phys.mean())
    level = find_level(nodal, model, target, cfg.post_subdiv)
    smoothed = smooth_densities(nodal, level, model, cfg.post_subdiv)

    q = heat_load(model)

    def compliance(rho):
        H = build_hierarchy(model, rho, cfg.nl, cfg.omega_jac, cfg.nu_pre, cfg.nu_post)
        t, _ = mgcg_solve(H, q, None, cfg.eps2, max(cfg.cg_max_iters, 200))
        return objective(t, q)

    return PostprocessResult(smoothed, nodal, target, compliance(rho_phys),
                             compliance(smoothed.density))
