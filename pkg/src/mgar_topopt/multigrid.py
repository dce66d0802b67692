"""Geometric multigrid on nested structured grids.

Level 0 is the fine grid and is applied matrix-free. Coarser operators are
Galerkin products ``P^T A P``, accumulated element by element so the fine
matrix is never assembled. A coarse node is constrained iff its coincident
fine node is; rows of ``P`` for constrained fine nodes and columns for
constrained coarse nodes are zero, and constrained coarse rows carry a unit
diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mgar_topopt.fem import apply_element_operator, element_matrix, simp_conductivity
from mgar_topopt.model import Grid, ThermalModel, check_divisibility, corner_offsets


class MultigridError(RuntimeError):
    pass


def prolongation_1d(n_coarse_el: int) -> sp.csr_matrix:
    nc = n_coarse_el + 1
    nf = 2 * n_coarse_el + 1
    rows = [2 * np.arange(nc), 2 * np.arange(n_coarse_el) + 1, 2 * np.arange(n_coarse_el) + 1]
    cols = [np.arange(nc), np.arange(n_coarse_el), np.arange(n_coarse_el) + 1]
    vals = [np.ones(nc), np.full(n_coarse_el, 0.5), np.full(n_coarse_el, 0.5)]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nf, nc)
    )


def raw_prolongation(coarse: Grid) -> sp.csr_matrix:
    """Multilinear interpolation from ``coarse`` to the grid with twice the elements."""
    P = None
    for n in coarse.nel:  # x fastest, so x is the innermost Kronecker factor
        P1 = prolongation_1d(n)
        P = P1 if P is None else sp.kron(P1, P)
    return P.tocsr()


def _child_interpolation(dim: int) -> np.ndarray:
    """S[c, a, b]: weight of coarse corner b at fine corner a of child c."""
    corners = corner_offsets(dim)
    n = len(corners)
    S = np.ones((n, n, n))
    for c, child in enumerate(corners):
        pos = child[None, :] + corners  # fine corner positions in fine units (0..2)
        for a in range(n):
            for b in range(n):
                w = 1.0 - np.abs(pos[a] - 2 * corners[b]) / 2.0
                S[c, a, b] = np.prod(np.clip(w, 0.0, None))
    return S


@dataclass(eq=False)
class Level:
    grid: Grid
    constrained: np.ndarray  # bool per node
    diag: np.ndarray
    matrix: sp.csr_matrix | None = None  # None on level 0 (matrix-free)
    P: sp.csr_matrix | None = None  # prolongation from the next coarser level


@dataclass(eq=False)
class MgHierarchy:
    model: ThermalModel
    conductivity: np.ndarray
    levels: list[Level]
    coarse_solver: object
    omega: float = 0.6
    nu_pre: int = 1
    nu_post: int = 1

    @property
    def nl(self) -> int:
        return len(self.levels)

    def matvec(self, level: int, x: np.ndarray) -> np.ndarray:
        if level == 0:
            lev = self.levels[0]
            xm = np.where(lev.constrained, 0.0, x)
            out = apply_element_operator(self.conductivity, xm, self.model)
            out[lev.constrained] = x[lev.constrained]
            return out
        return self.levels[level].matrix @ x

    def dense_matrix(self, level: int) -> np.ndarray:
        """Explicit operator of ``level`` (level 0 built by columns; small meshes only)."""
        if level > 0:
            return self.levels[level].matrix.toarray()
        n = self.levels[0].grid.n_nodes
        return np.column_stack([self.matvec(0, e) for e in np.eye(n)])


def _coarsen_constraints(fine: Grid, fine_constrained: np.ndarray, coarse: Grid) -> np.ndarray:
    coords = coarse.node_coords.astype(np.int64) * 2
    fine_idx = fine.node_index(*(coords[:, a] for a in range(fine.dim)))
    return fine_constrained[fine_idx]


def build_hierarchy(model: ThermalModel, rho_phys, nl: int = 3, omega: float = 0.6,
                    nu_pre: int = 1, nu_post: int = 1) -> MgHierarchy:
    if nl < 2:
        raise MultigridError("multigrid needs at least 2 levels")
    check_divisibility(model.nel, nl)
    dim = model.dim
    conductivity = simp_conductivity(rho_phys, model)
    fine_grid = model.grid
    constrained = ~model.free_mask
    levels = [Level(fine_grid, constrained, _fine_diagonal(model, conductivity, constrained))]
    S = _child_interpolation(dim)
    # level-0 element matrices, unmasked
    elem = conductivity[:, None, None] * element_matrix(model)[None, :, :]
    for _ in range(1, nl):
        fine = levels[-1]
        coarse_grid = Grid(tuple(n // 2 for n in fine.grid.nel))
        c_constrained = _coarsen_constraints(fine.grid, fine.constrained, coarse_grid)
        P = (sp.diags((~fine.constrained).astype(float)) @ raw_prolongation(coarse_grid)
             @ sp.diags((~c_constrained).astype(float))).tocsr()
        P.eliminate_zeros()
        fine.P = P

        ijk = fine.grid.element_ijk
        child = _bits_to_corner_index(ijk % 2, dim)
        parent = (ijk // 2) @ np.cumprod((1,) + coarse_grid.nel[:-1])
        free_f = (~fine.constrained)[fine.grid.edof].astype(float)
        free_c = (~c_constrained)[coarse_grid.edof[parent]].astype(float)
        L = free_f[:, :, None] * S[child] * free_c[:, None, :]
        contrib = np.matmul(np.matmul(L.transpose(0, 2, 1), elem), L)
        order = np.argsort(parent * 2 ** dim + child, kind="stable")
        n_loc = 2 ** dim
        elem = contrib[order].reshape(coarse_grid.n_elem, n_loc, n_loc, n_loc).sum(axis=1)

        edof = coarse_grid.edof
        rows = np.broadcast_to(edof[:, :, None], elem.shape).ravel()
        cols = np.broadcast_to(edof[:, None, :], elem.shape).ravel()
        cidx = np.flatnonzero(c_constrained)
        A = sp.csr_matrix(
            (np.concatenate([elem.ravel(), np.ones(cidx.size)]),
             (np.concatenate([rows, cidx]), np.concatenate([cols, cidx]))),
            shape=(coarse_grid.n_nodes, coarse_grid.n_nodes),
        )
        A.sum_duplicates()
        levels.append(Level(coarse_grid, c_constrained, A.diagonal(), matrix=A))

    coarsest = levels[-1]
    if not coarsest.constrained.any():
        raise MultigridError(
            "no Dirichlet node survives coarsening; coarsest operator is singular"
        )
    try:
        solver = spla.splu(coarsest.matrix.tocsc())
    except RuntimeError as exc:
        raise MultigridError(f"coarsest operator is singular: {exc}") from exc
    return MgHierarchy(model, conductivity, levels, solver, omega, nu_pre, nu_post)


def _bits_to_corner_index(bits: np.ndarray, dim: int) -> np.ndarray:
    place = 2 ** np.arange(dim)
    table = np.empty(2 ** dim, dtype=np.int64)
    table[corner_offsets(dim) @ place] = np.arange(2 ** dim)
    return table[bits @ place]


def _fine_diagonal(model: ThermalModel, conductivity, constrained) -> np.ndarray:
    ke_diag = np.diag(element_matrix(model))
    diag = np.bincount(model.grid.edof.ravel(),
                       weights=(conductivity[:, None] * ke_diag[None, :]).ravel(),
                       minlength=model.n_nodes)
    diag[constrained] = 1.0
    return diag


def smooth(H: MgHierarchy, level: int, b, x, nu: int) -> np.ndarray:
    """``nu`` damped-Jacobi sweeps; constrained entries stay fixed."""
    lev = H.levels[level]
    free = ~lev.constrained
    x = np.array(x, dtype=float, copy=True)
    for _ in range(nu):
        r = b - H.matvec(level, x)
        x[free] += H.omega * r[free] / lev.diag[free]
    return x


def _vcycle(H: MgHierarchy, level: int, b, x) -> np.ndarray:
    lev = H.levels[level]
    x = smooth(H, level, b, x, H.nu_pre)
    res = lev.P.T @ (b - H.matvec(level, x))
    if level + 1 == H.nl - 1:
        xc = H.coarse_solver.solve(res)
    else:
        xc = _vcycle(H, level + 1, res, np.zeros_like(res))
    x = x + lev.P @ xc
    return smooth(H, level, b, x, H.nu_post)


def vcycle(H: MgHierarchy, b, x=None) -> np.ndarray:
    """One V-cycle on the fine level: pre-smooth, coarse correction, post-smooth."""
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x is None else np.asarray(x, dtype=float)
    return _vcycle(H, 0, b, x)
