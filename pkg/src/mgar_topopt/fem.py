"""Element matrices, SIMP interpolation and matrix-free operator application."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from mgar_topopt.model import ThermalModel, corner_offsets


@lru_cache(maxsize=None)
def _reference_element(dim: int) -> np.ndarray:
    # 1D linear element on [0, 1]: stiffness and mass, indexed by endpoint bit.
    stiff = np.array([[1.0, -1.0], [-1.0, 1.0]])
    mass = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    bits = corner_offsets(dim)
    n = len(bits)
    ke = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            total = 0.0
            for d in range(dim):
                term = 1.0
                for axis in range(dim):
                    mat = stiff if axis == d else mass
                    term *= mat[bits[a, axis], bits[b, axis]]
                total += term
            ke[a, b] = total
    ke.flags.writeable = False
    return ke


def reference_element(dim: int) -> np.ndarray:
    """Exact conductivity matrix of a unit multilinear element with unit conductivity.

    Built from tensor products of the 1D linear stiffness and mass matrices.
    Node order follows :data:`mgar_topopt.model.CORNERS_2D` / ``CORNERS_3D``.
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    return _reference_element(dim)


def element_matrix(model: ThermalModel) -> np.ndarray:
    return reference_element(model.dim) * model.element_size ** (model.dim - 2)


def simp_conductivity(rho_phys, model: ThermalModel) -> np.ndarray:
    rho = np.asarray(rho_phys, dtype=float)
    if np.any(rho < -1e-12) or np.any(rho > 1 + 1e-12):
        raise ValueError("physical densities must lie in [0, 1]")
    rho = np.clip(rho, 0.0, 1.0)
    return model.kmin + (model.k0 - model.kmin) * rho ** model.penal


def _check_nodal(v, model):
    v = np.asarray(v, dtype=float)
    if v.shape != (model.n_nodes,):
        raise ValueError(f"expected nodal vector of length {model.n_nodes}, got {v.shape}")
    return v


def _check_elemental(x, model):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_elem,):
        raise ValueError(f"expected element vector of length {model.n_elem}, got {x.shape}")
    return x


def apply_element_operator(coef: np.ndarray, v: np.ndarray, model: ThermalModel) -> np.ndarray:
    """Sum_e coef_e * k_e^0 v_e scattered to nodes; no boundary treatment."""
    edof = model.grid.edof
    local = v[edof] @ element_matrix(model)
    local *= coef[:, None]
    return np.bincount(edof.ravel(), weights=local.ravel(), minlength=model.n_nodes)


def apply_K(rho_phys, v, model: ThermalModel) -> np.ndarray:
    """K(rho_phys) @ v without assembling K. Dirichlet rows act as identity."""
    v = _check_nodal(v, model)
    k = simp_conductivity(_check_elemental(rho_phys, model), model)
    vm = v.copy()
    vm[model.dirichlet] = 0.0
    out = apply_element_operator(k, vm, model)
    out[model.dirichlet] = v[model.dirichlet]
    return out


def apply_deltaK(rho_cur, rho_ref, v, model: ThermalModel) -> np.ndarray:
    """(K(rho_cur) - K(rho_ref)) @ v in one pass. Dirichlet rows give 0."""
    v = _check_nodal(v, model)
    rho_cur = _check_elemental(rho_cur, model)
    rho_ref = _check_elemental(rho_ref, model)
    dk = simp_conductivity(rho_cur, model) - simp_conductivity(rho_ref, model)
    vm = v.copy()
    vm[model.dirichlet] = 0.0
    out = apply_element_operator(dk, vm, model)
    out[model.dirichlet] = 0.0
    return out


def diagonal_of_K(rho_phys, model: ThermalModel) -> np.ndarray:
    k = simp_conductivity(_check_elemental(rho_phys, model), model)
    ke_diag = np.diag(element_matrix(model))
    weights = (k[:, None] * ke_diag[None, :]).ravel()
    diag = np.bincount(model.grid.edof.ravel(), weights=weights, minlength=model.n_nodes)
    diag[model.dirichlet] = 1.0
    return diag


def assemble_dense(rho_phys, model: ThermalModel) -> np.ndarray:
    """Dense K with Dirichlet rows/columns replaced by identity. Small meshes only."""
    k = simp_conductivity(_check_elemental(rho_phys, model), model)
    ke = element_matrix(model)
    n = model.n_nodes
    K = np.zeros((n, n))
    for e, nodes in enumerate(model.grid.edof):
        K[np.ix_(nodes, nodes)] += k[e] * ke
    K[model.dirichlet, :] = 0.0
    K[:, model.dirichlet] = 0.0
    K[model.dirichlet, model.dirichlet] = 1.0
    return K


def objective(t, q) -> float:
    """Thermal compliance q.t (equals t^T K t at an exact solve)."""
    return float(np.dot(q, t))


def element_energy(t, model: ThermalModel) -> np.ndarray:
    """t_e^T k_e^0 t_e for every element, Dirichlet temperatures taken as 0."""
    t = _check_nodal(t, model).copy()
    t[model.dirichlet] = 0.0
    te = t[model.grid.edof]
    return np.einsum("ea,ab,eb->e", te, element_matrix(model), te)


def element_sensitivities(t, rho_phys, model: ThermalModel) -> np.ndarray:
    """d(compliance)/d(rho_phys) per element; always <= 0."""
    rho = np.clip(_check_elemental(rho_phys, model), 0.0, 1.0)
    dk = model.penal * (model.k0 - model.kmin) * rho ** (model.penal - 1)
    return -dk * element_energy(t, model)
