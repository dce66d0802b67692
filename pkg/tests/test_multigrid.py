import numpy as np
import pytest

from mgar_topopt.fem import assemble_dense
from mgar_topopt.model import ModelError, heat_load
from mgar_topopt.multigrid import (
    MultigridError,
    build_hierarchy,
    prolongation_1d,
    raw_prolongation,
    smooth,
    vcycle,
)
from mgar_topopt.model import Grid

from conftest import make_model


def test_prolongation_1d():
    P = prolongation_1d(2).toarray()
    expected = np.array([[1, 0, 0], [0.5, 0.5, 0], [0, 1, 0], [0, 0.5, 0.5], [0, 0, 1]])
    np.testing.assert_array_equal(P, expected)


def test_raw_prolongation_interpolates_linear_fields():
    coarse = Grid((2, 3))
    fine = Grid((4, 6))
    P = raw_prolongation(coarse)
    lin = lambda c: 1.0 + 2.0 * c[:, 0] - 0.5 * c[:, 1]  # noqa: E731
    np.testing.assert_allclose(P @ lin(2.0 * coarse.node_coords), lin(fine.node_coords))


@pytest.mark.parametrize("nel,nl", [((4, 4), 2), ((8, 8), 3), ((4, 4, 4), 2)])
def test_galerkin_coarse_operator(nel, nl, rng):
    model = make_model(nel)
    rho = rng.uniform(0, 1, model.n_elem)
    H = build_hierarchy(model, rho, nl=nl)
    A = assemble_dense(rho, model)
    for lvl in range(1, nl):
        P = H.levels[lvl - 1].P.toarray()
        expected = P.T @ A @ P + np.diag(H.levels[lvl].constrained.astype(float))
        got = H.dense_matrix(lvl)
        assert np.abs(got - expected).max() <= 1e-13
        A = got


def test_prolongation_respects_constraints(rng):
    model = make_model((8, 8))
    H = build_hierarchy(model, rng.uniform(0, 1, model.n_elem), nl=3)
    for lvl in range(2):
        P = H.levels[lvl].P
        assert abs(P[H.levels[lvl].constrained]).sum() == 0
        assert abs(P[:, H.levels[lvl + 1].constrained]).sum() == 0


def test_smoother_fixed_point_and_constraints(rng):
    model = make_model((8, 8))
    rho = rng.uniform(0.1, 1, model.n_elem)
    H = build_hierarchy(model, rho, nl=2)
    A = assemble_dense(rho, model)
    x = rng.standard_normal(model.n_nodes)
    np.testing.assert_allclose(smooth(H, 0, A @ x, x, 3), x, atol=1e-12)
    b = rng.standard_normal(model.n_nodes)
    y = smooth(H, 0, b, x, 2)
    c = H.levels[0].constrained
    np.testing.assert_array_equal(y[c], x[c])


def test_vcycle_reduction_factor_uniform_64(rng):
    model = make_model((64, 64))
    rho = np.full(model.n_elem, 0.5)
    H = build_hierarchy(model, rho, nl=3)
    q = heat_load(model)
    # a random start excites every error mode, so each ratio is a true per-cycle factor
    x = rng.standard_normal(model.n_nodes)
    x[model.dirichlet] = 0.0
    res = [np.linalg.norm(q - H.matvec(0, x))]
    for _ in range(8):
        x = vcycle(H, q, x)
        res.append(np.linalg.norm(q - H.matvec(0, x)))
    factors = np.array(res[1:]) / np.array(res[:-1])
    assert factors.max() <= 0.5


def test_vcycle_iteration_converges_to_dense_solve():
    model = make_model((16, 16))
    rho = np.linspace(0.05, 1.0, model.n_elem)
    H = build_hierarchy(model, rho, nl=3)
    q = heat_load(model)
    exact = np.linalg.solve(assemble_dense(rho, model), q)
    x = np.zeros_like(q)
    for _ in range(300):
        x = vcycle(H, q, x)
    assert np.linalg.norm(x - exact) <= 1e-9 * np.linalg.norm(exact)


def test_preconditioner_symmetric(rng):
    model = make_model((16, 16))
    H = build_hierarchy(model, rng.uniform(0, 1, model.n_elem), nl=3)
    a, b = rng.standard_normal((2, model.n_nodes))
    lhs, rhs = a @ vcycle(H, b), b @ vcycle(H, a)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_errors():
    model = make_model((8, 8))
    rho = np.full(model.n_elem, 0.5)
    with pytest.raises(MultigridError):
        build_hierarchy(model, rho, nl=1)
    with pytest.raises(ModelError):
        build_hierarchy(make_model((6, 6)), np.full(36, 0.5), nl=3)
