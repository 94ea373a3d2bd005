import numpy as np
import pytest
import scipy.sparse as sp
import sympy as sy
from hypothesis import given, settings, strategies as st

from gmsfem import fem
from gmsfem.coefficient import CoefficientField, constant_field
from gmsfem.mesh import CellBlock, build_fine_grid


def _sympy_element(hx, hy):
    """Exact Q1 element matrices on [0,hx]x[0,hy], corners SW, SE, NE, NW."""
    x, y = sy.symbols("x y")
    a, b = sy.nsimplify(hx), sy.nsimplify(hy)
    N = [(1 - x / a) * (1 - y / b), (x / a) * (1 - y / b), (x / a) * (y / b), (1 - x / a) * (y / b)]
    K = sy.zeros(4)
    Mm = sy.zeros(4)
    for i in range(4):
        for j in range(4):
            g = sy.diff(N[i], x) * sy.diff(N[j], x) + sy.diff(N[i], y) * sy.diff(N[j], y)
            K[i, j] = sy.integrate(g, (x, 0, a), (y, 0, b))
            Mm[i, j] = sy.integrate(N[i] * N[j], (x, 0, a), (y, 0, b))
    return np.array(K, dtype=float), np.array(Mm, dtype=float)


@pytest.mark.parametrize("hx,hy", [(1, 1), (0.25, 0.125), (1 / 3, 2.0)])
def test_element_matrices_symbolic(hx, hy):
    K, Mm = _sympy_element(hx, hy)
    np.testing.assert_allclose(fem.element_stiffness(hx, hy), K, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(fem.element_mass(hx, hy), Mm, rtol=1e-14, atol=1e-15)


def test_square_element_values():
    K = fem.element_stiffness(0.5, 0.5)
    np.testing.assert_allclose(np.diag(K), 2 / 3)
    np.testing.assert_allclose(K[0], [2 / 3, -1 / 6, -1 / 3, -1 / 6])


def test_laplacian_stencil():
    g = build_fine_grid(4, 4)
    A = fem.assemble_stiffness(g, constant_field(4, 4, 1.0)).toarray()
    c = g.node(2, 2)
    assert A[c, c] == pytest.approx(8 / 3)
    for di, dj in [(1, 0), (0, 1), (1, 1), (-1, 1)]:
        assert A[c, g.node(2 + di, 2 + dj)] == pytest.approx(-1 / 3)
    assert np.count_nonzero(A[c]) == 9


def test_constants_in_kernel(rng):
    g = build_fine_grid(6, 5)
    k = CoefficientField(np.exp(rng.normal(size=(5, 6))))
    A = fem.assemble_stiffness(g, k)
    assert np.abs(A @ np.ones(g.n_nodes)).max() < 1e-12
    assert abs(A - A.T).max() < 1e-14


def test_mass_integrates_kappa(rng):
    g = build_fine_grid(6, 4)
    vals = np.exp(rng.normal(size=(4, 6)))
    M = fem.assemble_weighted_mass(g, CoefficientField(vals))
    one = np.ones(g.n_nodes)
    assert one @ (M @ one) == pytest.approx(vals.sum() * g.hx * g.hy, rel=1e-13)


def test_energy_of_linear_function():
    g = build_fine_grid(8, 8)
    x, y = g.coords
    A = fem.assemble_stiffness(g, constant_field(8, 8, 3.0))
    assert fem.quad_form(A, 2 * x - y) == pytest.approx(3.0 * 5.0, rel=1e-13)


def test_block_matches_restriction_on_interior(rng):
    g = build_fine_grid(8, 8)
    k = CoefficientField(np.exp(rng.normal(size=(8, 8))))
    block = CellBlock(2, 6, 2, 6)
    Ab, Mb = fem.assemble_block(g, k, block)
    nodes = g.block_nodes(block)
    # inside the block all adjacent cells belong to it, so rows of interior nodes agree
    Ag = fem.assemble_stiffness(g, k).toarray()[np.ix_(nodes, nodes)]
    ix, iy = g.node_ij
    inner = [j for j, n in enumerate(nodes) if 2 < ix[n] < 6 and 2 < iy[n] < 6]
    np.testing.assert_allclose(Ab.toarray()[inner], Ag[inner], rtol=1e-13)
    # total block mass equals the integral of kappa over the block
    one = np.ones(len(nodes))
    area = g.hx * g.hy
    assert one @ (Mb @ one) == pytest.approx(k.values[2:6, 2:6].sum() * area, rel=1e-13)


def test_load_callable_vs_cells():
    g = build_fine_grid(4, 4)
    b1 = fem.assemble_load(g, lambda x, y: 2.0 + 0 * x)
    b2 = fem.assemble_load(g, np.full((4, 4), 2.0))
    np.testing.assert_allclose(b1, b2, rtol=1e-14)
    assert b1.sum() == pytest.approx(2.0)


def test_load_gauss_integrates_bilinear_exactly():
    g = build_fine_grid(4, 4)
    b = fem.assemble_load(g, lambda x, y: x * y)
    assert b.sum() == pytest.approx(0.25, rel=1e-14)
    x, _ = g.coords
    assert b @ x == pytest.approx(1 / 6, rel=1e-12)  # int x^2 y


def _sinsin_system(n):
    g = build_fine_grid(n, n)
    A = fem.assemble_stiffness(g, constant_field(n, n, 1.0))
    b = fem.assemble_load(g, lambda x, y: 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y))
    return g, A, fem.apply_homogeneous_dirichlet(A, b, g.boundary_nodes)


def test_sinsin_converges():
    errs = []
    for n in (8, 16, 32):
        g, A, sysm = _sinsin_system(n)
        u = fem.solve_spd(sysm)
        exact = np.sin(np.pi * g.coords[0]) * np.sin(np.pi * g.coords[1])
        errs.append(np.abs(u - exact).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_solver_residual(method):
    _, _, sysm = _sinsin_system(16)
    u = fem.solve_spd(sysm, 1e-12, method=method)
    assert np.linalg.norm(sysm.rhs - sysm.matrix @ u) <= 1e-12 * np.linalg.norm(sysm.rhs)
    assert np.all(u[sysm.constrained] == 0)


def test_direct_and_cg_agree():
    _, _, sysm = _sinsin_system(16)
    np.testing.assert_allclose(fem.solve_spd(sysm, 1e-12),
                               fem.solve_spd(sysm, 1e-12, method="cg"), atol=1e-10)


def test_dirichlet_elimination_structure():
    g = build_fine_grid(4, 4)
    A = fem.assemble_stiffness(g, constant_field(4, 4, 1.0))
    s = fem.apply_homogeneous_dirichlet(A, np.ones(g.n_nodes), g.boundary_nodes)
    D = s.matrix.toarray()
    for c in g.boundary_nodes:
        row = np.zeros(g.n_nodes)
        row[c] = 1.0
        np.testing.assert_array_equal(D[c], row)
        np.testing.assert_array_equal(D[:, c], row)
    assert np.all(s.rhs[g.boundary_nodes] == 0)


def test_all_constrained_is_error():
    g = build_fine_grid(2, 2)
    A = fem.assemble_stiffness(g, constant_field(2, 2, 1.0))
    with pytest.raises(ValueError, match="empty system"):
        fem.apply_homogeneous_dirichlet(A, np.zeros(9), np.arange(9))


def test_singular_system_fails_loudly():
    g = build_fine_grid(4, 4)
    A = fem.assemble_stiffness(g, constant_field(4, 4, 1.0))
    s = fem.apply_homogeneous_dirichlet(A, np.arange(g.n_nodes, dtype=float), [])
    with pytest.raises(fem.SolverError):
        fem.solve_spd(s)


def test_zero_rhs():
    _, _, s = _sinsin_system(4)
    s0 = fem.LinearSystem(s.matrix, np.zeros_like(s.rhs), s.constrained)
    assert not fem.solve_spd(s0).any()


def test_restrict_validation():
    A = sp.identity(5, format="csr")
    with pytest.raises(ValueError):
        fem.restrict(A, [2, 1])
    with pytest.raises(IndexError):
        fem.restrict(A, [0, 5])
    assert fem.restrict(A, [1, 3]).shape == (2, 2)


def test_quad_form_dimension():
    with pytest.raises(ValueError):
        fem.quad_form(sp.identity(3), np.ones(4))


def test_prolongation_reproduces_bilinear():
    g = build_fine_grid(4, 3)
    P = fem.prolongate(g, 2)
    r = build_fine_grid(8, 6)
    x, y = g.coords
    X, Y = r.coords
    np.testing.assert_allclose(P @ (1 + 2 * x - y + x * y), 1 + 2 * X - Y + X * Y, atol=1e-14)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_stiffness_psd_and_symmetric(nx, ny, seed):
    r = np.random.default_rng(seed)
    g = build_fine_grid(nx, ny)
    k = CoefficientField(np.exp(4 * r.standard_normal((ny, nx))))
    A = fem.assemble_stiffness(g, k).toarray()
    M = fem.assemble_weighted_mass(g, k).toarray()
    assert np.abs(A - A.T).max() <= 1e-12 * np.abs(A).max()
    v = r.standard_normal(g.n_nodes)
    assert v @ A @ v >= -1e-10 * np.abs(A).max()
    assert v @ M @ v > 0
