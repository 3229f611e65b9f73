import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fracfem import femcore, meshkit
from fracfem.femcore import Coefficient, FeFunction, FeSpace

ONE = Coefficient.constant(1.0)


def space1d(n=8, grading=1.0):
    return FeSpace(meshkit.interval_mesh(0, 1, n, grading))


def space2d(n=4):
    return FeSpace(meshkit.unit_square_tri_mesh(n))


def thomas(a, b, c, d):
    # sub-, main- and super-diagonal solve
    n = len(b)
    cp, dp = np.zeros(n), np.zeros(n)
    cp[0], dp[0] = c[0] / b[0], d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / m if i < n - 1 else 0.0
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m
    x = np.zeros(n)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


# quadrature


@pytest.mark.parametrize("dim, kind, degree", [(1, "form", 3), (1, "accurate", 9), (2, "form", 2), (2, "accurate", 5)])
def test_quadrature_exactness(dim, kind, degree):
    bary, w = femcore.quadrature_rule(dim, kind)
    assert w.sum() == pytest.approx(1.0, rel=1e-14)
    if dim == 1:
        x = bary[:, 1]
        for p in range(degree + 1):
            assert w @ x**p == pytest.approx(1 / (p + 1), rel=1e-13)
    else:
        # reference triangle moments int x^i y^j = i! j! / (i + j + 2)! times 2 (area 1/2)
        x, y = bary[:, 1], bary[:, 2]
        for i in range(degree + 1):
            for j in range(degree + 1 - i):
                exact = 2 * math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
                assert w @ (x**i * y**j) == pytest.approx(exact, rel=1e-12)


# mass


def test_mass_1d_entries():
    sp_ = space1d(10)
    M = femcore.assemble_mass(sp_).toarray()
    tau = 0.1
    assert np.allclose(np.diag(M), 2 * tau / 3)
    assert np.allclose(np.diag(M, 1), tau / 6)
    assert np.allclose(M, M.T)


@pytest.mark.parametrize("mesh", [meshkit.interval_mesh(0, 1, 9, 1.5), meshkit.unit_square_tri_mesh(5)])
def test_full_mass_row_sums(mesh):
    M = femcore.assemble_mass(FeSpace(mesh), full=True)
    rows = np.asarray(M.sum(axis=1)).ravel()
    meas = np.abs(mesh.measures())
    lumped = np.zeros(mesh.n_vertices)
    np.add.at(lumped, mesh.cells.ravel(), np.repeat(meas / (mesh.dim + 1), mesh.dim + 1))
    assert np.allclose(rows, lumped, rtol=1e-14)
    assert rows.sum() == pytest.approx(1.0)


def test_mass_positive_definite():
    for s in (space1d(12, 2.0), space2d(5)):
        M = femcore.assemble_mass(s).toarray()
        assert s.n_free <= 50
        assert np.linalg.eigvalsh(M).min() > 0


# stiffness


def test_stiffness_1d_tridiagonal():
    A = femcore.assemble_stiffness(space1d(10), ONE).toarray()
    assert np.allclose(np.diag(A), 20.0) and np.allclose(np.diag(A, 1), -10.0)


def test_stiffness_variable_kappa_symbolic():
    import sympy as sp_

    x = sp_.symbols("x")
    kap = Coefficient(lambda p, t: 1.0 + p[:, 0], 1.0, 2.0)
    s = space1d(2)
    A = femcore.assemble_stiffness(s, kap).toarray()
    # hat at 1/2 has slope +-2; exact integral of (1 + x) * 4 over (0, 1)
    exact = sp_.integrate((1 + x) * 4, (x, 0, 1))
    assert A[0, 0] == pytest.approx(float(exact), rel=1e-14)
    assert float(exact) == 6.0

    s4 = space1d(4)
    A4 = femcore.assemble_stiffness(s4, kap).toarray()
    hats = [sp_.Piecewise((0, x < (i - 1) / 4), (4 * x - (i - 1), x < i / 4), (i + 1 - 4 * x, x < (i + 1) / 4), (0, True)) for i in (1, 2, 3)]
    for i in range(3):
        for j in range(3):
            e = sum(
                sp_.integrate((1 + x) * sp_.diff(hats[i], x) * sp_.diff(hats[j], x), (x, sp_.Rational(k, 4), sp_.Rational(k + 1, 4)))
                for k in range(4)
            )
            assert A4[i, j] == pytest.approx(float(e), abs=1e-13)


@pytest.mark.parametrize("s", [space1d(9, 1.5), space2d(4)])
def test_stiffness_scaling(s):
    A1 = femcore.assemble_stiffness(s, ONE)
    A3 = femcore.assemble_stiffness(s, Coefficient.constant(3.7))
    assert np.allclose(A3.toarray(), 3.7 * A1.toarray(), rtol=1e-14, atol=0)


def test_stiffness_coercivity(rng):
    s = space2d(6)
    kap = Coefficient(lambda p, t: 1 + 0.5 * np.sin(2 * np.pi * p[:, 0]) * np.exp(-t), 0.5, 1.5)
    A1 = femcore.assemble_stiffness(s, ONE)
    for t in (0.0, 0.5, 1.0):
        A = femcore.assemble_stiffness(s, kap, t)
        assert abs(A - A.T).max() < 1e-14
        X = rng.standard_normal((100, s.n_free))
        lhs = np.einsum("ij,ij->i", X, (A @ X.T).T)
        rhs = np.einsum("ij,ij->i", X, (A1 @ X.T).T)
        assert np.all(lhs >= 0.5 * rhs - 1e-12)
        assert np.all(lhs <= 1.5 * rhs + 1e-12)


def test_coefficient_violation_names_point():
    bad = Coefficient(lambda p, t: 1.0 - 2 * p[:, 0], 0.1, 1.0)
    with pytest.raises(femcore.CoefficientError, match="x="):
        femcore.assemble_stiffness(space1d(4), bad, 0.3)
    with pytest.raises(femcore.CoefficientError):
        Coefficient(lambda p, t: p, 0.0, 1.0)


# load


def test_load_examples():
    s = space1d(10)
    assert np.all(femcore.assemble_load(s, lambda x, t: np.zeros(len(x))) == 0)
    assert np.allclose(femcore.assemble_load(s, lambda x, t: np.ones(len(x))), 0.1)


def test_load_sine_sum_second_order():
    errs = []
    for n in (8, 16, 32):
        F = femcore.assemble_load(space1d(n), lambda x, t: np.sin(np.pi * x[:, 0]))
        # boundary hats are absent; add their exact share so the sum tends to 2/pi
        errs.append(abs(F.sum() - 2 / np.pi))
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(rates) > 1.9


# projections


def linear_in_space(s, rng):
    coeffs = rng.standard_normal(s.n_free)
    return FeFunction(s, coeffs)


@pytest.mark.parametrize("s", [space1d(7, 1.8), space2d(4)])
def test_projections_reproduce_fe_functions(s, rng):
    uh = linear_in_space(s, rng)
    P = femcore.l2_project(s, uh, tol=1e-14)
    assert np.allclose(P.coeffs, uh.coeffs, atol=1e-12)
    # idempotence
    PP = femcore.l2_project(s, P, tol=1e-14)
    assert np.allclose(PP.coeffs, P.coeffs, atol=1e-12)


def test_ritz_reproduces_fe_functions(rng):
    # Gauss points are cell interior in 1D, so grad of a P1 function is well defined there
    s = space1d(9, 1.6)
    uh = linear_in_space(s, rng)
    cell_grad = np.einsum("ci,cid->cd", uh.nodal_values()[s.mesh.cells], s.gradients())
    x = s.mesh.vertices[:, 0]

    def grad_uh(p):
        return cell_grad[np.searchsorted(x, p[:, 0]) - 1]

    kap = Coefficient(lambda p, t: 2 + np.cos(p[:, 0]), 1.0, 3.0)
    R = femcore.ritz_project(s, kap, 0.0, uh, grad_uh, tol=1e-14)
    assert np.allclose(R.coeffs, uh.coeffs, atol=1e-12)


def test_ritz_galerkin_orthogonality(rng):
    s = space1d(16, 1.5)
    kap = Coefficient(lambda p, t: 1 + p[:, 0] ** 2, 1.0, 2.0)
    A = femcore.assemble_stiffness(s, kap)
    for _ in range(50):
        c = rng.standard_normal(5)
        k = np.arange(1, 6)
        v = lambda x: np.sin(np.pi * np.outer(x[:, 0], k)) @ c
        gv = lambda x: (np.pi * k * np.cos(np.pi * np.outer(x[:, 0], k)) @ c)[:, None]
        R = femcore.ritz_project(s, kap, 0.0, v, gv, tol=1e-13)
        # A(R v - v, chi) = A R - b must vanish for every basis chi
        resid = A @ R.coeffs - femcore.ritz_rhs(s, kap, 0.0, gv)
        assert np.abs(resid).max() <= 1e-10 * np.abs(A @ R.coeffs).max()


@pytest.mark.parametrize("dim", [1, 2])
def test_projection_rates(dim):
    if dim == 1:
        u = lambda x: np.sin(np.pi * x[:, 0]) * np.exp(x[:, 0])
        g = lambda x: (np.exp(x[:, 0]) * (np.pi * np.cos(np.pi * x[:, 0]) + np.sin(np.pi * x[:, 0])))[:, None]
        spaces = [space1d(n) for n in (8, 16, 32, 64)]
    else:
        u = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
        g = lambda x: np.pi * np.column_stack([np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                                               np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])])
        spaces = [space2d(n) for n in (4, 8, 16, 32)]
    for project in ("P", "R"):
        errs = []
        for s in spaces:
            uh = femcore.l2_project(s, u) if project == "P" else femcore.ritz_project(s, ONE, 0.0, u, g)
            errs.append(femcore.error_norms(s, uh, u, g))
        l2 = math.log2(errs[-2][0] / errs[-1][0])
        h1 = math.log2(errs[-2][1] / errs[-1][1])
        assert l2 >= 1.95 and h1 >= 0.95


# solver


def test_cg_diagonal():
    d = np.array([1.0, 4.0, 0.5])
    b = np.array([2.0, 2.0, 2.0])
    assert np.allclose(femcore.cg_solve(sp.diags(d).tocsr(), b, tol=1e-14), b / d)


def test_cg_poisson_vs_thomas():
    n = 100
    A = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()
    b = np.ones(n)
    ref = thomas(np.r_[0, -np.ones(n - 1)], 2 * np.ones(n), np.r_[-np.ones(n - 1), 0], b)
    x = femcore.cg_solve(A, b, tol=1e-14)
    assert np.abs(x - ref).max() <= 1e-9 * np.abs(ref).max()


def test_cg_random_spd_vs_cholesky(rng):
    B = rng.standard_normal((30, 30))
    A = B.T @ B + np.eye(30)
    b = rng.standard_normal(30)
    ref = sla.cho_solve(sla.cho_factor(A), b)
    x = femcore.cg_solve(sp.csr_matrix(A), b, tol=1e-14)
    assert np.allclose(x, ref, rtol=0, atol=1e-9 * np.abs(ref).max())


def test_cg_zero_rhs_and_failure():
    A = sp.diags(np.linspace(1, 1e6, 200)).tocsr()
    assert np.all(femcore.cg_solve(A, np.zeros(200)) == 0)
    B = sp.csr_matrix(np.diag(np.linspace(1, 1e6, 200)) + 0.1)
    with pytest.raises(femcore.ConvergenceError) as exc:
        femcore.cg_solve(B, np.ones(200), tol=1e-14, max_iter=3)
    assert exc.value.residual > 1e-14


# norms


@pytest.mark.parametrize("s", [space1d(6, 1.5), space2d(3)])
def test_error_norms_linear_reproduction(s):
    # linear functions vanishing on the boundary do not exist on these domains,
    # so compare against the FE function itself evaluated pointwise
    uh = FeFunction(s, np.random.default_rng(1).standard_normal(s.n_free))
    grads = np.einsum("ci,cid->cd", uh.nodal_values()[s.mesh.cells], s.gradients())
    qp, _, _ = s.quadrature_points("accurate")
    gq = np.repeat(grads, qp.shape[1], axis=0)
    it = iter([gq])
    l2, h1 = femcore.error_norms(s, uh, uh, lambda x: next(it))
    assert l2 <= 1e-13 and h1 <= 1e-13


def test_error_norms_closed_form():
    s = space1d(64)
    l2, h1 = femcore.error_norms(s, FeFunction(s, np.zeros(s.n_free)),
                                 lambda x: np.sin(np.pi * x[:, 0]),
                                 lambda x: np.pi * np.cos(np.pi * x[:, :1]))
    assert l2 == pytest.approx(1 / math.sqrt(2), rel=1e-10)
    assert h1 == pytest.approx(math.pi / math.sqrt(2), rel=1e-10)


def test_fe_norms_match_error_norms(rng):
    s = space2d(5)
    uh = FeFunction(s, rng.standard_normal(s.n_free))
    zero = lambda x: np.zeros(len(x))
    zg = lambda x: np.zeros((len(x), 2))
    assert np.allclose(femcore.fe_norms(s, uh), femcore.error_norms(s, uh, zero, zg), rtol=1e-12)


def test_evaluate_at():
    s = space2d(4)
    f = femcore.interpolate(s, lambda x: x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1]))
    verts = s.mesh.vertices[s.free_dofs]
    assert np.allclose(f(verts), f.coeffs)
    assert f(np.array([[5.0, 5.0]]))[0] == 0.0
    s1 = space1d(4)
    g = FeFunction(s1, np.array([1.0, 2.0, 3.0]))
    assert g(np.array([[0.375]]))[0] == pytest.approx(1.5)


def test_dump_matrix(tmp_path):
    A = femcore.assemble_stiffness(space1d(4), ONE)
    femcore.dump_matrix(A, tmp_path / "a.txt")
    rows = [ln.split() for ln in (tmp_path / "a.txt").read_text().splitlines()]
    keys = [(int(r), int(c)) for r, c, _ in rows]
    assert keys == sorted(keys)
    dense = np.zeros((3, 3))
    for r, c, v in rows:
        dense[int(r), int(c)] = float(v)
    assert np.array_equal(dense, A.toarray())


@settings(max_examples=25, deadline=None)
@given(c=st.floats(0.01, 100.0), n=st.integers(2, 20))
def test_stiffness_scaling_property(c, n):
    s = space1d(n)
    A1 = femcore.assemble_stiffness(s, ONE).toarray()
    Ac = femcore.assemble_stiffness(s, Coefficient.constant(c)).toarray()
    assert np.allclose(Ac, c * A1, rtol=1e-14, atol=0)
