import math
from dataclasses import replace

import numpy as np
import pytest
import sympy as sy

from hybridfd import helmholtz as hz
from hybridfd.helmholtz import BoundaryCondition, BvpProblem
from hybridfd.kernels import KernelSpec
from hybridfd.linalg import sparse_direct_solve
from hybridfd.nodes import Rectangle, generate_cartesian

SQ = Rectangle(-1.0, 1.0, -1.0, 1.0)


def zero(x, z):
    return np.zeros_like(x)


def dirichlet_problem(exact, forcing, k=0.0, sign=1, kernel=None):
    bc = BoundaryCondition("dirichlet", exact)
    return BvpProblem(SQ, k, sign, {s: bc for s in ("left", "right", "bottom", "top")}, forcing, kernel or KernelSpec.hybrid(1.0, 1e-3), 10, exact=exact)


def test_trivial_problem_has_zero_solution():
    sol = hz.solve_bvp(dirichlet_problem(zero, zero), generate_cartesian(12, 12, SQ))
    assert np.abs(sol.values).max() == 0.0


def test_problem_validation():
    bc = BoundaryCondition("dirichlet", zero)
    with pytest.raises(ValueError):
        BvpProblem(SQ, 1.0, 1, {"left": bc}, zero, KernelSpec.cubic())
    with pytest.raises(ValueError):
        BvpProblem(SQ, -1.0, 1, {s: bc for s in ("left", "right", "bottom", "top")}, zero, KernelSpec.cubic())
    with pytest.raises(ValueError):
        BoundaryCondition("periodic", zero)


def test_all_dirichlet_manufactured_solution_converges():
    exact = lambda x, z: np.exp(0.5 * x) * np.cos(z)
    forcing = lambda x, z: (0.25 - 1.0) * np.exp(0.5 * x) * np.cos(z)
    prob = dirichlet_problem(exact, forcing, kernel=KernelSpec.hybrid(1.0, 1e-6))
    errs = [hz.solve_bvp(prob, generate_cartesian(m, m, SQ)).errors(exact)["linf"] for m in (10, 20, 40)]
    assert errs[0] > errs[1] > errs[2]


def test_test2_exact_values():
    assert hz.test2_exact(0.0, 0.0) == 0.0
    assert hz.test2_exact(1.0, 1.0) == pytest.approx(0.9092974, abs=1e-7)


def test_test2_forcing_matches_symbolic_operator():
    x, z = sy.symbols("x z", real=True)
    k = 9.0
    u = sy.sin(x**2 + z)
    f = sy.lambdify((x, z), sy.diff(u, x, 2) + sy.diff(u, z, 2) - k**2 * u)
    prob = hz.test2_problem(k)
    pts = np.random.default_rng(0).uniform(-1, 1, (100, 2))
    np.testing.assert_allclose(prob.forcing(pts[:, 0], pts[:, 1]), f(pts[:, 0], pts[:, 1]), rtol=0, atol=1e-12)


def test_test2_n400_accuracy_and_dirichlet_rows():
    prob = hz.test2_problem(9.0, KernelSpec.hybrid(1.0, 1e-3), 10)
    nodes = generate_cartesian(20, 20, SQ)
    sol = hz.solve_bvp(prob, nodes)
    assert sol.errors(prob.exact)["linf"] < 1e-2
    assert np.all(np.isfinite(sol.values)) and len(sol.values) == 400
    for key in ("assembly_time", "factorization_time", "solve_time", "residual"):
        assert sol.meta[key] >= 0
    D = sol.operator.rows_of("dirichlet")
    np.testing.assert_allclose(sol.values[D], prob.exact(nodes.x[D], nodes.z[D]), rtol=1e-12, atol=1e-12)
    # the top corners touch a Dirichlet side and take its row
    assert len(sol.operator.rows_of("neumann")) == 18


def test_neumann_data_on_top_side():
    prob = hz.test2_problem(9.0)
    nodes = generate_cartesian(6, 6, SQ)
    _, rhs = hz.assemble_bvp(prob, nodes)
    top = [i for i in range(nodes.N) if nodes.labels[i] == "top"]
    np.testing.assert_allclose(rhs[top], np.cos(nodes.x[top] ** 2 + 1.0))


def _interior_consistency(kernel, m):
    prob = hz.test2_problem(9.0, kernel, 10, strict=False)
    nodes = generate_cartesian(m, m, SQ)
    A, rhs = hz.assemble_bvp(prob, nodes)
    r = A @ prob.exact(nodes.x, nodes.z) - rhs
    I = nodes.interior_indices
    return np.abs(r[I]).max() / np.abs(rhs[I]).max()


def test_interior_consistency_decreases():
    res = [_interior_consistency(KernelSpec.hybrid(0.9, 1e-6), m) for m in (20, 40, 80)]
    assert res[0] > res[1] > res[2]


def test_interior_consistency_plateau_is_small():
    # at fixed eps the Gaussian part flattens under refinement; the residual levels off
    res = [_interior_consistency(KernelSpec.hybrid(0.9, 1e-3), m) for m in (20, 40, 80)]
    assert max(res) < 5e-3


def test_convergence_study_rows():
    rows = hz.convergence_study(hz.test2_problem(9.0, KernelSpec.hybrid(0.9, 1e-3)), [400, 900])
    assert [r["N"] for r in rows] == [400, 900]
    assert rows[1]["linf"] < rows[0]["linf"]
    with pytest.raises(ValueError):
        hz.grid_side(401)


def test_loglog_slope():
    h = np.array([0.1, 0.05, 0.025])
    assert hz.loglog_slope(h, 3 * h**2) == pytest.approx(2.0)
    assert math.isnan(hz.loglog_slope([0.1], [1.0]))


def test_derivative_study_table():
    settings = [s for s in hz.default_test1_settings() if s.name in ("hybrid+poly4", "GA")]
    rows, slopes = hz.test1_derivative_study(settings, [100, 400, 900])
    assert len(rows) == 6 and set(slopes) == {"GA", "hybrid+poly4"}
    e = [r["error"] for r in rows if r["setting"] == "hybrid+poly4"]
    assert e[0] > e[1] > e[2]
    assert rows[0]["h"] == pytest.approx(0.2)


def test_epsilon_gamma_map():
    prob = hz.test2_problem(9.0)
    nodes = generate_cartesian(20, 20, SQ)
    cells = hz.epsilon_gamma_map(prob, nodes, [0.1, 1.0], [0.0, 1e-3], global_condition=False)
    assert [(c["epsilon"], c["gamma"]) for c in cells] == [(0.1, 0.0), (0.1, 1e-3), (1.0, 0.0), (1.0, 1e-3)]
    by = {(c["epsilon"], c["gamma"]): c for c in cells}
    assert by[(0.1, 1e-3)]["cond_local_max"] * 1e3 < by[(0.1, 0.0)]["cond_local_max"]
    for c in cells:
        if c["cond_local_max"] < 1e12:
            assert np.isfinite(c["error"])
    # the gamma = 0 cell is the pure Gaussian run
    ga = hz.solve_bvp(replace(prob, kernel=KernelSpec.gaussian(1.0)), nodes)
    assert by[(1.0, 0.0)]["error"] == pytest.approx(ga.errors(prob.exact)["linf"], rel=1e-12)


def test_classical_fd_is_second_order():
    prob = hz.test2_problem(9.0)
    errs, hs = [], []
    for m in (21, 41, 81):
        nodes = generate_cartesian(m, m, SQ)
        A, rhs = hz.classical_fd_system(prob, nodes, m, m)
        u = sparse_direct_solve(A, rhs).x
        errs.append(np.abs(u - prob.exact(nodes.x, nodes.z)).max())
        hs.append(2 / (m - 1))
    assert hz.loglog_slope(hs, errs) == pytest.approx(2.0, abs=0.3)


def test_dirichlet_laplacian_spectrum_shape():
    from hybridfd.nodes import generate_halton

    nodes = generate_halton(100, SQ, boundary_ring=6)
    lam = hz.dirichlet_laplacian_spectrum(nodes, KernelSpec.hybrid(1.0, 1e-3), 10)
    assert len(lam) == 100
