import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridfd.helmholtz import assemble_bvp, test2_problem
from hybridfd.kernels import DiffOperatorSpec, KernelSpec
from hybridfd.linalg import (
    SingularMatrixError,
    SolverResidualWarning,
    condition_2norm,
    dense_solve,
    full_spectrum,
    sparse_direct_solve,
    write_eigenvalues_csv,
)
from hybridfd.nodes import SIDES, Rectangle, generate_cartesian, generate_halton, nearest_neighbors
from hybridfd.stencil import assemble_global, local_condition_number


def test_dense_solve_examples():
    B = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(dense_solve(np.eye(3), B), B)
    np.testing.assert_allclose(dense_solve(2 * np.eye(3), B[:, 0]), B[:, 0] / 2)
    with pytest.raises(SingularMatrixError):
        dense_solve(np.zeros((2, 2)), np.ones(2))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 40))
def test_dense_construct_then_solve(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + 4 * np.sqrt(n) * np.eye(n)
    X = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    got = dense_solve(A, A @ X)
    assert np.linalg.norm(A @ got - A @ X) <= 1e-10 * np.linalg.norm(A) * np.linalg.norm(got)
    assert np.linalg.norm(got - X) <= 1e-10 * np.linalg.norm(X)


def test_sparse_examples():
    d = np.array([2.0, -4.0, 8.0])
    b = np.array([1.0, 2.0, 3.0])
    res = sparse_direct_solve(sp.diags(d).tocsr(), b)
    np.testing.assert_allclose(res.x, b / d)
    assert res.relative_residual < 1e-15
    with pytest.raises(SingularMatrixError):
        sparse_direct_solve(sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]])), np.ones(2))


def test_dirichlet_only_system():
    # every node of a 2-wide grid is a boundary node, so all rows are identity rows
    g = generate_cartesian(2, 6)
    ops = {s: DiffOperatorSpec.identity() for s in SIDES}
    A = assemble_global(g, nearest_neighbors(g, 5), KernelSpec.hybrid(1, 1e-3), DiffOperatorSpec.laplacian(), ops)
    assert len(A.rows_of("dirichlet")) == g.N
    b = np.random.default_rng(0).random(g.N)
    np.testing.assert_array_equal(sparse_direct_solve(A, b).x, b)


def test_sparse_matches_dense_on_test2():
    prob = test2_problem(9.0, KernelSpec.hybrid(1.0, 1e-3), 10)
    nodes = generate_cartesian(20, 20, prob.domain)
    A, rhs = assemble_bvp(prob, nodes)
    xs = sparse_direct_solve(A, rhs).x
    xd = dense_solve(A.matrix.toarray(), rhs)
    assert np.linalg.norm(xs - xd) <= 1e-8 * np.linalg.norm(xd)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), N=st.integers(2, 500))
def test_random_sparse_residual(seed, N):
    rng = np.random.default_rng(seed)
    A = sp.random(N, N, density=min(1.0, 5.0 / N), random_state=rng, format="csr") + sp.eye(N) * 6
    A = A.astype(complex) + 1j * sp.random(N, N, density=min(1.0, 2.0 / N), random_state=rng, format="csr")
    b = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    res = sparse_direct_solve(A.tocsr(), b)
    assert res.relative_residual <= 1e-8
    if N <= 200:
        np.testing.assert_allclose(res.x, dense_solve(A.toarray(), b), rtol=1e-8, atol=1e-8 * np.abs(res.x).max())


def test_residual_warning(monkeypatch):
    A = sp.diags([1.0, 3.0]).tocsr()
    b = np.array([1.0, -1.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not sparse_direct_solve(A, b).meta["residual_warning"]
    import hybridfd.linalg as la

    monkeypatch.setattr(la, "RESIDUAL_WARN", -1.0)
    with pytest.warns(SolverResidualWarning):
        r = la.sparse_direct_solve(A, b)
    assert r.meta["residual_warning"]
    np.testing.assert_allclose(r.x, [1.0, -1 / 3])


def test_spectrum_examples(tmp_path):
    np.testing.assert_allclose(np.sort(full_spectrum(np.diag([3.0, -1.0, 2.0])).real), [-1, 2, 3])
    lam = full_spectrum(sp.csr_matrix(np.array([[0.0, 1.0], [-1.0, 0.0]])))
    np.testing.assert_allclose(np.sort(lam.imag), [-1, 1])
    with pytest.raises(ValueError):
        full_spectrum(sp.eye(3001, format="csr"))
    write_eigenvalues_csv(tmp_path / "e.csv", lam)
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "re,im"


def test_spectrum_similarity_invariance():
    g = generate_halton(150, Rectangle(-1, 1, -1, 1), boundary_ring=6)
    A = assemble_global(g, nearest_neighbors(g, 10), KernelSpec.hybrid(1, 1e-3), DiffOperatorSpec.laplacian(), {s: DiffOperatorSpec.identity() for s in SIDES}).matrix.toarray()
    p = np.random.default_rng(2).permutation(g.N)
    a = np.sort_complex(full_spectrum(A))
    b = np.sort_complex(full_spectrum(A[p][:, p]))
    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-8 * np.abs(a).max())


def test_eigenpairs():
    A = np.random.default_rng(1).standard_normal((50, 50))
    lam, V = full_spectrum(A, return_vectors=True)
    for j in range(0, 50, 5):
        assert np.linalg.norm(A @ V[:, j] - lam[j] * V[:, j]) <= 1e-6 * np.linalg.norm(A)


def test_condition_2norm():
    assert condition_2norm(np.eye(4)) == pytest.approx(1.0)
    assert condition_2norm(np.diag([10.0, 1.0])) == pytest.approx(10.0)
    assert condition_2norm(np.zeros((2, 2))) == np.inf
    g = generate_cartesian(10, 10)
    pts = g.coords[nearest_neighbors(g, 10)[55]]
    assert local_condition_number(KernelSpec.gaussian(0.05), pts) > 1e12


def test_hybrid_spectrum_not_right_of_gaussian():
    g = generate_halton(400)
    ops = {s: DiffOperatorSpec.identity() for s in SIDES}
    out = []
    for k in (KernelSpec.gaussian(1.0), KernelSpec.hybrid(1.0, 1e-3)):
        A = assemble_global(g, nearest_neighbors(g, 10), k, DiffOperatorSpec.laplacian(), ops, check=False)
        out.append(full_spectrum(A).real.max())
    assert out[1] <= out[0]
