"""Boundary-value problems ``(lap + s k^2) u = f`` with Dirichlet/Neumann/Robin sides.

One row per node: interior nodes collocate the PDE, boundary nodes their
side's condition.  Corner nodes take a Dirichlet side when one is adjacent.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .kernels import DiffOperatorSpec, KernelSpec, PolyBasisSpec
from .linalg import SingularMatrixError, condition_2norm, sparse_direct_solve
from .nodes import SIDES, NodeSet, Rectangle, fill_distance, generate_cartesian, nearest_neighbors
from .stencil import ConditioningError, GlobalOperator, assemble_rows, local_condition_numbers

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BoundaryCondition:
    """``kind`` is ``dirichlet`` (u = g), ``neumann`` (du/dn = g) or ``robin`` (du/dn + a u = g)."""

    kind: str
    g: Field
    coefficient: complex = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann", "robin"):
            raise ValueError(f"unknown boundary condition {self.kind!r}")

    def operator(self) -> DiffOperatorSpec:
        if self.kind == "dirichlet":
            return DiffOperatorSpec.identity()
        if self.kind == "neumann":
            return DiffOperatorSpec.normal_derivative()
        return DiffOperatorSpec.robin(self.coefficient)


def _zero(x, z):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class BvpProblem:
    domain: Rectangle
    k: float
    sign: int
    bcs: Mapping[str, BoundaryCondition]
    forcing: Field
    kernel: KernelSpec
    n: int = 10
    poly_degree: Optional[int] = None
    exact: Optional[Field] = None
    strict: bool = True

    def __post_init__(self):
        missing = [s for s in SIDES if s not in self.bcs]
        if missing:
            raise ValueError(f"no boundary condition for side(s) {missing}")
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def with_kernel(self, kernel: KernelSpec) -> "BvpProblem":
        return replace(self, kernel=kernel)

    def bc_for(self, label: str) -> BoundaryCondition:
        sides = label.split("+")
        bcs = [self.bcs[s] for s in sides]
        for bc in bcs:
            if bc.kind == "dirichlet":
                return bc
        return bcs[0]

    @property
    def interior_operator(self) -> DiffOperatorSpec:
        return DiffOperatorSpec.helmholtz(self.k, self.sign)

    @property
    def poly(self) -> Optional[PolyBasisSpec]:
        return None if self.poly_degree is None else PolyBasisSpec(self.poly_degree)


@dataclass
class BvpSolution:
    nodes: NodeSet
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def errors(self, exact: Field) -> dict:
        e = np.abs(self.values - exact(self.nodes.x, self.nodes.z))
        return {"linf": float(e.max()), "rms": float(np.sqrt(np.mean(e**2)))}


def assemble_bvp(problem: BvpProblem, nodes: NodeSet, stencils=None):
    """Return ``(GlobalOperator, rhs)`` for ``problem`` on ``nodes``."""
    if stencils is None:
        stencils = nearest_neighbors(nodes, problem.n)
    x, z = nodes.x, nodes.z
    rhs = np.asarray(problem.forcing(x, z), dtype=complex).copy()
    ops = []
    interior = problem.interior_operator
    for i in range(nodes.N):
        lab = nodes.labels[i]
        if lab:
            bc = problem.bc_for(lab)
            ops.append(bc.operator())
            rhs[i] = bc.g(x[i : i + 1], z[i : i + 1])[0]
        else:
            ops.append(interior)
    A = assemble_rows(nodes, stencils, problem.kernel, ops, problem.poly, check=problem.strict)
    if not np.any(rhs.imag) and not np.iscomplexobj(A.matrix.data):
        rhs = rhs.real.copy()
    return A, rhs


def solve_bvp(problem: BvpProblem, nodes: NodeSet) -> BvpSolution:
    t0 = time.perf_counter()
    stencils = nearest_neighbors(nodes, problem.n)
    A, rhs = assemble_bvp(problem, nodes, stencils)
    t1 = time.perf_counter()
    res = sparse_direct_solve(A, rhs)
    vals = res.x
    if np.iscomplexobj(vals) and not np.any(vals.imag):
        vals = vals.real
    meta = {
        "assembly_time": t1 - t0,
        "factorization_time": res.factor_time,
        "solve_time": res.solve_time,
        "residual": res.relative_residual,
        "residual_warning": res.residual_warning,
        "nnz": A.nnz,
    }
    sol = BvpSolution(nodes, vals, meta)
    sol.operator = A  # kept for diagnostics (sparsity, spectra)
    return sol


# ---------------------------------------------------------------------------
# manufactured test problem
# ---------------------------------------------------------------------------

def test2_exact(x, z):
    return np.sin(np.asarray(x) ** 2 + np.asarray(z))


def test2_problem(k: float = 9.0, kernel: Optional[KernelSpec] = None, n: int = 10, strict: bool = True) -> BvpProblem:
    """``lap u - k^2 u = f`` on ``[-1, 1]^2`` with exact solution ``sin(x^2 + z)``.

    Dirichlet data on the left, right and bottom sides, ``du/dn = cos(x^2 + z)``
    on the top side ``z = 1``.
    """
    if kernel is None:
        kernel = KernelSpec.hybrid(1.0, 1e-3)

    def forcing(x, z):
        s = x**2 + z
        return 2 * np.cos(s) - (4 * x**2 + 1 + k**2) * np.sin(s)

    dirichlet = BoundaryCondition("dirichlet", test2_exact)
    neumann = BoundaryCondition("neumann", lambda x, z: np.cos(x**2 + z))
    bcs = {"left": dirichlet, "right": dirichlet, "bottom": dirichlet, "top": neumann}
    return BvpProblem(Rectangle(-1.0, 1.0, -1.0, 1.0), k, -1, bcs, forcing, kernel, n, exact=test2_exact, strict=strict)


# keep pytest from collecting the test-problem factories when imported into test modules
test2_exact.__test__ = False
test2_problem.__test__ = False


def grid_side(N: int) -> int:
    m = int(round(np.sqrt(N)))
    if m * m != N:
        raise ValueError(f"N={N} is not a perfect square")
    return m


def loglog_slope(h, err) -> float:
    """Least-squares slope of ``log(err)`` against ``log(h)``."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    ok = np.isfinite(err) & (err > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[ok]), np.log(err[ok]), 1)[0])


def convergence_study(problem: BvpProblem, Ns: Sequence[int]) -> list:
    """Solve on Cartesian ``sqrt(N) x sqrt(N)`` grids; one row per N."""
    rows = []
    for N in Ns:
        m = grid_side(N)
        nodes = generate_cartesian(m, m, problem.domain)
        sol = solve_bvp(problem, nodes)
        err = sol.errors(problem.exact)
        rows.append({"N": N, "h": fill_distance(nodes), **err, "residual": sol.meta["residual"]})
    return rows


# ---------------------------------------------------------------------------
# Test 1: first derivative of sin(x) + cos(z)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DerivativeSetting:
    name: str
    kernel: KernelSpec
    poly_degree: Optional[int] = None
    n: int = 30


TEST1_NAMES = ("GA", "hybrid", "PHS3+poly4", "GA+poly4", "hybrid+poly4")


def default_test1_settings(epsilon: float = 1.0, gamma: float = 1e-6, n: int = 30) -> list:
    ga = KernelSpec.gaussian(epsilon)
    hy = KernelSpec.hybrid(epsilon, gamma)
    return [
        DerivativeSetting("GA", ga, None, n),
        DerivativeSetting("hybrid", hy, None, n),
        DerivativeSetting("PHS3+poly4", KernelSpec.phs(3), 4, n),
        DerivativeSetting("GA+poly4", ga, 4, n),
        DerivativeSetting("hybrid+poly4", hy, 4, n),
    ]


def test1_derivative_study(settings: Sequence[DerivativeSetting], Ns: Sequence[int], domain: Optional[Rectangle] = None):
    """l-infinity error of the assembled d/dx applied to ``sin(x) + cos(z)``.

    Returns ``(rows, slopes)``; rows carry ``setting, N, h, error``.  Local
    solves run unchecked so ill-conditioned settings still report an error.
    """
    from .stencil import assemble_global

    domain = domain or Rectangle(-1.0, 1.0, -1.0, 1.0)
    dx = DiffOperatorSpec("dx")
    rows, slopes = [], {}
    for s in settings:
        hs, errs = [], []
        for N in Ns:
            m = grid_side(N)
            nodes = generate_cartesian(m, m, domain)
            st = nearest_neighbors(nodes, s.n)
            poly = None if s.poly_degree is None else PolyBasisSpec(s.poly_degree)
            A = assemble_global(nodes, st, s.kernel, dx, poly=poly, check=False)
            u = np.sin(nodes.x) + np.cos(nodes.z)
            err = float(np.max(np.abs(A @ u - np.cos(nodes.x))))
            h = fill_distance(nodes)
            rows.append({"setting": s.name, "N": N, "h": h, "error": err})
            hs.append(h)
            errs.append(err)
        slopes[s.name] = loglog_slope(hs, errs)
    return rows, slopes


# ---------------------------------------------------------------------------
# epsilon-gamma parameter maps
# ---------------------------------------------------------------------------

test1_derivative_study.__test__ = False


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HYBRIDFD_THREADS", "1")))
    except ValueError:
        return 1


def kernel_for(epsilon: float, gamma: float) -> KernelSpec:
    return KernelSpec.gaussian(epsilon) if gamma == 0 else KernelSpec.hybrid(epsilon, gamma)


def epsilon_gamma_map(problem: BvpProblem, nodes: NodeSet, epsilons: Sequence[float], gammas: Sequence[float], global_condition: bool = True):
    """Error and conditioning for every ``(epsilon, gamma)`` pair.

    Each cell reports the l-infinity error (NaN when a local or global solve
    fails), the maximum local interpolation-matrix condition number and,
    for small systems, the 2-norm condition number of the global matrix.
    """
    stencils = nearest_neighbors(nodes, problem.n)
    cells = [(e, g) for e in epsilons for g in gammas]

    def cell(eg):
        e, g = eg
        kern = kernel_for(e, g)
        p = replace(problem, kernel=kern, strict=True)
        cond_loc = float(np.max(local_condition_numbers(kern, nodes, stencils)))
        err = np.nan
        cond_glob = np.nan
        try:
            A, rhs = assemble_bvp(p, nodes, stencils)
            x = sparse_direct_solve(A, rhs).x
            err = float(np.max(np.abs(x - p.exact(nodes.x, nodes.z))))
            if global_condition and nodes.N <= 2000:
                cond_glob = condition_2norm(A)
        except (ConditioningError, SingularMatrixError):
            pass
        return {"epsilon": e, "gamma": g, "error": err, "cond_local_max": cond_loc, "cond_global": cond_glob}

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        return list(ex.map(cell, cells))


# ---------------------------------------------------------------------------
# classical comparator
# ---------------------------------------------------------------------------

def classical_fd_system(problem: BvpProblem, nodes: NodeSet, nx: int, nz: int):
    """Second-order 5-point finite differences on the Cartesian grid of ``nodes``.

    Neumann/Robin sides use the second-order one-sided difference
    ``(3 u_0 - 4 u_1 + u_2) / (2 h)`` along the inward normal.
    """
    d = problem.domain
    hx = d.width / (nx - 1)
    hz = d.height / (nz - 1)
    N = nx * nz
    idx = np.arange(N).reshape(nz, nx)
    x, z = nodes.x, nodes.z
    rows, cols, vals = [], [], []
    rhs = np.asarray(problem.forcing(x, z), dtype=float).copy()
    I = idx[1:-1, 1:-1].ravel()
    c0 = -2 / hx**2 - 2 / hz**2 + problem.sign * problem.k**2
    for off, w in ((0, c0), (1, 1 / hx**2), (-1, 1 / hx**2), (nx, 1 / hz**2), (-nx, 1 / hz**2)):
        rows.append(I)
        cols.append(I + off)
        vals.append(np.full(len(I), w))
    step = {"left": (1, hx), "right": (-1, hx), "bottom": (nx, hz), "top": (-nx, hz)}
    for i in nodes.boundary_indices:
        bc = problem.bc_for(nodes.labels[i])
        rhs[i] = np.real(bc.g(x[i : i + 1], z[i : i + 1])[0])
        if bc.kind == "dirichlet":
            rows.append([i])
            cols.append([i])
            vals.append([1.0])
            continue
        side = next(s for s in nodes.sides_of(i) if problem.bcs[s] is bc)
        off, h = step[side]
        rows.append([i, i, i])
        cols.append([i, i + off, i + 2 * off])
        w = np.array([3.0, -4.0, 1.0]) / (2 * h)
        w[0] += np.real(bc.coefficient) if bc.kind == "robin" else 0.0
        vals.append(w)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return A, rhs


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def dirichlet_laplacian_spectrum(nodes: NodeSet, kernel: KernelSpec, n: int, poly_degree: Optional[int] = None, check: bool = False):
    """Eigenvalues of the Laplacian differentiation matrix with Dirichlet rows eliminated.

    With homogeneous Dirichlet data the boundary unknowns drop out, leaving
    the interior-by-interior block of the assembled operator.
    """
    from .linalg import full_spectrum
    from .stencil import assemble_global

    st = nearest_neighbors(nodes, n)
    poly = None if poly_degree is None else PolyBasisSpec(poly_degree)
    bops = {s: DiffOperatorSpec.identity() for s in SIDES}
    A = assemble_global(nodes, st, kernel, DiffOperatorSpec.laplacian(), bops, poly=poly, check=check)
    I = nodes.interior_indices
    return full_spectrum(A.matrix[I][:, I])
