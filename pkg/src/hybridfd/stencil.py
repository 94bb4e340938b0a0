"""RBF-FD stencil weights and global sparse operator assembly.

Weights for the operator ``L`` at a center ``x_i`` with stencil nodes
``z_1..z_n`` solve ``K w = b`` with ``K[j, l] = phi(||z_j - z_l||)`` and
``b[j] = (L phi(||. - z_j||))(x_i)``; this is the single row
``K_L K^{-1}`` of the local differentiation matrix.  With polynomial
augmentation the system is bordered by monomials evaluated at the stencil
nodes and the weights additionally reproduce ``L p`` exactly.

Evaluation happens in local coordinates ``(z - x_i) / rho`` with ``rho``
the stencil radius; the kernel is rescaled so that the local and global
formulations are the same function, and each elementary piece of the
operator is unscaled by ``rho**order`` afterwards.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .kernels import (
    TERM_ORDER,
    DiffOperatorSpec,
    KernelSpec,
    PolyBasisSpec,
    elementary_kernel_values,
    monomial_terms,
    radial,
)
from .nodes import NodeSet, StencilMap

PIVOT_RTOL = 1e-14
_TERMS = ("id", "dx", "dz", "lap")


class ConditioningError(np.linalg.LinAlgError):
    """A local system is numerically singular."""

    def __init__(self, message, condition=np.inf, node=None):
        super().__init__(message)
        self.condition = condition
        self.node = node


class AugmentationError(ValueError):
    """Stencil too small for the requested polynomial degree."""


@dataclass
class StencilWeights:
    center: int
    neighbors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if len(self.neighbors) != len(self.weights):
            raise ValueError("weights and neighbours differ in length")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("non-finite stencil weights")


@dataclass
class LocalSystem:
    """The (optionally bordered) local interpolation system in local coordinates."""

    K: np.ndarray
    rhs: dict
    P: Optional[np.ndarray] = None
    rhs_poly: Optional[dict] = None
    rho: float = 1.0

    @property
    def matrix(self) -> np.ndarray:
        if self.P is None:
            return self.K
        q = self.P.shape[1]
        return np.block([[self.K, self.P], [self.P.T, np.zeros((q, q))]])


def _local_frame(center, pts):
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    center = np.asarray(center, dtype=float)
    Y = pts - center
    rho = float(np.max(np.hypot(Y[:, 0], Y[:, 1]))) if len(Y) else 0.0
    if rho == 0.0:
        rho = 1.0
    return Y / rho, rho


def _pairwise(Y):
    d = Y[..., :, None, :] - Y[..., None, :, :]
    return np.sqrt(np.sum(d * d, axis=-1))


def build_local_system(kernel: KernelSpec, terms, center, stencil, poly: Optional[PolyBasisSpec] = None) -> LocalSystem:
    Y, rho = _local_frame(center, stencil)
    ks = kernel.rescaled(rho)
    K = radial(ks, _pairwise(Y), 0)
    rhs = {t: elementary_kernel_values(ks, t, -Y[:, 0], -Y[:, 1]) for t in terms}
    if poly is None:
        return LocalSystem(K, rhs, rho=rho)
    P = monomial_terms(poly, "id", Y[:, 0], Y[:, 1])
    rhs_poly = {t: monomial_terms(poly, t, 0.0, 0.0)[0] for t in terms}
    return LocalSystem(K, rhs, P, rhs_poly, rho)


def _factor(A, check=True):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=False)
    if check:
        scale = np.linalg.norm(A, np.inf)
        if np.min(np.abs(np.diag(lu))) <= PIVOT_RTOL * scale:
            raise ConditioningError(
                f"local system numerically singular (condition ~ {np.linalg.cond(A):.3e})",
                condition=float(np.linalg.cond(A)),
            )
    return lu, piv


def _solve_terms(system: LocalSystem, terms, check=True):
    A = system.matrix
    n = system.K.shape[0]
    B = np.column_stack([system.rhs[t] if system.P is None else np.concatenate([system.rhs[t], system.rhs_poly[t]]) for t in terms])
    lu = _factor(A, check)
    X = sla.lu_solve(lu, B, check_finite=False)[:n]
    if not np.all(np.isfinite(X)):
        # reached only with check=False on an exactly singular system
        raise ConditioningError("local system is singular", condition=np.inf)
    return {t: X[:, j] / system.rho ** TERM_ORDER[t] for j, t in enumerate(terms)}


def _combine(op: DiffOperatorSpec, elem: dict):
    w = sum(c * elem[t] for t, c in op.terms().items())
    w = np.asarray(w)
    if np.iscomplexobj(w) and not np.any(w.imag):
        w = w.real.copy()
    return w


def local_weights(
    kernel: KernelSpec,
    op: DiffOperatorSpec,
    center,
    stencil,
    poly: Optional[PolyBasisSpec] = None,
    check: bool = True,
    center_index: int = -1,
    neighbors=None,
) -> StencilWeights:
    """RBF-FD weights of ``op`` at ``center`` for the stencil points ``stencil``.

    With ``poly`` given the weights come from the bordered saddle system and
    reproduce the operator exactly on every monomial up to ``poly.degree``.

    Raises
    ------
    ConditioningError
        If a pivot of the local factorization falls below ``1e-14 * ||A||``
        (skipped with ``check=False``).
    AugmentationError
        If ``len(stencil) < 2 * poly.size``.
    """
    stencil = np.asarray(stencil, dtype=float).reshape(-1, 2)
    if len(stencil) == 0:
        raise ValueError("empty stencil")
    if poly is not None and len(stencil) < 2 * poly.size:
        raise AugmentationError(
            f"stencil of {len(stencil)} nodes cannot support degree {poly.degree} (needs >= {2 * poly.size})"
        )
    terms = list(op.terms())
    system = build_local_system(kernel, terms, center, stencil, poly)
    elem = _solve_terms(system, terms, check)
    nb = np.arange(len(stencil)) if neighbors is None else np.asarray(neighbors)
    return StencilWeights(center_index, nb, _combine(op, elem))


def local_weights_augmented(kernel, op, poly, center, stencil, check=True) -> StencilWeights:
    return local_weights(kernel, op, center, stencil, poly=poly, check=check)


def local_condition_number(kernel: KernelSpec, stencil) -> float:
    """2-norm condition number of ``K_loc`` from its singular values."""
    stencil = np.asarray(stencil, dtype=float).reshape(-1, 2)
    K = radial(kernel, _pairwise(stencil), 0)
    return condition_from_singular_values(np.linalg.svd(K, compute_uv=False))


def condition_from_singular_values(s) -> float:
    s = np.asarray(s)
    if s.size == 0:
        return 1.0
    if s[-1] <= np.finfo(float).tiny:
        return np.inf
    return float(s[0] / s[-1])


def local_condition_numbers(kernel: KernelSpec, nodes: NodeSet, stencils: StencilMap) -> np.ndarray:
    """Condition number of every node's local interpolation matrix."""
    pts = nodes.coords[stencils.indices]
    # the kernel matrix is invariant under the local rescaling, up to a factor
    Y = pts - pts[:, :1, :]
    K = radial(kernel, _pairwise(Y), 0)
    s = np.linalg.svd(K, compute_uv=False)
    with np.errstate(divide="ignore"):
        c = np.where(s[:, -1] > np.finfo(float).tiny, s[:, 0] / s[:, -1], np.inf)
    return c


# ---------------------------------------------------------------------------
# global assembly
# ---------------------------------------------------------------------------

ROW_KINDS = ("pde", "dirichlet", "neumann", "robin")


@dataclass(eq=False)
class GlobalOperator:
    """Sparse CSR operator with one tagged row per node."""

    matrix: sp.csr_matrix
    row_kinds: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def __matmul__(self, u):
        return self.matrix @ u

    def rows_of(self, kind: str) -> np.ndarray:
        return np.flatnonzero(self.row_kinds == kind)

    def to_coo_text(self, path) -> None:
        """Write ``row col re im`` lines, one per stored entry."""
        A = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# shape {A.shape[0]} {A.shape[1]} nnz {A.nnz}\n# row col re im\n")
            data = A.data.astype(complex)
            for r, c, v in zip(A.row, A.col, data):
                fh.write(f"{r} {c} {v.real!r} {v.imag!r}\n")

    def sparsity_csv(self, path) -> None:
        A = self.matrix.tocoo()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col"])
            w.writerows(zip(A.row.tolist(), A.col.tolist()))


def resolve_boundary_op(label: str, boundary_ops: Mapping[str, DiffOperatorSpec]) -> DiffOperatorSpec:
    """Operator for a boundary label; corners prefer a Dirichlet side."""
    if label in boundary_ops:
        return boundary_ops[label]
    sides = label.split("+")
    missing = [s for s in sides if s not in boundary_ops]
    if missing:
        raise KeyError(f"no boundary operator for side(s) {missing}")
    ops = [boundary_ops[s] for s in sides]
    for o in ops:
        if o.kind == "identity":
            return o
    return ops[0]


def _row_kind(op: DiffOperatorSpec) -> str:
    return {"identity": "dirichlet", "directional": "neumann", "robin": "robin"}.get(op.kind, "pde")


def operator_rows(
    nodes: NodeSet,
    stencils: StencilMap,
    kernel: KernelSpec,
    rows,
    ops,
    poly: Optional[PolyBasisSpec] = None,
    check: bool = True,
) -> np.ndarray:
    """Weights for the listed node ``rows`` with per-row operators ``ops``.

    Returns an array of shape ``(len(rows), n)`` aligned with
    ``stencils.indices[rows]``.
    """
    rows = np.asarray(rows, dtype=int)
    n = stencils.n
    if poly is not None and n < 2 * poly.size:
        raise AugmentationError(f"stencil of {n} nodes cannot support degree {poly.degree} (needs >= {2 * poly.size})")
    out = np.zeros((len(rows), n), dtype=complex)
    if len(rows) == 0:
        return out
    idx = stencils.indices[rows]
    Y = nodes.coords[idx] - nodes.coords[rows][:, None, :]
    rho = np.max(np.hypot(Y[..., 0], Y[..., 1]), axis=1)
    rho[rho == 0] = 1.0
    Y = Y / rho[:, None, None]
    D = _pairwise(Y)
    needed = sorted({t for o in ops for t in o.terms()}, key=_TERMS.index)
    for g, i in enumerate(rows):
        ks = kernel.rescaled(rho[g])
        K = radial(ks, D[g], 0)
        cols = [elementary_kernel_values(ks, t, -Y[g, :, 0], -Y[g, :, 1]) for t in needed]
        if poly is not None:
            P = monomial_terms(poly, "id", Y[g, :, 0], Y[g, :, 1])
            q = P.shape[1]
            K = np.block([[K, P], [P.T, np.zeros((q, q))]])
            cols = [np.concatenate([c, monomial_terms(poly, t, 0.0, 0.0)[0]]) for c, t in zip(cols, needed)]
        try:
            lu = _factor(K, check)
        except ConditioningError as exc:
            exc.node = int(i)
            exc.args = (f"node {i}: {exc.args[0]}",)
            raise
        X = sla.lu_solve(lu, np.column_stack(cols), check_finite=False)[:n]
        elem = {t: X[:, j] / rho[g] ** TERM_ORDER[t] for j, t in enumerate(needed)}
        for t, c in ops[g].terms().items():
            out[g] += c * elem[t]
    return out


def assemble_global(
    nodes: NodeSet,
    stencils: StencilMap,
    kernel: KernelSpec,
    interior_op: DiffOperatorSpec,
    boundary_ops: Optional[Mapping[str, DiffOperatorSpec]] = None,
    poly: Optional[PolyBasisSpec] = None,
    check: bool = True,
) -> GlobalOperator:
    """Assemble one row per node into a sparse ``N x N`` operator.

    Interior nodes take ``interior_op``; boundary nodes the operator of their
    label (``boundary_ops=None`` treats every node with ``interior_op``).
    Dirichlet rows are identity rows.  Operators whose normal is unset pick up
    each node's outward normal.
    """
    row_ops = []
    for i in range(nodes.N):
        lab = nodes.labels[i]
        if lab and boundary_ops is not None:
            row_ops.append(resolve_boundary_op(lab, boundary_ops))
        else:
            row_ops.append(interior_op)
    return assemble_rows(nodes, stencils, kernel, row_ops, poly, check, boundary_rows=boundary_ops is not None)


def assemble_rows(
    nodes: NodeSet,
    stencils: StencilMap,
    kernel: KernelSpec,
    row_ops: Sequence[DiffOperatorSpec],
    poly: Optional[PolyBasisSpec] = None,
    check: bool = True,
    boundary_rows: bool = True,
) -> GlobalOperator:
    """Assemble from an explicit operator per node.

    When ``boundary_rows`` is set, identity operators on boundary nodes become
    Dirichlet rows and directional/robin operators are tagged accordingly.
    """
    N = nodes.N
    if len(stencils) != N or len(row_ops) != N:
        raise ValueError("stencil map / operator list does not match the node set")
    kinds = np.empty(N, dtype=object)
    ops = list(row_ops)
    is_b = nodes.is_boundary
    for i, op in enumerate(ops):
        if op.needs_normal:
            if not is_b[i]:
                raise ValueError(f"node {i}: normal-dependent operator on an interior node")
            op = ops[i] = op.with_normal(nodes.normals[i])
        kinds[i] = _row_kind(op) if (boundary_rows and is_b[i]) else "pde"

    fd_rows = np.flatnonzero(kinds != "dirichlet")
    W = operator_rows(nodes, stencils, kernel, fd_rows, [ops[i] for i in fd_rows], poly, check)

    n = stencils.n
    counts = np.where(kinds == "dirichlet", 1, n)
    indptr = np.zeros(N + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(counts)
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.empty(indptr[-1], dtype=complex)
    pos = np.full(N, -1)
    pos[fd_rows] = np.arange(len(fd_rows))
    for i in range(N):
        a, b = indptr[i], indptr[i + 1]
        if kinds[i] == "dirichlet":
            indices[a] = i
            data[a] = 1.0
        else:
            cols = stencils.indices[i]
            order = np.argsort(cols, kind="stable")
            indices[a:b] = cols[order]
            data[a:b] = W[pos[i]][order]
    if not np.any(data.imag):
        data = data.real.copy()
    A = sp.csr_matrix((data, indices, indptr), shape=(N, N))
    meta = {"kernel": kernel.to_dict(), "n": n, "poly_degree": None if poly is None else poly.degree}
    return GlobalOperator(A, kinds.astype(str), meta)
