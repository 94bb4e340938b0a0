"""Dense and sparse direct solves plus spectral diagnostics.

Sparse storage is ``scipy.sparse.csr_matrix``; the sparse factorization is
SuperLU with a COLAMD fill-reducing column ordering.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_SOLVE_CAP = 10_000
SPECTRUM_CAP = 3000
CONDITION_CAP = 2000
RESIDUAL_WARN = 1e-6


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SolverResidualWarning(RuntimeWarning):
    pass


def _as_matrix(A):
    return A.matrix if hasattr(A, "row_kinds") else A


def dense_solve(A, B):
    """Solve ``A X = B`` by LU with partial pivoting."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("dense_solve needs a square matrix")
    if A.shape[0] > DENSE_SOLVE_CAP:
        raise ValueError(f"dense solve capped at {DENSE_SOLVE_CAP} unknowns")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    d = np.abs(np.diag(lu))
    if np.any(d == 0):
        k = int(np.flatnonzero(d == 0)[0])
        raise SingularMatrixError(f"zero pivot at position {k}", pivot=k)
    return sla.lu_solve((lu, piv), B)


@dataclass
class SolveResult:
    x: np.ndarray
    relative_residual: float
    factor_time: float
    solve_time: float
    meta: dict = field(default_factory=dict)

    @property
    def residual_warning(self) -> bool:
        return self.relative_residual > RESIDUAL_WARN


def sparse_factorize(A):
    """SuperLU factorization; raises :class:`SingularMatrixError` when singular."""
    A = sp.csc_matrix(_as_matrix(A))
    if A.shape[0] != A.shape[1]:
        raise ValueError("sparse_direct_solve needs a square matrix")
    try:
        return spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrixError(f"sparse factorization failed: {exc}") from exc


def sparse_direct_solve(A, b) -> SolveResult:
    """Direct sparse solve of ``A x = b`` with residual bookkeeping.

    A relative residual above ``1e-6`` sets ``meta['residual_warning']`` and
    emits :class:`SolverResidualWarning`; the solution is still returned.
    """
    M = _as_matrix(A)
    b = np.asarray(b)
    dtype = np.result_type(M.dtype, b.dtype)
    t0 = time.perf_counter()
    lu = sparse_factorize(sp.csc_matrix(M, dtype=dtype))
    t1 = time.perf_counter()
    x = lu.solve(b.astype(dtype, copy=False))
    t2 = time.perf_counter()
    nb = np.linalg.norm(b)
    res = float(np.linalg.norm(M @ x - b) / nb) if nb > 0 else float(np.linalg.norm(M @ x))
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("sparse solve produced non-finite values")
    meta = {"residual_warning": res > RESIDUAL_WARN, "ordering": "COLAMD"}
    if meta["residual_warning"]:
        warnings.warn(f"relative residual {res:.2e} above {RESIDUAL_WARN}", SolverResidualWarning, stacklevel=2)
    return SolveResult(x, res, t1 - t0, t2 - t1, meta)


def full_spectrum(A, return_vectors: bool = False):
    """All eigenvalues of the densified matrix (optionally with eigenvectors)."""
    M = _as_matrix(A)
    if sp.issparse(M):
        M = M.toarray()
    M = np.asarray(M)
    if M.shape[0] > SPECTRUM_CAP:
        raise ValueError(f"dense eigensolve capped at N={SPECTRUM_CAP}; sub-sample the node set")
    if return_vectors:
        return np.linalg.eig(M)
    return np.linalg.eigvals(M)


def condition_2norm(A) -> float:
    """``sigma_max / sigma_min``; ``inf`` when ``sigma_min`` underflows."""
    M = _as_matrix(A)
    if sp.issparse(M):
        M = M.toarray()
    M = np.asarray(M)
    if max(M.shape) > CONDITION_CAP:
        raise ValueError(f"SVD condition number capped at size {CONDITION_CAP}")
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0:
        return 1.0
    if s[-1] <= np.finfo(float).tiny:
        return np.inf
    return float(s[0] / s[-1])


def write_eigenvalues_csv(path, eigenvalues) -> None:
    lam = np.asarray(eigenvalues, dtype=complex)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im"])
        for v in lam:
            w.writerow([repr(float(v.real)), repr(float(v.imag))])
