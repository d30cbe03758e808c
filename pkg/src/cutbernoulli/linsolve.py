"""Sparse linear algebra: assembly container, SPD and nonsymmetric solves,
condition-number estimates and a coordinate-format dump for debugging."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, NoConvergence


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def symmetry_defect(self) -> float:
        """max |A - A^T| relative to max |A|."""
        d = abs(self.matrix - self.matrix.T)
        amax = abs(self.matrix).max()
        return float(d.max() / amax) if amax > 0 else 0.0


def assemble(rows, cols, vals, n: int) -> sp.csr_matrix:
    """Sum duplicate triplets into a finalized CSR matrix without explicit zeros."""
    A = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return A


def finalize(matrix, rhs=None) -> SparseSystem:
    A = sp.csr_matrix(matrix)
    A.sum_duplicates()
    A.eliminate_zeros()
    return SparseSystem(A, None if rhs is None else np.asarray(rhs, dtype=float))


def eliminate(matrix: sp.spmatrix, keep: np.ndarray, rhs: np.ndarray | None = None):
    """Replace rows and columns of dofs with ``keep == False`` by identity rows.

    The right-hand side is zeroed there, so those unknowns solve to 0 and the
    matrix stays symmetric positive definite.
    """
    keep = np.asarray(keep, dtype=bool)
    D = sp.diags(keep.astype(float))
    A = (D @ matrix @ D + sp.diags((~keep).astype(float))).tocsr()
    A.eliminate_zeros()
    if rhs is None:
        return A
    b = np.where(keep, rhs, 0.0)
    return A, b


def _as_system(system, rhs):
    if isinstance(system, SparseSystem):
        A = system.matrix
        b = system.rhs if rhs is None else rhs
    else:
        A, b = sp.csr_matrix(system), rhs
    if b is None:
        raise InvalidArgument("no right-hand side given")
    return A, np.asarray(b, dtype=float)


def solve_spd(system, rhs=None, tol: float = 1e-10, max_iter: int | None = None,
              x0: np.ndarray | None = None, return_history: bool = False):
    """Jacobi-preconditioned conjugate gradients.

    Stops when ||A x - b|| <= tol ||b||. Raises :class:`NoConvergence` on
    breakdown or when ``max_iter`` (default 20 * dimension) is exceeded.
    """
    A, b = _as_system(system, rhs)
    n = A.shape[0]
    max_iter = 20 * n if max_iter is None else max_iter
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise NoConvergence("matrix has a non-positive diagonal entry; not SPD")
    minv = 1.0 / diag
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    history = []
    if bnorm == 0.0:
        x[:] = 0.0
        return (x, history) if return_history else x
    r = b - A @ x
    z = minv * r
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        res = np.linalg.norm(r) / bnorm
        history.append(res)
        if res <= tol:
            return (x, history) if return_history else x
        Ap = A @ p
        pAp = p @ Ap
        if not pAp > 0:
            raise NoConvergence("CG breakdown (p^T A p <= 0)", history)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = minv * r
        rz_new = r @ z
        p *= rz_new / rz
        p += z
        rz = rz_new
    res = np.linalg.norm(b - A @ x) / bnorm
    history.append(res)
    if res <= tol:
        return (x, history) if return_history else x
    raise NoConvergence(f"CG did not converge in {max_iter} iterations (residual {res:.3e})", history)


def solve_general(matrix, rhs, tol: float = 1e-10, max_iter: int | None = None,
                  x0: np.ndarray | None = None) -> np.ndarray:
    """BiCGSTAB with diagonal preconditioning for nonsymmetric systems."""
    A = sp.csr_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    n = A.shape[0]
    if np.linalg.norm(b) == 0.0:
        return np.zeros(n)
    d = A.diagonal()
    if np.any(d == 0):
        raise NoConvergence("zero diagonal entry; Jacobi preconditioner undefined")
    M = sp.diags(1.0 / d)
    history = []

    def record(xk):
        history.append(float(np.linalg.norm(b - A @ xk) / np.linalg.norm(b)))

    x, info = spla.bicgstab(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=max_iter or 20 * n, M=M,
                            callback=record)
    if info != 0:
        raise NoConvergence(f"BiCGSTAB failed (info={info})", history)
    return x


@dataclass(frozen=True)
class ConditionEstimate:
    kappa: float
    lambda_max: float
    lambda_min: float
    converged: bool


def condition_estimate(system, dofs: np.ndarray | None = None, rtol: float = 1e-8,
                       max_iter: int = 5000) -> ConditionEstimate:
    """Spectral condition number of a symmetric matrix from its extreme eigenvalues.

    ``dofs`` restricts the estimate to a subset of unknowns (e.g. the active
    degrees of freedom, excluding identity-eliminated rows). The largest
    eigenvalue comes from Lanczos, the smallest from shift-invert Lanczos
    around zero, so nearly singular matrices are handled.
    """
    A = system.matrix if isinstance(system, SparseSystem) else sp.csr_matrix(system)
    if dofs is not None:
        dofs = np.asarray(dofs)
        if dofs.dtype == bool:
            dofs = np.flatnonzero(dofs)
        A = A[dofs][:, dofs]
    A = sp.csc_matrix(A)
    n = A.shape[0]
    if n <= 50:
        ev = np.linalg.eigvalsh(A.toarray())
        lmin, lmax, ok = float(ev[0]), float(ev[-1]), True
    else:
        # deterministic, non-degenerate start vector
        v0 = 1.0 + 0.5 * np.sin(np.arange(1, n + 1) * 1.2345)
        ok = True
        try:
            lmax = float(spla.eigsh(A, 1, which="LA", v0=v0, tol=rtol, maxiter=max_iter,
                                    return_eigenvectors=False)[0])
        except spla.ArpackNoConvergence as exc:
            lmax, ok = float(np.max(exc.eigenvalues)), False
        try:
            lmin = float(spla.eigsh(A, 1, sigma=0.0, which="LM", v0=v0, tol=rtol, maxiter=max_iter,
                                    return_eigenvectors=False)[0])
        except spla.ArpackNoConvergence as exc:
            lmin, ok = float(np.min(exc.eigenvalues)), False
    kappa = lmax / lmin if lmin > 0 else np.inf
    return ConditionEstimate(float(kappa), lmax, lmin, ok)


def write_coordinate(matrix, path) -> None:
    """Write "row col value" lines (0-based), one per stored entry."""
    A = sp.coo_matrix(matrix)
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        fh.write(f"# {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row[order], A.col[order], A.data[order]):
            fh.write(f"{i} {j} {float(v)!r}\n")


def read_coordinate(path) -> sp.csr_matrix:
    lines = Path(path).read_text().splitlines()
    nr, nc, _ = (int(t) for t in lines[0].lstrip("#").split())
    data = np.array([ln.split() for ln in lines[1:]], dtype=float).reshape(-1, 3)
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(nr, nc)).tocsr()
