"""Smallest eigenpairs of symmetric pencils ``A v = lam M v`` with ``M`` SPD.

Small pencils are solved densely after a Cholesky reduction of ``M``; larger
ones by shift-invert subspace iteration with Rayleigh-Ritz.  Vectors are
M-orthonormal and sign-normalized so the largest-magnitude entry is positive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_CAP = 4096
# above this size partial spectra use subspace iteration
DENSE_CUTOFF = 1500
RES_TOL = 1e-8
ORTH_TOL = 1e-10
_EPS = np.finfo(float).eps


class EigenError(RuntimeError):
    pass


@dataclass(eq=False)
class EigenPairSet:
    """Ascending eigenvalues with M-orthonormal eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray
    M: Any
    A: Any = None
    region: tuple = ("global",)
    index: np.ndarray | None = None
    complete: bool = False
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def truncated(self, count: int) -> "EigenPairSet":
        if count > len(self):
            raise EigenError(f"{self.region}: requested {count} pairs, only {len(self)} computed")
        return EigenPairSet(self.values[:count], self.vectors[:, :count], self.M, self.A,
                            self.region, self.index, self.complete and count == self.dim,
                            dict(self.info))


def _dense(X):
    return X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)


def residual_bounds(A, M, values, vectors, rtol=RES_TOL, _abs=None):
    """Per-pair residual norms and their admissible bounds.

    The bound is ``rtol (||Av|| + |lam| ||Mv||)`` plus the floating-point
    error bound of evaluating ``Av`` and ``Mv`` (max row length times
    ``eps`` times ``|| |A||v| ||`` and likewise for M), below which a residual
    cannot be resolved.
    """
    AV = A @ vectors
    MV = M @ vectors
    R = AV - MV * values[None, :]
    absA, absM, nrow = _abs or _abs_parts(A, M)
    Vabs = np.abs(vectors)
    floor = 2 * nrow * _EPS * (np.linalg.norm(absA @ Vabs, axis=0)
                               + np.abs(values) * np.linalg.norm(absM @ Vabs, axis=0))
    res = np.linalg.norm(R, axis=0)
    rel = rtol * (np.linalg.norm(AV, axis=0) + np.abs(values) * np.linalg.norm(MV, axis=0))
    return res, rel, floor


def _abs_parts(A, M):
    absA = abs(A) if sp.issparse(A) else np.abs(A)
    absM = abs(M) if sp.issparse(M) else np.abs(M)
    return absA, absM, max(_max_row_nnz(A), _max_row_nnz(M))


def _max_row_nnz(X):
    if sp.issparse(X):
        X = X.tocsr()
        return int(np.diff(X.indptr).max()) if X.shape[0] else 0
    return X.shape[1]


def orthonormality_error(M, vectors) -> float:
    G = vectors.T @ (M @ vectors)
    return float(np.abs(G - np.eye(G.shape[0])).max()) if G.size else 0.0


def _normalize(values, V):
    """Sign-fix columns, then order degenerate clusters lexicographically."""
    V = np.array(V, dtype=float, copy=True)
    for j in range(V.shape[1]):
        k = int(np.argmax(np.abs(V[:, j])))
        if V[k, j] < 0:
            V[:, j] = -V[:, j]
    order = np.argsort(values, kind="stable")
    values, V = values[order], V[:, order]
    scale = max(np.abs(values).max(initial=0.0), 1.0)
    j = 0
    while j < len(values):
        k = j + 1
        while k < len(values) and values[k] - values[j] <= 1e-12 * scale:
            k += 1
        if k - j > 1:
            block = V[:, j:k]
            sub = np.lexsort(np.round(block, 12)[::-1])
            # values stay ascending; they agree to rounding inside the cluster
            V[:, j:k] = block[:, sub]
        j = k
    return values, V


def _dense_eig(A, M, count):
    Ad, Md = _dense(A), _dense(M)
    try:
        if count < Ad.shape[0]:
            vals, V = sla.eigh(Ad, Md, subset_by_index=[0, count - 1], driver="gvx")
        else:
            vals, V = sla.eigh(Ad, Md, driver="gv")
    except np.linalg.LinAlgError as exc:
        raise EigenError(f"mass matrix is not positive definite: {exc}") from exc
    return vals, V


def _subspace_iteration(A, M, count, rtol, maxiter, block=None, seed=0):
    n = A.shape[0]
    A = sp.csr_matrix(A)
    M = sp.csr_matrix(M)
    dA, dM = A.diagonal(), M.diagonal()
    if np.any(dM <= 0):
        raise EigenError("mass matrix is not positive definite (non-positive diagonal)")
    shift = -1e-6 * float(np.min(np.maximum(dA, _EPS) / dM))
    try:
        lu = spla.splu((A - shift * M).tocsc())
    except RuntimeError as exc:
        raise EigenError(f"shifted factorization failed: {exc}") from exc
    p = min(n, block or max(2 * count, count + 10))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    parts = _abs_parts(A, M)
    for it in range(1, maxiter + 1):
        Y = lu.solve(M @ X)
        Q, _ = np.linalg.qr(Y)
        Ar = Q.T @ (A @ Q)
        Mr = Q.T @ (M @ Q)
        Ar = 0.5 * (Ar + Ar.T)
        Mr = 0.5 * (Mr + Mr.T)
        try:
            theta, S = sla.eigh(Ar, Mr)
        except np.linalg.LinAlgError as exc:
            raise EigenError(f"Rayleigh-Ritz failed at iteration {it}: {exc}") from exc
        X = Q @ S
        if it % 5 and it < maxiter:
            continue
        vals, V = theta[:count], X[:, :count]
        res, rel, floor = residual_bounds(A, M, vals, V, rtol, parts)
        if np.all(res <= 0.1 * (rel + floor)):
            return vals, V, it
    worst = float(np.max(res / (rel + floor)))
    raise EigenError(
        f"subspace iteration did not converge in {maxiter} iterations "
        f"(worst residual/bound = {worst:.2e})"
    )


def _m_orthonormalize(M, V):
    G = V.T @ (M @ V)
    L = np.linalg.cholesky(0.5 * (G + G.T))
    return sla.solve_triangular(L, V.T, lower=True).T


def generalized_sym_eig(A, M, count: int, *, region=("global",), index=None,
                        dense_cap: int = DENSE_CUTOFF, rtol: float = RES_TOL,
                        maxiter: int = 1000, method: str = "auto", seed: int = 0) -> EigenPairSet:
    """The ``count`` smallest eigenpairs of ``A v = lam M v``."""
    n = A.shape[0]
    if M.shape != A.shape:
        raise EigenError(f"{region}: pencil shapes differ {A.shape} vs {M.shape}")
    if count < 1 or count > n:
        raise EigenError(f"{region}: count {count} must lie in [1, {n}]")
    if method == "auto":
        method = "dense" if n <= dense_cap or 4 * count >= n else "iterative"
    info = {"method": method}
    if method == "dense":
        vals, V = _dense_eig(A, M, count)
    elif method == "iterative":
        vals, V, it = _subspace_iteration(A, M, count, rtol, maxiter, seed=seed)
        info["iterations"] = it
    else:
        raise ValueError(f"unknown method {method!r}")
    V = _m_orthonormalize(M, V)
    vals, V = _normalize(np.asarray(vals, dtype=float), V)
    return EigenPairSet(vals, V, M, A, region, index, count == n, info)


def full_dense_eig(A, M, *, cap: int = DENSE_CAP, region=("global",), index=None) -> EigenPairSet:
    n = A.shape[0]
    if n > cap:
        raise EigenError(f"{region}: dimension {n} exceeds dense cap {cap}")
    return generalized_sym_eig(A, M, n, region=region, index=index, dense_cap=cap, method="dense")
