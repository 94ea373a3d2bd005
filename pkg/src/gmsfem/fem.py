"""Bilinear (Q1) finite elements on rectangular cells.

Element matrices are exact for cellwise constant kappa.  Local corner order
is (SW, SE, NE, NW).  Matrices are ``scipy.sparse.csr_matrix``; nodal
functions are 1-D float arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import CellBlock, FineGrid

_KX = np.array([[2, -2, -1, 1], [-2, 2, 1, -1], [-1, 1, 2, -2], [1, -1, -2, 2]], dtype=float)
_KY = np.array([[2, 1, -1, -2], [1, 2, -2, -1], [-1, -2, 2, 1], [-2, -1, 1, 2]], dtype=float)
_M = np.array([[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]], dtype=float)

_GAUSS = 0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)


class SolverError(RuntimeError):
    pass


def element_stiffness(hx: float, hy: float) -> np.ndarray:
    return (hy / (6.0 * hx)) * _KX + (hx / (6.0 * hy)) * _KY


def element_mass(hx: float, hy: float) -> np.ndarray:
    return (hx * hy / 36.0) * _M


def _cell_corners(ncx: int, ncy: int) -> np.ndarray:
    """(n_cells, 4) local node indices of a ncx x ncy cell block, row-major."""
    cy, cx = np.divmod(np.arange(ncx * ncy), ncx)
    sw = cy * (ncx + 1) + cx
    return np.column_stack([sw, sw + 1, sw + ncx + 2, sw + ncx + 1])


def _assemble(ncx, ncy, kappa, elem) -> sp.csr_matrix:
    corners = _cell_corners(ncx, ncy)
    k = np.asarray(kappa, dtype=float).ravel()
    rows = np.repeat(corners, 4, axis=1).ravel()
    cols = np.tile(corners, (1, 4)).ravel()
    data = (k[:, None] * elem.ravel()[None, :]).ravel()
    n = (ncx + 1) * (ncy + 1)
    A = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _check(fine: FineGrid, kappa) -> None:
    kappa.check_grid(fine)


def assemble_stiffness(fine: FineGrid, kappa) -> sp.csr_matrix:
    _check(fine, kappa)
    return _assemble(fine.nx, fine.ny, kappa.values, element_stiffness(fine.hx, fine.hy))


def assemble_weighted_mass(fine: FineGrid, kappa) -> sp.csr_matrix:
    _check(fine, kappa)
    return _assemble(fine.nx, fine.ny, kappa.values, element_mass(fine.hx, fine.hy))


def assemble_block(fine: FineGrid, kappa, block: CellBlock) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Stiffness and weighted mass using only the cells of ``block``.

    Rows follow ``fine.block_nodes(block)``.  This is the natural (Neumann)
    local form: nodes on the block boundary see no outside cells.
    """
    _check(fine, kappa)
    kb = kappa.block(block)
    A = _assemble(block.ncx, block.ncy, kb, element_stiffness(fine.hx, fine.hy))
    M = _assemble(block.ncx, block.ncy, kb, element_mass(fine.hx, fine.hy))
    return A, M


def assemble_load(fine: FineGrid, f) -> np.ndarray:
    """Load vector for ``f`` given as a callable ``f(x, y)`` or cell values ``(ny, nx)``.

    Callables are integrated with 2x2 Gauss quadrature per cell.
    """
    corners = _cell_corners(fine.nx, fine.ny)
    hx, hy = fine.hx, fine.hy
    area = hx * hy
    if callable(f):
        cy, cx = np.divmod(np.arange(fine.n_cells), fine.nx)
        contrib = np.zeros((fine.n_cells, 4))
        for gy in _GAUSS:
            for gx in _GAUSS:
                fx = np.asarray(f((cx + gx) * hx, (cy + gy) * hy), dtype=float)
                fx = np.broadcast_to(fx, cx.shape)
                shape = np.array([(1 - gx) * (1 - gy), gx * (1 - gy), gx * gy, (1 - gx) * gy])
                contrib += 0.25 * area * fx[:, None] * shape[None, :]
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape != (fine.ny, fine.nx):
            raise ValueError(f"cell load has shape {vals.shape}, expected {(fine.ny, fine.nx)}")
        contrib = np.repeat(0.25 * area * vals.reshape(-1, 1), 4, axis=1)
    b = np.zeros(fine.n_nodes)
    np.add.at(b, corners.ravel(), contrib.ravel())
    return b


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """System with constrained rows replaced by identity rows."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained: np.ndarray

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.matrix.shape[0], dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)


def apply_homogeneous_dirichlet(A: sp.spmatrix, b: np.ndarray, constrained) -> LinearSystem:
    n = A.shape[0]
    constrained = np.unique(np.asarray(constrained, dtype=np.int64))
    if constrained.size and (constrained[0] < 0 or constrained[-1] >= n):
        raise IndexError("constrained index out of range")
    if constrained.size == n:
        raise ValueError("empty system: every degree of freedom is constrained")
    keep = np.ones(n)
    keep[constrained] = 0.0
    D = sp.diags(keep)
    fix = np.zeros(n)
    fix[constrained] = 1.0
    Ad = (D @ A @ D + sp.diags(fix)).tocsr()
    Ad.eliminate_zeros()
    Ad.sort_indices()
    bd = np.asarray(b, dtype=float) * keep
    return LinearSystem(Ad, bd, constrained)


def _pcg(A, b, rel_tol, maxiter):
    """Jacobi-preconditioned CG, raising on breakdown."""
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("matrix has a non-positive diagonal entry; not SPD")
    x = np.zeros_like(b)
    r = b.copy()
    z = r / d
    p = z.copy()
    rz = r @ z
    bnorm = np.linalg.norm(b)
    for it in range(maxiter):
        if np.linalg.norm(r) <= rel_tol * bnorm:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError(f"CG breakdown at iteration {it}: p'Ap = {pAp:.3e}, matrix not SPD")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = r / d
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG did not converge in {maxiter} iterations: "
        f"relative residual {np.linalg.norm(r) / bnorm:.3e} > {rel_tol:.1e}"
    )


def solve_spd(system: LinearSystem, rel_tol: float = 1e-12, method: str = "direct",
              maxiter: int | None = None) -> np.ndarray:
    """Solve the eliminated system; ``||b - A u|| <= rel_tol ||b||`` is checked on return."""
    A, b = system.matrix, system.rhs
    u = np.zeros(A.shape[0])
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return u
    free = system.free
    Af = A[free][:, free].tocsc()
    bf = b[free]
    if method == "direct":
        try:
            lu = spla.splu(Af)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
        xf = lu.solve(bf)
        for _ in range(3):
            res = bf - Af @ xf
            if np.linalg.norm(res) <= rel_tol * bnorm:
                break
            xf += lu.solve(res)
    elif method == "cg":
        xf = _pcg(Af.tocsr(), bf, rel_tol, maxiter or 20 * Af.shape[0])
    else:
        raise ValueError(f"unknown method {method!r}")
    u[free] = xf
    relres = np.linalg.norm(b - A @ u) / bnorm
    if not relres <= rel_tol:
        raise SolverError(f"{method} solve reached relative residual {relres:.3e} > {rel_tol:.1e}")
    return u


def restrict(A: sp.spmatrix, idx) -> sp.csr_matrix:
    idx = _check_index(idx, A.shape[0])
    return A.tocsr()[idx][:, idx].tocsr()


def restrict_vec(v: np.ndarray, idx) -> np.ndarray:
    return np.asarray(v)[_check_index(idx, len(v))]


def _check_index(idx, n):
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"index set out of range for dimension {n}")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("index set must be sorted and unique")
    return idx


def quad_form(A: sp.spmatrix, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    if A.shape[0] != v.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape[0]}, vector {v.shape[0]}")
    return float(v @ (A @ v))


def energy_norm(A, v) -> float:
    return float(np.sqrt(max(quad_form(A, v), 0.0)))


def prolongate(fine: FineGrid, factor: int) -> sp.csr_matrix:
    """Bilinear interpolation from ``fine`` onto the grid refined ``factor`` times."""
    def one_axis(n):
        m = n * factor
        t = np.arange(m + 1) / factor
        lo = np.minimum(np.floor(t).astype(int), n - 1)
        w = t - lo
        rows = np.concatenate([np.arange(m + 1)] * 2)
        cols = np.concatenate([lo, lo + 1])
        data = np.concatenate([1 - w, w])
        P = sp.coo_matrix((data, (rows, cols)), shape=(m + 1, n + 1)).tocsr()
        P.eliminate_zeros()
        return P
    return sp.kron(one_axis(fine.ny), one_axis(fine.nx), format="csr")
