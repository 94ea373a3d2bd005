"""Partition of unity, local spectral bases and the coarse GMsFEM space."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .eigsolver import EigenError, EigenPairSet, generalized_sym_eig
from .fem import assemble_block, restrict
from .mesh import CoarseGrid, FineGrid, element_interior_fine_nodes, patch_fine_nodes

RANK_TOL = 1e-10
COARSE_DENSE_CAP = 8000  # dense coarse eigendecomposition; ~0.5 GB per copy at the cap


class CoarseSpaceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Bilinear coarse hats; ``support[i]`` / ``values[i]`` on the closure of omega_i."""

    coarse: CoarseGrid
    support: tuple
    values: tuple

    def dense(self, i: int) -> np.ndarray:
        out = np.zeros(self.coarse.fine.n_nodes)
        out[self.support[i]] = self.values[i]
        return out


def build_partition_of_unity(fine: FineGrid, coarse: CoarseGrid) -> PartitionOfUnity:
    x, y = fine.coords
    support, values = [], []
    for i in range(coarse.n_nodes):
        nodes = patch_fine_nodes(coarse, i).nodes
        xi, yi = coarse.node_coords[i]
        wx = np.clip(1.0 - np.abs(x[nodes] - xi) / coarse.H, 0.0, 1.0)
        wy = np.clip(1.0 - np.abs(y[nodes] - yi) / coarse.Hy, 0.0, 1.0)
        support.append(nodes)
        values.append(wx * wy)
    return PartitionOfUnity(coarse, tuple(support), tuple(values))


def neumann_patch_basis(fine: FineGrid, coarse: CoarseGrid, kappa, i: int, count: int,
                        **eig_kw) -> EigenPairSet:
    """Local eigenpairs on omega_i: natural condition inside the domain, zero on its boundary.

    The pencil is assembled from the patch cells only; ``index`` holds the
    global fine nodes of the unknowns.
    """
    patch = patch_fine_nodes(coarse, i)
    A, M = assemble_block(fine, kappa, patch.block)
    keep = np.flatnonzero(~patch.domain_boundary)
    A, M = restrict(A, keep), restrict(M, keep)
    count = _check_count(count, len(keep), ("patch", i))
    try:
        eps = generalized_sym_eig(A, M, count, region=("patch", i), index=patch.nodes[keep],
                                  **eig_kw)
    except EigenError as exc:
        raise EigenError(f"patch {i}: {exc}") from exc
    eps.info["floating"] = patch.floating
    return eps


def dirichlet_element_basis(fine: FineGrid, coarse: CoarseGrid, kappa, K: int, count: int,
                            A=None, M=None, **eig_kw) -> EigenPairSet:
    """Local eigenpairs on element K with zero boundary values.

    Uses principal submatrices of the global ``A``, ``M`` over the interior
    fine nodes of K (assembled here if not given).
    """
    idx = element_interior_fine_nodes(coarse, K)
    if idx.size == 0:
        raise CoarseSpaceError(f"element {K} has no interior fine nodes (refine the fine grid)")
    if A is None or M is None:
        AK, MK = assemble_block(fine, kappa, coarse.element_block(K))
        local = np.flatnonzero(np.isin(fine.block_nodes(coarse.element_block(K)), idx))
        AK, MK = restrict(AK, local), restrict(MK, local)
    else:
        AK, MK = restrict(A, idx), restrict(M, idx)
    count = _check_count(count, idx.size, ("element", K))
    try:
        return generalized_sym_eig(AK, MK, count, region=("element", K), index=idx, **eig_kw)
    except EigenError as exc:
        raise EigenError(f"element {K}: {exc}") from exc


def _check_count(count, dim, region):
    if count > dim:
        raise CoarseSpaceError(f"{region}: requested {count} pairs but dimension is {dim}")
    return count


@dataclass(eq=False)
class LocalSpectralBasis:
    neumann: list
    dirichlet: list

    def spectra(self):
        return ([e.values for e in self.neumann], [e.values for e in self.dirichlet])


def build_local_bases(fine, coarse, kappa, n_neumann: int, n_dirichlet: int, *, A=None, M=None,
                      workers: int = 1, spare: int = 1, **eig_kw) -> LocalSpectralBasis:
    """Compute ``n + spare`` pairs per region (clipped to the region dimension).

    The spare pair supplies the smallest left-out eigenvalue.  Results are
    ordered by region index regardless of ``workers``.
    """
    def neu(i):
        dim = int((~patch_fine_nodes(coarse, i).domain_boundary).sum())
        return neumann_patch_basis(fine, coarse, kappa, i, min(n_neumann + spare, dim), **eig_kw)

    def dir_(K):
        dim = element_interior_fine_nodes(coarse, K).size
        return dirichlet_element_basis(fine, coarse, kappa, K, min(max(n_dirichlet + spare, 1), dim),
                                       A=A, M=M, **eig_kw)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            neumann = list(pool.map(neu, range(coarse.n_nodes)))
            dirichlet = list(pool.map(dir_, range(coarse.n_elements)))
    else:
        neumann = [neu(i) for i in range(coarse.n_nodes)]
        dirichlet = [dir_(K) for K in range(coarse.n_elements)]
    return LocalSpectralBasis(neumann, dirichlet)


def _per_region(counts, n, name):
    if np.isscalar(counts):
        return [int(counts)] * n
    counts = [int(c) for c in counts]
    if len(counts) != n:
        raise CoarseSpaceError(f"{name}: expected {n} counts, got {len(counts)}")
    return counts


@dataclass(eq=False)
class CoarseSpace:
    """Rows of ``R`` are coarse basis functions as fine nodal vectors.

    ``labels[r] = (kind, region, ell)`` with kind ``"N"`` (chi_i psi_ell) or
    ``"D"`` (element eigenvector), ``ell`` starting at 1.
    """

    R: sp.csr_matrix
    labels: list
    rank: int | None = None

    @property
    def dim(self) -> int:
        return self.R.shape[0]

    def select(self, L_i, L_K) -> "CoarseSpace":
        rows = _rows_for(self.labels, L_i, L_K)
        return CoarseSpace(self.R[rows], [self.labels[r] for r in rows])


def _rows_for(labels, L_i, L_K) -> np.ndarray:
    def keep(kind, reg, ell):
        L = L_i if kind == "N" else L_K
        return ell <= (L if np.isscalar(L) else L[reg])
    return np.array([r for r, lab in enumerate(labels) if keep(*lab)], dtype=np.int64)


def assemble_coarse_space(pou: PartitionOfUnity, bases: LocalSpectralBasis, L_i, L_K) -> CoarseSpace:
    coarse = pou.coarse
    n = coarse.fine.n_nodes
    L_i = _per_region(L_i, coarse.n_nodes, "L_i")
    L_K = _per_region(L_K, coarse.n_elements, "L_K")
    rows, cols, data, labels = [], [], [], []
    r = 0
    for i, (eps, L) in enumerate(zip(bases.neumann, L_i)):
        if L > len(eps):
            raise CoarseSpaceError(f"patch {i}: {L} Neumann functions requested, {len(eps)} computed")
        chi = np.zeros(n)
        chi[pou.support[i]] = pou.values[i]
        chi_loc = chi[eps.index]
        for ell in range(L):
            v = chi_loc * eps.vectors[:, ell]
            nz = np.flatnonzero(v)
            rows.append(np.full(nz.size, r)); cols.append(eps.index[nz]); data.append(v[nz])
            labels.append(("N", i, ell + 1)); r += 1
    for K, (eps, L) in enumerate(zip(bases.dirichlet, L_K)):
        if L > len(eps):
            raise CoarseSpaceError(f"element {K}: {L} Dirichlet functions requested, {len(eps)} computed")
        for ell in range(L):
            v = eps.vectors[:, ell]
            rows.append(np.full(v.size, r)); cols.append(eps.index); data.append(v)
            labels.append(("D", K, ell + 1)); r += 1
    if r:
        R = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(r, n))
    else:
        R = sp.csr_matrix((0, n))
    return CoarseSpace(R, labels)


def _check_dim(n):
    if n > COARSE_DENSE_CAP:
        raise CoarseSpaceError(f"coarse dimension {n} exceeds the dense cap {COARSE_DENSE_CAP}; "
                               "use fewer basis functions or coarse elements")


@dataclass(eq=False)
class CoarseSolution:
    u: np.ndarray
    coeffs: np.ndarray
    rank: int
    dim: int


def solve_coarse_system(Ac: np.ndarray, bc: np.ndarray, rank_tol: float = RANK_TOL):
    """Spectrally filtered solve of the (possibly singular) coarse system.

    The operator is Jacobi-scaled to unit diagonal, so the filter measures
    near-dependence of energy-normalized basis functions.  Returns the
    coefficients and the retained rank.
    """
    if Ac.shape[0] == 0:
        raise CoarseSpaceError("coarse space is empty")
    _check_dim(Ac.shape[0])
    diag = np.diag(Ac).copy()
    if not diag.max(initial=0.0) > 0:
        raise CoarseSpaceError("coarse operator is numerically zero")
    d = np.where(diag > 0, 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0)), 0.0)
    As = Ac * d[:, None] * d[None, :]
    lam, Q = sla.eigh(0.5 * (As + As.T))
    keep = lam >= rank_tol * lam[-1]
    Qk = Q[:, keep]
    c = d * (Qk @ ((Qk.T @ (d * bc)) / lam[keep]))
    return c, int(keep.sum())


def coarse_galerkin_solve(space: CoarseSpace, A, b, rank_tol: float = RANK_TOL) -> CoarseSolution:
    R = space.R
    _check_dim(R.shape[0])
    Ac = (R @ A @ R.T).toarray()
    bc = R @ b
    c, rank = solve_coarse_system(Ac, bc, rank_tol)
    space.rank = rank
    return CoarseSolution(R.T @ c, c, rank, space.dim)


class CoarseOperator:
    """Coarse matrices for a maximal space, reused for any sub-selection of its rows."""

    def __init__(self, space: CoarseSpace, A, b, rank_tol: float = RANK_TOL):
        self.space = space
        self.rank_tol = rank_tol
        _check_dim(space.dim)
        self.Ac = (space.R @ A @ space.R.T).toarray()
        self.bc = space.R @ b

    def solve(self, L_i, L_K) -> CoarseSolution:
        rows = _rows_for(self.space.labels, L_i, L_K)
        c, rank = solve_coarse_system(self.Ac[np.ix_(rows, rows)], self.bc[rows], self.rank_tol)
        u = self.space.R[rows].T @ c
        return CoarseSolution(u, c, rank, rows.size)


def min_left_out(bases: LocalSpectralBasis, L_i, L_K) -> tuple[float, float]:
    """Smallest excluded Neumann and Dirichlet eigenvalues over all regions."""
    L_i = _per_region(L_i, len(bases.neumann), "L_i")
    L_K = _per_region(L_K, len(bases.dirichlet), "L_K")

    def next_value(eps, L, what):
        if L >= eps.dim:
            raise CoarseSpaceError(f"{eps.region}: all {eps.dim} {what} eigenpairs kept; "
                                   "no left-out eigenvalue exists")
        if L >= len(eps):
            raise CoarseSpaceError(f"{eps.region}: left-out {what} eigenvalue not computed; "
                                   f"compute at least {L + 1} pairs")
        return float(eps.values[L])

    lam = min(next_value(e, L, "Neumann") for e, L in zip(bases.neumann, L_i))
    mu = min(next_value(e, L, "Dirichlet") for e, L in zip(bases.dirichlet, L_K))
    return lam, mu
