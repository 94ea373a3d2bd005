"""Structured fine and coarse tensor grids on the unit square.

Nodes and cells are numbered row-major (x fastest).  Coarse grids are nested
in a fine grid; a coarse neighborhood (patch) is the union of the coarse
cells touching a coarse node, represented by fine-node index sets plus masks.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class CellBlock:
    """Half-open rectangle of fine cells ``[cx0, cx1) x [cy0, cy1)``."""

    cx0: int
    cx1: int
    cy0: int
    cy1: int

    @property
    def ncx(self) -> int:
        return self.cx1 - self.cx0

    @property
    def ncy(self) -> int:
        return self.cy1 - self.cy0


@dataclass(frozen=True)
class FineGrid:
    nx: int
    ny: int

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def node(self, ix, iy):
        return iy * (self.nx + 1) + ix

    @cached_property
    def node_ij(self) -> tuple[np.ndarray, np.ndarray]:
        iy, ix = np.divmod(np.arange(self.n_nodes), self.nx + 1)
        return ix, iy

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        ix, iy = self.node_ij
        return ix * self.hx, iy * self.hy

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        ix, iy = self.node_ij
        return (ix == 0) | (ix == self.nx) | (iy == 0) | (iy == self.ny)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    def block_nodes(self, block: CellBlock) -> np.ndarray:
        """Fine nodes on the closure of a cell block, row-major."""
        ix = np.arange(block.cx0, block.cx1 + 1)
        iy = np.arange(block.cy0, block.cy1 + 1)
        return (iy[:, None] * (self.nx + 1) + ix[None, :]).ravel()


def build_fine_grid(nx: int, ny: int) -> FineGrid:
    if int(nx) != nx or int(ny) != ny or nx < 2 or ny < 2:
        raise GridError(f"fine grid needs nx, ny >= 2 (got {nx}, {ny})")
    return FineGrid(int(nx), int(ny))


@dataclass(frozen=True)
class PatchNodes:
    """Fine nodes on the closure of a patch, with boundary classification.

    ``interface`` marks nodes on the patch boundary inside the domain and
    ``domain_boundary`` marks nodes on the patch boundary lying on the
    domain boundary.  Together with ``interior`` they partition ``nodes``.
    """

    nodes: np.ndarray
    interface: np.ndarray
    domain_boundary: np.ndarray
    block: CellBlock

    @property
    def interior(self) -> np.ndarray:
        return ~(self.interface | self.domain_boundary)

    @property
    def floating(self) -> bool:
        return not bool(self.domain_boundary.any())


@dataclass(frozen=True)
class CoarseGrid:
    fine: FineGrid
    NX: int
    NY: int

    @property
    def H(self) -> float:
        return 1.0 / self.NX

    @property
    def Hy(self) -> float:
        return 1.0 / self.NY

    @property
    def rx(self) -> int:
        return self.fine.nx // self.NX

    @property
    def ry(self) -> int:
        return self.fine.ny // self.NY

    @property
    def n_nodes(self) -> int:
        return (self.NX + 1) * (self.NY + 1)

    @property
    def n_elements(self) -> int:
        return self.NX * self.NY

    def node_ij(self, i: int) -> tuple[int, int]:
        self._check_node(i)
        iy, ix = divmod(i, self.NX + 1)
        return ix, iy

    def element_ij(self, K: int) -> tuple[int, int]:
        self._check_element(K)
        ky, kx = divmod(K, self.NX)
        return kx, ky

    @cached_property
    def node_coords(self) -> np.ndarray:
        iy, ix = np.divmod(np.arange(self.n_nodes), self.NX + 1)
        return np.column_stack([ix * self.H, iy * self.Hy])

    def patch(self, i: int) -> tuple[int, ...]:
        """Coarse elements adjacent to coarse node ``i`` (the patch omega_i)."""
        ix, iy = self.node_ij(i)
        out = []
        for ky in (iy - 1, iy):
            for kx in (ix - 1, ix):
                if 0 <= kx < self.NX and 0 <= ky < self.NY:
                    out.append(ky * self.NX + kx)
        return tuple(out)

    def element_vertices(self, K: int) -> tuple[int, int, int, int]:
        """Coarse node indices of ``K`` in (SW, SE, NE, NW) order."""
        kx, ky = self.element_ij(K)
        sw = ky * (self.NX + 1) + kx
        return sw, sw + 1, sw + self.NX + 2, sw + self.NX + 1

    def elem_nbhd(self, K: int) -> tuple[int, ...]:
        """Coarse nodes ``i`` with ``K`` contained in omega_i."""
        self._check_element(K)
        return tuple(i for i in sorted(self.element_vertices(K)) if K in self.patch(i))

    def element_neighborhood_elements(self, K: int) -> tuple[int, ...]:
        """Coarse elements making up omega^K, the union of the vertex patches."""
        return tuple(sorted({E for i in self.elem_nbhd(K) for E in self.patch(i)}))

    def patch_block(self, i: int) -> CellBlock:
        ix, iy = self.node_ij(i)
        kx0, kx1 = max(ix - 1, 0), min(ix + 1, self.NX)
        ky0, ky1 = max(iy - 1, 0), min(iy + 1, self.NY)
        return CellBlock(kx0 * self.rx, kx1 * self.rx, ky0 * self.ry, ky1 * self.ry)

    def element_block(self, K: int) -> CellBlock:
        kx, ky = self.element_ij(K)
        return CellBlock(kx * self.rx, (kx + 1) * self.rx, ky * self.ry, (ky + 1) * self.ry)

    def _check_node(self, i):
        if not 0 <= i < self.n_nodes:
            raise IndexError(f"coarse node {i} out of range [0, {self.n_nodes})")

    def _check_element(self, K):
        if not 0 <= K < self.n_elements:
            raise IndexError(f"coarse element {K} out of range [0, {self.n_elements})")


def build_coarse_grid(fine: FineGrid, NX: int, NY: int) -> CoarseGrid:
    if NX < 1 or NY < 1:
        raise GridError(f"coarse counts must be positive (got {NX}, {NY})")
    if fine.nx % NX or fine.ny % NY:
        raise GridError(
            f"coarse grid {NX}x{NY} does not nest in fine grid {fine.nx}x{fine.ny}"
        )
    return CoarseGrid(fine, int(NX), int(NY))


def patch_fine_nodes(coarse: CoarseGrid, i: int) -> PatchNodes:
    fine = coarse.fine
    block = coarse.patch_block(i)
    nodes = fine.block_nodes(block)
    ix, iy = fine.node_ij
    ix, iy = ix[nodes], iy[nodes]
    on_edge = (ix == block.cx0) | (ix == block.cx1) | (iy == block.cy0) | (iy == block.cy1)
    on_dom = fine.boundary_mask[nodes]
    return PatchNodes(nodes, on_edge & ~on_dom, on_dom, block)


def element_interior_fine_nodes(coarse: CoarseGrid, K: int) -> np.ndarray:
    b = coarse.element_block(K)
    inner = CellBlock(b.cx0 + 1, b.cx1 - 1, b.cy0 + 1, b.cy1 - 1)
    if inner.ncx < 0 or inner.ncy < 0:
        return np.empty(0, dtype=np.int64)
    return coarse.fine.block_nodes(inner)
