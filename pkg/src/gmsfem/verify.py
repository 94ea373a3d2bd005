"""Small-grid verification suite for the spectral identities and bounds.

Everything runs on grids where complete dense spectra are cheap, so the
expansions behind the norms are exact.
"""
from __future__ import annotations

import numpy as np

from .analysis import (Check, SpectralNormContext, apply_A, check_apriori, check_close,
                       check_div_identity, check_I0approx, check_le, check_local_truncation,
                       check_neumann_truncation, check_truncation_energy,
                       check_truncation_inequality, interpolate_JD, triple_norm, truncate_project)
from .coefficient import CoefficientField
from .eigsolver import full_dense_eig, orthonormality_error, residual_bounds
from .fem import assemble_stiffness, assemble_weighted_mass, restrict
from .mesh import build_coarse_grid, build_fine_grid
from .spaces import build_local_bases, build_partition_of_unity


def lognormal_field(nx, ny, seed=0, sigma=2.0) -> CoefficientField:
    rng = np.random.default_rng(seed)
    return CoefficientField(np.exp(sigma * rng.standard_normal((ny, nx))))


def global_context(n: int = 8, kappa=None) -> tuple:
    fine = build_fine_grid(n, n)
    kappa = kappa if kappa is not None else CoefficientField(np.ones((n, n)))
    free = fine.interior_nodes
    A = restrict(assemble_stiffness(fine, kappa), free)
    M = restrict(assemble_weighted_mass(fine, kappa), free)
    return fine, SpectralNormContext(full_dense_eig(A, M))


def global_checks(n: int = 8, seed: int = 0, loads: int = 5, vectors: int = 20,
                  levels=(1, 3, 7)) -> list:
    rng = np.random.default_rng(seed)
    _, ctx = global_context(n, lognormal_field(n, n, seed))
    out = []
    for j in range(loads):
        b = rng.standard_normal(ctx.pairs.dim)
        c = check_div_identity(ctx, b, 1e-8)
        out.append(Check(f"{c.name}[{j}]", c.lhs, c.rhs, c.slack, c.passed))
        for t, s in ((1, 0), (2, 0), (1, -1), (0, -2)):
            out.append(check_apriori(ctx, b, t, s, L=0))
    for j in range(vectors):
        v = rng.standard_normal(ctx.pairs.dim)
        for L in levels:
            for c in check_truncation_inequality(ctx, v, L):
                out.append(Check(f"{c.name}[{j}]", c.lhs, c.rhs, c.slack, c.passed))
    for L in levels:
        # first inequality is an equality for the (L+1)-th eigenvector
        phi = ctx.pairs.vectors[:, L]
        e = phi - truncate_project(ctx, phi, L)
        out.append(check_close(f"truncation_tight(L={L})", float(e @ (ctx.M @ e)),
                               float(e @ (ctx.A @ e)) / ctx.pairs.values[L], 1e-8))
    v = rng.standard_normal(ctx.pairs.dim)
    out.append(check_close("norm_s0", triple_norm(ctx, v, 0), np.sqrt(v @ (ctx.M @ v)), 1e-10))
    out.append(check_close("norm_s1", triple_norm(ctx, v, 1), np.sqrt(v @ (ctx.A @ v)), 1e-10))
    out.append(check_close("operator_norm", triple_norm(ctx, apply_A(ctx, v), 0),
                           triple_norm(ctx, v, 2), 1e-8))
    P1 = truncate_project(ctx, v, 5)
    out.append(check_le("projection_idempotent",
                        np.linalg.norm(truncate_project(ctx, P1, 5) - P1), 0.0, 1e-9))
    w = rng.standard_normal(ctx.pairs.dim)
    lhs = truncate_project(ctx, v, 5) @ (ctx.M @ w)
    rhs = v @ (ctx.M @ truncate_project(ctx, w, 5))
    out.append(check_le("projection_self_adjoint", abs(lhs - rhs), 0.0, 1e-9))
    return out


def local_checks(n: int = 16, N: int = 4, seed: int = 0, vectors: int = 5, levels=(1, 3, 7)) -> list:
    """Element and patch bounds with complete local spectra on a random medium."""
    rng = np.random.default_rng(seed + 1)
    fine = build_fine_grid(n, n)
    coarse = build_coarse_grid(fine, N, N)
    kappa = lognormal_field(n, n, seed)
    A = assemble_stiffness(fine, kappa)
    M = assemble_weighted_mass(fine, kappa)
    # counts large enough to request every local pair
    bases = build_local_bases(fine, coarse, kappa, (n // N + 1) ** 2 * 4,
                              (n // N - 1) ** 2, A=A, M=M, spare=0)
    pou = build_partition_of_unity(fine, coarse)
    out = []
    for name, sets in (("neumann", bases.neumann), ("dirichlet", bases.dirichlet)):
        for r, eps in enumerate(sets):
            res, rel, floor = residual_bounds(eps.A, eps.M, eps.values, eps.vectors, 1e-8)
            out.append(check_le(f"{name}_residual[{r}]", float(np.max(res - rel - floor)),
                                0.0, 0.0))
            out.append(check_le(f"{name}_orthonormality[{r}]",
                                orthonormality_error(eps.M, eps.vectors), 0.0, 1e-10))
    x, y = fine.coords
    for K, eps in enumerate(bases.dirichlet):
        ctx = SpectralNormContext(eps)
        for L in levels:
            if L >= eps.dim:
                continue
            for j in range(vectors):
                v = rng.standard_normal(eps.dim)
                for c in check_local_truncation(ctx, v, L):
                    out.append(Check(f"{c.name}[K={K},{j}]", c.lhs, c.rhs, c.slack, c.passed))
    cosine = np.cos(4 * np.pi * x) * np.cos(4 * np.pi * y)
    for i, eps in enumerate(bases.neumann):
        ctx = SpectralNormContext(eps)
        for L in levels:
            if L >= eps.dim:
                continue
            v = rng.standard_normal(eps.dim)
            c = check_neumann_truncation(ctx, v, L)
            out.append(Check(f"{c.name}[i={i}]", c.lhs, c.rhs, c.slack, c.passed))
            c = check_truncation_energy(ctx, cosine[eps.index], L)
            out.append(Check(f"{c.name}[i={i}]", c.lhs, c.rhs, c.slack, c.passed))
    for L in (1, 3):
        v = rng.standard_normal(fine.n_nodes)
        v[fine.boundary_nodes] = 0.0
        for K in range(coarse.n_elements):
            c = check_I0approx(coarse, kappa, pou, bases.neumann, L, v, K)
            out.append(Check(f"{c.name[:-1]},L={L})", c.lhs, c.rhs, c.slack, c.passed))
    # J_D reproduces element eigenvectors and keeps them local
    eps = bases.dirichlet[coarse.n_elements // 2]
    v = np.zeros(fine.n_nodes)
    v[eps.index] = eps.vectors[:, 0]
    jd = interpolate_JD(bases.dirichlet, 1, v)
    out.append(check_le("JD_reproduces_mode", np.max(np.abs(jd - v)), 0.0, 1e-10))
    return out


def run_verification(seed: int = 0) -> list:
    return global_checks(seed=seed) + local_checks(seed=seed)
