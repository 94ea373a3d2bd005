"""Spectral norms, truncation projections, interpolation operators and checks.

All quantities are discrete: a region's eigenpairs (A phi = lam M phi) play
the role of the eigenfunction expansion.  Identities that rely on the whole
expansion require a complete spectrum and refuse to run otherwise.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .eigsolver import EigenPairSet
from .fem import assemble_block, energy_norm, quad_form


class IncompleteSpectrumError(RuntimeError):
    pass


@dataclass(frozen=True)
class Check:
    """Outcome of one inequality or identity check: ``lhs <= rhs + slack``."""

    name: str
    lhs: float
    rhs: float
    slack: float
    passed: bool


def check_le(name, lhs, rhs, slack) -> Check:
    return Check(name, float(lhs), float(rhs), float(slack), bool(lhs <= rhs + slack))


def check_close(name, lhs, rhs, rel) -> Check:
    slack = rel * max(abs(lhs), abs(rhs))
    return Check(name, float(lhs), float(rhs), float(slack), bool(abs(lhs - rhs) <= slack))


def checks_to_csv(checks) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "lhs", "rhs", "slack", "pass"])
    for c in checks:
        w.writerow([c.name, repr(c.lhs), repr(c.rhs), repr(c.slack), int(c.passed)])
    return buf.getvalue()


@dataclass(eq=False)
class SpectralNormContext:
    pairs: EigenPairSet

    @property
    def M(self):
        return self.pairs.M

    @property
    def A(self):
        return self.pairs.A

    @property
    def values(self):
        # the zero Neumann eigenvalue can come out as -1e-13
        return np.maximum(self.pairs.values, 0.0)

    @property
    def count(self) -> int:
        return len(self.pairs)

    @property
    def complete(self) -> bool:
        return self.count == self.pairs.dim

    def coefficients(self, v) -> np.ndarray:
        return self.pairs.vectors.T @ (self.M @ v)

    def require_complete(self, what):
        if not self.complete:
            raise IncompleteSpectrumError(
                f"{what} needs the complete spectrum ({self.count} of {self.pairs.dim} pairs)"
            )


def triple_norm(ctx: SpectralNormContext, v, s: float) -> float:
    """sqrt(sum_l lam_l^s m(v, phi_l)^2) over the available pairs."""
    c = ctx.coefficients(v)
    return float(np.sqrt(np.sum(ctx.values ** s * c ** 2)))


def apply_A(ctx: SpectralNormContext, v) -> np.ndarray:
    ctx.require_complete("apply_A")
    return ctx.pairs.vectors @ (ctx.values * ctx.coefficients(v))


def truncate_project(ctx: SpectralNormContext, v, L: int) -> np.ndarray:
    """M-orthogonal projection onto the first ``L`` eigenvectors."""
    if L < 0 or L > ctx.count:
        raise ValueError(f"truncation L={L} outside [0, {ctx.count}]")
    V = ctx.pairs.vectors[:, :L]
    return V @ (V.T @ (ctx.M @ v))


def check_div_identity(ctx: SpectralNormContext, b, rel: float = 1e-8) -> Check:
    """Spectral |||u|||_2^2 against ||M^{-1} b||_M^2 for the solution of A u = b."""
    ctx.require_complete("check_div_identity")
    A, M = ctx.A, ctx.M
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return check_close("div_identity", 0.0, 0.0, rel)
    u = spla.spsolve(A.tocsc(), b)
    lhs = triple_norm(ctx, u, 2) ** 2
    g = spla.spsolve(M.tocsc(), b)
    rhs = float(g @ (M @ g))
    return check_close("div_identity", lhs, rhs, rel)


def check_truncation_inequality(ctx: SpectralNormContext, v, L: int, slack: float = 1e-10):
    """Both inequalities of the weighted Poincare truncation bound for ``v``."""
    if L + 1 > ctx.count:
        raise ValueError(f"need {L + 1} pairs, have {ctx.count}")
    mu = ctx.pairs.values[L]
    e = v - truncate_project(ctx, v, L)
    m_e = quad_form(ctx.M, e)
    a_e = quad_form(ctx.A, e)
    a_v = quad_form(ctx.A, v)
    return [
        check_le(f"truncation_mass(L={L})", m_e, a_e / mu, slack),
        check_le(f"truncation_energy(L={L})", a_e / mu, a_v / mu, slack),
    ]


def check_apriori(ctx: SpectralNormContext, b, t: float, s: float, L: int = 0,
                  rel: float = 1e-10) -> Check:
    """|||u - J_L u|||_t^2 <= mu_{L+1}^{t-s-2} |||g|||_s^2 with g = M^{-1} b, t - s - 2 <= 0."""
    ctx.require_complete("check_apriori")
    if t - s - 2 > 0:
        raise ValueError("the a priori estimate needs t - s - 2 <= 0")
    u = spla.spsolve(ctx.A.tocsc(), b)
    g = spla.spsolve(ctx.M.tocsc(), b)
    lhs = triple_norm(ctx, u - truncate_project(ctx, u, L), t) ** 2
    rhs = ctx.values[L] ** (t - s - 2) * triple_norm(ctx, g, s) ** 2
    return check_le(f"apriori(t={t},s={s},L={L})", lhs, rhs, rel * max(rhs, 1e-300))


def check_local_truncation(ctx: SpectralNormContext, v, L: int, rel: float = 1e-10):
    """Energy of the truncation error against the second spectral norm.

    Reports the sharp bound ``<= |||A v|||_0^2 / lam_{L+1}`` and the weaker
    ``<= lam_{L+1} |||A v|||_0^2`` (implied when ``lam_{L+1} >= 1``).
    """
    ctx.require_complete("check_local_truncation")
    lam = ctx.values[L]
    e = v - truncate_project(ctx, v, L)
    lhs = quad_form(ctx.A, e)
    Av2 = triple_norm(ctx, v, 2) ** 2
    return [
        check_le(f"local_truncation_sharp(L={L})", lhs, Av2 / lam, rel * Av2 / lam),
        check_le(f"local_truncation_stated(L={L})", lhs, lam * Av2, rel * lam * Av2),
    ]


def check_neumann_truncation(ctx: SpectralNormContext, v, L: int, slack: float = 1e-10) -> Check:
    """||v - I_L v||_m^2 <= a(v, v) / lam_{L+1}, valid for any patch vector."""
    lam = ctx.pairs.values[L]
    e = v - truncate_project(ctx, v, L)
    return check_le(f"neumann_truncation(L={L})", quad_form(ctx.M, e),
                    quad_form(ctx.A, v) / lam, slack)


def check_truncation_energy(ctx: SpectralNormContext, v, L: int, rel: float = 1e-10) -> Check:
    """a(v - I_L v) <= |||v|||_2^2 / lam_{L+1}; meaningful for zero-flux ``v``."""
    ctx.require_complete("check_truncation_energy")
    lam = ctx.values[L]
    e = v - truncate_project(ctx, v, L)
    rhs = triple_norm(ctx, v, 2) ** 2 / lam
    return check_le(f"truncation_energy_zero_flux(L={L})", quad_form(ctx.A, e), rhs, rel * rhs)


def _counts(L, n):
    return [int(L)] * n if np.isscalar(L) else [int(x) for x in L]


def interpolate_IN(pou, neumann, L_i, v) -> np.ndarray:
    """sum_i chi_i * (patch projection of v onto its first L_i eigenvectors)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    chi_full = np.zeros_like(v)
    for i, (eps, L) in enumerate(zip(neumann, _counts(L_i, len(neumann)))):
        if L == 0:
            continue
        V = eps.vectors[:, :L]
        proj = V @ (V.T @ (eps.M @ v[eps.index]))
        chi_full[pou.support[i]] = pou.values[i]
        out[eps.index] += chi_full[eps.index] * proj
        chi_full[pou.support[i]] = 0.0
    return out


def interpolate_JD(dirichlet, L_K, v) -> np.ndarray:
    """Sum of element projections onto the first L_K Dirichlet eigenvectors, zero-extended."""
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    for eps, L in zip(dirichlet, _counts(L_K, len(dirichlet))):
        if L == 0:
            continue
        V = eps.vectors[:, :L]
        out[eps.index] += V @ (V.T @ (eps.M @ v[eps.index]))
    return out


def interpolate_I0(pou, neumann, dirichlet, L_i, L_K, v_N, v_D) -> np.ndarray:
    """I_N v_N + J_D v_D for a caller-supplied splitting (v_N, v_D)."""
    return interpolate_IN(pou, neumann, L_i, v_N) + interpolate_JD(dirichlet, L_K, v_D)


def check_I0approx(coarse, kappa, pou, neumann, L_i, v, K: int, slack: float = 1e-10) -> Check:
    """Weighted L2 error of I_N on element K against the patch energy bound.

    ``int_K kappa (v - I_N v)^2 <= n_K * sum_{y_i in K} a^{omega_i}(e_i, e_i) / lam_{K,L+1}``
    with ``e_i = v - I^{omega_i} v`` and ``n_K = 4`` vertices (Cauchy-Schwarz on
    the four overlapping hats).
    """
    fine = coarse.fine
    L_i = _counts(L_i, len(neumann))
    verts = coarse.elem_nbhd(K)
    e = v - interpolate_IN(pou, neumann, L_i, v)
    block = coarse.element_block(K)
    _, MK = assemble_block(fine, kappa, block)
    lhs = quad_form(MK, e[fine.block_nodes(block)])
    lam = min(neumann[i].values[L_i[i]] for i in verts)
    total = 0.0
    for i in verts:
        eps = neumann[i]
        V = eps.vectors[:, :L_i[i]]
        vi = v[eps.index]
        total += quad_form(eps.A, vi - V @ (V.T @ (eps.M @ vi)))
    rhs = len(verts) * total / lam
    return check_le(f"I0approx(K={K})", lhs, rhs, slack)


def error_report(u_ref, u_H, A, M, fine=None) -> dict:
    """Energy and weighted-L2 errors of ``u_H`` against a nodal or analytic reference."""
    if callable(u_ref):
        if fine is None:
            raise ValueError("an analytic reference needs the fine grid for sampling")
        u_ref = u_ref(*fine.coords)
    u_ref = np.asarray(u_ref, dtype=float)
    u_H = np.asarray(u_H, dtype=float)
    if u_ref.shape != u_H.shape or u_ref.shape[0] != A.shape[0]:
        raise ValueError(f"grid mismatch: reference {u_ref.shape}, approximation {u_H.shape}, "
                         f"matrix {A.shape}")
    e = u_ref - u_H
    ee, el = energy_norm(A, e), energy_norm(M, e)
    re, rl = energy_norm(A, u_ref), energy_norm(M, u_ref)
    return {
        "err_energy": ee,
        "err_l2": el,
        "rel_energy": ee / re if re > 0 else 0.0,
        "rel_l2": el / rl if rl > 0 else 0.0,
    }
