"""Sweep harness: build a problem once, then evaluate many (N_N, N_D) points."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import coefficient as coef
from .config import ConfigError, ExperimentConfig
from .fem import (apply_homogeneous_dirichlet, assemble_load, assemble_stiffness,
                  assemble_weighted_mass, energy_norm, prolongate, solve_spd)
from .mesh import build_coarse_grid, build_fine_grid
from .problems import checkerboard_cells, exact_f1, exact_f2, exact_u1, exact_u2
from .spaces import (CoarseOperator, assemble_coarse_space, build_local_bases,
                     build_partition_of_unity, min_left_out)

log = logging.getLogger(__name__)

COLUMNS = ("N_N", "N_D", "lambda_next", "mu_next", "dim", "rank", "err_energy", "err_l2",
           "rel_energy", "rel_l2", "seconds")


@dataclass
class ErrorRecord:
    N_N: int
    N_D: int
    lambda_next: float
    mu_next: float
    dim: int
    rank: int
    err_energy: float
    err_l2: float
    rel_energy: float
    rel_l2: float
    seconds: float = 0.0


def build_coefficient(spec, fine):
    if spec.kind == "constant":
        return coef.constant_field(fine.nx, fine.ny, spec.value)
    if spec.kind == "channels":
        n = spec.geo_cells
        if spec.channels:
            chans = [c if not isinstance(c, dict) else dict(c) for c in spec.channels]
            geo = coef.channels_field(n, n, spec.background, spec.channel_value, chans)
        else:
            geo = coef.three_channels(n, n, spec.background, spec.channel_value,
                                      width=spec.width or None)
        return coef.resample_to(geo, fine)
    if spec.kind == "raster":
        if not spec.path:
            raise ConfigError("raster coefficient needs a path")
        return coef.resample_to(coef.load_raster(spec.path), fine)
    raise ConfigError(f"unknown coefficient kind {spec.kind!r}")


def source_for(cfg: ExperimentConfig, coarse):
    """Load description for ``assemble_load``: a callable or fine-cell values."""
    if cfg.source == "f1":
        return exact_f1
    if cfg.source == "f2":
        return exact_f2
    if cfg.source == "f2_verbatim":
        return lambda x, y: exact_f2(x, y, verbatim=True)
    variant = "checker" if cfg.source == "checkerboard" else "stripes"
    return ("cells", variant)


def _load(fine, coarse, source):
    if isinstance(source, tuple):
        # cell values on a (possibly refined) grid nested in the same coarse grid
        grid = build_coarse_grid(fine, coarse.NX, coarse.NY)
        return assemble_load(fine, checkerboard_cells(grid, source[1]))
    return assemble_load(fine, source)


class Problem:
    """Fine discretization, local bases at maximal counts, and the reference."""

    def __init__(self, cfg: ExperimentConfig, coarse_counts=None, max_neumann=None,
                 max_dirichlet=None):
        self.cfg = cfg
        nx, ny = cfg.fine
        NX, NY = coarse_counts or cfg.coarse
        self.fine = build_fine_grid(nx, ny)
        self.coarse = build_coarse_grid(self.fine, NX, NY)
        self.kappa = build_coefficient(cfg.coefficient, self.fine)
        self.A = assemble_stiffness(self.fine, self.kappa)
        self.M = assemble_weighted_mass(self.fine, self.kappa)
        self.source = source_for(cfg, self.coarse)
        b = _load(self.fine, self.coarse, self.source)
        self.system = apply_homogeneous_dirichlet(self.A, b, self.fine.boundary_nodes)
        self.u_h = solve_spd(self.system, cfg.solver_tol)
        self.max_neumann = max(cfg.n_neumann) if max_neumann is None else max_neumann
        self.max_dirichlet = max(cfg.n_dirichlet) if max_dirichlet is None else max_dirichlet
        self.bases = build_local_bases(self.fine, self.coarse, self.kappa, self.max_neumann,
                                       self.max_dirichlet, A=self.A, M=self.M,
                                       workers=cfg.workers, rtol=cfg.eig_tol, seed=cfg.seed)
        self.pou = build_partition_of_unity(self.fine, self.coarse)
        self.space = assemble_coarse_space(self.pou, self.bases, self.max_neumann, self.max_dirichlet)
        self.operator = CoarseOperator(self.space, self.system.matrix, self.system.rhs, cfg.rank_tol)
        self._setup_reference()

    def _setup_reference(self):
        cfg = self.cfg
        if cfg.reference == "analytic":
            exact = exact_u1 if cfg.source == "f1" else exact_u2
            self.u_ref = exact(*self.fine.coords)
            self.A_ref, self.M_ref, self.P = self.A, self.M, None
        elif cfg.reference == "fine":
            self.u_ref = self.u_h
            self.A_ref, self.M_ref, self.P = self.A, self.M, None
        else:
            self.u_ref, self.A_ref, self.M_ref, self.P = refined_reference(self, cfg.reference_factor)

    def errors(self, u_H) -> dict:
        u = u_H if self.P is None else self.P @ u_H
        e = self.u_ref - u
        ee, el = energy_norm(self.A_ref, e), energy_norm(self.M_ref, e)
        re, rl = energy_norm(self.A_ref, self.u_ref), energy_norm(self.M_ref, self.u_ref)
        return {"err_energy": ee, "err_l2": el, "rel_energy": ee / re, "rel_l2": el / rl}

    def solve(self, n_neumann: int, n_dirichlet: int):
        return self.operator.solve(n_neumann, n_dirichlet)

    def point(self, n_neumann: int, n_dirichlet: int) -> ErrorRecord:
        t0 = time.perf_counter()
        sol = self.solve(n_neumann, n_dirichlet)
        lam, mu = min_left_out(self.bases, n_neumann, n_dirichlet)
        err = self.errors(sol.u)
        return ErrorRecord(n_neumann, n_dirichlet, lam, mu, sol.dim, sol.rank,
                           seconds=time.perf_counter() - t0, **err)


def refined_reference(problem: Problem, factor: int):
    """Q1 solution on the grid refined ``factor`` times, with its norms and the prolongation."""
    cfg = problem.cfg
    fine = build_fine_grid(problem.fine.nx * factor, problem.fine.ny * factor)
    kappa = build_coefficient(cfg.coefficient, fine)
    A = assemble_stiffness(fine, kappa)
    M = assemble_weighted_mass(fine, kappa)
    b = _load(fine, problem.coarse, problem.source)
    u = solve_spd(apply_homogeneous_dirichlet(A, b, fine.boundary_nodes), cfg.reference_tol)
    return u, A, M, prolongate(problem.fine, factor)


@dataclass
class SweepResult:
    records: list
    failures: list
    header: list

    @property
    def ok(self) -> bool:
        return not self.failures


def _header(cfg: ExperimentConfig, kind: str) -> list:
    lines = [f"gmsfem {kind}"]
    lines += [f"{k} = {v!r}" for k, v in sorted(cfg.flat().items())]
    return lines


def run_sweep(cfg: ExperimentConfig, problem: Problem | None = None) -> SweepResult:
    problem = problem or Problem(cfg)
    records, failures = [], []
    for nd in sorted(set(cfg.n_dirichlet)):
        for nn in sorted(set(cfg.n_neumann)):
            if nn == 0 and nd == 0:
                failures.append((nn, nd, "empty coarse space"))
                continue
            try:
                records.append(problem.point(nn, nd))
            except Exception as exc:  # recorded, sweep continues
                log.warning("sweep point N_N=%d N_D=%d failed: %s", nn, nd, exc)
                failures.append((nn, nd, str(exc)))
    header = _header(cfg, "sweep")
    header += [f"failed N_N={nn} N_D={nd}: {msg}" for nn, nd, msg in failures]
    return SweepResult(records, failures, header)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def records_to_csv(records, header=(), timing: bool = False) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in sorted(records, key=lambda r: (r.N_D, r.N_N)):
        row = [getattr(r, c) for c in COLUMNS]
        if not timing:
            row[-1] = 0.0
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_records_csv(text: str):
    header, body = [], []
    for line in text.splitlines(keepends=True):
        if line.startswith("# "):
            header.append(line[2:].rstrip("\n"))
        else:
            body.append(line)
    reader = csv.DictReader(io.StringIO("".join(body)))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError(f"unexpected columns {reader.fieldnames}")
    types = {f.name: f.type for f in fields(ErrorRecord)}
    records = []
    for row in reader:
        records.append(ErrorRecord(**{k: (int(v) if types[k] in (int, "int") else float(v))
                                      for k, v in row.items()}))
    return records, header


def write_sweep(result: SweepResult, path, timing: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(records_to_csv(result.records, result.header, timing))
    if not timing:
        rows = ["N_N,N_D,seconds"] + [f"{r.N_N},{r.N_D},{r.seconds:.6f}"
                                      for r in sorted(result.records, key=lambda r: (r.N_D, r.N_N))]
        path.with_suffix(".timing.csv").write_text("\n".join(rows) + "\n")


_AXES = {"lambda_next": "lambda_next", "N_N": "N_N", "H": "H",
         "energy": "err_energy", "l2": "err_l2"}


def emit_plot_data(records, x: str = "lambda_next", y: str = "energy", groups=None) -> str:
    """Long-format plot table with one series per N_D and precomputed log10 columns."""
    if not records:
        raise ValueError("no records to plot")
    xa, ya = _AXES[x], _AXES[y]
    present = sorted({r.N_D for r in records})
    groups = present if groups is None else list(groups)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    lead = ["series", "N_D"] + ([] if x == "N_N" else ["N_N"])
    w.writerow(lead + [x, y, f"log10_{x}", f"log10_{y}"])
    for g in groups:
        series = sorted((r for r in records if r.N_D == g), key=lambda r: r.N_N)
        if not series:
            log.warning("plot group N_D=%s has no records; dropped", g)
            continue
        for r in series:
            xv, yv = float(getattr(r, xa)), float(getattr(r, ya))
            w.writerow([f"N_D={g}", g] + ([] if x == "N_N" else [r.N_N]) + [
                        _fmt(getattr(r, xa)), repr(yv),
                        repr(math.log10(xv)) if xv > 0 else "nan",
                        repr(math.log10(yv)) if yv > 0 else "nan"])
    return buf.getvalue()


@dataclass
class HStudy:
    H: list
    err_energy: list
    err_l2: list
    slope: float
    header: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in self.header + [f"slope_energy = {self.slope!r}"]:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["H", "err_energy", "err_l2"])
        for row in zip(self.H, self.err_energy, self.err_l2):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def fit_slope(H, err) -> float:
    return float(np.polyfit(np.log(H), np.log(err), 1)[0])


def run_h_study(cfg: ExperimentConfig) -> HStudy:
    if len(cfg.h_list) < 2:
        raise ConfigError("an H study needs at least two coarse resolutions")
    Hs, ee, el = [], [], []
    for n in cfg.h_list:
        prob = Problem(cfg, coarse_counts=(n, n), max_neumann=cfg.h_neumann,
                       max_dirichlet=cfg.h_dirichlet)
        err = prob.errors(prob.solve(cfg.h_neumann, cfg.h_dirichlet).u)
        Hs.append(1.0 / n)
        ee.append(err["err_energy"])
        el.append(err["err_l2"])
    return HStudy(Hs, ee, el, fit_slope(Hs, ee), _header(cfg, "hstudy"))
