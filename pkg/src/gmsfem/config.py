"""Experiment configuration read from TOML files."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class CoefficientSpec:
    kind: str = "constant"          # constant | channels | raster
    value: float = 1.0
    background: float = 1.0
    channel_value: float = 1e4
    channels: list = field(default_factory=list)  # empty -> built-in three-channel layout
    geo_cells: int = 64             # geological grid of the channel medium
    width: int = 0                  # strip width in geological cells, 0 -> default
    path: str = ""


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    fine: tuple = (128, 128)
    coarse: tuple = (4, 4)
    coefficient: CoefficientSpec = field(default_factory=CoefficientSpec)
    source: str = "f1"              # f1 | f2 | f2_verbatim | checkerboard | stripes
    reference: str = "analytic"     # analytic | refined | fine
    reference_factor: int = 2
    n_neumann: list = field(default_factory=lambda: [1, 5, 10, 15, 20, 25, 30, 35, 40])
    n_dirichlet: list = field(default_factory=lambda: [0, 5, 10, 15, 20])
    h_list: list = field(default_factory=lambda: [2, 4, 8])
    h_neumann: int = 10
    h_dirichlet: int = 5
    solver_tol: float = 1e-10
    reference_tol: float = 1e-12
    rank_tol: float = 1e-10
    eig_tol: float = 1e-8
    seed: int = 0                   # start block of the iterative eigensolver
    workers: int = 1
    timing_in_csv: bool = False
    output: str = "records.csv"

    def validate(self) -> "ExperimentConfig":
        self.fine = tuple(int(v) for v in self.fine)
        self.coarse = tuple(int(v) for v in self.coarse)
        if len(self.fine) != 2 or len(self.coarse) != 2:
            raise ConfigError("fine and coarse must be pairs of cell counts")
        if not self.n_neumann or not self.n_dirichlet:
            raise ConfigError("sweep lists n_neumann and n_dirichlet must be nonempty")
        if min(self.n_neumann) < 0 or min(self.n_dirichlet) < 0:
            raise ConfigError("basis counts must be nonnegative")
        if self.source not in ("f1", "f2", "f2_verbatim", "checkerboard", "stripes"):
            raise ConfigError(f"unknown source {self.source!r}")
        if self.reference not in ("analytic", "refined", "fine"):
            raise ConfigError(f"unknown reference mode {self.reference!r}")
        if self.reference == "analytic" and self.source not in ("f1", "f2"):
            raise ConfigError(f"source {self.source!r} has no analytic solution; "
                              "use reference = 'refined'")
        if self.reference == "refined" and self.reference_factor < 2:
            raise ConfigError("refined reference needs reference_factor >= 2")
        if self.coefficient.kind not in ("constant", "channels", "raster"):
            raise ConfigError(f"unknown coefficient kind {self.coefficient.kind!r}")
        return self

    def flat(self) -> dict:
        """Flattened key/value view used for provenance headers."""
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, dict):
                for kk, vv in v.items():
                    out[f"{k}.{kk}"] = vv
            else:
                out[k] = v
        return out


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    coef = data.pop("coefficient", {})
    sweep = data.pop("sweep", {})
    h = data.pop("hstudy", {})
    tol = data.pop("tolerances", {})
    known = {f.name for f in fields(ExperimentConfig)}
    flat = dict(data)
    flat.update({"n_neumann": sweep["n_neumann"]} if "n_neumann" in sweep else {})
    flat.update({"n_dirichlet": sweep["n_dirichlet"]} if "n_dirichlet" in sweep else {})
    for src, dst in (("h_list", "h_list"), ("n_neumann", "h_neumann"), ("n_dirichlet", "h_dirichlet")):
        if src in h:
            flat[dst] = h[src]
    for key in ("solver", "reference", "rank", "eig"):
        if key in tol:
            flat[f"{key}_tol"] = tol[key]
    unknown = set(flat) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    coef_known = {f.name for f in fields(CoefficientSpec)}
    if set(coef) - coef_known:
        raise ConfigError(f"unknown coefficient keys: {sorted(set(coef) - coef_known)}")
    return ExperimentConfig(coefficient=CoefficientSpec(**coef), **flat).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = config_from_dict(data)
    if cfg.coefficient.kind == "raster" and cfg.coefficient.path:
        p = Path(cfg.coefficient.path)
        if not p.is_absolute():
            cfg.coefficient.path = str(path.parent / p)
    return cfg
