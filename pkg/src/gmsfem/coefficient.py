"""Piecewise-constant coefficient fields on fine cells."""
from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

# smallest admissible coefficient value
C0 = sys.float_info.min


class CoefficientError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Cell values of kappa, ``values[cy, cx]`` with row 0 at the bottom."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.ndim != 2:
            raise CoefficientError("coefficient values must be a 2-D array")
        bad = ~(v >= C0) | ~np.isfinite(v)
        if bad.any():
            cy, cx = np.argwhere(bad)[0]
            raise CoefficientError(
                f"coefficient must be finite and positive; cell (row {cy}, col {cx}) = {v[cy, cx]!r}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def contrast(self) -> float:
        return float(self.values.max() / self.values.min())

    def check_grid(self, fine) -> None:
        if (self.nx, self.ny) != (fine.nx, fine.ny):
            raise CoefficientError(
                f"coefficient is {self.nx}x{self.ny} but the grid is {fine.nx}x{fine.ny}"
            )

    def block(self, block) -> np.ndarray:
        return self.values[block.cy0:block.cy1, block.cx0:block.cx1]


def constant_field(nx: int, ny: int, value: float) -> CoefficientField:
    if not value > 0:
        raise CoefficientError(f"constant coefficient must be positive (got {value})")
    return CoefficientField(np.full((ny, nx), float(value)))


def channels_field(
    nx: int,
    ny: int,
    background: float,
    channel_value: float,
    channels: Sequence[Sequence[int]] = (),
) -> CoefficientField:
    """Background field with high-value strips.

    Each channel is a cell rectangle ``(cx0, cx1, cy0, cy1)`` (half-open) or a
    polyline strip ``{"points": [(cx, cy), ...], "width": w}`` given in cell
    indices; the strip covers cells within ``w // 2`` of the polyline.
    """
    if not channel_value > background:
        raise CoefficientError("channel value must exceed the background value")
    if not background > 0:
        raise CoefficientError("background value must be positive")
    v = np.full((ny, nx), float(background))
    for ch in channels:
        if isinstance(ch, dict):
            _paint_polyline(v, ch["points"], int(ch.get("width", 1)), channel_value)
            continue
        cx0, cx1, cy0, cy1 = (int(c) for c in ch)
        if not (0 <= cx0 < cx1 <= nx and 0 <= cy0 < cy1 <= ny):
            raise CoefficientError(f"channel rectangle {tuple(ch)} outside {nx}x{ny} grid")
        v[cy0:cy1, cx0:cx1] = channel_value
    return CoefficientField(v)


def _paint_polyline(v, points, width, value):
    ny, nx = v.shape
    pts = [(int(x), int(y)) for x, y in points]
    for x, y in pts:
        if not (0 <= x < nx and 0 <= y < ny):
            raise CoefficientError(f"channel point {(x, y)} outside {nx}x{ny} grid")
    half = width // 2
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        steps = max(abs(x1 - x0), abs(y1 - y0), 1)
        for t in range(steps + 1):
            x = round(x0 + (x1 - x0) * t / steps)
            y = round(y0 + (y1 - y0) * t / steps)
            v[max(y - half, 0):min(y + half + 1, ny), max(x - half, 0):min(x + half + 1, nx)] = value


def three_channels(nx: int, ny: int, background: float = 1.0, channel_value: float = 1e4,
                   width: int | None = None) -> CoefficientField:
    """Default three-channel medium: three gently sloping strips across the domain."""
    w = width if width is not None else max(nx // 32, 1)
    # strips are specified on a 64x64 template and scaled
    template = [
        [(0, 12), (20, 14), (44, 10), (63, 13)],
        [(0, 32), (24, 35), (40, 29), (63, 33)],
        [(0, 52), (18, 49), (46, 54), (63, 51)],
    ]
    sx, sy = nx / 64.0, ny / 64.0
    channels = [
        {"points": [(min(int(x * sx), nx - 1), min(int(y * sy), ny - 1)) for x, y in line],
         "width": w}
        for line in template
    ]
    return channels_field(nx, ny, background, channel_value, channels)


def load_raster(path) -> CoefficientField:
    """Read an ASCII raster: header ``nx ny`` then ``ny`` rows of ``nx`` values.

    Row 0 of the file is the bottom row of the field.
    """
    path = Path(path)
    if not path.is_file():
        raise CoefficientError(f"raster file not found: {path}")
    lines = [ln for ln in path.read_text().split("\n") if ln.strip()]
    if not lines:
        raise CoefficientError(f"{path}: empty raster file")
    header = lines[0].split()
    try:
        nx, ny = int(header[0]), int(header[1])
        if len(header) != 2 or nx < 1 or ny < 1:
            raise ValueError
    except (ValueError, IndexError):
        raise CoefficientError(f"{path}: malformed header {lines[0]!r}, expected 'nx ny'") from None
    rows = lines[1:]
    if len(rows) != ny:
        raise CoefficientError(f"{path}: expected {ny} rows, found {len(rows)}")
    values = np.empty((ny, nx))
    for r, line in enumerate(rows):
        toks = line.split()
        if len(toks) != nx:
            raise CoefficientError(f"{path}: row {r} has {len(toks)} values, expected {nx}")
        try:
            values[r] = [float(t) for t in toks]
        except ValueError:
            raise CoefficientError(f"{path}: row {r} has a non-numeric entry") from None
        c = np.flatnonzero(~(values[r] > 0))
        if c.size:
            raise CoefficientError(
                f"{path}: non-positive value {values[r, c[0]]!r} at row {r}, col {c[0]}"
            )
    return CoefficientField(values)


def save_raster(field: CoefficientField, path) -> None:
    rows = [f"{field.nx} {field.ny}"]
    rows += [" ".join(repr(float(x)) for x in row) for row in field.values]
    Path(path).write_text("\n".join(rows) + "\n")


def resample_to(field: CoefficientField, fine) -> CoefficientField:
    """Replicate each cell value onto the matching block of fine cells."""
    if fine.nx % field.nx or fine.ny % field.ny:
        raise CoefficientError(
            f"cannot resample {field.nx}x{field.ny} field onto {fine.nx}x{fine.ny} grid: "
            "ratio is not an integer"
        )
    fx, fy = fine.nx // field.nx, fine.ny // field.ny
    return CoefficientField(np.repeat(np.repeat(field.values, fy, axis=0), fx, axis=1))
