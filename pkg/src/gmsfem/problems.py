"""Manufactured solutions and sources of the four benchmark experiments."""
from __future__ import annotations

import numpy as np

PI = np.pi

# c_{k,l} = 1 / (k + 2 (l - 1))
U2_COEFFS = {(k, l): 1.0 / (k + 2 * (l - 1)) for k in (1, 2) for l in (1, 2)}


def exact_u1(x, y):
    return np.sin(PI * x) * np.sin(PI * y) * (-x + 3 * y)


def exact_f1(x, y):
    sx, cx = np.sin(PI * x), np.cos(PI * x)
    sy, cy = np.sin(PI * y), np.cos(PI * y)
    return 2 * PI * cx * sy - 6 * PI * sx * cy + 2 * PI**2 * sx * sy * (-x + 3 * y)


def exact_u2(x, y):
    return sum(c * np.sin(4 * k * PI * x) * np.sin(4 * l * PI * y) for (k, l), c in U2_COEFFS.items())


def exact_f2(x, y, verbatim: bool = False):
    """Source with -Laplace(u2) = f2.

    ``verbatim=True`` uses the prefactor ``16 (k + l)`` instead of
    ``16 pi^2 (k^2 + l^2)``; that source does not match ``u2``.
    """
    def factor(k, l):
        return 16.0 * (k + l) if verbatim else 16.0 * PI**2 * (k * k + l * l)
    return sum(factor(k, l) * c * np.sin(4 * k * PI * x) * np.sin(4 * l * PI * y)
               for (k, l), c in U2_COEFFS.items())


def checkerboard_cells(coarse, variant: str = "checker") -> np.ndarray:
    """Fine-cell values of the alternating +-1 source on the coarse elements.

    ``checker``: +1 where (kx + ky) is even.  ``stripes``: +1 on even
    1-based row-major element numbers, -1 on odd ones.
    """
    fine = coarse.fine
    cy, cx = np.divmod(np.arange(fine.n_cells), fine.nx)
    kx, ky = cx // coarse.rx, cy // coarse.ry
    if variant == "checker":
        sign = np.where((kx + ky) % 2 == 0, 1.0, -1.0)
    elif variant == "stripes":
        number = ky * coarse.NX + kx + 1
        sign = np.where(number % 2 == 0, 1.0, -1.0)
    else:
        raise ValueError(f"unknown checkerboard variant {variant!r}")
    return sign.reshape(fine.ny, fine.nx)


def checkerboard_f3(coarse, x, y, variant: str = "checker"):
    """Pointwise value of the alternating source (points on edges go to the upper/right cell)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    kx = np.clip(np.floor(x * coarse.NX).astype(int), 0, coarse.NX - 1)
    ky = np.clip(np.floor(y * coarse.NY).astype(int), 0, coarse.NY - 1)
    if variant == "checker":
        return np.where((kx + ky) % 2 == 0, 1.0, -1.0)
    number = ky * coarse.NX + kx + 1
    return np.where(number % 2 == 0, 1.0, -1.0)
