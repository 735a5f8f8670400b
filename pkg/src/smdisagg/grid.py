"""Raster data model: block aggregation, replication, noise injection, file I/O.

A Grid is a rectangular raster of one variable at one resolution.  All
operations are pure: noise is a deterministic function of its seed, so
grids for different days can be processed in parallel.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, DomainError


class VarTag(enum.Enum):
    """Physical variable carried by a grid."""

    LAI = "LAI"
    LST = "LST"
    PPT = "PPT"
    SM = "SM"
    LC = "LC"
    COORD = "COORD"


@dataclass
class Grid:
    """A 2-D raster with square cells.

    Parameters
    ----------
    values : ndarray, shape (rows, cols)
        Cell values, row-major.  NaN marks missing data.
    cell_size : float
        Cell edge length in meters, > 0.
    tag : VarTag
        Variable identity; drives validation and noise clamping.
    """

    values: np.ndarray
    cell_size: float
    tag: VarTag

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.size == 0:
            raise DimensionError("grid values must be a non-empty 2-D array")
        if not self.cell_size > 0:
            raise DomainError(f"cell_size must be > 0, got {self.cell_size}")
        finite = self.values[np.isfinite(self.values)]
        if self.tag is VarTag.SM and finite.size:
            if finite.min() < 0.0 or finite.max() > 1.0:
                raise DomainError("finite SM values must lie in [0, 1]")
        if self.tag is VarTag.LC and finite.size:
            if not np.all(finite == np.round(finite)):
                raise DomainError("LC values must be integer class ids")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def like(self, values: np.ndarray, tag: VarTag | None = None) -> "Grid":
        """New grid with the same geometry but different values."""
        return Grid(values, self.cell_size, self.tag if tag is None else tag)


def aggregate(fine: Grid, factor: int) -> Grid:
    """Coarsen a grid by block-averaging factor x factor cells.

    Numeric variables use the arithmetic block mean; LC uses the modal
    class with ties broken by the smallest class id.  The coarse cell
    size is fine.cell_size * factor.
    """
    if factor < 1:
        raise DomainError(f"aggregation factor must be >= 1, got {factor}")
    r, c = fine.values.shape
    if r % factor or c % factor:
        raise DimensionError(
            f"factor {factor} does not divide grid dimensions {r}x{c}"
        )
    blocks = fine.values.reshape(r // factor, factor, c // factor, factor)
    if fine.tag is VarTag.LC:
        out = _majority(blocks.transpose(0, 2, 1, 3).reshape(-1, factor * factor))
        out = out.reshape(r // factor, c // factor)
    else:
        out = blocks.mean(axis=(1, 3))
        # constant blocks must survive the round trip bit-exactly
        bmin = blocks.min(axis=(1, 3))
        bmax = blocks.max(axis=(1, 3))
        out = np.where(bmin == bmax, bmax, out)
    return Grid(out, fine.cell_size * factor, fine.tag)


def _majority(rows: np.ndarray) -> np.ndarray:
    """Modal value per row; ties go to the smallest value."""
    classes = np.unique(rows)
    counts = np.stack([(rows == cls).sum(axis=1) for cls in classes], axis=1)
    return classes[np.argmax(counts, axis=1)]


def replicate(coarse: Grid, factor: int) -> Grid:
    """Copy each coarse cell into its factor x factor fine block.

    Inverse of :func:`aggregate` on block-constant grids:
    ``aggregate(replicate(g, f), f) == g`` exactly.
    """
    if factor < 1:
        raise DomainError(f"replication factor must be >= 1, got {factor}")
    out = np.repeat(np.repeat(coarse.values, factor, axis=0), factor, axis=1)
    return Grid(out, coarse.cell_size / factor, coarse.tag)


def add_noise(g: Grid, sd: float, seed: int) -> Grid:
    """Add i.i.d. zero-mean Gaussian observation noise with deviation sd.

    Deterministic given seed.  SM outputs are clamped to [0, 1] and PPT
    to >= 0 to preserve physical ranges (clamping is this package's
    addition; upstream descriptions leave the ranges open).
    """
    if sd < 0:
        raise DomainError(f"noise sd must be >= 0, got {sd}")
    rng = np.random.default_rng(seed)
    out = g.values + rng.normal(0.0, sd, size=g.values.shape)
    if g.tag is VarTag.SM:
        out = np.clip(out, 0.0, 1.0)
    elif g.tag is VarTag.PPT:
        out = np.clip(out, 0.0, None)
    return g.like(out)


def write_grid(g: Grid, path) -> None:
    """Serialize to ASCII: header `rows cols cell_size tag`, then one line
    per row of 17-significant-digit values (bit-exact round trip)."""
    with open(path, "w") as fh:
        fh.write(f"{g.rows} {g.cols} {g.cell_size:.17g} {g.tag.value}\n")
        for row in g.values:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def _fmt(v: float) -> str:
    return "NaN" if np.isnan(v) else f"{v:.17g}"


def read_grid(path) -> Grid:
    """Parse a grid written by :func:`write_grid`."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise DataError(f"{path}: malformed grid header")
        try:
            rows, cols = int(header[0]), int(header[1])
            cell_size = float(header[2])
            tag = VarTag(header[3])
        except (ValueError, KeyError) as exc:
            raise DataError(f"{path}: bad grid header: {exc}") from exc
        values = np.empty((rows, cols))
        for i in range(rows):
            parts = fh.readline().split()
            if len(parts) != cols:
                raise DataError(f"{path}: row {i} has {len(parts)} values, expected {cols}")
            values[i] = [float(p) for p in parts]
    return Grid(values, cell_size, tag)
