"""Uniform cell-centred grids, scan geometry and on-disk formats.

CRGRID layout (ASCII header, then raw payload)::

    CRGRID 1
    image                      (or: sinogram)
    nx ny                      (sinogram: nE nx0)
    x1_min x1_max x2_min x2_max   (sinogram: E_min E_max x0_min x0_max)
    float64 le row-major
    <little-endian float64 values, slow axis first>

Image values are stored with x1 fastest (array shape ``(ny, nx)``); sinogram
values with x0 fastest (array shape ``(nE, nx0)``).
"""

from dataclasses import dataclass, field, replace
import hashlib
import re

import numpy as np

from .errors import DimensionMismatchError, DomainError, GridFormatError

MAGIC = "CRGRID 1"
DTYPE_LINE = "float64 le row-major"


def _centers(lo, hi, n):
    return lo + (np.arange(n) + 0.5) * (hi - lo) / n


@dataclass
class ImageGrid:
    """Scalar field on image space; values[iy, ix] at pixel centres."""

    nx: int
    ny: int
    extent: tuple
    values: np.ndarray = field(repr=False)
    half_space: bool = True

    def __post_init__(self):
        self.extent = tuple(float(v) for v in self.extent)
        x1_min, x1_max, x2_min, x2_max = self.extent
        if self.nx < 1 or self.ny < 1:
            raise DomainError("grid dimensions must be positive")
        if not (x1_min < x1_max and x2_min < x2_max):
            raise DomainError(f"degenerate extent {self.extent}")
        if self.half_space and x2_min < 0:
            raise DomainError("image grids live in the half-plane x2 >= 0")
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.ny, self.nx):
            raise DimensionMismatchError(
                f"values shape {self.values.shape} != (ny, nx) = {(self.ny, self.nx)}"
            )

    @classmethod
    def zeros(cls, nx, ny, extent, half_space=True):
        return cls(nx, ny, extent, np.zeros((ny, nx)), half_space)

    def with_values(self, values):
        return replace(self, values=np.asarray(values, dtype=np.float64).reshape(self.ny, self.nx))

    @property
    def dx1(self):
        return (self.extent[1] - self.extent[0]) / self.nx

    @property
    def dx2(self):
        return (self.extent[3] - self.extent[2]) / self.ny

    def x1_centers(self):
        return _centers(self.extent[0], self.extent[1], self.nx)

    def x2_centers(self):
        return _centers(self.extent[2], self.extent[3], self.ny)

    def meshgrid(self):
        """(X1, X2) arrays of pixel-centre coordinates, shape (ny, nx)."""
        return np.meshgrid(self.x1_centers(), self.x2_centers())

    def center_of(self, ix, iy):
        return (
            self.extent[0] + (np.asarray(ix) + 0.5) * self.dx1,
            self.extent[2] + (np.asarray(iy) + 0.5) * self.dx2,
        )

    def index_of(self, x1, x2):
        """Pixel (ix, iy) containing the point; inverse of :meth:`center_of`."""
        ix = np.floor((np.asarray(x1) - self.extent[0]) / self.dx1).astype(int)
        iy = np.floor((np.asarray(x2) - self.extent[2]) / self.dx2).astype(int)
        return ix, iy

    def contains(self, x1, x2):
        x1_min, x1_max, x2_min, x2_max = self.extent
        x1, x2 = np.asarray(x1), np.asarray(x2)
        return (x1 >= x1_min) & (x1 <= x1_max) & (x2 >= x2_min) & (x2 <= x2_max)

    def flat(self):
        return self.values.ravel()


@dataclass
class Sinogram:
    """Data on (E, x0); values[iE, ix0] at bin centres, E_min > 0."""

    nE: int
    nx0: int
    extent: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.extent = tuple(float(v) for v in self.extent)
        e_min, e_max, x0_min, x0_max = self.extent
        if self.nE < 1 or self.nx0 < 1:
            raise DomainError("grid dimensions must be positive")
        if not (0 < e_min < e_max and x0_min < x0_max):
            raise DomainError(f"invalid sinogram extent {self.extent}")
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.nE, self.nx0):
            raise DimensionMismatchError(
                f"values shape {self.values.shape} != (nE, nx0) = {(self.nE, self.nx0)}"
            )

    @classmethod
    def zeros(cls, nE, nx0, extent):
        return cls(nE, nx0, extent, np.zeros((nE, nx0)))

    def with_values(self, values):
        return replace(self, values=np.asarray(values, dtype=np.float64).reshape(self.nE, self.nx0))

    @property
    def dE(self):
        return (self.extent[1] - self.extent[0]) / self.nE

    @property
    def dx0(self):
        return (self.extent[3] - self.extent[2]) / self.nx0

    def E_centers(self):
        return _centers(self.extent[0], self.extent[1], self.nE)

    def x0_centers(self):
        return _centers(self.extent[2], self.extent[3], self.nx0)

    def flat(self):
        return self.values.ravel()


@dataclass(frozen=True)
class ScanGeometry:
    """Data rectangle A = [a, b] x [-c, c] in (E, x0) plus discretisation.

    ``h_q`` is the curve quadrature step; ``None`` means half the pixel width.
    """

    a: float
    b: float
    c: float
    image_extent: tuple = (-1.0, 1.0, 0.0, 2.0)
    nx: int = 128
    ny: int = 128
    nE: int = 128
    nx0: int = 256
    h_q: float = None

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise DomainError("need 0 < a < b")
        if self.c <= 0:
            raise DomainError("need c > 0")
        object.__setattr__(self, "image_extent", tuple(float(v) for v in self.image_extent))
        x1_min, x1_max, x2_min, x2_max = self.image_extent
        if not (x1_min < x1_max and 0 <= x2_min < x2_max):
            raise DomainError("image extent needs x1_min < x1_max and 0 <= x2_min < x2_max")
        if min(self.nx, self.ny, self.nE, self.nx0) < 1:
            raise DomainError("resolutions must be positive")
        if self.h_q is not None and self.h_q <= 0:
            raise DomainError("h_q must be positive")

    @property
    def quad_step(self):
        if self.h_q is not None:
            return float(self.h_q)
        return 0.5 * (self.image_extent[1] - self.image_extent[0]) / self.nx

    @property
    def sinogram_extent(self):
        return (self.a, self.b, -self.c, self.c)

    def image(self, values=None):
        if values is None:
            return ImageGrid.zeros(self.nx, self.ny, self.image_extent)
        return ImageGrid(self.nx, self.ny, self.image_extent, np.reshape(values, (self.ny, self.nx)))

    def sinogram(self, values=None):
        if values is None:
            return Sinogram.zeros(self.nE, self.nx0, self.sinogram_extent)
        return Sinogram(self.nE, self.nx0, self.sinogram_extent, np.reshape(values, (self.nE, self.nx0)))

    def r_range(self):
        """Window of curve radii |x1 - x0| that can meet the image.

        The lower end is a small fraction of the upper end; the vertex
        itself is never on a curve.
        """
        x1_min, x1_max = self.image_extent[:2]
        r_max = max(x1_max + self.c, self.c - x1_min)
        return (1e-3 * r_max, r_max)

    def with_resolution(self, nx, ny, nE, nx0):
        return replace(self, nx=nx, ny=ny, nE=nE, nx0=nx0)

    def fingerprint_text(self):
        ext = " ".join(repr(v) for v in self.image_extent)
        return (
            f"a={self.a!r} b={self.b!r} c={self.c!r} image=({ext}) "
            f"nx={self.nx} ny={self.ny} nE={self.nE} nx0={self.nx0} h_q={self.quad_step!r}"
        )


def fingerprint(profile, geom):
    text = f"{profile!r}|{geom.fingerprint_text()}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# -- CRGRID I/O -----------------------------------------------------------


def write_grid(grid, path):
    if isinstance(grid, ImageGrid):
        kind, dims = "image", f"{grid.nx} {grid.ny}"
    elif isinstance(grid, Sinogram):
        kind, dims = "sinogram", f"{grid.nE} {grid.nx0}"
    else:
        raise TypeError(f"cannot write {type(grid).__name__}")
    header = "\n".join(
        [MAGIC, kind, dims, " ".join(repr(float(v)) for v in grid.extent), DTYPE_LINE]
    )
    payload = np.ascontiguousarray(grid.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(payload)


def read_grid(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 5)
    if len(parts) < 6:
        raise GridFormatError(f"{path}: truncated header")
    try:
        lines = [p.decode("ascii").strip() for p in parts[:5]]
    except UnicodeDecodeError:
        raise GridFormatError(f"{path}: header is not ASCII") from None
    magic, kind, dims, extent, dtype = lines
    if magic != MAGIC:
        raise GridFormatError(f"{path}: bad magic {magic!r}")
    if dtype != DTYPE_LINE:
        raise GridFormatError(f"{path}: unsupported payload type {dtype!r}")
    try:
        n_a, n_b = (int(v) for v in dims.split())
        ext = tuple(float(v) for v in extent.split())
    except ValueError:
        raise GridFormatError(f"{path}: malformed dims/extent") from None
    if len(ext) != 4 or n_a < 1 or n_b < 1:
        raise GridFormatError(f"{path}: malformed dims/extent")
    payload = parts[5]
    if len(payload) != 8 * n_a * n_b:
        raise GridFormatError(
            f"{path}: payload has {len(payload)} bytes, expected {8 * n_a * n_b}"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    try:
        if kind == "image":
            return ImageGrid(n_a, n_b, ext, values.reshape(n_b, n_a), half_space=ext[2] >= 0)
        if kind == "sinogram":
            return Sinogram(n_a, n_b, ext, values.reshape(n_a, n_b))
    except DomainError as exc:
        raise GridFormatError(f"{path}: {exc}") from None
    raise GridFormatError(f"{path}: unknown grid kind {kind!r}")


def export_csv(grid, path):
    """One CSV row per grid row (slow axis), exact float repr."""
    np.savetxt(path, grid.values, delimiter=",", fmt="%.17g")


def export_pgm(grid, path, clip=None, flip=True):
    """16-bit binary PGM (P5, big-endian samples).

    Values are mapped linearly from ``clip`` (default: data min/max) onto
    0..65535 and clipped outside.  With ``flip`` the last grid row is
    written first, so x2 (or E) increases upwards in image viewers.
    """
    v = np.asarray(grid.values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("cannot export non-finite values")
    lo, hi = (float(v.min()), float(v.max())) if clip is None else map(float, clip)
    if hi == lo:
        out = np.full(v.shape, 32768, dtype=np.uint16)
    else:
        scaled = np.clip((v - lo) / (hi - lo), 0.0, 1.0)
        out = np.rint(scaled * 65535.0).astype(np.uint16)
    if flip:
        out = out[::-1]
    h, w = out.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(out.astype(">u2").tobytes())


def read_pgm(path):
    """Read back a 16-bit P5 file written by :func:`export_pgm` (rows as stored)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", blob)
    if m is None:
        raise GridFormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(v) for v in m.groups())
    data = blob[m.end():]
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(data, dtype=dtype, count=w * h).reshape(h, w)


def bilinear_weights(grid, x1, x2):
    """Cell-centred bilinear stencil for points inside the grid extent.

    Returns ``(flat_index, weight)`` arrays of shape ``(n, 4)``.  Points
    between the outermost pixel centres and the extent boundary use
    clamped indices, so the weights of every point sum to one.
    """
    fx = (np.asarray(x1, dtype=float) - grid.extent[0]) / grid.dx1 - 0.5
    fy = (np.asarray(x2, dtype=float) - grid.extent[2]) / grid.dx2 - 0.5
    ix0 = np.floor(fx)
    iy0 = np.floor(fy)
    tx = fx - ix0
    ty = fy - iy0
    ix0 = ix0.astype(np.int64)
    iy0 = iy0.astype(np.int64)
    ix1 = np.clip(ix0 + 1, 0, grid.nx - 1)
    iy1 = np.clip(iy0 + 1, 0, grid.ny - 1)
    ix0 = np.clip(ix0, 0, grid.nx - 1)
    iy0 = np.clip(iy0, 0, grid.ny - 1)
    idx = np.stack(
        [iy0 * grid.nx + ix0, iy0 * grid.nx + ix1, iy1 * grid.nx + ix0, iy1 * grid.nx + ix1],
        axis=-1,
    )
    w = np.stack(
        [(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty],
        axis=-1,
    )
    return idx, w

