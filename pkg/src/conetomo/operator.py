"""Sparse discretisation of the two-branch generalized cone transform.

Each sinogram bin (E, x0) integrates the image over both branches
x2 = E*q(r), x1 = x0 -/+ r of its broken-ray curve, in arc length.  The arc
length element is written in x1 as sqrt(1 + E^2 q'(r)^2) dx1, and the line
integral is discretised by a composite midpoint rule whose samples are
splatted onto the four surrounding pixels with bilinear weights.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np
import scipy.sparse as sp

from ._roots import bisect
from .errors import DimensionMismatchError, DomainError, GridFormatError
from .grids import ImageGrid, Sinogram, bilinear_weights, fingerprint

# upper bound on quadrature nodes handled per assembly chunk
_CHUNK_NODES = 1_500_000
_MATRIX_MAGIC = "CRMATRIX 1"


@dataclass(frozen=True)
class SystemMatrix:
    """Rows are sinogram bins (iE * nx0 + ix0), columns are pixels (iy * nx + ix)."""

    matrix: sp.csr_matrix
    profile: object
    geom: object
    fingerprint: str

    @property
    def shape(self):
        return self.matrix.shape

    def forward(self, f):
        return forward(self, f)

    def adjoint(self, s):
        return adjoint(self, s)


def _q_is_increasing(profile, r_max):
    r = np.linspace(0.0, r_max, 4097)
    return bool(np.all(np.diff(profile.q(r)) > 0))


def _invert_q(profile, y, r_max):
    """Smallest r in [0, r_max] with q(r) = y for increasing q; r_max if y >= q(r_max)."""
    y = np.asarray(y, dtype=float)
    out = np.full(y.shape, r_max)
    inside = y < profile.q(r_max)
    out[y <= 0] = 0.0
    sel = inside & (y > 0)
    if np.any(sel):
        tgt = y[sel]
        out[sel] = bisect(
            lambda t: profile.q(t) - tgt,
            np.zeros(tgt.size),
            np.full(tgt.size, r_max),
            xtol=1e-15,
            rtol=1e-15,
        )
    return out


def _branch_intervals(profile, geom, E, x0, omega, monotone, r_max):
    """Radius interval [r_lo, r_hi] of the branch inside the image box."""
    x1_min, x1_max, x2_min, x2_max = geom.image_extent
    if omega > 0:
        r_lo, r_hi = x1_min - x0, x1_max - x0
    else:
        r_lo, r_hi = x0 - x1_max, x0 - x1_min
    r_lo = np.maximum(r_lo, 0.0)
    r_hi = np.minimum(r_hi, r_max)
    if monotone:
        r_lo = np.maximum(r_lo, _invert_q(profile, x2_min / E, r_max))
        r_hi = np.minimum(r_hi, _invert_q(profile, x2_max / E, r_max))
    return r_lo, r_hi


def _assemble_chunk(profile, geom, grid, rows, E, x0, omega, r_lo, r_hi, h, monotone):
    """COO triplets for one block of (row, branch) curve pieces."""
    length = r_hi - r_lo
    n = np.where(length > 0, np.ceil(length / h - 1e-12).astype(np.int64), 0)
    n = np.maximum(n, (length > 0).astype(np.int64))
    total = int(n.sum())
    if total == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    piece = np.repeat(np.arange(rows.size), n)
    start = np.cumsum(n) - n
    k = np.arange(total) - np.repeat(start, n)
    step = np.where(n > 0, length / np.maximum(n, 1), 0.0)[piece]
    r = r_lo[piece] + (k + 0.5) * step
    Ep = E[piece]
    # amplitude frozen below h/2 keeps the weight finite near the vertex
    dq = profile.dq(np.maximum(r, 0.5 * h))
    weight = step * np.sqrt(1.0 + (Ep * dq) ** 2)
    x1 = x0[piece] + omega[piece] * r
    x2 = Ep * profile.q(r)
    inside = grid.contains(x1, x2) if not monotone else np.ones(total, dtype=bool)
    idx, w = bilinear_weights(grid, x1[inside], x2[inside])
    coo_rows = np.repeat(rows[piece][inside], 4)
    coo_cols = idx.ravel()
    coo_vals = (w * weight[inside][:, None]).ravel()
    keep = coo_vals != 0
    return coo_rows[keep], coo_cols[keep], coo_vals[keep]


def build_system_matrix(profile, geom, threads=1):
    """Assemble the sparse forward operator for ``profile`` on ``geom``.

    Rows are processed in fixed blocks and concatenated in order, so the
    result is bit-identical for any thread count.
    """
    grid = geom.image()
    sino = geom.sinogram()
    h = geom.quad_step
    _, r_max = geom.r_range()
    monotone = _q_is_increasing(profile, r_max)

    E_c = sino.E_centers()
    x0_c = sino.x0_centers()
    EE, XX = np.meshgrid(E_c, x0_c, indexing="ij")
    row_ids = np.arange(EE.size)
    E_all = np.concatenate([EE.ravel(), EE.ravel()])
    x0_all = np.concatenate([XX.ravel(), XX.ravel()])
    om_all = np.concatenate([np.full(EE.size, -1.0), np.full(EE.size, 1.0)])
    rows_all = np.concatenate([row_ids, row_ids])
    # order pieces by row so chunks cover contiguous row ranges
    order = np.argsort(rows_all, kind="stable")
    E_all, x0_all, om_all, rows_all = E_all[order], x0_all[order], om_all[order], rows_all[order]

    lo_m, hi_m = _branch_intervals(profile, geom, E_all, x0_all, -1.0, monotone, r_max)
    lo_p, hi_p = _branch_intervals(profile, geom, E_all, x0_all, 1.0, monotone, r_max)
    r_lo = np.where(om_all > 0, lo_p, lo_m)
    r_hi = np.where(om_all > 0, hi_p, hi_m)

    # chunk boundaries fall on even piece indices, i.e. between whole rows
    est_nodes = np.ceil(np.clip(r_hi - r_lo, 0, None) / h) + 1
    per_row = est_nodes[0::2] + est_nodes[1::2]
    cum = np.cumsum(per_row)
    cuts = np.searchsorted(cum, np.arange(_CHUNK_NODES, cum[-1], _CHUNK_NODES))
    row_bounds = np.unique(np.concatenate([[0], cuts + 1, [per_row.size]]))
    row_bounds = row_bounds[row_bounds <= per_row.size]
    spans = [(int(a), int(b)) for a, b in zip(row_bounds[:-1], row_bounds[1:]) if b > a]
    n_cols = grid.nx * grid.ny

    def work(span):
        ra, rb = span
        a, b = 2 * ra, 2 * rb
        rr, cc, vv = _assemble_chunk(
            profile, geom, grid, rows_all[a:b], E_all[a:b], x0_all[a:b],
            om_all[a:b], r_lo[a:b], r_hi[a:b], h, monotone,
        )
        return sp.coo_matrix((vv, (rr - ra, cc)), shape=(rb - ra, n_cols)).tocsr()

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(work, spans))
    else:
        blocks = [work(span) for span in spans]
    mat = sp.vstack(blocks, format="csr")
    mat.sum_duplicates()
    mat.sort_indices()
    return SystemMatrix(mat, profile, geom, fingerprint(profile, geom))


def _check_image(M, f):
    g = M.geom
    if not isinstance(f, ImageGrid) or (f.nx, f.ny) != (g.nx, g.ny):
        raise DimensionMismatchError("image does not match the operator geometry")


def _check_sino(M, s):
    g = M.geom
    if not isinstance(s, Sinogram) or (s.nE, s.nx0) != (g.nE, g.nx0):
        raise DimensionMismatchError("sinogram does not match the operator geometry")


def forward(M, f):
    _check_image(M, f)
    return M.geom.sinogram(M.matrix @ f.flat())


def adjoint(M, s):
    _check_sino(M, s)
    return M.geom.image(M.matrix.T @ s.flat())


def operator_norm(M, iters=50, seed=None, history=False):
    """Largest singular value by power iteration on M^T M.

    The returned estimate is sqrt of the Rayleigh quotient of the last
    iterate; for a PSD matrix these quotients never decrease.
    """
    if iters < 10:
        raise DomainError("operator_norm needs iters >= 10")
    A = M.matrix if isinstance(M, SystemMatrix) else sp.csr_matrix(M)
    n = A.shape[1]
    if seed is None:
        x = np.ones(n)
    else:
        x = np.random.default_rng(seed).random(n) + 0.5
    est = []
    lam = 0.0
    for _ in range(iters):
        y = A @ x
        xx = float(x @ x)
        lam = float(y @ y) / xx if xx > 0 else 0.0
        est.append(math.sqrt(lam))
        z = A.T @ y
        nz = float(np.linalg.norm(z))
        if nz == 0:
            break
        x = z / nz
    result = math.sqrt(lam)
    return (result, est) if history else result


def save_matrix(M, path):
    A = M.matrix
    header = "\n".join(
        [
            _MATRIX_MAGIC,
            f"fingerprint {M.fingerprint}",
            f"shape {A.shape[0]} {A.shape[1]} {A.nnz}",
            "csr indptr:int64 indices:int64 data:float64 le",
        ]
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(A.indptr.astype("<i8").tobytes())
        fh.write(A.indices.astype("<i8").tobytes())
        fh.write(A.data.astype("<f8").tobytes())


def load_matrix(path, profile, geom):
    """Load a cached operator; the fingerprint must match (profile, geom)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 4)
    if len(parts) < 5 or parts[0].decode("ascii", "replace") != _MATRIX_MAGIC:
        raise GridFormatError(f"{path}: not a matrix cache")
    fp = parts[1].decode("ascii").split()[-1]
    expected = fingerprint(profile, geom)
    if fp != expected:
        raise GridFormatError(f"{path}: fingerprint {fp} does not match {expected}")
    _, n_rows, n_cols, nnz = parts[2].decode("ascii").split()
    n_rows, n_cols, nnz = int(n_rows), int(n_cols), int(nnz)
    payload = parts[4]
    need = 8 * (n_rows + 1) + 16 * nnz
    if len(payload) != need:
        raise GridFormatError(f"{path}: payload size mismatch")
    indptr = np.frombuffer(payload, "<i8", n_rows + 1)
    indices = np.frombuffer(payload, "<i8", nnz, offset=8 * (n_rows + 1))
    data = np.frombuffer(payload, "<f8", nnz, offset=8 * (n_rows + 1 + nnz))
    mat = sp.csr_matrix((data.copy(), indices.copy(), indptr.copy()), shape=(n_rows, n_cols))
    return SystemMatrix(mat, profile, geom, fp)
