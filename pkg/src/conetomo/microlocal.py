"""Canonical-relation maps, visibility of singularities and artifact prediction.

Image covectors (x, xi) and data covectors (E, x0, eta, xi_d) are linked by
the coordinates (E, x0, r, omega, sigma) on the canonical relation:

    x  = (x0 + r*omega, E*q(r)),      xi   = (sigma*E*q'(r)*omega, -sigma)
    eta = -sigma*q(r),                xi_d = -sigma*E*q'(r)*omega

with omega in {-1, +1} selecting the branch.  When g = q'/q is not
injective, every r2 != r1 with g(r2) = g(r1) gives a second image covector
with the same data covector: a candidate reconstruction artifact.
"""

from dataclasses import dataclass
import enum
import math

import numpy as np

from .errors import DomainError, InvisibleCovectorError, OutOfRangeError
from .phantoms import WavefrontElement
from .profiles import LevelSetFinder, invert_g

DEFAULT_R_RANGE = (1e-3, 10.0)


@dataclass(frozen=True)
class DataCovector:
    E: float
    x0: float
    eta: float
    xi_d: float
    r: float
    omega: int
    sigma: float

    def __post_init__(self):
        if self.E <= 0:
            raise DomainError("E must be positive")
        if self.r <= 0:
            raise DomainError("r must be positive")
        if self.omega not in (-1, 1):
            raise DomainError("omega must be -1 or +1")
        if self.sigma == 0:
            raise DomainError("sigma must be nonzero")

    @classmethod
    def from_coordinates(cls, profile, E, x0, r, omega, sigma):
        q, dq, _ = profile.derivs(r)
        return cls(E, x0, -sigma * q, -sigma * E * dq * omega, r, int(omega), sigma)


class Visibility(enum.Enum):
    VISIBLE = "visible"
    INVISIBLE = "invisible"
    BOUNDARY = "boundary"

    def __bool__(self):
        return self is Visibility.VISIBLE


def _canonical_coords(w):
    """(omega, |xi1| / (x2 |xi2|), sigma) for a covector with both components nonzero."""
    if w.xi1 == 0 or w.xi2 == 0:
        kind = "vertical" if w.xi1 == 0 else "horizontal"
        raise InvisibleCovectorError(f"{kind} covector {w.xi} has no image in the data")
    if w.x2 <= 0:
        raise DomainError("base point must satisfy x2 > 0")
    omega = -1 if w.xi1 * w.xi2 > 0 else 1
    ratio = abs(w.xi1) / (w.x2 * abs(w.xi2))
    return omega, ratio, -w.xi2


def forward_wavefront_map(profile, w, r_range=DEFAULT_R_RANGE):
    """Data covector generated by the image covector ``w``."""
    omega, ratio, sigma = _canonical_coords(w)
    r = invert_g(profile, ratio, *r_range)
    q = profile.q(r)
    E = w.x2 / q
    x0 = w.x1 - r * omega
    return DataCovector.from_coordinates(profile, E, x0, r, omega, sigma)


def inverse_data_map(profile, d):
    """Image covector ((x0 + r*omega, E q(r)), (sigma E q'(r) omega, -sigma))."""
    q, dq, _ = profile.derivs(d.r)
    return WavefrontElement(
        d.x0 + d.r * d.omega, d.E * q, d.sigma * d.E * dq * d.omega, -d.sigma
    )


def recover_sigma(profile, d):
    return -d.eta / profile.q(d.r)


def _boundary_close(a, b):
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def visibility_test(profile, geom, w, r_range=None):
    """Visible iff the data covector of ``w`` lands in the open data rectangle.

    Points whose (E, x0) sit on the rectangle's edge are reported as
    BOUNDARY: no statement is made about them.
    """
    r_range = r_range or geom.r_range()
    try:
        omega, ratio, _ = _canonical_coords(w)
    except InvisibleCovectorError:
        return Visibility.INVISIBLE
    try:
        r = invert_g(profile, ratio, *r_range)
    except OutOfRangeError:
        return Visibility.INVISIBLE
    E = w.x2 / profile.q(r)
    x0 = w.x1 - r * omega
    if any(_boundary_close(E, v) for v in (geom.a, geom.b)) or any(
        _boundary_close(x0, v) for v in (-geom.c, geom.c)
    ):
        return Visibility.BOUNDARY
    if geom.a < E < geom.b and -geom.c < x0 < geom.c:
        return Visibility.VISIBLE
    return Visibility.INVISIBLE


def coverage_map(profile, geom, x, n_angles=360):
    """Visibility of covector directions theta in [0, pi) at the point ``x``.

    Returns a list of ``(theta, state)``; theta and theta + pi are the same
    direction for visibility purposes.
    """
    if x[1] <= 0:
        raise DomainError("coverage needs x2 > 0")
    out = []
    for k in range(n_angles):
        theta = math.pi * k / n_angles
        c, s = math.cos(theta), math.sin(theta)
        # exact axis directions, free of cos(pi/2) roundoff
        if abs(c) < 1e-15:
            c = 0.0
        if abs(s) < 1e-15:
            s = 0.0
        out.append((theta, visibility_test(profile, geom, WavefrontElement(x[0], x[1], c, s))))
    return out


def visible_measure(coverage):
    """Angular measure (radians, out of pi) of the visible directions."""
    if not coverage:
        return 0.0
    n = len(coverage)
    return math.pi * sum(1 for _, state in coverage if state is Visibility.VISIBLE) / n


@dataclass(frozen=True)
class ArtifactPoint:
    x1: float
    x2: float
    xi1: float
    xi2: float
    amplitude: float
    r1: float
    r2: float
    E: float
    x0: float


@dataclass
class ArtifactPrediction:
    sources: list
    points: list
    mask: object

    def __len__(self):
        return len(self.points)

    @property
    def empty(self):
        return not self.points


def artifact_amplitude(profile, r1, r2):
    """sigma2 for sigma1 = 1: ratio of sqrt(q^2 + q'^2) at r1 and at r2."""
    q1, d1, _ = profile.derivs(r1)
    q2, d2, _ = profile.derivs(r2)
    return math.sqrt(q1**2 + d1**2) / math.sqrt(q2**2 + d2**2)


def _artifacts_for_curve(profile, E, x0, omega, sigma1, r1, level):
    out = []
    for r2 in level:
        if r2 == r1:
            continue
        q2, d2, _ = profile.derivs(r2)
        sigma2 = sigma1 * artifact_amplitude(profile, r1, r2)
        out.append(
            ArtifactPoint(
                x0 + omega * r2, E * q2, sigma2 * omega * E * d2, -sigma2,
                sigma2 / sigma1, r1, r2, E, x0,
            )
        )
    return out


def predict_artifacts(profile, geom, wavefront, x0_samples=2001, r_range=None, n_samples=20000):
    """Predicted artifact covectors for image singularities.

    ``wavefront`` is either a list of WavefrontElement or a point ``(p1, p2)``
    standing for a point source singular in every direction.  For a point
    source every curve (E, x0) through it is swept, x0 over ``x0_samples``
    values of [-c, c].  Curves whose E falls outside (a, b) are skipped.
    Returns an :class:`ArtifactPrediction` with a binary mask over the
    geometry's image grid.
    """
    r_min, r_max = r_range or geom.r_range()
    finder = LevelSetFinder(profile, r_min, r_max, n_samples)
    grid = geom.image()
    points = []

    if isinstance(wavefront, tuple) and len(wavefront) == 2 and not isinstance(wavefront[0], WavefrontElement):
        p1, p2 = (float(v) for v in wavefront)
        sources = [(p1, p2)]
        x0s = np.linspace(-geom.c, geom.c, x0_samples)
        r1s = np.abs(p1 - x0s)
        ok = (r1s >= r_min) & (r1s <= r_max)
        x0s, r1s = x0s[ok], r1s[ok]
        E = p2 / profile.q(r1s)
        ok = (E > geom.a) & (E < geom.b)
        x0s, r1s, E = x0s[ok], r1s[ok], E[ok]
        levels = finder.many(r1s)
        for x0, r1, Ei, level in zip(x0s, r1s, E, levels):
            omega = 1 if p1 - x0 > 0 else -1
            points.extend(_artifacts_for_curve(profile, Ei, x0, omega, 1.0, r1, level))
    else:
        sources = list(wavefront)
        for w in sources:
            try:
                omega, ratio, sigma1 = _canonical_coords(w)
            except InvisibleCovectorError:
                continue
            # every r with g(r) = ratio is a curve through x normal to xi
            roots = _g_roots(profile, finder, ratio)
            for r1 in roots:
                E = w.x2 / profile.q(r1)
                if not geom.a < E < geom.b:
                    continue
                x0 = w.x1 - r1 * omega
                points.extend(_artifacts_for_curve(profile, E, x0, omega, sigma1, r1, roots))

    mask = rasterize_points(grid, [(p.x1, p.x2) for p in points])
    return ArtifactPrediction(sources, points, mask)


def _g_roots(profile, finder, value):
    from ._roots import bisect

    diff = finder.gv - value
    idx = np.flatnonzero((diff[:-1] * diff[1:] < 0) | (diff[:-1] == 0))
    if idx.size == 0:
        return []
    roots = bisect(lambda t: profile.g(t) - value, finder.r[idx], finder.r[idx + 1], xtol=1e-12, rtol=1e-14)
    return sorted(set(float(v) for v in roots))


def rasterize_points(grid, pts):
    """Binary mask of pixels containing at least one of the points."""
    mask = np.zeros((grid.ny, grid.nx))
    if pts:
        arr = np.asarray(pts, dtype=float)
        inside = grid.contains(arr[:, 0], arr[:, 1])
        ix, iy = grid.index_of(arr[inside, 0], arr[inside, 1])
        ix = np.clip(ix, 0, grid.nx - 1)
        iy = np.clip(iy, 0, grid.ny - 1)
        mask[iy, ix] = 1.0
    return grid.with_values(mask)


def dilate(mask, pixels=1):
    """Grow the mask by ``pixels`` in the max-norm (3x3 structuring element)."""
    from scipy.ndimage import binary_dilation

    square = np.ones((3, 3), dtype=bool)
    out = mask.values > 0
    if pixels > 0:
        out = binary_dilation(out, structure=square, iterations=pixels)
    return mask.with_values(out.astype(float))


def colocation_fraction(image, mask, top=200, dilation=2):
    """Fraction of the ``top`` largest-|value| pixels within ``dilation`` pixels of the mask."""
    vals = np.abs(image.values).ravel()
    order = np.argsort(-vals, kind="stable")[:top]
    near = dilate(mask, dilation).values.ravel() > 0
    return float(np.mean(near[order]))
