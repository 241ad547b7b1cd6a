"""Test phantoms: small squares standing in for a delta, and discs."""

from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class WavefrontElement:
    """Covector (xi1, xi2) attached to the point (x1, x2)."""

    x1: float
    x2: float
    xi1: float
    xi2: float

    def __post_init__(self):
        if self.xi1 == 0 and self.xi2 == 0:
            raise DomainError("covector must be nonzero")

    @property
    def x(self):
        return (self.x1, self.x2)

    @property
    def xi(self):
        return (self.xi1, self.xi2)


@dataclass(frozen=True)
class PhantomSpec:
    kind: str  # "delta" or "disc"
    center: tuple
    size: float  # half-width for delta, radius for disc

    def __post_init__(self):
        if self.kind not in ("delta", "disc"):
            raise DomainError(f"unknown phantom kind {self.kind!r}")
        if self.size <= 0:
            raise DomainError("phantom size must be positive")

    @classmethod
    def delta(cls, cx, cy, half_width=0.015):
        return cls("delta", (float(cx), float(cy)), float(half_width))

    @classmethod
    def disc(cls, cx, cy, radius):
        return cls("disc", (float(cx), float(cy)), float(radius))

    def bounds(self):
        cx, cy = self.center
        return (cx - self.size, cx + self.size, cy - self.size, cy + self.size)

    def indicator(self, x1, x2):
        cx, cy = self.center
        if self.kind == "delta":
            return (np.abs(x1 - cx) <= self.size) & (np.abs(x2 - cy) <= self.size)
        return (x1 - cx) ** 2 + (x2 - cy) ** 2 < self.size**2


def parse_phantom(text, default_half_width=0.015):
    """"delta:cx,cy[,hw]" or "disc:cx,cy,r"."""
    kind, _, args = text.strip().partition(":")
    try:
        nums = [float(v) for v in args.split(",")] if args else []
    except ValueError:
        raise DomainError(f"bad phantom specification {text!r}") from None
    if kind == "delta" and len(nums) in (2, 3):
        return PhantomSpec.delta(*nums[:2], nums[2] if len(nums) == 3 else default_half_width)
    if kind == "disc" and len(nums) == 3:
        return PhantomSpec.disc(*nums)
    raise DomainError(f"bad phantom specification {text!r}")


def rasterize(spec, geom):
    """Binary image: 1 where the pixel centre lies in the phantom, else 0."""
    grid = geom.image()
    x1_min, x1_max, x2_min, x2_max = grid.extent
    lo1, hi1, lo2, hi2 = spec.bounds()
    if not (x1_min < lo1 and hi1 < x1_max and x2_min < lo2 and hi2 < x2_max and lo2 > 0):
        raise DomainError(f"phantom {spec} is not strictly inside the image extent")
    X1, X2 = grid.meshgrid()
    values = spec.indicator(X1, X2).astype(float)
    if not values.any():
        raise DomainError(f"phantom {spec} covers no pixel centre at this resolution")
    return grid.with_values(values)


def wavefront_samples(spec, n=720):
    """Disc: n boundary points with outward unit normals.  Delta: n unit covectors at the centre."""
    if n < 4:
        raise DomainError("need n >= 4")
    cx, cy = spec.center
    theta = 2.0 * math.pi * np.arange(n) / n
    c, s = np.cos(theta), np.sin(theta)
    # snap exact zeros so axis-aligned samples stay exactly horizontal/vertical
    c[np.abs(c) < 1e-15] = 0.0
    s[np.abs(s) < 1e-15] = 0.0
    if spec.kind == "disc":
        return [
            WavefrontElement(cx + spec.size * ci, cy + spec.size * si, ci, si)
            for ci, si in zip(c, s)
        ]
    return [WavefrontElement(cx, cy, ci, si) for ci, si in zip(c, s)]
