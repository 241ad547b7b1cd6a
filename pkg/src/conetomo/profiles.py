"""Curve profiles q(r) and the scalar analysis built on them.

A profile q generates the integration curves x2 = E * q(|x1 - x0|).  The
quotient g = q'/q governs the microlocal behaviour of the transform: the
Bolker condition holds exactly when g' never vanishes, and pairs r1 != r2
with g(r1) = g(r2) produce reconstruction artifacts.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from ._roots import bisect, sign_change_brackets
from .errors import (
    BolkerViolationError,
    DomainError,
    OutOfRangeError,
    ProfileInvalidError,
    SingularityError,
)

MONOMIAL = "monomial"
BRAGG = "bragg"
SINUSOID = "sinusoid"
BRAGG_OFFSET = "bragg-offset"
TABULATED = "tabulated"

DEFAULT_FD_STEP = 1e-4
# relative threshold below which a sampled |g'| is treated as a zero candidate
ZERO_REL_TOL = 1e-9
ZERO_XTOL = 1e-10


def bragg_offset_q(x1, x2):
    """Bragg curve for a scanned line profile offset to ``x2`` in (-1, 1).

    Even in ``x1``; reduces to x1 / sqrt(x1^2 + 1) at ``x2 = 0``.
    """
    x2 = float(x2)
    if not -1.0 < x2 < 1.0:
        raise DomainError(f"offset x2 must lie in (-1, 1), got {x2}")
    x1 = np.asarray(x1, dtype=float)
    num = x1**2 - (1.0 - x2**2)
    den = np.sqrt(x1**2 + (x2 + 1.0) ** 2) * np.sqrt(x1**2 + (1.0 - x2) ** 2)
    # clip guards the x1 = 0 cancellation against tiny negative roundoff
    out = np.sqrt(np.clip(1.0 + num / den, 0.0, None)) / math.sqrt(2.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CurveProfile:
    """Generator q of the integration curves.

    Build instances with the classmethod constructors (``compton()``,
    ``bragg()``, ``monomial(alpha)``, ...) or :func:`parse_profile`.
    ``param`` holds alpha, epsilon or the Bragg offset depending on family.
    """

    family: str
    param: float = 0.0
    fd_step: float = DEFAULT_FD_STEP
    knots: tuple = field(default=(), repr=False)
    samples: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.fd_step <= 0:
            raise DomainError("fd_step must be positive")
        if self.family == MONOMIAL and self.param <= 0:
            raise DomainError("monomial exponent must be positive")
        # q may still dip below zero for eps in (-1, 0); check_bolker reports that
        if self.family == SINUSOID and self.param <= -1.0:
            raise DomainError("sinusoid epsilon must exceed -1")
        if self.family == BRAGG_OFFSET and not -1.0 < self.param < 1.0:
            raise DomainError("bragg offset must lie in (-1, 1)")
        if self.family == TABULATED:
            k = np.asarray(self.knots, dtype=float)
            s = np.asarray(self.samples, dtype=float)
            if k.shape != s.shape or k.size < 2:
                raise DomainError("tabulated profile needs matching knots and samples")
            if np.any(np.diff(k) <= 0) or k[0] < 0:
                raise DomainError("knots must be nonnegative and strictly increasing")
            if np.any(s[k > 0] <= 0) or (k[0] == 0 and s[0] != 0):
                raise DomainError("samples must be positive for r > 0 and zero at r = 0")
        elif self.family not in (MONOMIAL, BRAGG, SINUSOID, BRAGG_OFFSET):
            raise DomainError(f"unknown profile family {self.family!r}")

    # -- constructors -----------------------------------------------------

    @classmethod
    def monomial(cls, alpha):
        return cls(MONOMIAL, float(alpha))

    @classmethod
    def compton(cls):
        """Straight broken rays, q(r) = r."""
        return cls.monomial(1.0)

    @classmethod
    def bragg(cls):
        return cls(BRAGG)

    @classmethod
    def sinusoid(cls, eps):
        return cls(SINUSOID, float(eps))

    @classmethod
    def bragg_offset(cls, x2, fd_step=DEFAULT_FD_STEP):
        return cls(BRAGG_OFFSET, float(x2), fd_step=fd_step)

    @classmethod
    def tabulated(cls, knots, samples, fd_step=DEFAULT_FD_STEP):
        knots = [float(v) for v in knots]
        samples = [float(v) for v in samples]
        if knots and knots[0] > 0:
            knots.insert(0, 0.0)
            samples.insert(0, 0.0)
        return cls(TABULATED, 0.0, fd_step=fd_step, knots=tuple(knots), samples=tuple(samples))

    @property
    def analytic(self):
        return self.family in (MONOMIAL, BRAGG, SINUSOID)

    @property
    def name(self):
        if self.family == MONOMIAL:
            return "compton" if self.param == 1.0 else f"monomial:{self.param!r}"
        if self.family in (SINUSOID, BRAGG_OFFSET):
            return f"{self.family}:{self.param!r}"
        return self.family

    # -- evaluation -------------------------------------------------------

    def _q_raw(self, r):
        if self.family == MONOMIAL:
            return np.abs(r) ** self.param
        if self.family == BRAGG:
            return r / np.sqrt(r**2 + 1.0)
        if self.family == SINUSOID:
            return (1.0 + self.param) * r + np.sin(r)
        if self.family == BRAGG_OFFSET:
            return bragg_offset_q(r, self.param)
        return self._interp()(r)

    def _interp(self):
        return _pchip(self.knots, self.samples)

    def q(self, r):
        """q(r) for r >= 0 (scalar or array)."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise DomainError("q is defined for r >= 0 only")
        out = np.asarray(self._q_raw(r), dtype=float)
        if self.family == TABULATED and np.any(r > self.knots[-1]):
            raise DomainError(f"r beyond last tabulated knot {self.knots[-1]}")
        return out if out.ndim else float(out)

    def derivs(self, r):
        """(q, q', q'') at r > 0.

        Closed forms for monomial, Bragg and sinusoid profiles; central
        differences with step ``fd_step`` otherwise.
        """
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise DomainError("derivatives are evaluated at r > 0 only")
        a = self.param
        if self.family == MONOMIAL:
            q = r**a
            d1 = a * r ** (a - 1.0)
            d2 = a * (a - 1.0) * r ** (a - 2.0)
        elif self.family == BRAGG:
            s = r**2 + 1.0
            q = r / np.sqrt(s)
            d1 = s**-1.5
            d2 = -3.0 * r * s**-2.5
        elif self.family == SINUSOID:
            q = (1.0 + a) * r + np.sin(r)
            d1 = (1.0 + a) + np.cos(r)
            d2 = -np.sin(r)
        else:
            h = self.fd_step
            q = np.asarray(self._q_raw(r), dtype=float)
            qp = np.asarray(self._q_raw(r + h), dtype=float)
            qm = np.asarray(self._q_raw(r - h), dtype=float)
            d1 = (qp - qm) / (2.0 * h)
            d2 = (qp - 2.0 * q + qm) / h**2
        return _unwrap(q), _unwrap(d1), _unwrap(d2)

    def dq(self, r):
        return self.derivs(r)[1]

    def g(self, r):
        """g = q'/q."""
        q, d1, _ = self.derivs(r)
        if np.any(np.asarray(q) == 0):
            raise SingularityError("q vanishes; g is undefined")
        return d1 / q

    def g_prime(self, r):
        """g' = q''/q - (q'/q)^2."""
        q, d1, d2 = self.derivs(r)
        if np.any(np.asarray(q) == 0):
            raise SingularityError("q vanishes; g' is undefined")
        return d2 / q - (d1 / q) ** 2


def _unwrap(a):
    a = np.asarray(a, dtype=float)
    return a if a.ndim else float(a)


@lru_cache(maxsize=64)
def _pchip(knots, samples):
    return PchipInterpolator(np.asarray(knots), np.asarray(samples), extrapolate=True)


def parse_profile(text):
    """Parse "compton", "bragg", "monomial:<a>", "sinusoid:<eps>", "bragg-offset:<x2>"."""
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    try:
        if name == "compton" and not arg:
            return CurveProfile.compton()
        if name == "bragg" and not arg:
            return CurveProfile.bragg()
        if name == "monomial":
            return CurveProfile.monomial(float(arg))
        if name == "sinusoid":
            return CurveProfile.sinusoid(float(arg))
        if name == "bragg-offset":
            return CurveProfile.bragg_offset(float(arg))
    except ValueError as exc:
        raise DomainError(f"bad profile argument in {text!r}: {exc}") from None
    raise DomainError(f"unknown profile specification {text!r}")


# -- module-level operations ----------------------------------------------


def eval_q(profile, r):
    return profile.q(r)


def eval_q_derivs(profile, r):
    return profile.derivs(r)


def eval_g(profile, r):
    return profile.g(r)


def eval_g_prime(profile, r):
    return profile.g_prime(r)


def left_projection_jacobian_det(profile, E, sigma, r):
    """Determinant of the left projection differential: sigma*E*(q q'' - q'^2)."""
    if E <= 0:
        raise DomainError("E must be positive")
    if sigma == 0:
        raise DomainError("sigma must be nonzero")
    q, d1, d2 = profile.derivs(r)
    return sigma * E * (q * d2 - d1**2)


@dataclass(frozen=True)
class BolkerReport:
    satisfied: bool
    r_range: tuple
    g_prime_zeros: tuple
    g_monotone: bool
    min_abs_g_prime: float
    g_positive: bool = True
    profile_name: str = ""

    def to_text(self):
        lines = [
            f"profile: {self.profile_name}",
            f"scan window: [{self.r_range[0]:g}, {self.r_range[1]:g}]",
            "Bolker condition: " + ("SATISFIED" if self.satisfied else "VIOLATED"),
            f"g strictly monotone: {'yes' if self.g_monotone else 'no'}",
            f"g positive on window: {'yes' if self.g_positive else 'no'}",
            f"min |g'| away from zeros: {self.min_abs_g_prime:.6e}",
            f"zeros of g' ({len(self.g_prime_zeros)}):",
        ]
        lines += [f"  r = {z:.12f}" for z in self.g_prime_zeros]
        return "\n".join(lines) + "\n"

    def to_keyvalue(self):
        zeros = ",".join(repr(float(z)) for z in self.g_prime_zeros)
        pairs = [
            ("profile", self.profile_name),
            ("satisfied", str(self.satisfied).lower()),
            ("r_min", repr(float(self.r_range[0]))),
            ("r_max", repr(float(self.r_range[1]))),
            ("g_monotone", str(self.g_monotone).lower()),
            ("g_positive", str(self.g_positive).lower()),
            ("min_abs_g_prime", repr(float(self.min_abs_g_prime))),
            ("n_zeros", str(len(self.g_prime_zeros))),
            ("zeros", zeros),
        ]
        return "".join(f"{k}={v}\n" for k, v in pairs)


def check_bolker(profile, r_min, r_max, n_samples=20000):
    """Scan g' on [r_min, r_max] for zeros and test g for strict monotonicity."""
    return _check_bolker_cached(profile, float(r_min), float(r_max), int(n_samples))


@lru_cache(maxsize=256)
def _check_bolker_cached(profile, r_min, r_max, n_samples):
    if not 0 < r_min < r_max:
        raise DomainError("need 0 < r_min < r_max")
    if n_samples < 100:
        raise DomainError("n_samples must be at least 100")
    r = np.linspace(r_min, r_max, n_samples)
    q = profile.q(r)
    if np.any(q <= 0) or not np.all(np.isfinite(q)):
        raise ProfileInvalidError(f"q is not strictly positive on [{r_min}, {r_max}]")
    gp = profile.g_prime(r)
    gv = profile.g(r)
    scale = float(np.max(np.abs(gp)))
    tol = ZERO_REL_TOL * scale

    idx = sign_change_brackets(gp)
    zeros = list(bisect(profile.g_prime, r[idx], r[idx + 1], xtol=ZERO_XTOL, rtol=0.0))

    # touching zeros: interior local minima of |g'| that are numerically zero
    a = np.abs(gp)
    cand = np.flatnonzero((a[1:-1] < tol) & (a[1:-1] <= a[:-2]) & (a[1:-1] <= a[2:])) + 1
    for i in cand:
        if np.any(np.abs(np.asarray(zeros) - r[i]) <= 2 * (r[1] - r[0])):
            continue
        res = minimize_scalar(
            lambda t: abs(profile.g_prime(t)),
            bounds=(r[i - 1], r[i + 1]),
            method="bounded",
            options={"xatol": ZERO_XTOL},
        )
        if abs(profile.g_prime(res.x)) < tol:
            zeros.append(float(res.x))
    zeros = tuple(sorted(float(z) for z in zeros))

    dg = np.diff(gv)
    g_monotone = bool(np.all(dg < 0) or np.all(dg > 0))
    keep = np.ones(r.size, dtype=bool)
    step = r[1] - r[0]
    for z in zeros:
        keep &= np.abs(r - z) > step
    min_abs = float(np.min(a[keep])) if np.any(keep) else 0.0
    return BolkerReport(
        satisfied=not zeros and g_monotone,
        r_range=(r_min, r_max),
        g_prime_zeros=zeros,
        g_monotone=g_monotone,
        min_abs_g_prime=min_abs,
        g_positive=bool(np.all(gv > 0)),
        profile_name=profile.name,
    )


def invert_g(profile, w, r_min, r_max, n_samples=20000):
    """The unique r in [r_min, r_max] with g(r) = w (bisection, rtol 1e-12)."""
    report = check_bolker(profile, r_min, r_max, n_samples)
    if not report.satisfied:
        raise BolkerViolationError(f"g is not injective on [{r_min}, {r_max}] for {profile.name}")
    g_lo, g_hi = profile.g(r_min), profile.g(r_max)
    lo_val, hi_val = min(g_lo, g_hi), max(g_lo, g_hi)
    if not lo_val <= w <= hi_val:
        raise OutOfRangeError(f"w={w} outside g-range [{lo_val}, {hi_val}]")
    root = bisect(lambda t: profile.g(t) - w, r_min, r_max, xtol=0.0, rtol=1e-13)
    return float(root[0])


class LevelSetFinder:
    """Finds every r in a window with g(r) = g(r1).

    The dense sampling of g is computed once, so repeated queries (artifact
    sweeps) cost one vectorized comparison plus a batched bisection.
    """

    def __init__(self, profile, r_min, r_max, n_samples=20000):
        if not 0 < r_min < r_max:
            raise DomainError("need 0 < r_min < r_max")
        self.profile = profile
        self.r = np.linspace(r_min, r_max, n_samples)
        self.gv = profile.g(self.r)

    def __call__(self, r1):
        return self.many([r1])[0]

    def many(self, r1s, chunk=256):
        r1s = np.atleast_1d(np.asarray(r1s, dtype=float))
        out = []
        for start in range(0, r1s.size, chunk):
            out.extend(self._many(r1s[start:start + chunk]))
        return out

    def _many(self, r1s):
        targets = self.profile.g(r1s)
        diff = self.gv[None, :] - targets[:, None]
        rows, cols = np.nonzero((diff[:, :-1] * diff[:, 1:] < 0) | (diff[:, :-1] == 0))
        roots = np.zeros(0)
        if rows.size:
            tgt = targets[rows]
            roots = bisect(
                lambda t: self.profile.g(t) - tgt,
                self.r[cols],
                self.r[cols + 1],
                xtol=1e-12,
                rtol=1e-14,
            )
        out = []
        for k, r1 in enumerate(r1s):
            found = roots[rows == k]
            others = [float(x) for x in found if abs(x - r1) > 1e-8 * max(1.0, r1)]
            out.append(sorted(_dedupe(others + [float(r1)])))
        return out


def _dedupe(vals, tol=1e-8):
    vals = sorted(vals)
    out = []
    for v in vals:
        if not out or abs(v - out[-1]) > tol * max(1.0, abs(v)):
            out.append(v)
    return out


def g_level_set(profile, r1, r_min, r_max, n_samples=20000):
    """All r in [r_min, r_max] with g(r) = g(r1), r1 included."""
    if not 0 < r_min <= r1 <= r_max:
        raise DomainError("need 0 < r_min <= r1 <= r_max")
    return LevelSetFinder(profile, r_min, r_max, n_samples)(r1)


def bragg_offset_h(x1, x2, fd_step=DEFAULT_FD_STEP):
    """h_B = q_B / q_B' with q_B' by central differences in x1."""
    x1 = np.asarray(x1, dtype=float)
    q = bragg_offset_q(x1, x2)
    dq = (bragg_offset_q(x1 + fd_step, x2) - bragg_offset_q(x1 - fd_step, x2)) / (2 * fd_step)
    return q / dq


def bragg_offset_h_prime(x1, x2, fd_step=DEFAULT_FD_STEP):
    """d/dx1 of h_B by a second central difference."""
    x1 = np.asarray(x1, dtype=float)
    hp = bragg_offset_h(x1 + fd_step, x2, fd_step)
    hm = bragg_offset_h(x1 - fd_step, x2, fd_step)
    return (hp - hm) / (2 * fd_step)


def bragg_offset_bolker_scan(x1_max=3.0, n1=300, n2=200, fd_step=DEFAULT_FD_STEP):
    """h_B' over cell centres of (0, x1_max] x (-1, 1).

    Returns ``(min_h_prime, grid)`` where ``grid`` is an ImageGrid whose
    second axis is the profile offset x2 (not an image coordinate).
    """
    from .grids import ImageGrid

    if x1_max <= 0:
        raise DomainError("x1_max must be positive")
    if n1 < 50 or n2 < 50:
        raise DomainError("n1 and n2 must be at least 50")
    grid = ImageGrid.zeros(n1, n2, (0.0, float(x1_max), -1.0, 1.0), half_space=False)
    x1 = grid.x1_centers()
    rows = [bragg_offset_h_prime(x1, x2, fd_step) for x2 in grid.x2_centers()]
    values = np.vstack(rows)
    return float(values.min()), grid.with_values(values)
