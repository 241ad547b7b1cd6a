"""Vectorized bracketing helpers used by the profile and operator code."""

import numpy as np


def bisect(func, lo, hi, xtol=0.0, rtol=1e-12, maxiter=200):
    """Bisection on many brackets at once.

    ``func`` maps an array of abscissae to an array of values; each pair
    ``(lo[i], hi[i])`` must bracket a sign change (or an exact zero).
    Iteration stops once every bracket is narrower than
    ``xtol + rtol * |midpoint|``.
    """
    lo = np.array(lo, dtype=float, ndmin=1)
    hi = np.array(hi, dtype=float, ndmin=1)
    if lo.size == 0:
        return lo
    f_lo = np.asarray(func(lo), dtype=float)
    f_hi = np.asarray(func(hi), dtype=float)
    if np.any(f_lo * f_hi > 0):
        raise ValueError("bisect: some brackets do not contain a sign change")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        width = hi - lo
        if np.all(width <= xtol + rtol * np.abs(mid)):
            break
        f_mid = np.asarray(func(mid), dtype=float)
        go_left = np.sign(f_mid) == np.sign(f_lo)
        # exact zeros collapse the bracket onto the midpoint
        exact = f_mid == 0
        lo = np.where(go_left | exact, mid, lo)
        f_lo = np.where(go_left | exact, f_mid, f_lo)
        hi = np.where(~go_left | exact, mid, hi)
    return 0.5 * (lo + hi)


def sign_change_brackets(values):
    """Indices ``i`` with a sign change (or exact zero) between samples i and i+1."""
    v = np.asarray(values)
    crossing = v[:-1] * v[1:] < 0
    touching = v[:-1] == 0
    return np.flatnonzero(crossing | touching)
