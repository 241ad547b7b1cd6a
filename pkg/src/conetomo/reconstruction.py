"""Lambda filtered backprojection and Landweber iteration."""

from dataclasses import dataclass, field
import logging

import numpy as np

from .errors import DomainError
from .operator import adjoint, forward, operator_norm, _check_sino

log = logging.getLogger(__name__)

ZERO_PAD = "zero-pad"
ONE_SIDED = "one-sided"
_BOUNDARY_ALIASES = {"zero": ZERO_PAD, "zero-pad": ZERO_PAD, "oneside": ONE_SIDED, "one-sided": ONE_SIDED}

# power iteration underestimates ||M||; inflate before forming the step
NORM_SAFETY = 1.1


@dataclass
class ReconstructionConfig:
    landweber_iters: int = 200
    step: object = "auto"
    fbp_boundary: str = ZERO_PAD
    norm_iters: int = 50

    def __post_init__(self):
        if self.landweber_iters < 0:
            raise DomainError("landweber_iters must be nonnegative")
        if self.step != "auto" and not float(self.step) > 0:
            raise DomainError("step must be positive or 'auto'")
        self.fbp_boundary = _BOUNDARY_ALIASES.get(self.fbp_boundary, self.fbp_boundary)
        if self.fbp_boundary not in (ZERO_PAD, ONE_SIDED):
            raise DomainError(f"unknown fbp boundary mode {self.fbp_boundary!r}")


def second_derivative_E(s, boundary=ZERO_PAD):
    """Central second difference along E, (s[i-1] - 2 s[i] + s[i+1]) / dE^2.

    ``zero-pad`` treats data outside the E range as zero (sharp cutoff);
    ``one-sided`` reuses the nearest interior stencil in the first and last rows.
    """
    boundary = _BOUNDARY_ALIASES.get(boundary, boundary)
    if s.nE < 3:
        raise DomainError("need at least 3 energy bins")
    v = s.values
    out = np.empty_like(v)
    out[1:-1] = v[:-2] - 2.0 * v[1:-1] + v[2:]
    if boundary == ZERO_PAD:
        out[0] = -2.0 * v[0] + v[1]
        out[-1] = v[-2] - 2.0 * v[-1]
    elif boundary == ONE_SIDED:
        out[0] = out[1]
        out[-1] = out[-2]
    else:
        raise DomainError(f"unknown boundary mode {boundary!r}")
    return s.with_values(out / s.dE**2)


def lambda_fbp(M, s, boundary=ZERO_PAD):
    """Backprojection of the E-filtered data, M^T (d^2/dE^2) s.  Unnormalised."""
    _check_sino(M, s)
    return adjoint(M, second_derivative_E(s, boundary))


@dataclass
class LandweberResult:
    image: object
    residuals: list = field(default_factory=list)
    step: float = 0.0
    divergence_risk: bool = False


def landweber(M, s, cfg=None, norm=None):
    """f_{k+1} = f_k + tau * M^T (s - M f_k), starting from zero.

    ``residuals[k]`` is ||s - M f_k|| for k = 0..iters (the first entry is
    the residual of the zero image).  With ``step="auto"``,
    tau = 1 / (1.1 * ||M||_est)^2.
    """
    cfg = cfg or ReconstructionConfig()
    _check_sino(M, s)
    A = M.matrix
    data = s.flat()
    if cfg.step == "auto" or norm is None:
        norm = operator_norm(M, cfg.norm_iters) if norm is None else norm
    if cfg.step == "auto":
        tau = 1.0 / (NORM_SAFETY * norm) ** 2 if norm > 0 else 0.0
        risky = False
    else:
        tau = float(cfg.step)
        risky = norm > 0 and tau > 2.0 / norm**2
        if risky:
            log.warning("Landweber step %.3g exceeds 2/||M||^2 = %.3g", tau, 2.0 / norm**2)

    f = np.zeros(A.shape[1])
    resid = data.copy()
    history = [float(np.linalg.norm(resid))]
    for _ in range(cfg.landweber_iters):
        f += tau * (A.T @ resid)
        resid = data - A @ f
        history.append(float(np.linalg.norm(resid)))
    return LandweberResult(M.geom.image(f), history, tau, risky)


def data_residual(M, f, s):
    return float(np.linalg.norm(s.flat() - forward(M, f).flat()))
