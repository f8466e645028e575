"""Special functions and q-deformed elementary functions."""

import math

import numpy as np
from scipy import special

from .errors import DomainError

Q_ONE_TOL = 1e-12


def is_q_one(q):
    return abs(q - 1.0) < Q_ONE_TOL


def log_gamma(x):
    """ln Gamma(x) for x > 0."""
    if not x > 0:
        raise DomainError(f"log_gamma needs x > 0, got {x}")
    return float(special.gammaln(x))


def log_beta(x, y):
    if not (x > 0 and y > 0):
        raise DomainError(f"beta function needs positive arguments, got ({x}, {y})")
    # argument order fixed so that B(x, y) == B(y, x) bit for bit
    a, b = (x, y) if x <= y else (y, x)
    if b >= 100 and b >= 10 * a:
        # betaln loses up to ~1e-9 here through cancellation in lgamma(b) - lgamma(a+b)
        return float(special.gammaln(a) + _log_gamma_ratio(a, b))
    return float(special.betaln(a, b))


def _stirling_tail(z):
    z2 = z * z
    return (1 / 12 - (1 / 360 - (1 / 1260 - 1 / (1680 * z2)) / z2) / z2) / z


def _log_gamma_ratio(a, b):
    """log Gamma(b) - log Gamma(a + b) for large b, via Stirling's series."""
    return (-(b + a - 0.5) * math.log1p(a / b) - a * math.log(b) + a
            + _stirling_tail(b) - _stirling_tail(a + b))


def beta_fn(x, y):
    return math.exp(log_beta(x, y))


def unit_ball_volume(n):
    """Volume omega_n = pi^(n/2) / Gamma(n/2 + 1) of the unit ball in R^n."""
    if int(n) != n or n < 1:
        raise DomainError(f"dimension must be a positive integer, got {n}")
    return math.exp(0.5 * n * math.log(math.pi) - log_gamma(0.5 * n + 1.0))


def sphere_area(n):
    """Surface n * omega_n of the unit sphere in R^n (2 for n = 1)."""
    return n * unit_ball_volume(n)


def q_exp(q, x):
    """(1 + (1-q) x)_+^(1/(1-q)); exp(x) on the q = 1 branch.

    Works elementwise on arrays.
    """
    x = np.asarray(x, dtype=float)
    if is_q_one(q):
        out = np.exp(x)
    else:
        base = np.maximum(1.0 + (1.0 - q) * x, 0.0)
        expo = 1.0 / (1.0 - q)
        with np.errstate(divide="ignore"):
            out = np.where(base > 0, np.power(np.where(base > 0, base, 1.0), expo), 0.0)
    return out if out.ndim else float(out)


def q_log(q, x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("q_log needs x > 0")
    if is_q_one(q):
        out = np.log(x)
    else:
        out = np.expm1((1.0 - q) * np.log(x)) / (1.0 - q)
    return out if out.ndim else float(out)
