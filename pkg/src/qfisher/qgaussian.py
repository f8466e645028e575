"""Closed forms for generalized q-Gaussians.

Everything is funnelled through :func:`mu_p_nu`, the integral of
``|x|^p (1 - s*gamma*|x|^alpha)_+^(nu/s)`` over R^n.
"""

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import special

from . import mathkit
from .errors import DivergenceError, DomainError, ValidityError


def validity_bound(n, alpha):
    """Lower bound q must exceed for the closed forms and inequalities."""
    return max((n - 1) / n, n / (n + alpha))


@dataclass(frozen=True)
class QGaussianParams:
    n: int = 1
    alpha: float = 2.0
    q: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidityError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not self.alpha > 1:
            raise ValidityError(f"alpha must be > 1, got {self.alpha}")
        if not self.gamma > 0:
            raise ValidityError(f"gamma must be > 0, got {self.gamma}")
        bound = validity_bound(self.n, self.alpha)
        if not self.q > bound:
            raise ValidityError(
                f"q={self.q} violates q > max{{(n-1)/n, n/(n+alpha)}} = {bound:.6g} "
                f"for n={self.n}, alpha={self.alpha}"
            )

    @property
    def beta(self):
        return self.alpha / (self.alpha - 1.0)

    @property
    def q_star(self):
        return 2.0 - self.q

    @property
    def lambda_exponent(self):
        return self.n * (self.q - 1.0) + 1.0

    @property
    def b(self):
        return self.beta * (self.q - 1.0) + 1.0

    def with_gamma(self, gamma):
        return replace(self, gamma=gamma)

    def support_radius(self):
        """Radius of the support; inf unless q > 1."""
        if self.q > 1 and not mathkit.is_q_one(self.q):
            return ((self.q - 1.0) * self.gamma) ** (-1.0 / self.alpha)
        return math.inf

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ClosedFormMeasures:
    Z: float
    Mq: float
    Hq: float
    Sq: float
    Nq: float
    m_alpha: float
    phi: float
    i_fisher: float
    beta: float
    beta_overridden: bool = False

    def to_dict(self):
        return asdict(self)


def log_mu_p_nu(p, nu, s, gamma, n, alpha):
    if p < 0 or not nu > 0 or not gamma > 0 or not alpha > 0:
        raise DomainError("mu_p_nu needs p >= 0, nu > 0, gamma > 0, alpha > 0")
    a = (p + n) / alpha
    head = (
        -math.log(alpha)
        - a * math.log(gamma)
        + math.log(mathkit.sphere_area(n))
    )
    if s == 0.0:
        return head - a * math.log(nu) + mathkit.log_gamma(a)
    if s > 0:
        return head - a * math.log(s) + mathkit.log_beta(a, nu / s + 1.0)
    second = -nu / s - a
    if not second > 0:
        raise DivergenceError(
            f"mu_p_nu diverges on the s<0 branch: need s > -nu*alpha/(p+n) = "
            f"{-nu * alpha / (p + n):.6g}, got s={s} (p={p}, nu={nu}, n={n}, alpha={alpha})"
        )
    return head - a * math.log(-s) + mathkit.log_beta(a, second)


def mu_p_nu(p, nu, s, gamma, n, alpha):
    """Closed form of the integral of |x|^p (1 - s gamma |x|^alpha)_+^(nu/s) over R^n."""
    return math.exp(log_mu_p_nu(p, nu, s, gamma, n, alpha))


def _s(q):
    return 0.0 if mathkit.is_q_one(q) else q - 1.0


def partition_function(params):
    return mu_p_nu(0.0, 1.0, _s(params.q), params.gamma, params.n, params.alpha)


def profile(params, r):
    """Radial profile G_gamma(r) for radii r >= 0 (any array shape)."""
    r = np.abs(np.asarray(r, dtype=float))
    z = partition_function(params)
    out = np.asarray(mathkit.q_exp(params.q_star, -params.gamma * r ** params.alpha), dtype=float) / z
    if params.q > 1 and not mathkit.is_q_one(params.q):
        out = np.where(r >= params.support_radius(), 0.0, out)
    return out if out.ndim else float(out)


def density(params, x):
    """Evaluate G_gamma at points x: scalars/array for n = 1, shape (..., n) otherwise."""
    x = np.asarray(x, dtype=float)
    if params.n == 1:
        r = x[..., 0] if x.ndim and x.shape[-1] == 1 and x.ndim > 1 else x
    else:
        if x.shape[-1] != params.n:
            raise DomainError(f"points must have trailing dimension {params.n}")
        r = np.linalg.norm(x, axis=-1)
    return profile(params, r)


def _finite(name, value):
    if not np.isfinite(value):
        raise DivergenceError(f"closed form for {name} is not finite")
    return value


def closed_form_measures(params, beta_override=None):
    n, alpha, q, gamma = params.n, params.alpha, params.q, params.gamma
    beta = params.beta if beta_override is None else float(beta_override)
    if not beta > 1:
        raise DomainError("beta must be > 1")
    s = _s(q)
    try:
        log_z = log_mu_p_nu(0.0, 1.0, s, gamma, n, alpha)
        log_m = log_mu_p_nu(alpha, 1.0, s, gamma, n, alpha) - log_z
        # phi = (alpha gamma)^beta * mu_{beta(alpha-1),1} / Z^(beta(q-1)+1)
        b = beta * (q - 1.0) + 1.0
        log_phi = (
            beta * math.log(alpha * gamma)
            + log_mu_p_nu(beta * (alpha - 1.0), 1.0, s, gamma, n, alpha)
            - b * log_z
        )
        if s == 0.0:
            log_mq = 0.0
            # Shannon entropy of exp(-gamma |x|^alpha)/Z
            hq = log_z + gamma * math.exp(log_m)
            sq = hq
        else:
            log_mq = log_mu_p_nu(0.0, q, s, gamma, n, alpha) - q * log_z
            hq = log_mq / (1.0 - q)
            sq = math.expm1(log_mq) / (1.0 - q)
    except DivergenceError as exc:
        raise DivergenceError(f"closed form diverges for {params}: {exc}") from exc
    except OverflowError as exc:
        raise DivergenceError(f"closed form overflows for {params}") from exc
    mq = math.exp(log_mq)
    nq = math.exp(2.0 * hq / n)
    phi = math.exp(log_phi)
    i_fisher = (q / mq) ** beta * phi
    return ClosedFormMeasures(
        Z=_finite("Z", math.exp(log_z)),
        Mq=_finite("Mq", mq),
        Hq=_finite("Hq", hq),
        Sq=_finite("Sq", sq),
        Nq=_finite("Nq", nq),
        m_alpha=_finite("m_alpha", math.exp(log_m)),
        phi=_finite("phi", phi),
        i_fisher=_finite("i_fisher", i_fisher),
        beta=beta,
        beta_overridden=beta_override is not None,
    )


def moment(params, p):
    """Closed-form moment E|X|^p."""
    s = _s(params.q)
    args = (s, params.gamma, params.n, params.alpha)
    return math.exp(log_mu_p_nu(p, 1.0, *args) - log_mu_p_nu(0.0, 1.0, *args))


def gamma_for_moment(params, m):
    """Scale gamma such that m_alpha[G_gamma] = m."""
    if not m > 0:
        raise DomainError("moment target must be positive")
    return closed_form_measures(params.with_gamma(1.0)).m_alpha / m


def gamma_for_entropy_power(params, target):
    """Scale gamma such that N_q[G_gamma] = target (N_q scales as gamma^(-2/alpha))."""
    if not target > 0:
        raise DomainError("entropy power target must be positive")
    nq1 = closed_form_measures(params.with_gamma(1.0)).Nq
    return (nq1 / target) ** (params.alpha / 2.0)


def check_scaling(params):
    """Relative errors of the gamma-scaling identities at params.gamma."""
    g = params.gamma
    n, alpha = params.n, params.alpha
    at_g = closed_form_measures(params)
    at_1 = closed_form_measures(params.with_gamma(1.0))
    lam = params.lambda_exponent
    beta = params.beta
    predicted = {
        "Mq": g ** (n / alpha * (params.q - 1.0)) * at_1.Mq,
        "phi": g ** (beta * lam / alpha) * at_1.phi,
        "i_fisher": g ** (beta / alpha) * at_1.i_fisher,
        "Z": g ** (-n / alpha) * at_1.Z,
        "m_alpha": at_1.m_alpha / g,
    }
    return {k: abs(getattr(at_g, k) - v) / abs(v) for k, v in predicted.items()}


def _radii(params, u):
    n, alpha, q, gamma = params.n, params.alpha, params.q, params.gamma
    a = n / alpha
    if mathkit.is_q_one(q):
        w = special.gammaincinv(a, u)
        return (w / gamma) ** (1.0 / alpha)
    if q > 1:
        s = q - 1.0
        t = special.betaincinv(a, 1.0 / s + 1.0, u)
        return (t / (s * gamma)) ** (1.0 / alpha)
    s = 1.0 - q
    t = special.betaincinv(a, 1.0 / s - a, u)
    return (t / (1.0 - t) / (s * gamma)) ** (1.0 / alpha)


def sample(params, count, seed):
    """Draw i.i.d. points from G_gamma, shape (count, n)."""
    if count < 0:
        raise DomainError("count must be nonnegative")
    rng = np.random.default_rng(seed)
    if count == 0:
        return np.empty((0, params.n))
    r = _radii(params, rng.random(count))
    if params.n == 1:
        direction = np.where(rng.random(count) < 0.5, -1.0, 1.0)[:, None]
    else:
        direction = rng.standard_normal((count, params.n))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return r[:, None] * direction


def _tail_fraction_mu(p, nu, params, radius):
    """Fraction of mu_{p,nu} carried by |x| > radius."""
    n, alpha, q, gamma = params.n, params.alpha, params.q, params.gamma
    a = (p + n) / alpha
    if mathkit.is_q_one(q):
        return float(special.gammaincc(a, nu * gamma * radius ** alpha))
    if q > 1:
        s = q - 1.0
        t = s * gamma * radius ** alpha
        if t >= 1:
            return 0.0
        return float(special.betaincc(a, nu / s + 1.0, t))
    s = 1.0 - q
    w = s * gamma * radius ** alpha
    second = nu / s - a
    if not second > 0:
        return 1.0
    return float(special.betaincc(a, second, w / (1.0 + w)))


def tail_fraction(params, radius):
    """Largest relative share of mass, M_q, m_alpha or phi lying beyond ``radius``.

    The phi integrand of G is proportional to |x|^alpha G, so its tail is
    the m_alpha tail.
    """
    parts = [(0.0, 1.0), (params.alpha, 1.0)]
    if not mathkit.is_q_one(params.q):
        parts.append((0.0, params.q))
    return max(_tail_fraction_mu(p, nu, params, radius) for p, nu in parts)


def grid_extent(params, rel_tail=1e-12):
    """Radius that covers the support, or leaves at most ``rel_tail`` in the tails.

    Compact supports are covered exactly unless q is so close to 1 that the
    support reaches far beyond where the mass lives.
    """
    scale = params.gamma ** (-1.0 / params.alpha)
    compact = params.q > 1 and not mathkit.is_q_one(params.q)
    if compact and params.support_radius() <= 50 * scale:
        return params.support_radius()
    r = scale
    while tail_fraction(params, r) > rel_tail:
        r *= 1.25
        if r > 1e12 * scale:
            raise DivergenceError("tails too heavy to truncate")
    return r


def on_grid(params, grid):
    """G_gamma sampled at the grid nodes (radius |x| for intervals)."""
    from .grid_measures import GriddedDensity

    return GriddedDensity(grid, profile(params, grid.radius()))


def length_scale(params):
    return params.gamma ** (-1.0 / params.alpha)


def natural_grid(params, num_points, rel_tail=1e-9):
    """Uniform grid covering G_gamma: an interval for n = 1, radial otherwise."""
    from .grid_measures import GridSpec

    extent = grid_extent(params, rel_tail)
    if params.n == 1:
        return GridSpec.interval(-extent, extent, num_points)
    return GridSpec.radial(params.n, extent, num_points)
