"""Stam, Cramer-Rao, additivity and convexity statements as deficit checks.

Every comparison is returned as an :class:`InequalityReport` whose deficit
is oriented so that ``deficit >= 0`` is the claim.
"""

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import grid_measures as gm
from .errors import DomainError, RefusedError
from .qgaussian import QGaussianParams, closed_form_measures, length_scale, natural_grid, profile

DEFICIT_TOL = 1e-4
CONVEXITY_TOL = 1e-6
MIN_JOINT_NODES = 64 * 64


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    deficit: float
    saturated: bool
    tolerance: float
    params: dict = None
    extras: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def holds(self):
        return self.deficit >= -self.tolerance

    def to_dict(self):
        d = asdict(self)
        d["tolerances"] = {"deficit": self.tolerance}
        del d["tolerance"]
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class FunctionalValue:
    which: str
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DomainError(f"{self.which} is not finite")


def _report(name, lhs, rhs, tol, params=None, **extras):
    deficit = lhs - rhs
    pdict = params.to_dict() if isinstance(params, QGaussianParams) else params
    return InequalityReport(name, float(lhs), float(rhs), float(deficit),
                            bool(abs(deficit) <= tol), tol, pdict, extras)


def _check_dims(f, params):
    if f.grid.n != params.n:
        raise DomainError(f"density lives in dimension {f.grid.n}, params say n={params.n}")


def _grid_measures(f, params):
    _check_dims(f, params)
    return gm.measure_set(f, params.q, params.beta, params.alpha)


def _reference(params):
    # every bound is gamma-free, so gamma = 1 is as good a representative as any
    return closed_form_measures(params.with_gamma(1.0))


def stam_deficit(f, params, variant="phi", tol=DEFICIT_TOL):
    ms = _grid_measures(f, params)
    g = _reference(params)
    beta, lam = params.beta, params.lambda_exponent
    if variant == "phi":
        lhs = ms.phi ** (1 / beta) * ms.Nq ** (lam / 2)
        rhs = g.phi ** (1 / beta) * g.Nq ** (lam / 2)
    elif variant == "I":
        lhs = ms.i_fisher ** (1 / beta) * ms.Nq ** 0.5
        rhs = g.i_fisher ** (1 / beta) * g.Nq ** 0.5
    else:
        raise DomainError(f"unknown variant {variant!r}")
    return _report(f"stam_{variant}", lhs, rhs, tol, params)


def cramer_rao_deficit(f, params, variant="I", tol=DEFICIT_TOL):
    ms = _grid_measures(f, params)
    beta, lam, alpha = params.beta, params.lambda_exponent, params.alpha
    if variant == "phi":
        g = _reference(params)
        lhs = ms.m_p ** (1 / alpha) * ms.phi ** (1 / (beta * lam))
        rhs = g.m_alpha ** (1 / alpha) * g.phi ** (1 / (beta * lam))
    elif variant == "I":
        lhs = ms.m_p ** (1 / alpha) * ms.i_fisher ** (1 / beta)
        rhs = float(params.n)
    else:
        raise DomainError(f"unknown variant {variant!r}")
    return _report(f"cramer_rao_{variant}", lhs, rhs, tol, params)


def functional(f, params, which):
    """J1/J2 pair Fisher information with entropy power, J3/J4 with the alpha-moment."""
    ms = _grid_measures(f, params)
    g = _reference(params)
    beta, lam, alpha = params.beta, params.lambda_exponent, params.alpha
    if which == "J1":
        v = ms.phi * g.Nq / (beta * lam) + g.phi * ms.Nq / 2
    elif which == "J2":
        v = ms.i_fisher * g.Nq / beta + g.i_fisher * ms.Nq / 2
    elif which == "J3":
        v = ms.phi * g.m_alpha / (beta * lam) + g.phi * ms.m_p / alpha
    elif which == "J4":
        v = ms.i_fisher * g.m_alpha / beta + g.i_fisher * ms.m_p / alpha
    else:
        raise DomainError(f"unknown functional {which!r}")
    return FunctionalValue(which, float(v))


def _joint_phi(fx, fy, k, beta):
    ux = fx.values ** (1 / k)
    uy = fy.values ** (1 / k)
    u = np.outer(ux, uy)
    dx = gm.derivative(u, fx.grid.spacing, axis=0)
    dy = gm.derivative(u, fy.grid.spacing, axis=1)
    w = np.outer(fx.grid.quadrature, fy.grid.quadrature)
    return abs(k) ** beta * float(np.sum(w * np.hypot(dx, dy) ** beta))


def additivity_bound(fx, fy, q, beta, tol=DEFICIT_TOL):
    """Minkowski bound on phi of the product density f_X(x) f_Y(y).

    For q < 1 the simplified bound without the M_b factors is evaluated as
    well; it is only implied by the full bound when both M_b <= 1.
    """
    for f in (fx, fy):
        if f.grid.kind != gm.INTERVAL:
            raise DomainError("additivity bound takes one-dimensional densities")
    b = beta * (q - 1) + 1
    if not b > 0:
        raise DomainError("additivity bound needs beta(q-1)+1 > 0")
    k = beta / b
    notes = []
    if fx.grid.num_points * fy.grid.num_points < MIN_JOINT_NODES:
        notes.append("product grid has fewer than 64^2 nodes; precision is limited")
        warnings.warn(notes[-1], RuntimeWarning)
    phi_joint = _joint_phi(fx, fy, k, beta)
    phi_x = gm.dirichlet_form(fx, q, beta)
    phi_y = gm.dirichlet_form(fy, q, beta)
    mb_x = gm.entropic_moment(fx, b)
    mb_y = gm.entropic_moment(fy, b)
    lhs = phi_joint ** (1 / beta)
    rhs = mb_y ** (1 / beta) * phi_x ** (1 / beta) + mb_x ** (1 / beta) * phi_y ** (1 / beta)
    extras = {"phi_joint": phi_joint, "phi_x": phi_x, "phi_y": phi_y, "mb_x": mb_x, "mb_y": mb_y, "b": b}
    if q < 1:
        simple_rhs = phi_x ** (1 / beta) + phi_y ** (1 / beta)
        extras.update(simplified_rhs=simple_rhs, simplified_deficit=simple_rhs - lhs,
                      mb_below_one=bool(mb_x <= 1 and mb_y <= 1))
    if abs(q - 1) < 1e-12 and beta == 2:
        extras["additivity_gap"] = abs(phi_joint - phi_x - phi_y) / (phi_x + phi_y)
    # bound orientation: rhs - lhs >= 0 is the claim
    rep = _report("additivity", rhs, lhs, tol, {"q": q, "beta": beta}, **extras)
    rep.lhs, rep.rhs = float(lhs), float(rhs)
    rep.warnings = notes
    return rep


def convexity_window(beta):
    return 1.0, 2.0 - 1.0 / beta


def convexity_probe(f, g, mix, q, beta, tol=CONVEXITY_TOL, rel_floor=1e-12):
    """Jensen gap of phi along the segment between f and g.

    phi is evaluated by direct quadrature over the nodes where both f and g
    exceed ``rel_floor`` times their maxima.  On a fixed node set the sum of
    x^(b-beta)|y|^beta over positive weights is itself convex, so the probe
    has no discretization slack; a node set that differed between f, g and
    the blend would drop +inf terms from the chord.
    """
    lo, hi = convexity_window(beta)
    if not (lo - 1e-12 <= q <= hi + 1e-12):
        raise RefusedError(
            f"q={q} outside certified window 1 <= q <= 2-1/beta = {hi:.6g}; convexity is not claimed there"
        )
    if not 0 <= mix <= 1:
        raise DomainError("mix must lie in [0, 1]")
    if f.grid != g.grid:
        raise DomainError("convexity probe needs both densities on the same grid")

    keep = (f.values > rel_floor * np.max(f.values)) & (g.values > rel_floor * np.max(g.values))
    b = beta * (q - 1) + 1
    w = np.where(keep, f.grid.quadrature, 0.0)

    def phi(h):
        v = np.where(keep, h.values, 1.0)
        dv = np.abs(gm.derivative(h.values, h.grid.spacing))
        return float(np.dot(w, v ** (b - beta) * dv ** beta))

    blend = f.with_values(mix * f.values + (1 - mix) * g.values)
    chord = mix * phi(f) + (1 - mix) * phi(g)
    return _report("convexity", chord, phi(blend), tol, {"q": q, "beta": beta, "mix": mix})


def thermo_fisher(params, m):
    """phi of the q-Gaussian whose alpha-moment is m: K m^(-beta lambda/alpha)."""
    if not m > 0:
        raise DomainError("moment must be positive")
    g = _reference(params)
    e = params.beta * params.lambda_exponent / params.alpha
    return g.m_alpha ** e * g.phi * m ** (-e)


@dataclass(frozen=True)
class Perturbation:
    """Multiplicative factor 1 + a sin(k x + phase) (1D) or 1 + a cos(k r) (radial)."""

    amplitude: float
    wavenumber: float
    phase: float = 0.0

    def factor(self, grid):
        if grid.kind == gm.INTERVAL:
            return 1 + self.amplitude * np.sin(self.wavenumber * grid.nodes + self.phase)
        # cos(k r) is smooth at the origin as a function of x
        return 1 + self.amplitude * np.cos(self.wavenumber * grid.nodes)


def random_perturbations(count, seed, scale=1.0, max_amplitude=0.3):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        a = rng.uniform(-max_amplitude, max_amplitude)
        k = rng.uniform(0.5, 3.0) / scale
        out.append(Perturbation(float(a), float(k), float(rng.uniform(0, 2 * np.pi))))
    return out


def perturbed_density(params, grid, pert):
    base = profile(params, grid.radius())
    return gm.normalize(gm.GriddedDensity(grid, base * pert.factor(grid)))


def perturbed_family(params, grid, count, seed, max_amplitude=0.3):
    scale = length_scale(params)
    return [perturbed_density(params, grid, p)
            for p in random_perturbations(count, seed, scale, max_amplitude)]


def additivity_pairs(q, beta, count, seed, num_points=128, max_amplitude=0.2, gamma_range=(0.5, 2.0)):
    """Seeded pairs of perturbed one-dimensional q-Gaussians with widths drawn from gamma_range."""
    rng = np.random.default_rng(seed)
    alpha = beta / (beta - 1)
    pairs = []
    for _ in range(count):
        pair = []
        for _ in range(2):
            params = QGaussianParams(1, alpha, q, float(rng.uniform(*gamma_range)))
            grid = natural_grid(params, num_points)
            pert = random_perturbations(1, int(rng.integers(2**32)), length_scale(params), max_amplitude)[0]
            pair.append(perturbed_density(params, grid, pert))
        pairs.append(tuple(pair))
    return pairs


def convexity_probes(q, beta, count, seed, num_points=1024):
    """Seeded (f, g, mix) triples on a shared grid for the mixing-convexity probe."""
    rng = np.random.default_rng(seed)
    alpha = beta / (beta - 1)
    base = QGaussianParams(1, alpha, q, 1.0)
    grid = natural_grid(base.with_gamma(0.5), num_points)
    probes = []
    for _ in range(count):
        f, g = (perturbed_density(base.with_gamma(float(rng.uniform(0.5, 2.0))), grid,
                                  random_perturbations(1, int(rng.integers(2**32)), 1.0)[0])
                for _ in range(2))
        probes.append((f, g, float(rng.uniform(0, 1))))
    return probes
