"""Doubly nonlinear diffusion  df/dt = div(|grad f^m|^(beta-2) grad f^m).

Explicit conservative finite volumes on node-centred cells, the self-similar
(Barenblatt) solution, and the entropy-production identities checked along
computed trajectories.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import grid_measures as gm
from .errors import (BlowUpError, ConfigError, DomainError, DomainSizeError,
                     PreconditionError, StepRejected)
from .qgaussian import QGaussianParams, closed_form_measures, log_mu_p_nu, validity_bound

log = logging.getLogger(__name__)

BOUNDARY_REL = 1e-10


@dataclass(frozen=True)
class DiffusionConfig:
    beta: float = 2.0
    m: float = 2.0
    grid: gm.GridSpec = None
    t0: float = 1.0
    t1: float = 2.0
    cfl: float = 0.9
    record_every: int = 100

    def __post_init__(self):
        if not self.beta > 1:
            raise ConfigError(f"beta must be > 1, got {self.beta}")
        if not self.m > 0:
            raise ConfigError(f"m must be > 0, got {self.m}")
        if self.grid is None:
            raise ConfigError("a grid is required")
        if self.grid.kind == gm.INTERVAL and not math.isclose(self.grid.lo, -self.grid.hi):
            raise ConfigError("interval grids must be symmetric about 0")
        if self.grid.kind == gm.RADIAL and self.grid.lo != 0:
            raise ConfigError("radial grids must start at r = 0")
        if not 0 < self.t0 < self.t1:
            raise ConfigError("need 0 < t0 < t1")
        if not 0 < self.cfl <= 1:
            raise ConfigError("cfl must lie in (0, 1]")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ConfigError("record_every must be a positive integer")
        if not self.delta > 0:
            raise ConfigError(
                f"need m(beta-1) + beta/n - 1 > 0 (delta = {self.delta:.6g}) for a self-similar solution"
            )
        bound = validity_bound(self.n, self.alpha)
        if not self.q > bound:
            raise ConfigError(
                f"derived q = m + 1 - alpha/beta = {self.q:.6g} must exceed max((n-1)/n, n/(n+alpha)) = "
                f"{bound:.6g}; the entropies along the flow are infinite otherwise"
            )

    @property
    def n(self):
        return self.grid.n

    @property
    def alpha(self):
        return self.beta / (self.beta - 1)

    @property
    def q(self):
        return self.m + 1 - self.alpha / self.beta

    @property
    def delta(self):
        return self.n * (self.beta - 1) * self.m + self.beta - self.n

    @property
    def lambda_exponent(self):
        return self.n * (self.q - 1) + 1

    @property
    def exponential_branch(self):
        return math.isclose(self.m * (self.beta - 1), 1.0, rel_tol=0, abs_tol=1e-12)

    def to_dict(self):
        return {"beta": self.beta, "m": self.m, "grid": self.grid.to_dict(), "t0": self.t0,
                "t1": self.t1, "cfl": self.cfl, "record_every": self.record_every}


def delta_identity_gap(beta, m, n):
    """|n(beta-1)m + beta - n - (beta*lambda - n(q-1))| with q = m + 1 - alpha/beta."""
    alpha = beta / (beta - 1)
    q = m + 1 - alpha / beta
    lam = n * (q - 1) + 1
    return abs(n * (beta - 1) * m + beta - n - (beta * lam - n * (q - 1)))


# ---------------------------------------------------------------- Barenblatt

@dataclass(frozen=True)
class BarenblattConstants:
    """B(x) = (C - k|x|^alpha)_+^e, or exp(-c|x|^alpha)/sigma on the exponential branch."""

    k: float
    C: float
    exponent: float
    exponential: bool

    def profile(self, r, alpha):
        r = np.abs(np.asarray(r, dtype=float))
        if self.exponential:
            return np.exp(-self.k * r ** alpha) / self.C
        base = self.C - self.k * r ** alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(base > 0, np.power(np.where(base > 0, base, 1.0), self.exponent), 0.0)
        return out


def _barenblatt_mass(C, k, e, n, alpha):
    # int (C - k|x|^alpha)_+^e = C^e * mu_{0,1} with s = 1/e and gamma = k e / C
    return math.exp(e * math.log(C) + log_mu_p_nu(0.0, 1.0, 1.0 / e, k * e / C, n, alpha))


def barenblatt_constants(beta, m, n):
    """Constants of the unit-mass self-similar profile.

    The slope k makes |grad B^m|^(beta-2) grad B^m = -x B / delta hold
    exactly; mass is homogeneous of degree e + n/alpha in C, so C follows
    from the mass at C = 1.
    """
    alpha = beta / (beta - 1)
    delta = n * (beta - 1) * m + beta - n
    if not delta > 0:
        raise ConfigError(f"delta = {delta:.6g} must be positive")
    d = m * (beta - 1) - 1
    if abs(d) < 1e-12:
        c = (beta - 1) ** 2 / beta ** alpha
        sigma = math.exp(log_mu_p_nu(0.0, 1.0, 0.0, c, n, alpha))
        return BarenblattConstants(c, sigma, math.nan, True)
    e = (beta - 1) / d
    k = d / (m * beta) * delta ** (-1 / (beta - 1))
    degree = e + n / alpha
    C = _barenblatt_mass(1.0, k, e, n, alpha) ** (-1 / degree)
    return BarenblattConstants(k, C, e, False)


def barenblatt_profile(config, t, r):
    """Exact f(r, t) = t^(-n/delta) B(r t^(-1/delta))."""
    const = barenblatt_constants(config.beta, config.m, config.n)
    d = config.delta
    return t ** (-config.n / d) * const.profile(np.asarray(r) * t ** (-1 / d), config.alpha)


def barenblatt(config, t):
    if not t > 0:
        raise DomainError("time must be positive")
    f = gm.GriddedDensity(config.grid, barenblatt_profile(config, t, config.grid.radius()))
    return gm.normalize(f)


def barenblatt_extent(beta, m, n, t, rel=BOUNDARY_REL):
    """Radius beyond which f(., t) is zero (compact support) or below rel * peak."""
    const = barenblatt_constants(beta, m, n)
    alpha = beta / (beta - 1)
    delta = n * (beta - 1) * m + beta - n
    scale = t ** (1 / delta)
    if const.exponential:
        return scale * (-math.log(rel) / const.k) ** (1 / alpha)
    if const.k > 0:
        return scale * (const.C / const.k) ** (1 / alpha)
    # fat tails: (1 + |k| r^alpha / C)^e = rel
    return scale * ((rel ** (1 / const.exponent) - 1) * const.C / -const.k) ** (1 / alpha)


def barenblatt_config(beta=2.0, m=2.0, n=1, t0=1.0, t1=2.0, num_points=4096, margin=None,
                      cfl=0.9, record_every=100):
    """Config whose grid covers the solution up to t1 with a little room.

    Fat-tailed solutions get a wider margin since the zero-flux wall holds
    back mass that would otherwise leave the domain.
    """
    # validate on a placeholder grid before the constants are computed
    unit = gm.GridSpec.interval(-1.0, 1.0, num_points) if n == 1 else gm.GridSpec.radial(n, 1.0, num_points)
    DiffusionConfig(beta, m, unit, t0, t1, cfl, record_every)
    if margin is None:
        margin = 1.25 if m * (beta - 1) < 1 else 1.05
    hi = margin * barenblatt_extent(beta, m, n, t1)
    grid = gm.GridSpec.interval(-hi, hi, num_points) if n == 1 else gm.GridSpec.radial(n, hi, num_points)
    return DiffusionConfig(beta, m, grid, t0, t1, cfl, record_every)


# ------------------------------------------------------------ finite volumes

_cells = gm.fv_cells


def fv_mass(f):
    vol, _ = _cells(f.grid)
    return float(np.dot(vol, f.values))


@numba.njit(cache=True, inline="always")
def _power(x, e):
    if e == 1.0:
        return x
    if e == 2.0:
        return x * x
    return x ** e


@numba.njit(cache=True)
def _rates(f, m, beta, h, area, vol, rate):
    """Fill rate with df/dt and return the largest positivity-preserving dt."""
    npts = f.shape[0]
    load = np.zeros(npts)
    for i in range(npts):
        rate[i] = 0.0
    slope_gain = max(beta - 1.0, 1.0)
    wl = _power(f[0], m)
    for i in range(npts - 1):
        wr = _power(f[i + 1], m)
        dw = (wr - wl) / h
        if dw != 0.0:
            c = 1.0 if beta == 2.0 else abs(dw) ** (beta - 2.0)
            flux = c * dw * area[i]
            rate[i] += flux
            rate[i + 1] -= flux
            df = f[i + 1] - f[i]
            if df != 0.0:
                secant = (wr - wl) / df
            else:
                secant = m * f[i] ** (m - 1.0)
            coef = slope_gain * c * secant * area[i] / h
            load[i] += coef
            load[i + 1] += coef
        wl = wr
    bound = np.inf
    for i in range(npts):
        rate[i] /= vol[i]
        if load[i] > 0.0:
            b = vol[i] / load[i]
            if b < bound:
                bound = b
    return bound


@numba.njit(cache=True)
def _advance(f, m, beta, h, area, vol, cfl, t, t_stop, max_steps):
    """Up to max_steps explicit steps, stopping exactly at t_stop.

    Returns (t, steps, status, clamped_mass); status 1 flags blow-up.
    """
    rate = np.empty_like(f)
    steps = 0
    clamped = 0.0
    while steps < max_steps and t < t_stop:
        bound = _rates(f, m, beta, h, area, vol, rate)
        dt = cfl * bound
        if t + dt >= t_stop:
            dt = t_stop - t
        top = 0.0
        for i in range(f.shape[0]):
            if f[i] > top:
                top = f[i]
        newtop = 0.0
        for i in range(f.shape[0]):
            v = f[i] + dt * rate[i]
            if v < 0.0:
                clamped += -v * vol[i]
                v = 0.0
            f[i] = v
            if v > newtop:
                newtop = v
        steps += 1
        if t + dt >= t_stop:
            t = t_stop
        else:
            t += dt
        if newtop > 2.0 * top:
            return t, steps, 1, clamped
    return t, steps, 0, clamped


def stability_bound(f, config):
    vol, area = _cells(f.grid)
    rate = np.empty(f.grid.num_points)
    return _rates(np.array(f.values), config.m, config.beta, f.grid.spacing, area, vol, rate)


def step(f, config, dt):
    """One explicit step; rejects dt above the positivity bound."""
    if f.grid != config.grid:
        raise DomainError("density and config live on different grids")
    vol, area = _cells(f.grid)
    rate = np.empty(f.grid.num_points)
    v = np.array(f.values)
    bound = _rates(v, config.m, config.beta, f.grid.spacing, area, vol, rate)
    if dt > bound:
        raise StepRejected(dt, config.cfl * bound)
    before = float(np.dot(vol, v))
    new = v + dt * rate
    if np.any(new < 0):
        new = np.maximum(new, 0.0)
        after = float(np.dot(vol, new))
        log.debug("clamped negatives, mass drift %.3e", after - before)
        new *= before / after
    return f.with_values(new)


# ---------------------------------------------------------------- trajectory

@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    densities: list = field(default_factory=list)
    measures: list = field(default_factory=list)
    mass_history: list = field(default_factory=list)
    steps: int = 0

    def append(self, t, f, ms, mass):
        if self.times and not t > self.times[-1]:
            return
        self.times.append(float(t))
        self.densities.append(f)
        self.measures.append(ms)
        self.mass_history.append(float(mass))

    def series(self, name):
        return np.array([getattr(ms, name) for ms in self.measures])


def _snapshot(config, values):
    f = gm.GriddedDensity(config.grid, values.copy())
    ms = gm.measure_set(f, config.q, config.beta, config.alpha)
    return f, ms


def suggest_record_every(config, initial, snapshots=200):
    """Steps between records giving roughly ``snapshots`` records at the initial step size."""
    dt = config.cfl * stability_bound(initial, config)
    return max(1, int((config.t1 - config.t0) / dt / snapshots))


def solve(config, initial):
    if initial.grid != config.grid:
        raise DomainError("initial density and config live on different grids")
    vol, area = _cells(config.grid)
    f = np.array(initial.values, dtype=float)
    f /= float(np.dot(vol, f))
    traj = Trajectory()
    t = config.t0
    snap, ms = _snapshot(config, f)
    traj.append(t, snap, ms, np.dot(vol, f))
    h = config.grid.spacing
    while t < config.t1:
        t, steps, status, clamped = _advance(f, config.m, config.beta, h, area, vol, config.cfl,
                                             t, config.t1, config.record_every)
        traj.steps += steps
        if clamped > 0:
            mass = float(np.dot(vol, f))
            log.debug("clamped %.3e of mass, renormalizing", clamped)
            f *= 1.0 / mass
        if status == 1 or not np.all(np.isfinite(f)):
            raise BlowUpError(f"maximum density doubled within one step near t={t:.6g}", traj)
        snap, ms = _snapshot(config, f)
        traj.append(t, snap, ms, np.dot(vol, f))
    return traj


def self_similarity_error(f, config, t):
    """L1 distance between a grid density and the exact profile at time t."""
    exact = barenblatt_profile(config, t, config.grid.radius())
    return config.grid.integrate(np.abs(f.values - exact))


def fast_diffusion_case(config, initial=None):
    if not config.m < 1:
        raise ConfigError("fast diffusion needs m < 1")
    if config.beta != 2:
        raise ConfigError("fast diffusion case is set up for beta = 2")
    need = barenblatt_extent(config.beta, config.m, config.n, config.t1)
    if config.grid.hi < need:
        raise DomainSizeError(
            f"domain radius {config.grid.hi:.4g} < {need:.4g} needed to keep the boundary "
            f"density below {BOUNDARY_REL:g} of the peak"
        )
    traj = solve(config, barenblatt(config, config.t0) if initial is None else initial)
    for t, f in zip(traj.times, traj.densities):
        edge = f.values[-1] if f.grid.kind == gm.RADIAL else max(f.values[0], f.values[-1])
        if edge > BOUNDARY_REL * float(np.max(f.values)):
            raise DomainSizeError(f"boundary density {edge:.3e} too large at t={t:.4g}")
    return traj


# ------------------------------------------------------------- de Bruijn

def stencil_derivative(times, values, order=4):
    """d/dt at interior samples by exact differentiation of the local interpolant."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    half = order // 2
    out = np.full(times.shape, np.nan)
    for i in range(half, len(times) - half):
        tau = times[i - half:i + half + 1] - times[i]
        # weights w with sum w_j tau_j^p = [p == 1]
        vander = np.vander(tau, increasing=True).T
        rhs = np.zeros(len(tau))
        rhs[1] = 1.0
        w = np.linalg.solve(vander, rhs)
        out[i] = float(np.dot(w, values[i - half:i + half + 1]))
    return out


@dataclass
class DeBruijnReport:
    rows: list
    max_renyi: float
    max_tsallis: float
    max_power: float
    bound_holds: bool
    factorization_gap: float
    tsallis_ratio_gap: float

    def to_dict(self):
        return {
            "max_renyi": self.max_renyi,
            "max_tsallis": self.max_tsallis,
            "max_power": self.max_power,
            "bound_holds": self.bound_holds,
            "factorization_gap": self.factorization_gap,
            "tsallis_ratio_gap": self.tsallis_ratio_gap,
            "rows": self.rows,
        }


def matched_power_rate(config):
    """Lower bound (delta/n)(m/q)^(beta-1) (N^(1/2) I^(1/beta))^beta of a matched q-Gaussian."""
    beta, m, q, n = config.beta, config.m, config.q, config.n
    g = closed_form_measures(QGaussianParams(n, config.alpha, q, 1.0))
    stam = g.Nq ** 0.5 * g.i_fisher ** (1 / beta)
    return config.delta / n * (m / q) ** (beta - 1) * stam ** beta


def debruijn_residuals(traj, config, bound_tol=1e-3):
    if len(traj.times) < 5:
        raise PreconditionError("need at least 5 snapshots")
    beta, m, q, n = config.beta, config.m, config.q, config.n
    delta = config.delta
    t = np.array(traj.times)
    mq = traj.series("Mq")
    hq = traj.series("Hq")
    sq = traj.series("Sq")
    nq = traj.series("Nq")
    phi = traj.series("phi")
    ifi = traj.series("i_fisher")
    dh = stencil_derivative(t, hq)
    ds = stencil_derivative(t, sq)
    dn = stencil_derivative(t, nq ** (delta / 2))
    rhs_h = q * m ** (beta - 1) * phi / mq
    rhs_h_alt = (m / q) ** (beta - 1) * mq ** (beta - 1) * ifi
    rhs_s = q * m ** (beta - 1) * phi
    rhs_n = q * delta / n * m ** (beta - 1) * nq ** (beta * config.lambda_exponent / 2) * phi
    rhs_n_alt = delta / n * (m / q) ** (beta - 1) * nq ** (beta / 2) * ifi
    floor = matched_power_rate(config)
    rows = []
    for i in range(2, len(t) - 2):
        rows.append({
            "t": t[i],
            "dH_dt": dh[i], "rhs_renyi": rhs_h[i], "res_renyi": abs(dh[i] - rhs_h[i]) / abs(rhs_h[i]),
            "dS_dt": ds[i], "rhs_tsallis": rhs_s[i], "res_tsallis": abs(ds[i] - rhs_s[i]) / abs(rhs_s[i]),
            "dN_dt": dn[i], "rhs_power": rhs_n[i], "res_power": abs(dn[i] - rhs_n[i]) / abs(rhs_n[i]),
            "power_floor": floor, "floor_ok": bool(dn[i] >= (1 - bound_tol) * floor),
        })
    fact = np.max(np.abs(rhs_h - rhs_h_alt) / rhs_h)
    fact = max(fact, float(np.max(np.abs(rhs_n - rhs_n_alt) / rhs_n)))
    ratio = float(np.max(np.abs(rhs_s - mq * rhs_h) / rhs_s))
    return DeBruijnReport(
        rows=rows,
        max_renyi=max(r["res_renyi"] for r in rows),
        max_tsallis=max(r["res_tsallis"] for r in rows),
        max_power=max(r["res_power"] for r in rows),
        bound_holds=all(r["floor_ok"] for r in rows),
        factorization_gap=float(fact),
        tsallis_ratio_gap=ratio,
    )


TRAJECTORY_COLUMNS = ["t", "Mq", "Hq", "Sq", "Nq", "m_alpha", "phi", "i_fisher", "mass"]
RESIDUAL_COLUMNS = ["res_renyi", "res_tsallis", "res_power", "floor_ok"]


def write_trajectory_csv(traj, path, report=None, meta=None):
    """One row per snapshot; ``meta`` goes on a leading '#' comment line as JSON."""
    by_time = {r["t"]: r for r in report.rows} if report else {}
    with open(Path(path), "w", newline="") as fh:
        if meta is not None:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS + RESIDUAL_COLUMNS)
        for t, ms, mass in zip(traj.times, traj.measures, traj.mass_history):
            vals = [t, ms.Mq, ms.Hq, ms.Sq, ms.Nq, ms.m_p, ms.phi, ms.i_fisher, mass]
            row = [f"{v:.17g}" for v in vals]
            r = by_time.get(t)
            row += [f"{r[c]:.17g}" if c != "floor_ok" else str(int(r[c])) for c in RESIDUAL_COLUMNS] if r else [""] * 4
            w.writerow(row)
    return Path(path)
