"""Constrained minimization of generalized Fisher information on grids,
the beta-Laplace optimality equation, and the Legendre/dual structure.

The discrete problem is posed on finite-volume cells: masses and moments use
cell volumes, the Dirichlet form uses face differences.  It is solved by
Newton's method on the KKT system with a search over the support ends.
Every reported number is re-evaluated with the grid_measures estimators.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import minimize
from scipy.sparse.linalg import splu

from . import grid_measures as gm
from .errors import DomainError, PreconditionError
from .qgaussian import (closed_form_measures, gamma_for_entropy_power,
                        gamma_for_moment, grid_extent, on_grid)

MOMENT = "moment"
ENTROPY_POWER = "entropy_power"
COARSEST = 513
TINY = 1e-300
STALL_TOL = 1e-7


@dataclass(frozen=True)
class ConstraintSpec:
    kind: str
    p_or_q: float
    target: float

    def __post_init__(self):
        if self.kind not in (MOMENT, ENTROPY_POWER):
            raise DomainError(f"unknown constraint kind {self.kind!r}")
        if not self.target > 0:
            raise DomainError("constraint target must be positive")

    @property
    def scaling(self):
        """Exponent s with C[a^n f(a x)] = a^(-s) C[f]."""
        return self.p_or_q if self.kind == MOMENT else 2.0

    def measure(self, f):
        if self.kind == MOMENT:
            return gm.moment(f, self.p_or_q)
        q = self.p_or_q
        mq = f.mass() if abs(q - 1) < 1e-12 else gm.entropic_moment(f, q)
        shannon = gm.shannon_entropy(f) if abs(q - 1) < 1e-12 else None
        return gm.entropies(mq, q, f.grid.n, shannon)[2]


@dataclass
class MinimizationResult:
    density: gm.GriddedDensity
    objective: float
    constraint_residual: float
    iterations: int
    el_residual_norm: float
    converged: bool = True
    multiplier: float = math.nan
    variant: str = "phi"
    inner_iterations: int = 0
    history: list = field(default_factory=list)

    def to_dict(self):
        return {
            "objective": self.objective,
            "constraint_residual": self.constraint_residual,
            "iterations": self.iterations,
            "inner_iterations": self.inner_iterations,
            "el_residual_norm": self.el_residual_norm,
            "converged": self.converged,
            "multiplier": self.multiplier,
            "variant": self.variant,
            "history": self.history,
            "grid": self.density.grid.to_dict(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


class _Discrete:
    """Fisher functionals and constraints of f = v^kappa on finite-volume cells.

    kappa = max(k, 1) with k = beta/(beta(q-1)+1), so every term is at
    least once differentiable at v = 0.  Methods ending in ``_n`` fold the
    normalization f = v^kappa / sum(V v^kappa) in (used by L-BFGS); the
    ``parts`` methods return value, gradient and Hessian of the unnormalized
    sums (used by Newton, which carries the mass constraint explicitly).
    """

    def __init__(self, grid, q, beta):
        self.grid = grid
        self.q = q
        self.beta = beta
        self.k = gm.fisher_exponent_k(q, beta)
        if not self.k > 0:
            raise DomainError("minimization needs beta(q-1)+1 > 0")
        self.kappa = max(self.k, 1.0)
        self.rho = self.kappa / self.k
        self.vol, self.area = gm.fv_cells(grid)
        self.h = grid.spacing
        self.r = grid.radius()

    def density(self, v):
        w = np.power(v, self.kappa)
        return w / np.dot(self.vol, w)

    def variable(self, f):
        return np.power(np.maximum(f, 0.0), 1.0 / self.kappa)

    # -- unnormalized pieces with Hessians ------------------------------------

    def _pow_derivs(self, v, e):
        """v^e and its first two derivatives, with v = 0 treated one-sidedly."""
        vs = np.maximum(v, TINY)
        if e == 1.0:
            return v.copy(), np.ones_like(v), np.zeros_like(v)
        d1 = e * np.power(vs, e - 1)
        d2 = e * (e - 1) * np.power(vs, e - 2)
        zero = v <= 0
        d1[zero] = 0.0 if e > 1 else d1[zero]
        d2[zero] = 0.0 if e >= 2 else d2[zero]
        return np.power(v, e), d1, d2

    def dirichlet_parts(self, v, eps=0.0):
        """Phi = |k|^beta sum_faces A h |D v^rho|^beta: value, gradient, tridiagonal Hessian."""
        beta, k = self.beta, self.k
        w, j1, j2 = self._pow_derivs(v, self.rho)
        d = np.diff(w) / self.h
        ad = np.abs(d)
        c = abs(k) ** beta
        val = c * float(np.sum(self.area * self.h * ad ** beta))
        flux = c * beta * self.area * np.sign(d) * ad ** (beta - 1)
        gw = np.zeros_like(v)
        gw[:-1] -= flux
        gw[1:] += flux
        if beta == 2:
            slope = np.ones_like(d)
        else:
            # flat faces outside the support carry no curvature that is ever used
            d2e = d * d + eps * eps
            slope = np.zeros_like(d)
            np.power(d2e, (beta - 2) / 2, out=slope, where=d2e > 0)
        curv = c * beta * (beta - 1) * self.area * slope / self.h
        diag = np.zeros_like(v)
        diag[:-1] += curv
        diag[1:] += curv
        off = -curv
        hdiag = diag * j1 * j1 + gw * j2
        hoff = off * j1[:-1] * j1[1:]
        return val, gw * j1, hdiag, hoff

    def sum_parts(self, v, kind, order=None):
        """sum V g(f) for g in {f, r^p f, f^q, -f log f}: value, gradient, Hessian diagonal."""
        if kind == "mass":
            f, d1, d2 = self._pow_derivs(v, self.kappa)
            wt = self.vol
        elif kind == "moment":
            f, d1, d2 = self._pow_derivs(v, self.kappa)
            wt = self.vol * self.r ** order
        elif kind == "power":
            f, d1, d2 = self._pow_derivs(v, self.kappa * order)
            wt = self.vol
        elif kind == "shannon":
            f, d1, d2 = self._pow_derivs(v, self.kappa)
            lf = np.log(np.maximum(f, TINY))
            g = -f * lf
            vs = np.maximum(v, TINY)
            gp = -(lf + 1) * d1
            gpp = -(self.kappa ** 2 * np.power(vs, self.kappa - 2) + (lf + 1) * d2)
            return float(np.dot(self.vol, g)), self.vol * gp, self.vol * gpp
        else:
            raise DomainError(kind)
        return float(np.dot(wt, f)), wt * d1, wt * d2

    def constraint_parts(self, v, spec):
        """Constraint in a form whose Hessian is diagonal, with the matching target."""
        if spec.kind == MOMENT:
            return self.sum_parts(v, "moment", spec.p_or_q), spec.target
        q, n = spec.p_or_q, self.grid.n
        if abs(q - 1) < 1e-12:
            return self.sum_parts(v, "shannon"), 0.5 * n * math.log(spec.target)
        # N_q = M_q^(2/(n(1-q))) is monotone in M_q
        return self.sum_parts(v, "power", q), spec.target ** (0.5 * n * (1 - q))

    # -- normalized objective for L-BFGS ---------------------------------------

    def _norm(self, v):
        vk1 = np.power(np.maximum(v, TINY), self.kappa - 1) if self.kappa != 1 else np.ones_like(v)
        vk = vk1 * v
        s = float(np.dot(self.vol, vk))
        return vk / s, s, vk1

    def _pullback(self, f, s, vk1, gprime):
        # gradient of sum V g(f) through the normalization
        return self.kappa * vk1 / s * self.vol * (gprime - np.dot(self.vol * f, gprime))

    def phi(self, v):
        f, s, vk1 = self._norm(v)
        beta, k = self.beta, self.k
        val0, g0, _, _ = self.dirichlet_parts(v)
        scale = s ** (-beta / k)
        val = scale * val0
        ds = self.kappa * self.vol * vk1
        return val, scale * g0 - (beta / k) * val / s * ds

    def linear(self, v, weight):
        f, s, vk1 = self._norm(v)
        return float(np.dot(self.vol, weight * f)), self._pullback(f, s, vk1, weight)

    def entropic_moment(self, v, q):
        f, s, vk1 = self._norm(v)
        fq1 = np.power(np.maximum(f, TINY), q - 1)
        return float(np.dot(self.vol, fq1 * f)), self._pullback(f, s, vk1, q * fq1)

    def shannon(self, v):
        f, s, vk1 = self._norm(v)
        lf = np.log(np.maximum(f, TINY))
        return -float(np.dot(self.vol, f * lf)), self._pullback(f, s, vk1, -(lf + 1))

    def fisher(self, v, variant):
        phi, gphi = self.phi(v)
        if variant == "phi":
            return phi, gphi
        mq, gm_ = self.entropic_moment(v, self.q)
        val = (self.q / mq) ** self.beta * phi
        return val, val * (gphi / phi - self.beta * gm_ / mq)

    def constraint(self, v, spec):
        if spec.kind == MOMENT:
            return self.linear(v, self.r ** spec.p_or_q)
        q, n = spec.p_or_q, self.grid.n
        if abs(q - 1) < 1e-12:
            hval, gh = self.shannon(v)
            val = math.exp(2 * hval / n)
            return val, val * 2 / n * gh
        mq, gq = self.entropic_moment(v, q)
        e = 2.0 / (n * (1 - q))
        val = mq ** e
        return val, e * val / mq * gq


def _newton_kkt(prob, v, spec, variant, mu=None, max_iter=100, tol=1e-12):
    """Newton's method on the first-order conditions of

        min F(v) + mu (C(v) - c*) + nu (mass(v) - 1)

    with F = Phi or I.  If ``mu`` is None it is an unknown and the constraint
    is enforced; otherwise mu is held fixed and only the mass constraint is
    imposed.  Nodes with v = 0 stay fixed at zero; nodes driven negative are
    clipped and leave the free set.

    Returns (v, mu, nu, iterations, converged).
    """
    n = len(v)
    v = np.array(v, dtype=float)
    fixed_mu = mu is not None
    beta, q = prob.beta, prob.q

    def pieces(v, eps):
        phi, gphi, hd, ho = prob.dirichlet_parts(v, eps)
        mass, gmass, hmass = prob.sum_parts(v, "mass")
        (con, gcon, hcon), target = prob.constraint_parts(v, spec)
        low = None
        if variant == "I":
            mq, gq, hq = prob.sum_parts(v, "power", q)
            s = q ** beta * mq ** (-beta)
            fval = s * phi
            gf = s * (gphi - beta * phi / mq * gq)
            hd = s * (hd - beta * phi / mq * hq)
            ho = s * ho
            a = -beta * s / mq
            cmat = np.array([[0.0, a], [a, beta * (beta + 1) * s * phi / mq ** 2]])
            low = (np.column_stack([gphi, gq]), cmat)
        else:
            fval, gf = phi, gphi
        return fval, gf, hd, ho, (mass, gmass, hmass), (con, gcon, hcon, target), low

    def residual(v, mu, nu, free, eps=0.0):
        fval, gf, hd, ho, M, C, low = pieces(v, eps)
        grad = gf + mu * C[1] + nu * M[1]
        r_mass = M[0] - 1.0
        r_con = C[0] - C[3]
        return grad, r_mass, r_con, (fval, gf, hd, ho, M, C, low)

    def merit(grad, r_mass, r_con, free, scale):
        # stationarity per unit volume, so small cells near a radial origin count
        parts = [np.max(np.abs(grad[free] / prob.vol[free])) / scale if free.any() else 0.0,
                 abs(r_mass)]
        if not fixed_mu:
            parts.append(abs(r_con) / max(abs(spec.target), 1e-300))
        return max(parts)

    # multipliers by least squares on the free nodes
    free = v > 0
    _, _, _, P = residual(v, 0.0, 0.0, free)
    fval, gf, hd, ho, M, C, low = P
    if fixed_mu:
        nu = -float(np.dot(gf[free] + mu * C[1][free], M[1][free]) / np.dot(M[1][free], M[1][free]))
    else:
        A = np.column_stack([C[1][free], M[1][free]])
        mu, nu = np.linalg.lstsq(A, -gf[free], rcond=None)[0]
    scale = max(float(np.max(np.abs(gf / prob.vol))), 1e-300)
    eps = 1e-12 * float(np.max(np.abs(np.diff(v)))) / prob.h if beta < 2 else 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad, r_mass, r_con, P = residual(v, mu, nu, free, eps)
        cur = merit(grad, r_mass, r_con, free, scale)
        if cur < tol:
            converged = True
            break
        fval, gf, hd, ho, M, C, low = P
        idx = np.flatnonzero(free)
        nf = len(idx)
        hdiag = hd + mu * C[2] + nu * M[2]
        # KKT matrix on the free set; the free set need not be contiguous
        rows, cols, vals = [np.arange(nf)], [np.arange(nf)], [hdiag[idx]]
        pos = np.full(n, -1)
        pos[idx] = np.arange(nf)
        pair = (pos[:-1] >= 0) & (pos[1:] >= 0)
        a_, b_ = pos[:-1][pair], pos[1:][pair]
        rows += [a_, b_]
        cols += [b_, a_]
        vals += [ho[pair], ho[pair]]
        extra = [M[1][idx]]
        rhs_tail = [-r_mass]
        if not fixed_mu:
            extra.insert(0, C[1][idx])
            rhs_tail.insert(0, -r_con)
        for j, col in enumerate(extra):
            rows += [np.arange(nf), np.full(nf, nf + j)]
            cols += [np.full(nf, nf + j), np.arange(nf)]
            vals += [col, col]
        size = nf + len(extra)
        K = sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(size, size))
        rhs = np.concatenate([-grad[idx], rhs_tail])
        try:
            lu = splu(K)
            if low is None:
                step = lu.solve(rhs)
            else:
                W = np.zeros((size, 2))
                W[:nf] = low[0][idx]
                ainv_b = lu.solve(rhs)
                ainv_w = lu.solve(W)
                cap = np.linalg.inv(low[1]) + W.T @ ainv_w
                step = ainv_b - ainv_w @ np.linalg.solve(cap, W.T @ ainv_b)
        except (RuntimeError, np.linalg.LinAlgError):
            break
        dv = step[:nf]
        dmult = step[nf:]
        t = 1.0
        accepted = False
        for _ in range(40):
            vn = v.copy()
            vn[idx] = v[idx] + t * dv
            vn = np.maximum(vn, 0.0)
            if fixed_mu:
                mun, nun = mu, nu + t * dmult[0]
            else:
                mun, nun = mu + t * dmult[0], nu + t * dmult[1]
            fn = vn > 0
            g2, rm2, rc2, _ = residual(vn, mun, nun, fn, eps)
            if merit(g2, rm2, rc2, fn, scale) < (1 - 1e-4 * t) * cur:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # roundoff floor: accept it when it is already small
            converged = cur < STALL_TOL
            break
        v, mu, nu, free = vn, mun, nun, fn
    return v, mu, nu, it, converged


def _lagrangian_minimum(prob, v0, spec, mu, variant, maxiter=20000):
    def fun(v):
        a, ga = prob.fisher(v, variant)
        c, gc = prob.constraint(v, spec)
        return a + mu * c, ga + mu * gc

    res = minimize(fun, v0, jac=True, method="L-BFGS-B", bounds=[(0, None)] * len(v0),
                   options={"maxiter": maxiter, "maxcor": 30, "ftol": 1e-15, "gtol": 1e-12,
                            "maxfun": 4 * maxiter})
    return res


def _fisher_scaling(variant, params):
    return params.beta * params.lambda_exponent if variant == "phi" else params.beta


def matched_params(constraint, params):
    """The q-Gaussian of params' shape that meets the constraint."""
    if constraint.kind == MOMENT:
        return params.with_gamma(gamma_for_moment(params, constraint.target))
    return params.with_gamma(gamma_for_entropy_power(params, constraint.target))


def default_grid(constraint, params, num_points=4096, margin=1.5, rel_tail=1e-9):
    g = matched_params(constraint, params)
    extent = grid_extent(g, rel_tail)
    if g.q > 1:
        extent *= margin
    if params.n == 1:
        return gm.GridSpec.interval(-extent, extent, num_points)
    return gm.GridSpec.radial(params.n, extent, num_points)


def gaussian_init(constraint, grid):
    """Gaussian dilated so that it meets the constraint (constraints scale as a power of the width)."""
    r = grid.radius()
    width = max(grid.hi, -grid.lo) / 8.0
    for _ in range(3):
        f = gm.normalize(gm.GriddedDensity(grid, np.exp(-0.5 * (r / width) ** 2)))
        width *= (constraint.target / constraint.measure(f)) ** (1.0 / constraint.scaling)
    return gm.normalize(gm.GriddedDensity(grid, np.exp(-0.5 * (r / width) ** 2)))


def _coarser(grid):
    return gm.GridSpec(grid.kind, grid.lo, grid.hi, (grid.num_points + 1) // 2, grid.n)


def _objective(prob, v, variant):
    return float(prob.fisher(v, variant)[0])


def _support_ends(v):
    idx = np.flatnonzero(v > 0)
    return int(idx[0]), int(idx[-1])


def _support_moves(prob, v, dilate=True):
    """Candidate supports: one node wider or narrower at each free end, then
    whole-profile dilations by 2, 4, ... nodes for when single steps stall."""
    n = len(v)
    lo, hi = _support_ends(v)
    x = prob.grid.nodes
    moves = [(0, 1), (0, -1)]
    if prob.grid.kind == gm.INTERVAL:
        moves = [(1, 1), (-1, -1)]
        if not np.allclose(v, v[::-1], rtol=1e-10, atol=0.0):
            moves += [(0, 1), (0, -1), (1, 0), (-1, 0)]
    out = []
    for dl, dh in moves:
        nlo, nhi = lo - dl, hi + dh
        if nlo < 0 or nhi >= n or nhi - nlo < 4 or (nlo, nhi) == (lo, hi):
            continue
        w = v.copy()
        w[:nlo] = 0.0
        w[nhi + 1:] = 0.0
        # seed a new edge node at half its neighbour
        if nlo < lo:
            w[nlo] = 0.5 * v[lo]
        if nhi > hi:
            w[nhi] = 0.5 * v[hi]
        out.append(w)
    if not dilate:
        return out
    # dilations keep the shape; the support edge is the first zero node
    outer_lo = lo - 1 if lo > 0 else lo
    outer_hi = hi + 1 if hi < n - 1 else hi
    centre = 0.0 if prob.grid.kind == gm.RADIAL or np.isclose(x[0], -x[-1]) else 0.5 * (x[outer_lo] + x[outer_hi])
    half = max(abs(x[outer_hi] - centre), abs(x[outer_lo] - centre))
    for steps in (2, 4, 8, 16, 32):
        for sign in (1, -1):
            scale = 1 + sign * steps * prob.h / half
            if not scale > 0.5:
                continue
            w = np.interp(centre + (x - centre) / scale, x, v, left=0.0, right=0.0)
            if np.count_nonzero(w) >= 5:
                out.append(w)
    return out


def _support_search(prob, v, spec, variant, mu=None, max_moves=400, dilate=False):
    """Greedy search over the support ends.

    In the f variable the Dirichlet form has a vanishing derivative at
    f = 0, so Newton on a fixed free set can stop at a support that is a
    node or two short.  Each move re-solves the KKT system and is kept only
    if the objective (or Lagrangian, for fixed mu) goes down.  ``dilate``
    adds whole-profile dilations, which get past the small ridges that
    single-node moves meet at steep (q > 2) support edges.
    """
    def score(w):
        val = _objective(prob, w, variant)
        if mu is not None:
            val += mu * prob.constraint(w, spec)[0]
        return val

    best = score(v)
    accepted = [best]
    iters = 0
    for _ in range(max_moves):
        improved = False
        for w in _support_moves(prob, v, dilate):
            w, mu_w, nu_w, it, ok = _newton_kkt(prob, w, spec, variant, mu)
            iters += it
            if not ok:
                continue
            val = score(w)
            if val < best * (1 - 1e-14):
                v, best, improved = w, val, True
                accepted.append(val)
                break
        if not improved:
            break
    return v, iters, accepted


def _match_constraint(f, spec, rounds=3):
    """Dilate f on its own grid so the quadrature value of the constraint is exact."""
    grid = f.grid
    x = grid.nodes
    g = f
    a = 1.0
    for _ in range(rounds):
        a *= (spec.measure(g) / spec.target) ** (1.0 / spec.scaling)
        vals = a ** grid.n * np.interp(a * x, x, f.values, left=0.0, right=0.0)
        g = gm.normalize(gm.GriddedDensity(grid, vals))
    return g


def _centered(grid, f):
    """Translate an interval density to zero mean and symmetrize it."""
    x = grid.nodes
    shift = grid.integrate(x * f) / grid.integrate(f)
    g = np.interp(x + shift, x, f, left=0.0, right=0.0)
    return 0.5 * (g + g[::-1])


def _coarse_start(prob, spec, params, grid):
    """Gaussian start relaxed by L-BFGS on phi with the dilation-predicted multiplier.

    Both variants share their minimizer, and the phi landscape is far better
    conditioned for L-BFGS on radial grids.
    """
    variant = "phi"
    v = prob.variable(gaussian_init(spec, grid).values)
    s_obj = _fisher_scaling(variant, params)
    a0, _ = prob.fisher(v, variant)
    c0, _ = prob.constraint(v, spec)
    mu = s_obj / spec.scaling * a0 / c0
    for _ in range(4):
        v = _lagrangian_minimum(prob, v, spec, mu, variant, maxiter=2000).x
        c, _ = prob.constraint(v, spec)
        mu *= (c / spec.target) ** ((s_obj + spec.scaling) / spec.scaling)
    return v


def _solve_level(prob, v, spec, variant, dilate=False):
    v, mu, nu, it, ok = _newton_kkt(prob, v, spec, variant)
    v2, extra, accepted = _support_search(prob, v, spec, variant, dilate=dilate)
    if len(accepted) > 1:
        v2, mu, nu, it2, ok = _newton_kkt(prob, v2, spec, variant)
        extra += it2
    return v2, mu, it, extra, ok, accepted


def minimize_fisher(constraint, params, grid=None, variant="phi", init=None, el_floor=1e-2):
    """Minimize phi (or I) over normalized densities under one constraint.

    Newton's method on the KKT system for f = v^kappa on a fixed support,
    followed by a greedy search over the support ends.  Without ``init`` a
    coarse-to-fine cascade starting from a matched Gaussian supplies the
    starting point.  ``iterations`` counts Newton steps on the final grid.
    """
    if variant not in ("phi", "I"):
        raise DomainError(f"unknown variant {variant!r}")
    grid = default_grid(constraint, params) if grid is None else grid
    if grid.n != params.n:
        raise DomainError("grid dimension does not match params")
    if grid.kind == gm.INTERVAL and grid.num_points < 1024 and init is None:
        raise PreconditionError("need at least 1024 nodes on an interval")
    if init is not None and init.grid != grid:
        raise DomainError("init lives on a different grid")
    if constraint.kind == MOMENT and abs(constraint.p_or_q - params.alpha) > 1e-12:
        raise DomainError("moment order must equal params.alpha")
    if constraint.kind == ENTROPY_POWER and abs(constraint.p_or_q - params.q) > 1e-12:
        raise DomainError("entropy order must equal params.q")

    # entropy constraints do not pin the centre; fix it by symmetry
    translation_free = constraint.kind == ENTROPY_POWER and grid.kind == gm.INTERVAL
    history = []
    inner = 0
    if init is None:
        levels = [grid]
        while levels[-1].num_points > COARSEST:
            levels.append(_coarser(levels[-1]))
        levels.reverse()
        prob = _Discrete(levels[0], params.q, params.beta)
        v = _coarse_start(prob, constraint, params, levels[0])
        # the optimum is even on a symmetric interval; keep the cascade even
        even = grid.kind == gm.INTERVAL and np.isclose(grid.lo, -grid.hi)
        if even:
            v = 0.5 * (v + v[::-1])
        for lv in levels[:-1]:
            prob = _Discrete(lv, params.q, params.beta)
            v, mu, it, extra, ok, accepted = _solve_level(prob, v, constraint, variant, dilate=True)
            inner += it + extra
            history.append({"nodes": lv.num_points, "newton": it, "support_search": extra,
                            "objective": _objective(prob, v, variant), "accepted_objectives": accepted})
            f = prob.density(v)
            nxt = _Discrete(levels[levels.index(lv) + 1], params.q, params.beta)
            v = nxt.variable(np.maximum(np.interp(nxt.grid.nodes, lv.nodes, f), 0.0))
            if even:
                v = 0.5 * (v + v[::-1])
        prob = nxt if len(levels) > 1 else prob
    else:
        prob = _Discrete(grid, params.q, params.beta)
        f0 = gm.normalize(init).values
        if translation_free:
            f0 = _centered(grid, f0)
        v = prob.variable(f0)
    v, mu, it, extra, ok, accepted = _solve_level(prob, v, constraint, variant)
    inner += it + extra
    history.append({"nodes": grid.num_points, "newton": it, "support_search": extra,
                    "objective": _objective(prob, v, variant), "accepted_objectives": accepted})

    f = _match_constraint(gm.GriddedDensity(grid, prob.density(v)), constraint)
    err = abs(constraint.measure(f) / constraint.target - 1)
    ms = gm.measure_set(f, params.q, params.beta, params.alpha)
    el = euler_lagrange_residual(f, matched_params(constraint, params), rel_floor=el_floor)
    return MinimizationResult(
        density=f,
        objective=ms.phi if variant == "phi" else ms.i_fisher,
        constraint_residual=err,
        iterations=it,
        el_residual_norm=el,
        converged=bool(ok),
        multiplier=float(mu),
        variant=variant,
        inner_iterations=inner,
        history=history,
    )


@dataclass
class PowerLawFit:
    targets: list
    values: list
    exponent: float
    prefactor: float
    expected_exponent: float
    expected_prefactor: float

    @property
    def exponent_error(self):
        return abs(self.exponent / self.expected_exponent - 1)

    @property
    def prefactor_error(self):
        return abs(self.prefactor / self.expected_prefactor - 1)

    def to_dict(self):
        d = self.__dict__.copy()
        d.update(exponent_error=self.exponent_error, prefactor_error=self.prefactor_error)
        return d


def thermodynamic_fit(params, fractions=(0.1, 0.2, 0.4, 0.8), num_points=4096):
    """Fit phi_min(m) = K m^(-e) over moment targets fractions * m_alpha[G].

    The expected values are e = beta lambda/alpha and K = m_alpha[G]^e phi[G].
    """
    g = closed_form_measures(params)
    targets = [float(c * g.m_alpha) for c in fractions]
    values = []
    for m in targets:
        spec = ConstraintSpec(MOMENT, params.alpha, m)
        res = minimize_fisher(spec, params, default_grid(spec, params, num_points), "phi")
        values.append(float(res.objective))
    slope, intercept = np.polyfit(np.log(targets), np.log(values), 1)
    e = params.beta * params.lambda_exponent / params.alpha
    return PowerLawFit(targets, values, float(-slope), float(math.exp(intercept)),
                       e, float(g.m_alpha ** e * g.phi))


def relative_l2(f, g):
    """||f - g||_2 / ||g||_2 on the grid of f; g may be a density or an array."""
    gv = g.values if isinstance(g, gm.GriddedDensity) else np.asarray(g)
    return math.sqrt(f.grid.integrate((f.values - gv) ** 2) / f.grid.integrate(gv ** 2))


def el_coefficients(params):
    """(A, B) with Delta_beta u = u^(k-1) (A |x|^alpha + B) at the q-Gaussian of params.

    A follows from stationarity under dilations, B from stationarity under
    multiplication by constants (the normalization multiplier).
    """
    g = closed_form_measures(params)
    beta, alpha, lam = params.beta, params.alpha, params.lambda_exponent
    k = gm.fisher_exponent_k(params.q, beta)
    mu = beta * lam / alpha * g.phi / g.m_alpha
    nu = -params.b * g.phi - mu * g.m_alpha
    c = beta * k ** (beta - 1)
    return mu / c, nu / c


def beta_laplacian(u, grid, beta):
    """div(|grad u|^(beta-2) grad u) by face fluxes over node-centred cells."""
    vol, area = gm.fv_cells(grid)
    d = np.diff(u) / grid.spacing
    flux = area * np.sign(d) * np.abs(d) ** (beta - 1)
    out = np.zeros_like(u)
    out[:-1] += flux
    out[1:] -= flux
    return out / vol


def euler_lagrange_residual(f, params, rel_floor=1e-2):
    """Relative L2 residual of Delta_beta u = u^(k-1)(A|x|^alpha + B), u = f^(1/k).

    Only nodes with f >= rel_floor * max f and off the grid ends are used:
    u^(k-1) is singular at a compact-support edge when k < 1.
    """
    k = gm.fisher_exponent_k(params.q, params.beta)
    if not k > 0:
        raise DomainError("Euler-Lagrange residual needs beta(q-1)+1 > 0")
    if f.grid.n != params.n:
        raise DomainError("grid dimension does not match params")
    a, b = el_coefficients(params)
    v = f.values
    u = np.power(v, 1.0 / k)
    lhs = beta_laplacian(u, f.grid, params.beta)
    mask = v >= rel_floor * float(np.max(v))
    mask[0] = mask[-1] = False
    if f.grid.kind == gm.RADIAL:
        mask[0] = v[0] >= rel_floor * float(np.max(v))
    rhs = np.zeros_like(v)
    rhs[mask] = np.power(u[mask], k - 1) * (a * f.grid.radius()[mask] ** params.alpha + b)
    w = np.where(mask, f.grid.quadrature, 0.0)
    num = float(np.dot(w, (lhs - rhs) ** 2))
    den = float(np.dot(w, rhs ** 2))
    return math.sqrt(num / den)


# ------------------------------------------------------------------ duality

@dataclass
class DualState:
    lambdas: list
    moments: list
    dual_value: float
    conjugate_value: float
    density: gm.GriddedDensity = None
    converged: bool = True
    targets: list = None

    def __post_init__(self):
        if self.moments and abs(self.moments[0] - 1) > 1e-9:
            raise DomainError("moments[0] must be 1 (normalization)")

    def to_dict(self):
        return {
            "lambdas": list(self.lambdas),
            "moments": list(self.moments),
            "dual_value": self.dual_value,
            "conjugate_value": self.conjugate_value,
            "converged": self.converged,
            "targets": self.targets,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _power_observable(p):
    return ConstraintSpec(MOMENT, p, 1.0)


def conjugate(lambdas, params, grid, variant="I", init=None, p=None):
    """sup over normalized f of lambda_0 + lambda_1 E|X|^p - I[f] (lambda_1 < 0).

    The inner problem min I[f] + |lambda_1| E|X|^p is solved by Newton with
    the multiplier held fixed.  Without ``init`` the start is the constrained
    minimizer at the moment the dilation argument predicts.

    Returns (value, density, E|X|^p at the maximizer, converged).  For
    lambda_1 = 0 there is no maximizer: density is None and the moment inf.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if len(lambdas) != 2:
        raise DomainError("only the single-moment setup (A0 = 1, A1 = |x|^p) is supported")
    l0, l1 = lambdas
    if l1 == 0:
        # inf I = 0 over ever wider densities, so the supremum is lambda_0 and is not attained
        return float(l0), None, math.inf, True
    if not l1 < 0:
        raise DomainError("the supremum is infinite unless lambda_1 <= 0")
    p = params.alpha if p is None else p
    spec = _power_observable(p)
    if init is None:
        m = _guess_moment(params, -l1, variant, p)
        init = _warm_start(params, p, m, grid)
        if init is None:
            init = minimize_fisher(ConstraintSpec(MOMENT, p, m), params, grid, variant).density
    prob = _Discrete(grid, params.q, params.beta)
    v, _, _, _, ok = _newton_kkt(prob, prob.variable(init.values), spec, variant, mu=-l1)
    v, extra, accepted = _support_search(prob, v, spec, variant, mu=-l1)
    if len(accepted) > 1:
        v, _, _, _, ok = _newton_kkt(prob, v, spec, variant, mu=-l1)
    f = gm.GriddedDensity(grid, prob.density(v))
    ms = gm.measure_set(f, params.q, params.beta, p)
    fisher = ms.phi if variant == "phi" else ms.i_fisher
    value = l0 + l1 * ms.m_p - fisher
    return value, f, ms.m_p, bool(ok)


def _warm_start(params, p, moment, grid):
    """The matched q-Gaussian on the grid when it is a known minimizer, else None."""
    if abs(p - params.alpha) > 1e-12:
        return None
    g = matched_params(ConstraintSpec(MOMENT, p, moment), params)
    return gm.normalize(on_grid(g, grid))


def _guess_moment(params, mu, variant, p):
    g = closed_form_measures(params.with_gamma(1.0))
    s_obj = params.beta * params.lambda_exponent if variant == "phi" else params.beta
    a = g.phi if variant == "phi" else g.i_fisher
    # minimizer of a t^(s_obj/p) + mu m t^(-1)... over dilations, expressed as a moment
    m1 = g.m_alpha
    ratio = s_obj * a / (p * mu * m1)
    return m1 * ratio ** (p / (s_obj + p))


def dual_function(lambdas, params, grid, targets, variant="I", p=None):
    """D(lambda) = sum lambda_i m_i - conjugate(lambda)."""
    value, f, mom, ok = conjugate(lambdas, params, grid, variant, p=p)
    targets = [1.0, float(targets[-1])] if len(targets) == 1 else [float(t) for t in targets]
    dual = float(np.dot(lambdas, targets)) - value
    return DualState(list(map(float, lambdas)), [1.0, float(mom)], dual, float(value), f, ok, targets)


def consistent_lambdas(params, variant="I"):
    """Multipliers whose inner optimum is G at gamma = 1.

    With I(A0, A1) = A0^h F*(A1/A0) and F*(m) proportional to m^(-s/alpha),
    the gradient at (1, m[G]) is ((h + s/alpha) F[G], -(s/alpha) F[G]/m[G]).
    """
    g = closed_form_measures(params.with_gamma(1.0))
    if variant == "I":
        value, s, h = g.i_fisher, params.beta, 1 - params.beta
    else:
        value, s, h = g.phi, params.beta * params.lambda_exponent, params.b
    return np.array([(h + s / params.alpha) * value, -s / params.alpha * value / g.m_alpha])


def primal_value(moments, params, grid, variant="I", p=None, **kw):
    """I(A) = inf {I[f] : E[1] = A_0, E|X|^p = A_1}, using I[c f] = c^(1-beta) I[f] off A_0 = 1."""
    a0, a1 = moments
    p = params.alpha if p is None else p
    kw.setdefault("init", _warm_start(params, p, a1 / a0, grid))
    res = minimize_fisher(ConstraintSpec(MOMENT, p, a1 / a0), params, grid, variant, **kw)
    hom = 1 - params.beta if variant == "I" else params.b
    return a0 ** hom * res.objective


@dataclass
class ReciprocityReport:
    lambdas: list
    moments: list
    grad_conjugate: list
    grad_primal: list
    error_conjugate: float
    error_primal: float
    complete: bool = True

    def to_dict(self):
        return self.__dict__.copy()


def reciprocity_check(lambdas, params, grid, variant="I", rel_step=1e-4):
    """Finite-difference checks of grad_lambda I(lambda) = A and grad_A I(A) = lambda."""
    lambdas = np.asarray(lambdas, dtype=float)
    value, f, mom, ok = conjugate(lambdas, params, grid, variant)
    moments = np.array([1.0, mom])
    complete = ok
    grad_c = np.zeros(2)
    for i in range(2):
        step = rel_step * max(abs(lambdas[i]), 1.0)
        e = np.zeros(2)
        e[i] = step
        up = conjugate(lambdas + e, params, grid, variant, init=f)
        dn = conjugate(lambdas - e, params, grid, variant, init=f)
        complete = complete and up[3] and dn[3]
        grad_c[i] = (up[0] - dn[0]) / (2 * step)
    grad_p = np.zeros(2)
    for i in range(2):
        step = rel_step * abs(moments[i])
        e = np.zeros(2)
        e[i] = step
        up = primal_value(moments + e, params, grid, variant)
        dn = primal_value(moments - e, params, grid, variant)
        grad_p[i] = (up - dn) / (2 * step)
    return ReciprocityReport(
        lambdas=lambdas.tolist(),
        moments=moments.tolist(),
        grad_conjugate=grad_c.tolist(),
        grad_primal=grad_p.tolist(),
        error_conjugate=float(np.linalg.norm(grad_c - moments) / np.linalg.norm(moments)),
        error_primal=float(np.linalg.norm(grad_p - lambdas) / np.linalg.norm(lambdas)),
        complete=bool(complete),
    )
