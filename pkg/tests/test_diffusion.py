import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize

from qfisher import diffusion as dif
from qfisher import grid_measures as gm
from qfisher.errors import ConfigError, DomainSizeError, PreconditionError, StepRejected


def config(beta=2.0, m=2.0, n=1, t0=1.0, t1=1.2, num_points=512, record_every=20, **kw):
    return dif.barenblatt_config(beta, m, n, t0, t1, num_points, record_every=record_every, **kw)


# -- configuration ----------------------------------------------------------------

def test_derived_quantities():
    c = config()
    assert (c.alpha, c.q, c.delta, c.lambda_exponent) == pytest.approx((2.0, 2.0, 3.0, 2.0))


@pytest.mark.parametrize("kw", [dict(beta=1.0), dict(m=0.0), dict(t0=2.0, t1=1.0), dict(cfl=1.5),
                                dict(record_every=0)])
def test_invalid_config(kw):
    grid = gm.GridSpec.interval(-4, 4, 64)
    base = dict(beta=2.0, m=2.0, grid=grid, t0=1.0, t1=2.0, cfl=0.9, record_every=10)
    base.update(kw)
    with pytest.raises(ConfigError):
        dif.DiffusionConfig(**base)


def test_nonpositive_delta_rejected():
    with pytest.raises(ConfigError, match="delta"):
        dif.DiffusionConfig(2.0, 0.2, gm.GridSpec.radial(3, 4, 64))


def test_q_below_validity_window_rejected():
    # delta = 1.2 > 0 but q = 0.2 makes the Renyi entropy infinite
    with pytest.raises(ConfigError, match=r"max\(\(n-1\)/n, n/\(n\+alpha\)\)"):
        dif.DiffusionConfig(2.0, 0.2, gm.GridSpec.interval(-4, 4, 64))


def test_grid_must_be_symmetric():
    with pytest.raises(ConfigError):
        dif.DiffusionConfig(2.0, 2.0, gm.GridSpec.interval(-1, 4, 64))


@given(st.floats(1.2, 4.0), st.floats(0.3, 4.0), st.integers(1, 3))
def test_delta_identity(beta, m, n):
    assert dif.delta_identity_gap(beta, m, n) <= 1e-12 * (1 + n * beta * m)


# -- Barenblatt --------------------------------------------------------------------

def mass_root_oracle(k, e, n=1, alpha=2.0):
    """C from unit mass by bracketing, integrating the profile directly."""
    def mass(C):
        edge = (C / k) ** (1 / alpha)
        return 2 * integrate.quad(lambda r: (C - k * r ** alpha) ** e, 0, edge, epsrel=1e-13)[0] - 1
    return optimize.brentq(mass, 1e-6, 100, xtol=1e-15, rtol=1e-14)


def test_porous_medium_constants():
    const = dif.barenblatt_constants(2.0, 2.0, 1)
    assert const.k == pytest.approx(1 / 12, rel=1e-14)
    assert const.exponent == pytest.approx(1.0)
    assert const.C == pytest.approx(mass_root_oracle(1 / 12, 1.0), rel=1e-12)
    assert const.C == pytest.approx((3 / (4 * math.sqrt(12))) ** (2 / 3), rel=1e-12)


@pytest.mark.parametrize("beta, m", [(2.0, 3.0), (3.0, 1.0), (1.5, 3.0)])
def test_constants_against_root_finding(beta, m):
    const = dif.barenblatt_constants(beta, m, 1)
    assert const.C == pytest.approx(mass_root_oracle(const.k, const.exponent, 1, beta / (beta - 1)), rel=1e-10)


def test_heat_kernel_reduction():
    c = config(m=1.0)
    for t in (0.5, 1.0, 2.0):
        x = np.linspace(-5, 5, 11)
        heat = np.exp(-x * x / (4 * t)) / math.sqrt(4 * math.pi * t)
        np.testing.assert_allclose(dif.barenblatt_profile(c, t, x), heat, rtol=1e-12)


@pytest.mark.parametrize("beta, m, n", [(2.0, 2.0, 1), (2.0, 1.0, 1), (2.0, 0.75, 1), (3.0, 1.0, 2),
                                        (2.0, 2.0, 3), (1.5, 2.5, 1)])
def test_barenblatt_has_unit_mass(beta, m, n):
    from qfisher import mathkit

    c = config(beta, m, n, t1=2.0, num_points=1024)
    area = mathkit.sphere_area(n)
    for t in (0.5, 1.0, 2.0):
        assert dif.barenblatt(c, t).mass() == pytest.approx(1.0, abs=1e-8)
        edge = dif.barenblatt_extent(beta, m, n, t, rel=1e-16)
        exact = integrate.quad(lambda r: area * r ** (n - 1) * float(dif.barenblatt_profile(c, t, r)),
                               0, edge, epsrel=1e-12, limit=200)[0]
        assert exact == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("beta, m", [(2.0, 2.0), (3.0, 1.5), (1.5, 3.0)])
def test_barenblatt_solves_the_equation(beta, m):
    # f_t = (|(f^m)_x|^(beta-2) (f^m)_x)_x checked by finite differences at interior points
    c = config(beta, m, t1=2.0)
    x = np.array([-0.4, -0.3, -0.2, -0.1, 0.1, 0.2, 0.3, 0.4])
    h, dt = 1e-4, 1e-5

    def flux(xx, t):
        w = lambda y: dif.barenblatt_profile(c, t, y) ** m
        d = (w(xx + h) - w(xx - h)) / (2 * h)
        return np.abs(d) ** (beta - 2) * d

    lhs = (dif.barenblatt_profile(c, 1 + dt, x) - dif.barenblatt_profile(c, 1 - dt, x)) / (2 * dt)
    rhs = (flux(x + h, 1.0) - flux(x - h, 1.0)) / (2 * h)
    np.testing.assert_allclose(lhs, rhs, rtol=2e-4, atol=1e-6)


# -- stepping ----------------------------------------------------------------------

def test_uniform_density_is_stationary():
    grid = gm.GridSpec.interval(-1, 1, 64)
    c = dif.DiffusionConfig(2.0, 2.0, grid)
    f = gm.GriddedDensity(grid, np.full(64, 0.5))
    np.testing.assert_array_equal(dif.step(f, c, 1e-4).values, f.values)


def test_step_rejects_large_dt():
    c = config()
    f = dif.barenblatt(c, 1.0)
    bound = dif.stability_bound(f, c)
    with pytest.raises(StepRejected) as info:
        dif.step(f, c, 2 * bound)
    assert info.value.admissible == pytest.approx(c.cfl * bound)


def test_one_step_tracks_barenblatt():
    c = config(num_points=1024)
    f = dif.barenblatt(c, 1.0)
    dt = 0.5 * dif.stability_bound(f, c)
    g = dif.step(f, c, dt)
    err = dif.self_similarity_error(g, c, 1.0 + dt)
    assert err <= 10 * (dt ** 2 + c.grid.spacing ** 2) + 1e-6
    assert dif.fv_mass(g) == pytest.approx(dif.fv_mass(f), abs=1e-13)


@pytest.fixture(scope="module")
def heat_run():
    grid = gm.GridSpec.interval(-12, 12, 512)
    c = dif.DiffusionConfig(2.0, 1.0, grid, t0=0.5, t1=1.0, record_every=40)
    initial = gm.normalize(gm.GriddedDensity(grid, np.exp(-grid.nodes ** 2 / 2)))
    return c, dif.solve(c, initial)


def test_heat_variance_law(heat_run):
    c, traj = heat_run
    var = traj.series("m_p")
    assert var[-1] == pytest.approx(var[0] + 2 * (c.t1 - c.t0), rel=1e-2)


def test_heat_debruijn(heat_run):
    c, traj = heat_run
    rep = dif.debruijn_residuals(traj, c)
    assert rep.max_renyi <= 0.02
    mid = rep.rows[len(rep.rows) // 2]
    assert abs(mid["dH_dt"] - traj.measures[len(traj.times) // 2].phi) <= 0.02 * mid["rhs_renyi"]


@pytest.fixture(scope="module")
def porous_run():
    c = config(num_points=512, t1=1.3)
    return c, dif.solve(c, dif.barenblatt(c, c.t0))


def test_mass_conserved_and_positive(porous_run, heat_run):
    for _, traj in (porous_run, heat_run):
        assert max(abs(m - 1) for m in traj.mass_history) <= 1e-6
        assert all(np.all(f.values >= 0) for f in traj.densities)
        assert np.all(np.diff(traj.times) > 0)


def test_entropy_nondecreasing(porous_run, heat_run):
    for _, traj in (porous_run, heat_run):
        assert np.all(np.diff(traj.series("Hq")) >= -1e-12)


def test_porous_debruijn_small_grid(porous_run):
    c, traj = porous_run
    rep = dif.debruijn_residuals(traj, c)
    assert rep.max_renyi <= 0.02 and rep.max_tsallis <= 0.02 and rep.max_power <= 0.03
    assert rep.bound_holds
    assert rep.factorization_gap <= 1e-12
    assert rep.tsallis_ratio_gap <= 1e-12


def test_self_similarity_improves_with_resolution():
    errs = []
    for npts in (256, 512):
        c = config(num_points=npts, t1=1.3)
        traj = dif.solve(c, dif.barenblatt(c, c.t0))
        errs.append(dif.self_similarity_error(traj.densities[-1], c, c.t1))
    assert errs[0] / errs[1] >= 3


def test_debruijn_needs_snapshots():
    c = config()
    traj = dif.Trajectory()
    f = dif.barenblatt(c, 1.0)
    for t in (1.0, 1.1):
        traj.append(t, f, gm.measure_set(f, c.q, c.beta, c.alpha), 1.0)
    with pytest.raises(PreconditionError):
        dif.debruijn_residuals(traj, c)


def test_fast_diffusion_checks_domain():
    c = config(m=0.75, margin=0.5)
    with pytest.raises(DomainSizeError):
        dif.fast_diffusion_case(c)
    with pytest.raises(ConfigError):
        dif.fast_diffusion_case(config(m=2.0))


# -- time derivatives ---------------------------------------------------------------

@given(st.lists(st.floats(0.01, 1.0), min_size=7, max_size=12), st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_stencil_derivative_exact_on_quartics(gaps, coef):
    t = np.cumsum(gaps)
    values = np.polyval(coef, t)
    exact = np.polyval(np.polyder(coef), t)
    d = dif.stencil_derivative(t, values)
    scale = 1 + np.max(np.abs(values))
    np.testing.assert_allclose(d[2:-2], exact[2:-2], atol=1e-7 * scale * (1 + t[-1]) ** 4)
    assert np.all(np.isnan(d[:2])) and np.all(np.isnan(d[-2:]))


def test_trajectory_csv(tmp_path, porous_run):
    c, traj = porous_run
    rep = dif.debruijn_residuals(traj, c)
    path = dif.write_trajectory_csv(traj, tmp_path / "traj.csv", rep, meta={"seed": 0})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    assert lines[1].split(",") == dif.TRAJECTORY_COLUMNS + dif.RESIDUAL_COLUMNS
    assert len(lines) == 2 + len(traj.times)
