import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from qfisher import qgaussian as qg
from qfisher.errors import DivergenceError, ValidityError

SWEEP = [(n, a, q) for n in (1, 2, 3) for a in (1.5, 2.0, 3.0) for q in (0.6, 0.8, 1.0, 1.5, 2.0, 3.0)
         if q > qg.validity_bound(n, a)]

valid_params = st.builds(
    lambda n, a, u, g: qg.QGaussianParams(n, a, qg.validity_bound(n, a) + 0.02 + u, g),
    st.integers(1, 3), st.floats(1.2, 4.0), st.floats(0.0, 2.5), st.floats(0.1, 10.0),
)


def worked():
    return qg.QGaussianParams(1, 2.0, 2.0, 1.0)


# -- mu_{p,nu} and the partition function ----------------------------------

@pytest.mark.parametrize("p, s, expected", [(0, 0, math.sqrt(math.pi)), (0, 1, 4 / 3), (2, 1, 4 / 15)])
def test_mu_p_nu_examples(p, s, expected):
    assert qg.mu_p_nu(p, 1.0, s, 1.0, 1, 2.0) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("p, nu, s, n, alpha", [(0, 1, -0.3, 1, 2), (2, 1, -0.2, 2, 1.5), (1, 0.8, 0.5, 3, 3),
                                                (0.5, 2, 0, 2, 2.5)])
def test_mu_p_nu_against_quadrature(p, nu, s, n, alpha):
    from qfisher import mathkit

    def integrand(r):
        base = 1 - s * r ** alpha
        kernel = math.exp(-nu * r ** alpha) if s == 0 else (max(base, 0.0) ** (nu / s))
        return mathkit.sphere_area(n) * r ** (n - 1 + p) * kernel

    upper = (1 / s) ** (1 / alpha) if s > 0 else math.inf
    exact, _ = integrate.quad(integrand, 0, upper, limit=400, epsabs=0, epsrel=1e-12)
    assert qg.mu_p_nu(p, nu, s, 1.0, n, alpha) == pytest.approx(exact, rel=1e-9)


def test_mu_p_nu_divergence_names_branch():
    with pytest.raises(DivergenceError, match="s<0 branch"):
        qg.mu_p_nu(2.0, 1.0, -0.8, 1.0, 1, 2.0)


@pytest.mark.parametrize("q, gamma, expected", [(1.0, 1.0, math.sqrt(math.pi)), (2.0, 1.0, 4 / 3), (2.0, 4.0, 2 / 3)])
def test_partition_function_examples(q, gamma, expected):
    assert qg.partition_function(qg.QGaussianParams(1, 2.0, q, gamma)) == pytest.approx(expected, rel=1e-13)


@given(valid_params)
def test_partition_function_scale_rule(p):
    z1 = qg.partition_function(p.with_gamma(1.0))
    assert qg.partition_function(p) == pytest.approx(p.gamma ** (-p.n / p.alpha) * z1, rel=1e-12)


# -- parameter validation ---------------------------------------------------

@pytest.mark.parametrize("kw", [dict(n=3, alpha=2, q=0.1), dict(n=1, alpha=1.0, q=2), dict(n=1, alpha=2, q=2, gamma=0),
                                dict(n=0, alpha=2, q=2), dict(n=2, alpha=2, q=0.5)])
def test_invalid_params_rejected(kw):
    with pytest.raises(ValidityError):
        qg.QGaussianParams(**kw)


def test_validity_message_names_the_bound():
    with pytest.raises(ValidityError, match=r"max\{\(n-1\)/n, n/\(n\+alpha\)\}"):
        qg.QGaussianParams(3, 2.0, 0.1)


def test_derived_fields():
    p = qg.QGaussianParams(2, 3.0, 1.5, 1.0)
    assert p.beta == pytest.approx(1.5)
    assert p.q_star == pytest.approx(0.5)
    assert p.lambda_exponent == pytest.approx(2.0)
    assert p.b == pytest.approx(1.75)


# -- density ------------------------------------------------------------------

def test_density_examples():
    assert qg.density(worked(), 0.0) == pytest.approx(0.75)
    assert qg.density(worked(), 2.0) == 0.0
    assert qg.density(qg.QGaussianParams(1, 2.0, 1.0, 1.0), 0.0) == pytest.approx(1 / math.sqrt(math.pi))


def test_density_zero_at_support_edge():
    assert qg.density(worked(), 1.0) == 0.0


def test_density_takes_points_in_rn():
    p = qg.QGaussianParams(3, 2.0, 1.5, 1.0)
    x = np.array([[0.1, 0.2, 0.3], [0.0, 0.0, 0.0]])
    np.testing.assert_allclose(qg.density(p, x), qg.profile(p, np.linalg.norm(x, axis=1)))


@pytest.mark.parametrize("n, alpha, q", SWEEP)
def test_density_integrates_to_one(n, alpha, q):
    from qfisher import mathkit

    p = qg.QGaussianParams(n, alpha, q, 1.0)
    upper = p.support_radius()

    def radial(r):
        return mathkit.sphere_area(n) * r ** (n - 1) * qg.profile(p, r)

    if math.isinf(upper):
        mass = integrate.quad(radial, 0, 1, epsrel=1e-13, limit=200)[0] + \
            integrate.quad(radial, 1, math.inf, epsrel=1e-13, limit=400)[0]
    else:
        mass = integrate.quad(radial, 0, upper, epsrel=1e-13, limit=400)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)


# -- closed forms -------------------------------------------------------------

def test_worked_example_closed_forms():
    cf = qg.closed_form_measures(worked())
    assert cf.Mq == pytest.approx(3 / 5, rel=1e-14)
    assert cf.m_alpha == pytest.approx(1 / 5, rel=1e-14)
    assert cf.phi == pytest.approx(9 / 20, rel=1e-14)
    assert cf.i_fisher == pytest.approx(5.0, rel=1e-14)
    assert cf.Nq == pytest.approx(25 / 9, rel=1e-14)


def test_worked_example_by_direct_integration():
    # independent oracle: f = (3/4)(1 - x^2) on [-1, 1]
    f = lambda x: 0.75 * (1 - x * x)
    fp = lambda x: -1.5 * x
    m2 = integrate.quad(lambda x: f(x) ** 2, -1, 1)[0]
    mom = integrate.quad(lambda x: x * x * f(x), -1, 1)[0]
    phi = integrate.quad(lambda x: f(x) * fp(x) ** 2, -1, 1)[0]
    cf = qg.closed_form_measures(worked())
    assert (cf.Mq, cf.m_alpha, cf.phi) == pytest.approx((m2, mom, phi), rel=1e-12)
    assert cf.i_fisher == pytest.approx((2 / m2) ** 2 * phi, rel=1e-12)


def test_classical_gaussian_case():
    cf = qg.closed_form_measures(qg.QGaussianParams(1, 2.0, 1.0, 0.5))
    assert cf.phi == pytest.approx(1.0, rel=1e-13)
    assert cf.m_alpha == pytest.approx(1.0, rel=1e-13)
    assert cf.i_fisher == pytest.approx(1.0, rel=1e-13)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_classical_reduction_n_over_variance(n):
    # exp(-|x|^2 / 2) in R^n: per-coordinate variance 1, Fisher information n
    cf = qg.closed_form_measures(qg.QGaussianParams(n, 2.0, 1.0, 0.5))
    assert cf.phi == pytest.approx(n, rel=1e-12)


@pytest.mark.parametrize("n, alpha, q", SWEEP)
def test_cramer_rao_saturation_closed_form(n, alpha, q):
    p = qg.QGaussianParams(n, alpha, q, 1.7)
    cf = qg.closed_form_measures(p)
    assert cf.i_fisher ** (1 / p.beta) * cf.m_alpha ** (1 / alpha) == pytest.approx(n, rel=1e-10)


@given(valid_params)
def test_cramer_rao_saturation_property(p):
    cf = qg.closed_form_measures(p)
    assert cf.i_fisher ** (1 / p.beta) * cf.m_alpha ** (1 / p.alpha) == pytest.approx(p.n, rel=1e-10)


@given(valid_params)
def test_closed_form_internal_identities(p):
    cf = qg.closed_form_measures(p)
    assert cf.i_fisher == pytest.approx((p.q / cf.Mq) ** p.beta * cf.phi, rel=1e-12)
    if abs(p.q - 1) > 1e-9:
        assert cf.Nq == pytest.approx(cf.Mq ** (2 / p.n / (1 - p.q)), rel=1e-10)


@given(valid_params)
def test_two_moment_relations_agree(p):
    if abs(p.q - 1) < 1e-6:
        return
    cf = qg.closed_form_measures(p)
    n, a, q, g = p.n, p.alpha, p.q, p.gamma
    assert 1 / g == pytest.approx(((1 + a / n) * q - 1) * cf.m_alpha, rel=1e-12)
    appendix = (n / a) / (g * (q - 1) * (1 / (q - 1) + n / a + 1))
    assert cf.m_alpha == pytest.approx(appendix, rel=1e-12)


@pytest.mark.parametrize("n, alpha", [(1, 2.0), (2, 1.5), (3, 3.0)])
@pytest.mark.parametrize("sign", [-1, 1])
def test_q_one_continuity(n, alpha, sign):
    at_one = qg.closed_form_measures(qg.QGaussianParams(n, alpha, 1.0, 1.3))
    near = qg.closed_form_measures(qg.QGaussianParams(n, alpha, 1.0 + sign * 1e-6, 1.3))
    for name in ("Z", "Mq", "Hq", "Nq", "m_alpha", "phi", "i_fisher"):
        assert getattr(near, name) == pytest.approx(getattr(at_one, name), rel=1e-4), name


def test_beta_override_is_flagged():
    cf = qg.closed_form_measures(worked(), beta_override=3.0)
    assert cf.beta_overridden and cf.beta == 3.0


def test_closed_form_divergence():
    # q just above the window for n=1, alpha=2 still converges; far below is rejected at construction
    with pytest.raises(ValidityError):
        qg.QGaussianParams(1, 2.0, 0.3)


# -- scaling --------------------------------------------------------------------

def test_scaling_examples():
    p = worked()
    phi1 = qg.closed_form_measures(p).phi
    phi3 = qg.closed_form_measures(p.with_gamma(3.0)).phi
    assert phi3 / phi1 == pytest.approx(9.0, rel=1e-12)
    p2 = qg.QGaussianParams(2, 2.0, 1.5, 2.0)
    ratio = qg.closed_form_measures(p2).Mq / qg.closed_form_measures(p2.with_gamma(1.0)).Mq
    assert ratio == pytest.approx(2 ** 0.5, rel=1e-12)


def test_scaling_trivial_at_unit_gamma():
    assert all(v == 0 for v in qg.check_scaling(qg.QGaussianParams(2, 3.0, 0.9, 1.0)).values())


@given(valid_params)
def test_scaling_identities(p):
    assert max(qg.check_scaling(p).values()) <= 1e-10


@given(valid_params)
def test_gamma_solvers_invert_measures(p):
    cf = qg.closed_form_measures(p)
    assert qg.gamma_for_moment(p, cf.m_alpha) == pytest.approx(p.gamma, rel=1e-11)
    assert qg.gamma_for_entropy_power(p, cf.Nq) == pytest.approx(p.gamma, rel=1e-9)


# -- sampling -------------------------------------------------------------------

def test_sample_second_moment_gaussian():
    x = qg.sample(qg.QGaussianParams(1, 2.0, 1.0, 0.5), 10**6, seed=1)
    assert np.mean(x ** 2) == pytest.approx(1.0, abs=0.005)


def test_sample_second_moment_compact():
    x = qg.sample(worked(), 10**6, seed=2)
    assert np.mean(x ** 2) == pytest.approx(0.2, abs=0.002)
    assert np.all(np.abs(x) <= 1.0)


def test_sample_empty_and_deterministic():
    p = qg.QGaussianParams(2, 2.0, 0.8, 1.0)
    assert qg.sample(p, 0, seed=0).shape == (0, 2)
    np.testing.assert_array_equal(qg.sample(p, 100, seed=5), qg.sample(p, 100, seed=5))


@pytest.mark.parametrize("n, alpha, q", [(2, 2.0, 0.8), (3, 1.5, 1.5), (1, 3.0, 0.8)])
def test_sample_moment_matches_closed_form(n, alpha, q):
    p = qg.QGaussianParams(n, alpha, q, 1.0)
    r = np.linalg.norm(qg.sample(p, 400_000, seed=3), axis=1)
    m = qg.closed_form_measures(p).m_alpha
    # moments of order alpha of heavy tails converge slowly; compare a lower moment too
    assert np.mean(r ** (alpha / 2)) == pytest.approx(qg.moment(p, alpha / 2), rel=0.01)
    if q >= 1:
        assert np.mean(r ** alpha) == pytest.approx(m, rel=0.01)


# -- grid helpers -----------------------------------------------------------------

@pytest.mark.parametrize("n, alpha, q", SWEEP)
def test_grid_extent_leaves_small_tail(n, alpha, q):
    p = qg.QGaussianParams(n, alpha, q, 1.0)
    r = qg.grid_extent(p, 1e-9)
    assert qg.tail_fraction(p, r) <= 1e-9
