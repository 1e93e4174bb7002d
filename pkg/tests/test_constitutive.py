import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fields import EXAMPLE_COEFFICIENTS, band_limited, dissipative_coefficients, positive_density, tangent_rate, unit_director
from leslie_flow.constitutive import (
    CoefficientError,
    LeslieCoefficients,
    VacuumError,
    corotational_N,
    director_force,
    elastic_stress,
    flow_tensors,
    flow_tensors_from_gradient,
    gamma_pointwise,
    kinematic_g,
    lagrange_gamma,
    leslie_stress,
    residuals,
    rotate,
    strain,
    stresses,
    validate,
)
from leslie_flow.grid import Grid2D, divergence, gradient, inner_product, laplacian
from leslie_flow.solver import make_initial

G = Grid2D(32)


def point(*values):
    """Pointwise vector with a trailing 1x1 grid."""
    return np.array(values, dtype=float).reshape(len(values), 1, 1)


def shear_gradient():
    grad_u = np.zeros((2, 2, 1, 1))
    grad_u[1, 0] = 1.0  # d_2 u_1 = 1
    return grad_u


def test_navier_stokes_reduction_flags():
    c = validate(mu4=1.0)
    assert (c.lambda1, c.lambda2) == (0.0, 0.0)
    assert c.flags() == {"parodi_ok": True, "dissipative": True, "strictly_damped": False}


def test_supplied_lambda_must_match():
    with pytest.raises(CoefficientError, match="lambda1 must equal mu2 - mu3 = 1"):
        validate(mu2=1.0, mu3=0.0, mu6=1.0, lambda1=0.0)


def test_example_set_is_strictly_damped():
    c = validate(**EXAMPLE_COEFFICIENTS)
    assert (c.lambda1, c.lambda2) == (-1.0, 1.0)
    assert c.reduced_stretch == 0.0
    assert c.dissipative() and c.strictly_damped()


def test_parodi_violation_names_the_relation():
    with pytest.raises(CoefficientError, match="Parodi"):
        LeslieCoefficients(mu2=1.0)


@pytest.mark.parametrize("kwargs, fragment", [
    (dict(a=1.0), "pressure amplitude"),
    (dict(gamma=0.5), "adiabatic exponent"),
    (dict(mu1=math.nan), "finite"),
])
def test_validate_rejects_pressure_and_nonfinite(kwargs, fragment):
    with pytest.raises(CoefficientError, match=fragment):
        validate(**kwargs)


def test_validate_reports_all_violations():
    with pytest.raises(CoefficientError) as info:
        validate(mu2=1.0, a=0.5, gamma=0.5)
    assert len(info.value.violations) == 3


@pytest.mark.parametrize("kwargs, dissipative", [
    (dict(mu4=0.0), False),
    (dict(mu4=1.0, xi=-0.6), False),
    (dict(mu4=1.0, mu1=-0.1), False),
    (dict(mu4=1.0, mu2=0.5, mu3=-0.5), False),   # lambda1 > 0
    (dict(mu4=1.0, mu5=0.5, mu6=-0.5), False),   # lambda1 = 0 with lambda2 != 0
    (dict(mu4=1.0, mu2=-1.0, mu5=1.0), True),
    (dict(mu4=1.0, mu2=-1.0, mu5=0.9, mu6=0.1, mu3=-0.0), False),  # Parodi breaks below
])
def test_dissipative_predicate(kwargs, dissipative):
    try:
        c = LeslieCoefficients(**kwargs)
    except CoefficientError:
        return
    assert c.dissipative() is dissipative


def test_flow_tensors_of_shear():
    A, B = flow_tensors_from_gradient(shear_gradient())
    assert A[0, 1, 0, 0] == A[1, 0, 0, 0] == 0.5
    assert B[0, 1, 0, 0] == 0.5 and B[1, 0, 0, 0] == -0.5
    d, ddot = point(1, 0), point(0, 0)
    assert np.array_equal(rotate(B, d)[:, 0, 0], [0.0, 0.5])
    assert np.array_equal(corotational_N(ddot, B, d)[:, 0, 0], [0.0, 0.5])


def test_zero_velocity_gives_zero_tensors():
    A, B = flow_tensors(G, np.zeros((2, 32, 32)))
    assert not A.any() and not B.any()
    ddot = np.ones((2, 32, 32))
    assert np.array_equal(corotational_N(ddot, B, np.ones((2, 32, 32))), ddot)


def test_kinematic_g_examples():
    A, _ = flow_tensors_from_gradient(shear_gradient())
    d, N = point(1, 0), point(0, 0.5)
    assert not kinematic_g(LeslieCoefficients(), N, A, d).any()
    damped_only = LeslieCoefficients(mu2=-0.5, mu3=0.5)  # lambda1 = -1, lambda2 = 0
    assert np.allclose(kinematic_g(damped_only, N, A, d)[:, 0, 0], [0.0, -0.5])
    coupled = LeslieCoefficients(mu2=-1.0, mu5=1.0)  # lambda1 = -1, lambda2 = 1
    assert np.allclose(kinematic_g(coupled, N, A, d)[:, 0, 0], [0.0, 0.0])


def test_gamma_examples():
    zero_t = np.zeros((2, 2, 1, 1))
    assert gamma_pointwise(0.0, np.ones((1, 1)), point(0, 0), zero_t, zero_t, point(1, 0))[0, 0] == 0.0
    grad_d = np.zeros((2, 2, 1, 1))
    grad_d[0, 0], grad_d[1, 1], grad_d[0, 1] = 1.0, 1.0, 1.0  # |grad d|^2 = 3
    assert gamma_pointwise(0.0, np.full((1, 1), 2.0), point(1, 0), grad_d, zero_t, point(1, 0))[0, 0] == 1.0
    A, _ = flow_tensors_from_gradient(shear_gradient())
    d = point(1, 1) / math.sqrt(2)
    assert gamma_pointwise(1.0, np.ones((1, 1)), point(0, 0), zero_t, A, d)[0, 0] == pytest.approx(-0.5)


def test_lagrange_gamma_warns_off_sphere():
    st = make_initial("stationary_harmonic", G)
    with pytest.warns(RuntimeWarning, match="unit length"):
        lagrange_gamma(G, LeslieCoefficients(), st.rho, st.u, 1.1 * st.d, st.ddot)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        gam = lagrange_gamma(G, LeslieCoefficients(), st.rho, st.u, st.d, st.ddot)
    assert np.max(np.abs(gam - 1.0)) < 1e-13


def test_stress_examples():
    st = make_initial("custom", G, d=(0.0, 1.0))
    s1, s2, s3 = stresses(G, validate(**EXAMPLE_COEFFICIENTS), st.u, st.d, st.ddot)
    assert not s1.any() and not s2.any() and not s3.any()
    harmonic = make_initial("stationary_harmonic", G)
    s2 = elastic_stress(gradient(G, harmonic.d))
    assert np.max(np.abs(s2[0, 0] + 0.5)) < 1e-13 and np.max(np.abs(s2[1, 1] - 0.5)) < 1e-13
    assert np.max(np.abs(s2[0, 1])) < 1e-13


def test_leslie_stress_mu2_entry():
    # mu6 = 1 keeps Parodi; it multiplies A, which vanishes here
    c = LeslieCoefficients(mu2=1.0, mu6=1.0)
    zero = np.zeros((2, 2, 1, 1))
    sigma = leslie_stress(c, zero, zero, point(1, 0), point(0, 1))[:, :, 0, 0]
    assert np.array_equal(sigma, [[0.0, 1.0], [0.0, 0.0]])


def test_residuals_vanish_at_equilibrium_and_harmonic_map():
    c = validate(**EXAMPLE_COEFFICIENTS)
    for kind in ("equilibrium_perturbation", "stationary_harmonic"):
        res = residuals(G, c, make_initial(kind, G))
        assert max(float(np.max(np.abs(r))) for r in res) < 1e-12


def test_pressure_residual():
    c = LeslieCoefficients()
    x1, _ = G.coords
    rho = 1.0 + 0.1 * np.sin(x1)
    st = make_initial("custom", G, rho=rho)
    res = residuals(G, c, st)
    assert np.max(np.abs(res.mass)) < 1e-14
    expected = -c.a * c.gamma * rho ** (c.gamma - 1) * 0.1 * np.cos(x1)
    assert np.max(np.abs(res.momentum[0] - expected)) < 1e-12
    assert np.max(np.abs(res.momentum[1])) < 1e-13


def test_residuals_reject_vacuum():
    st = make_initial("custom", G)
    bad = st.evolve(0.0, rho=np.zeros((32, 32)) + 1e-9)
    with pytest.raises(VacuumError, match="vacuum"):
        residuals(G, LeslieCoefficients(), bad)


seeds = st.integers(min_value=0, max_value=2**31 - 1)


def _random_state(seed):
    rng = np.random.default_rng(seed)
    d = unit_director(G, rng)
    return rng, positive_density(G, rng), band_limited(G, rng, 3, (2,)) / 5, d, tangent_rate(d, G, rng)


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_tensor_symmetries(seed):
    _, _, u, d, _ = _random_state(seed)
    A, B = flow_tensors(G, u)
    assert np.max(np.abs(A - A.swapaxes(0, 1))) == 0.0
    assert np.max(np.abs(B + B.swapaxes(0, 1))) == 0.0
    grad_u = gradient(G, u)
    assert np.max(np.abs((A + B) - grad_u.swapaxes(0, 1))) < 1e-13
    assert np.max(np.abs(np.einsum("i...,i...->...", d, rotate(B, d)))) < 1e-13


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_stress_power_decomposition(seed):
    rng, rho, u, d, ddot = _random_state(seed)
    c = dissipative_coefficients(rng)
    A, B = flow_tensors(G, u)
    direct = inner_product(G, divergence(G, leslie_stress(c, A, B, d, ddot)), u)
    N = corotational_N(ddot, B, d)
    Ad = strain(A, d)
    completed = (-c.mu1 * G.integrate(np.sum(d * Ad, axis=0) ** 2)
                 + c.lambda1 * G.integrate(np.sum((N + c.lambda_ratio * Ad) ** 2, axis=0))
                 - c.reduced_stretch * G.integrate(np.sum(Ad**2, axis=0))
                 - inner_product(G, ddot, kinematic_g(c, N, A, d)))
    assert direct == pytest.approx(completed, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_dissipation_integrands_pointwise_nonnegative(seed):
    rng, _, u, d, ddot = _random_state(seed)
    c = dissipative_coefficients(rng, lambda1_zero=bool(seed % 5 == 0))
    A, B = flow_tensors(G, u)
    Ad = strain(A, d)
    N = corotational_N(ddot, B, d)
    terms = [
        c.mu1 * np.sum(d * Ad, axis=0) ** 2,
        -c.lambda1 * np.sum((N + c.lambda_ratio * Ad) ** 2, axis=0),
        c.reduced_stretch * np.sum(Ad**2, axis=0),
        0.5 * c.mu4 * np.sum(gradient(G, u) ** 2, axis=(0, 1)),
        (0.5 * c.mu4 + c.xi) * divergence(G, u) ** 2,
    ]
    assert min(float(t.min()) for t in terms) >= -1e-12


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_tangency_identity(seed):
    rng, rho, u, d, ddot = _random_state(seed)
    c = dissipative_coefficients(rng)
    A, B = flow_tensors(G, u)
    force = director_force(c, rho, A, B, d, ddot, gradient(G, d), laplacian(G, d))
    lhs = np.sum(d * force, axis=0)
    assert np.max(np.abs(lhs + rho * np.sum(ddot**2, axis=0))) < 1e-10


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_elastic_cancellation(seed):
    _, _, u, d, _ = _random_state(seed)
    grad_d = gradient(G, d)
    convect = np.einsum("j...,ji...->i...", u, grad_d)
    gram = np.einsum("jk...,ik...->ji...", grad_d, grad_d)
    half = 0.5 * np.sum(grad_d**2, axis=(0, 1))
    sym = gram - half * np.eye(2)[:, :, None, None]
    total = inner_product(G, laplacian(G, d), convect) - inner_product(G, divergence(G, sym), u)
    assert abs(total) < 1e-10
