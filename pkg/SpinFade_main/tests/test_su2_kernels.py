import numpy as np
import pytest
from scipy.linalg import expm

from Ensemble_model import FieldVector
from SU2_kernels import (IDENTITY, PAULI, SIGMA_Z, exp_field, g_factor, interference_operator,
                         interference_series, is_unitary, propagator, rotation_parameters,
                         rotation_parameters_closed_form)

# Settings
seed = 0
nruns = 20
tol = 1e-12

rng = np.random.default_rng(seed)
cases = [(rng.normal(size=3), rng.normal(size=3), rng.uniform(0, 5)) for _ in range(nruns)]


def b_dot_sigma(b):
    return sum(bi * s for bi, s in zip(b, PAULI))


@pytest.mark.parametrize("b,bk,t", cases)
def test_propagator_matches_expm(b, bk, t):
    u = propagator(FieldVector.from_array(b), t)
    assert np.allclose(u, expm(-1j * t * b_dot_sigma(b)), atol=tol)
    assert is_unitary(u)


@pytest.mark.parametrize("b,bk,t", cases)
def test_propagator_group_property(b, bk, t):
    fv = FieldVector.from_array(b)
    t2 = 0.37 * t + 0.5
    assert np.allclose(propagator(fv, t) @ propagator(fv, t2), propagator(fv, t + t2), rtol=0, atol=1e-11)
    assert np.allclose(propagator(fv, t) @ propagator(fv, -t), IDENTITY, rtol=0, atol=1e-11)


@pytest.mark.parametrize("b,bk,t", cases)
def test_interference_operator(b, bk, t):
    op = interference_operator(FieldVector.from_array(b), FieldVector.from_array(bk), t)
    ref = expm(1j * t * b_dot_sigma(b)) @ expm(-1j * t * b_dot_sigma(bk))
    assert np.allclose(op, ref, atol=tol)


@pytest.mark.parametrize("b,bk,t", cases)
def test_rotation_parameters(b, bk, t):
    mean, atom = FieldVector.from_array(b), FieldVector.from_array(bk)
    r, i_vec = rotation_parameters(interference_operator(mean, atom, t))
    assert abs(r**2 + np.dot(i_vec, i_vec) - 1.0) < 1e-12
    r_cf, i_cf = rotation_parameters_closed_form(mean, atom, t)
    assert abs(r - r_cf) < tol
    assert np.allclose(i_vec, i_cf, atol=tol)


def test_pure_z_propagator():
    assert np.allclose(propagator(FieldVector(0.0, 0.0, 1.0), np.pi / 2), np.diag([-1j, 1j]), atol=tol)
    assert np.allclose(propagator(FieldVector(0.0, 0.0, 0.0), 3.0), IDENTITY)


def test_same_field_gives_identity():
    fv = FieldVector(0.3, -0.4, 1.2)
    assert np.allclose(interference_operator(fv, fv, 7.0), IDENTITY, atol=tol)


def test_non_finite_time_rejected():
    with pytest.raises(ValueError):
        propagator(FieldVector(0.0, 0.0, 1.0), float('inf'))


def test_series_shape():
    fields = np.random.default_rng(1).normal(size=(4, 3))
    times = np.linspace(0, 1, 6)
    ops = interference_series(fields.mean(axis=0), fields, times)
    assert ops.shape == (4, 6, 2, 2)
    assert np.allclose(ops[:, 0], IDENTITY)


def test_g_factor_identity():
    g = g_factor(IDENTITY)
    assert np.allclose(g.as_array(), [0.5, 0.0, 0.0, 0.5])
    theta = np.linspace(0, 2 * np.pi, 7)
    assert np.allclose(g.evaluate(theta, theta), 1.0)


def test_g_factor_convention():
    # O = exp(-i phi sigma_z): up gets e^{-i phi}, down gets e^{+i phi}
    phi = 0.4
    g = g_factor(np.diag([np.exp(-1j * phi), np.exp(1j * phi)]))
    assert np.isclose(g.a, 0.5 * np.exp(1j * phi))
    assert np.isclose(g.d, 0.5 * np.exp(-1j * phi))
    assert g.b == 0 and g.c == 0
    with pytest.raises(ValueError):
        g_factor(np.full((2, 2), np.nan))


def test_sigma_z_unitary_check():
    assert is_unitary(SIGMA_Z)
    assert not is_unitary(2 * SIGMA_Z)


@pytest.mark.parametrize("b,bk,t", cases)
def test_g_factor_bounded_on_phase_grid(b, bk, t):
    g = g_factor(interference_operator(FieldVector.from_array(b), FieldVector.from_array(bk), t))
    theta, theta_prime = np.meshgrid(np.linspace(0, 2 * np.pi, 32), np.linspace(0, 2 * np.pi, 32))
    assert np.max(np.abs(g.evaluate(theta, theta_prime))) <= 1.0 + 1e-12
