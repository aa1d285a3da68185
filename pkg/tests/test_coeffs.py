from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermoporo.coeffs import (ParameterError, PhysicalParams, RelaxedParameterWarning,
                               derive_coeffs, from_multiphysics, lame_from_young, load_params,
                               to_multiphysics)


def make(a0=1.0, b0=0.0, c0=1.0, alpha=1.0, beta=0.0, mu=1.0, lam=1.0, K=1.0, Theta=1.0, **kw):
    return PhysicalParams(a0=a0, b0=b0, c0=c0, alpha=alpha, beta=beta, K=K, Theta=Theta,
                          mu=mu, lam=lam, **kw)


def exact_coeffs(a0, b0, c0, al, be, lam):
    """k1..k6, M in rational arithmetic."""
    a0, b0, c0, al, be, lam = (Fraction(v) for v in (a0, b0, c0, al, be, lam))
    M = al * c0 * be**2 + 2 * al**2 * be * b0 + a0 * al**3 + (c0 * a0 * al - b0**2 * al) * lam
    return dict(
        k1=(al * be * c0 + al**2 * b0) / M,
        k2=(al * b0 * lam - al**2 * be) / M,
        k3=(al**3 + al * c0 * lam) / M,
        k4=(a0 * al**2 + al * be * b0) / M,
        k5=(a0 * al * lam + al * be**2) / M,
        k6=(al * c0 * a0 - al * b0**2) / M,
        M=M,
    )


def test_degenerate_transform_coefficients():
    k = derive_coeffs(make())
    assert (k.M, k.k1, k.k2, k.k3, k.k4, k.k5, k.k6) == (2.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.5)


def test_degenerate_transform_maps_known_triple():
    params = make()
    xi, eta, gamma = to_multiphysics(params, 3.0, 2.0, 1.0)
    assert (xi, eta, gamma) == (1.0, 3.0, 3.0)
    assert from_multiphysics(derive_coeffs(params), 1.0, 3.0, 3.0) == pytest.approx((3.0, 2.0, 1.0), abs=1e-15)


def test_zero_maps_to_zero():
    params = make(b0=0.1, beta=0.3)
    assert to_multiphysics(params, 0.0, 0.0, 0.0) == (0.0, 0.0, 0.0)
    assert from_multiphysics(derive_coeffs(params), 0.0, 0.0, 0.0) == (0.0, 0.0, 0.0)


def test_golden_values_for_smooth_benchmark_parameters():
    params = PhysicalParams.from_young(a0=2e5, b0=1e5, c0=2e5, alpha=0.01, beta=0.01,
                                       K=0.1, Theta=0.1, E=1.25e5, nu=0.25)
    gold = exact_coeffs("2e5", "1e5", "2e5", "0.01", "0.01", "5e4")
    k = derive_coeffs(params)
    for name, value in gold.items():
        assert getattr(k, name) == pytest.approx(float(value), rel=1e-14), name


def test_storage_assumption_violation_is_named():
    with pytest.raises(ParameterError, match="A3 violated"):
        derive_coeffs(make(a0=1.0, b0=2.0, c0=1.0))


def test_non_spd_permeability_is_rejected():
    with pytest.raises(ParameterError, match="A1"):
        make(K=[[1.0, 0.0], [0.0, -1.0]]).validate()
    with pytest.raises(ParameterError, match="A1/A2"):
        make(Theta=[[1.0, 0.5], [0.0, 1.0]]).validate()


def test_relaxed_mode_allows_zero_gap_with_warning():
    params = make(a0=1e-10, b0=0.0, c0=0.0)
    with pytest.raises(ParameterError):
        derive_coeffs(params)
    with pytest.warns(RelaxedParameterWarning):
        k = derive_coeffs(params, relaxed=True)
    assert k.M > 0


@pytest.mark.parametrize("E,nu,mu,lam", [(1.25e5, 0.25, 5e4, 5e4), (1.0, 0.0, 0.5, 0.0),
                                         (1.25e6, 0.25, 5e5, 5e5)])
def test_lame_conversion(E, nu, mu, lam):
    assert lame_from_young(E, nu) == pytest.approx((mu, lam), rel=1e-15)


def test_incompressible_limit_rejected():
    with pytest.raises(ParameterError):
        lame_from_young(1.0, 0.5)


def test_config_file(tmp_path):
    path = tmp_path / "params.cfg"
    path.write_text("# benchmark\na0=2\nb0=1\nc0=2\nalpha=1\nbeta=1\nE=1.25e5\nnu=0.25\n"
                    "K11=2\nK12=0\nK22=2\nTheta11=1e-10\nTheta12=0\nTheta22=1e-10\n")
    p = load_params(path)
    assert p.mu == pytest.approx(5e4)
    np.testing.assert_array_equal(p.K, 2 * np.eye(2))


def test_identical_inputs_give_identical_coefficients():
    p = make(b0=0.3, beta=0.7, lam=12.5)
    assert derive_coeffs(p) == derive_coeffs(p)


positive = st.floats(1e-3, 1e3)


def nonneg(hi):
    # zero or a normal-sized value; subnormals only exercise underflow
    return st.one_of(st.just(0.0), st.floats(1e-6, hi))


@st.composite
def valid_params(draw, lam=nonneg(1e4)):
    b0 = draw(nonneg(10.0))
    a0 = b0 + draw(positive)
    c0 = b0 + draw(positive)
    return make(a0=a0, b0=b0, c0=c0, alpha=draw(positive), beta=draw(nonneg(1e3)),
                mu=draw(positive), lam=draw(lam))


def _forward(params):
    """Rows xi, eta, gamma; columns T, p, q."""
    al, be, lam = params.alpha, params.beta, params.lam
    return np.array([[be, al, -lam],
                     [-params.b0, params.c0, al],
                     [params.a0, -params.b0, be]])


@settings(max_examples=200, deadline=None)
@given(valid_params(), st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_round_trip_identity(params, tpq):
    k = derive_coeffs(params)
    back = np.array(from_multiphysics(k, *to_multiphysics(params, *tpq)))
    # floating-point relative error: compare against the magnitude of the summed terms
    scale = np.abs(k.inverse_matrix) @ np.abs(_forward(params)) @ np.abs(tpq)
    assert np.all(np.abs(back - tpq) <= 1e-12 * scale + 1e-300)


@settings(max_examples=200, deadline=None)
@given(valid_params())
def test_inverse_matrix_is_exact_inverse(params):
    inv = derive_coeffs(params).inverse_matrix
    fwd = _forward(params)
    assert np.all(np.abs(inv @ fwd - np.eye(3)) <= 1e-12 * (np.abs(inv) @ np.abs(fwd)))


@settings(max_examples=300, deadline=None)
@given(valid_params(lam=st.floats(1e-6, 1e4)))
def test_positivity_of_energy_weights(params):
    k = derive_coeffs(params)
    assert k.M > 0 and k.k6 > 0 and k.k4 > 0
    assert k.k5 - k.k2 > 0 and k.k3 - k.k2 > 0


def test_flow_weight_degenerates_without_volumetric_coupling():
    # k5 - k2 = alpha((a0 - b0) lam + beta^2 + alpha beta) / M vanishes when lam = beta = 0
    k = derive_coeffs(make(a0=2.0, b0=1.0, c0=2.0, beta=0.0, lam=0.0))
    assert k.k5 - k.k2 == 0.0
    assert k.k3 - k.k2 > 0
