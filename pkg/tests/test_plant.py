import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pulse_corridor import (
    DistinctnessError,
    DomainError,
    HillFunction,
    Identity,
    NmbParams,
    PlantLTI,
    PlantStructure,
    PowerLaw,
    TableNonlinearity,
    UnreachableDoseError,
    ValidationError,
    invert_numeric,
    mat_exp,
    plant_from_nmb,
)

from conftest import expm_eig


def test_nmb_plant_constants(plant):
    np.testing.assert_allclose(plant.rates, (0.0374, 0.1496, 0.374), rtol=1e-14)
    assert plant.g1 == pytest.approx(0.0374, rel=1e-14)
    # 4 * 10 * 0.0374^2, computed exactly
    assert plant.g2 == pytest.approx(0.05595040, rel=1e-12)


def test_nmb_plant_matrices(plant):
    A = np.array([
        [-0.0374, 0.0, 0.0],
        [0.0374, -0.1496, 0.0],
        [0.0, plant.g2, -0.374],
    ])
    np.testing.assert_allclose(plant.A, A, rtol=1e-14)
    np.testing.assert_array_equal(plant.B, [1, 0, 0])
    np.testing.assert_array_equal(plant.C, [0, 0, 1])
    assert plant.C @ plant.B == 0
    assert not plant.A.flags.writeable


def test_unit_dc_gain(plant):
    assert plant.dc_gain() == pytest.approx(1.0, rel=1e-14)
    assert plant.C @ np.linalg.solve(-plant.A, plant.B) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 0.1), st.floats(0.2, 5.0), st.floats(6.0, 30.0))
def test_nmb_unit_gain_and_numerator(alpha, v2, v3):
    p = NmbParams(alpha=alpha, v2=v2, v3=v3)
    pl = plant_from_nmb(p)
    assert pl.dc_gain() == pytest.approx(1.0, rel=1e-12)
    assert pl.g1 * pl.g2 == pytest.approx(p.v1 * v2 * v3 * alpha ** 3, rel=1e-12)


@pytest.mark.parametrize("alpha", [0.2, 0.0, -0.01])
def test_nmb_alpha_range(alpha):
    with pytest.raises(ValidationError):
        NmbParams(alpha=alpha)


def test_nmb_gamma_range():
    with pytest.raises(ValidationError):
        NmbParams(gamma=11.0)


def test_nmb_coincident_rates():
    with pytest.raises(DistinctnessError):
        plant_from_nmb(NmbParams(v2=10.0))


def test_plant_validation():
    with pytest.raises(ValidationError):
        PlantLTI(0.1, -0.2, 0.3, 0.1, 0.1)
    with pytest.raises(DistinctnessError):
        PlantLTI(0.1, 0.2, 0.2 * (1 + 1e-12), 0.1, 0.1)
    PlantLTI(0.1, 0.2, 0.2 * (1 + 1e-6), 0.1, 0.1)


def test_from_matrix_requires_chain(plant):
    again = PlantLTI.from_matrix(plant.A)
    assert again == plant
    dense = plant.A.copy()
    dense[0, 2] = 0.01
    with pytest.raises(ValidationError):
        PlantLTI.from_matrix(dense)
    with pytest.raises(ValidationError):
        PlantLTI.from_matrix(np.eye(2))


def test_plant_spectral_properties(plant):
    ev = np.sort(np.linalg.eigvals(plant.A).real)
    np.testing.assert_allclose(ev, sorted(-np.array(plant.rates)), rtol=1e-12)
    off = plant.A - np.diag(np.diag(plant.A))
    assert np.all(off >= 0)


def test_impulse_response_nonnegative(plant):
    ts = np.linspace(0.0, 300.0, 3001)
    h = mat_exp(plant.A, ts)[:, 2, 0]
    assert h[0] == 0.0
    assert np.all(h >= 0)
    oracle = np.array([expm_eig(plant.A, t)[2, 0] for t in ts[1:]])
    np.testing.assert_allclose(h[1:], oracle, rtol=1e-8, atol=1e-16)


# -- Hill map ---------------------------------------------------------------

def test_hill_values(hill):
    assert hill(0.0) == 100.0
    assert hill(hill.c50) == pytest.approx(50.0, rel=1e-15)
    assert hill(7.3889) == pytest.approx(10.0, abs=1e-3)
    assert hill(13.9463) == pytest.approx(2.0, abs=1e-3)


def test_hill_inverse_values(hill):
    assert hill.inverse(50.0) == pytest.approx(hill.c50, rel=1e-15)
    assert hill.inverse(2.0) == pytest.approx(13.9463, abs=1e-3)
    assert hill.inverse(10.0) == pytest.approx(7.3889, abs=1e-3)
    assert hill.inverse(100.0) == 0.0


@pytest.mark.parametrize("y", [0.0, -1.0, 100.5])
def test_hill_inverse_domain(hill, y):
    with pytest.raises(DomainError):
        hill.inverse(y)


def test_hill_domain(hill):
    with pytest.raises(DomainError):
        hill(-0.1)


def test_hill_round_trip(hill):
    y = np.linspace(0.5, 99.5, 2000)
    np.testing.assert_allclose(hill(hill.inverse(y)), y, rtol=1e-10)


def test_hill_derivative_value(hill):
    assert hill.derivative(7.4309) == pytest.approx(-3.1921, abs=1e-3)


def test_hill_derivative_mpmath(hill):
    def f(x):
        return 100 / (1 + (x / mpmath.mpf(hill.c50)) ** mpmath.mpf(hill.gamma))

    for x in (0.3, 1.0, hill.c50, 7.4309, 10.0, 40.0):
        assert hill.derivative(x) == pytest.approx(float(mpmath.diff(f, x)), rel=1e-12)


@pytest.mark.parametrize("x", [1.0, 3.2425, 10.0])
def test_hill_derivative_central_difference(hill, x):
    h = 1e-6
    fd = (hill(x + h) - hill(x - h)) / (2 * h)
    assert hill.derivative(x) == pytest.approx(fd, rel=1e-6)


def test_hill_derivative_negative(hill):
    x = np.logspace(-3, 3, 500)
    assert np.all(hill.derivative(x) < 0)


def test_hill_derivative_domain():
    with pytest.raises(DomainError):
        HillFunction(gamma=0.5, c50=1.0).derivative(0.0)
    with pytest.raises(DomainError):
        HillFunction(gamma=2.0, c50=1.0).derivative(-1.0)


def test_hill_strictly_decreasing(hill):
    y = hill(np.linspace(0.0, 50.0, 5001))
    assert np.all(np.diff(y) < 0)
    assert hill.decreasing


# -- other maps and numeric inversion --------------------------------------

def test_invert_numeric_examples(hill):
    assert invert_numeric(Identity(), 5.0, 0.0, 10.0) == pytest.approx(5.0, abs=1e-11)
    assert invert_numeric(PowerLaw(2.0), 9.0, 0.0, 10.0) == pytest.approx(3.0, abs=1e-11)
    u = invert_numeric(hill, 50.0, 0.0, 100.0)
    assert u == pytest.approx(hill.inverse(50.0), rel=1e-10)


def test_invert_numeric_unreachable():
    with pytest.raises(UnreachableDoseError):
        invert_numeric(PowerLaw(2.0), 200.0, 0.0, 10.0)
    with pytest.raises(DomainError):
        invert_numeric(Identity(), 1.0, 2.0, 2.0)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.2, 4.0), st.floats(0.1, 5.0), st.floats(1e-3, 1.0))
def test_invert_numeric_power_law(exponent, coef, frac):
    nl = PowerLaw(exponent, coef)
    target = frac * nl(20.0)
    u = invert_numeric(nl, target, 0.0, 20.0)
    assert abs(nl(u) - target) <= 1e-12 * max(1.0, target) * 4
    assert u == pytest.approx(nl.inverse(target), rel=1e-9)


def test_power_law_consistency():
    nl = PowerLaw(2.5, 0.7)
    x = np.linspace(0.1, 9.0, 50)
    np.testing.assert_allclose(nl.inverse(nl(x)), x, rtol=1e-13)
    h = 1e-6
    np.testing.assert_allclose(nl.derivative(x), (nl(x + h) - nl(x - h)) / (2 * h), rtol=1e-6)
    with pytest.raises(DomainError):
        nl(-1.0)


def test_table_nonlinearity_increasing():
    nl = TableNonlinearity([0.0, 1.0, 3.0], [1.0, 2.0, 6.0])
    assert nl(2.0) == pytest.approx(4.0)
    assert nl.inverse(4.0) == pytest.approx(2.0)
    assert nl.derivative(0.5) == 1.0 and nl.derivative(2.0) == 2.0
    assert not nl.decreasing
    with pytest.raises(DomainError):
        nl(4.0)


def test_table_nonlinearity_decreasing_reflection():
    xs = np.linspace(0.0, 30.0, 61)
    hill = HillFunction(2.6677, 3.2425)
    nl = TableNonlinearity(xs, hill(xs))
    assert nl.decreasing
    y = np.linspace(nl.y.min(), nl.y.max(), 300)
    np.testing.assert_allclose(nl(nl.inverse(y)), y, rtol=1e-12)
    assert nl == TableNonlinearity(xs, hill(xs))
    assert hash(nl) == hash(TableNonlinearity(xs, hill(xs)))


@pytest.mark.parametrize("x, y", [
    ([0.0, 1.0], [1.0]),
    ([0.0, 0.0, 1.0], [1.0, 2.0, 3.0]),
    ([0.0, 1.0, 2.0], [1.0, 3.0, 2.0]),
    ([0.0, 1.0], [-1.0, 1.0]),
])
def test_table_nonlinearity_validation(x, y):
    with pytest.raises(ValidationError):
        TableNonlinearity(x, y)


def test_plant_structure_kinds(plant, hill):
    assert PlantStructure(plant).kind == "lti"
    assert PlantStructure(plant, output_nl=hill).kind == "wiener"
    assert PlantStructure(plant, input_nl=PowerLaw(2.0)).kind == "hammerstein"
    both = PlantStructure(plant, input_nl=PowerLaw(2.0), output_nl=hill)
    assert both.kind == "wiener-hammerstein"
    assert both.measured(hill.c50) == pytest.approx(50.0)
    assert PlantStructure(plant).measured(3.0) == 3.0


def test_u_max_is_informational():
    with_bound = plant_from_nmb(NmbParams(u_max=12.0))
    assert with_bound == plant_from_nmb(NmbParams())
    assert math.isfinite(NmbParams(u_max=12.0).u_max)
