import numpy as np
import pytest
from scipy.constants import epsilon_0, hbar

from fiberatom import (
    DomainError,
    OrbitParams,
    effective_potential,
    frequency_radius_scaling,
    radius_from_frequency,
    stationary_orbit,
)
from fiberatom.orbit import _potential_derivatives

POINT_CHARGE = OrbitParams()


def closed_form_radius_nm(l_hbar: float, params: OrbitParams) -> float:
    c4 = params.alpha_pol * params.charge ** 2 / (32 * np.pi ** 2 * epsilon_0 ** 2)
    return 2 * np.sqrt(c4 * params.mass) / (l_hbar * hbar) * 1e9


def test_quartic_scaling_of_charge_term():
    u1 = effective_potential(20.0, 1e-9, POINT_CHARGE)
    u2 = effective_potential(40.0, 1e-9, POINT_CHARGE)
    # with negligible angular momentum only the -C/r^4 term survives
    assert u2 == pytest.approx(u1 / 16.0, rel=1e-6)


def test_potential_monotone_without_centrifugal_term():
    r = np.geomspace(2.0, 500.0, 200)
    u = effective_potential(r, 1e-12, POINT_CHARGE)
    assert np.all(u < 0)
    assert np.all(np.diff(u) > 0)


def test_potential_domain_error():
    with pytest.raises(DomainError):
        effective_potential(0.0, 10.0, POINT_CHARGE)


def test_stationary_radius_matches_closed_form():
    for l in (5.0, 25.0, 50.0):
        sol = stationary_orbit(l, POINT_CHARGE)
        assert sol is not None
        assert sol.radius == pytest.approx(closed_form_radius_nm(l, POINT_CHARGE), rel=1e-9)


def test_stationary_point_is_actually_stationary():
    sol = stationary_orbit(25.0, POINT_CHARGE)
    du = _potential_derivatives(sol.radius, 25.0, POINT_CHARGE)[0]
    assert abs(du) < 1e-9


def test_point_charge_orbit_is_unstable():
    # -C/r^4 plus centrifugal has a potential maximum, not a minimum
    sol = stationary_orbit(25.0, POINT_CHARGE)
    assert sol.stability == "unstable"
    assert not sol.stable
    assert sol.radial_frequency > 0


def test_no_orbit_when_terms_share_power_law():
    # n = 2 charge term with a coefficient below the centrifugal one: both
    # scale as 1/r^2, the derivative never changes sign
    params = OrbitParams(power_law_n=2, c_n=1.0)
    assert stationary_orbit(5.0, params) is None


def test_surface_term_can_stabilize():
    params = OrbitParams(c3_surface=1.0)
    grid = np.geomspace(1.0, 1000.0, 50)
    u = effective_potential(grid, 25.0, params)
    assert np.isfinite(u).all()
    sol = stationary_orbit(25.0, params)
    assert sol is not None


def test_orbit_frequency_scale_at_paper_radius():
    # around 25 hbar the stationary radius sits near 30 nm and the orbit
    # frequency lands on the MHz scale of the observed splitting
    sol = stationary_orbit(25.0, POINT_CHARGE)
    assert 20.0 < sol.radius < 40.0
    assert 0.5 < sol.orbit_frequency < 10.0


def test_frequency_radius_scaling_slope():
    report = frequency_radius_scaling(POINT_CHARGE, 3.0, 30.0, n=15)
    assert report.slope == pytest.approx(-3.0, abs=0.01)


def test_radius_from_frequency_modes():
    assert radius_from_frequency(1.5, anchor=(45.0, 1.0)) == pytest.approx(30.0, rel=1e-12)
    assert radius_from_frequency(1.5, speed_cm_s=10.0) == pytest.approx(10.61, abs=0.01)


def test_radius_from_frequency_homogeneous():
    for k in (2.0, 5.0, 11.0):
        assert radius_from_frequency(k * 1.5, anchor=(45.0, 1.0)) == pytest.approx(
            radius_from_frequency(1.5, anchor=(45.0, 1.0)) / k, rel=1e-12)
        assert radius_from_frequency(k * 1.5, speed_cm_s=10.0) == pytest.approx(
            radius_from_frequency(1.5, speed_cm_s=10.0) / k, rel=1e-12)


def test_radius_from_frequency_argument_check():
    with pytest.raises(DomainError):
        radius_from_frequency(1.5)
    with pytest.raises(DomainError):
        radius_from_frequency(1.5, speed_cm_s=10.0, anchor=(45.0, 1.0))
    with pytest.raises(DomainError):
        radius_from_frequency(-1.0, speed_cm_s=10.0)


def test_orbit_params_validation():
    with pytest.raises(DomainError):
        OrbitParams(power_law_n=5)
    with pytest.raises(DomainError):
        OrbitParams(power_law_n=3)          # missing c_n
    with pytest.raises(DomainError):
        OrbitParams(mass=-1.0)
    OrbitParams(power_law_n=3, c_n=100.0)   # fine with explicit coefficient
