import numpy as np
import pytest

from fiberatom import (
    DistanceDistribution,
    DomainError,
    VdwConfig,
    distance_for_shift,
    spectral_fwhm,
    surface_line_shape,
    vdw_shift,
)

CFG = VdwConfig(delta_c3=1.0, coupling_length=100.0)


def test_shift_reference_value():
    assert vdw_shift(50.0, CFG) == pytest.approx(-8.0, rel=1e-12)


def test_shift_cubic_law():
    for d in (10.0, 37.0, 200.0):
        assert vdw_shift(2 * d, CFG) == pytest.approx(vdw_shift(d, CFG) / 8.0, rel=1e-12)


def test_shift_vanishes_far_away():
    assert abs(vdw_shift(1e7, CFG)) < 1e-12


def test_shift_domain_error():
    with pytest.raises(DomainError):
        vdw_shift(0.0, CFG)
    with pytest.raises(DomainError):
        vdw_shift(-5.0, CFG)


def test_distance_for_shift_inverse():
    assert distance_for_shift(-8.0, CFG) == pytest.approx(50.0, rel=1e-12)
    for shift in (-0.5, -3.7, -40.0):
        d = distance_for_shift(shift, CFG)
        assert vdw_shift(d, CFG) == pytest.approx(shift, rel=1e-12)
    with pytest.raises(DomainError):
        distance_for_shift(0.0, CFG)
    with pytest.raises(DomainError):
        distance_for_shift(2.0, CFG)


def test_shift_band_maps_to_prominence_heights():
    d_small = distance_for_shift(-1.0, CFG)
    d_large = distance_for_shift(-15.0, CFG)
    assert d_small == pytest.approx(100.0, rel=0.01)
    assert d_large == pytest.approx(40.5, rel=0.01)


def test_distribution_normalizes():
    dist = DistanceDistribution(np.array([50.0, 60.0]), np.array([2.0, 2.0]))
    assert dist.weights.sum() == pytest.approx(1.0)
    with pytest.raises(DomainError):
        DistanceDistribution(np.array([-1.0, 2.0]), np.array([0.5, 0.5]))
    with pytest.raises(DomainError):
        DistanceDistribution(np.array([1.0, 2.0]), np.array([0.0, 0.0]))


def test_far_field_delta_is_natural_lorentzian():
    grid = np.linspace(-20.0, 20.0, 801)
    spec = surface_line_shape(DistanceDistribution.delta(10000.0), CFG, 5.305, grid)
    peak = grid[np.argmax(spec.values)]
    assert abs(peak) < 0.01 + (grid[1] - grid[0])
    assert spectral_fwhm(spec) == pytest.approx(5.305, rel=0.02)


def test_uniform_band_peak_and_width():
    grid = np.linspace(-60.0, 15.0, 1501)
    dist = DistanceDistribution.uniform(50.0, 100.0, 101)
    spec = surface_line_shape(dist, CFG, 5.305, grid)
    peak = grid[np.argmax(spec.values)]
    assert -4.0 <= peak <= 0.0
    assert spectral_fwhm(spec) <= 15.0


def test_close_approach_builds_red_tail():
    grid = np.linspace(-1200.0, 20.0, 2441)
    dist = DistanceDistribution.uniform(10.0, 100.0, 301)
    spec = surface_line_shape(dist, CFG, 5.305, grid)
    red_100 = spec.values[np.argmin(np.abs(grid + 100.0))]
    assert red_100 > 0.01 * spec.values.max()
    # shift at 10 nm is -1000 MHz: weight present even that far out
    red_900 = spec.values[np.argmin(np.abs(grid + 900.0))]
    assert red_900 > 1e-4 * spec.values.max()


def test_line_shape_unit_normalization():
    grid = np.linspace(-80.0, 20.0, 2001)
    dist = DistanceDistribution.uniform(30.0, 120.0, 51)
    spec = surface_line_shape(dist, CFG, 5.305, grid)
    assert np.trapezoid(spec.values, grid) == pytest.approx(1.0, abs=1e-6)
    assert np.all(spec.values >= 0.0)


def test_red_side_dominates_blue_side():
    # red shifts only: the spectrum at -x is never below the value at +x
    grid = np.linspace(-50.0, 50.0, 2001)
    dist = DistanceDistribution.uniform(40.0, 90.0, 71)
    spec = surface_line_shape(dist, CFG, 5.305, grid)
    center = np.argmin(np.abs(grid))
    blue = spec.values[center + 1:]
    red = spec.values[:center][::-1]
    assert np.all(red >= blue - 1e-12)


def test_narrowing_with_larger_distances():
    # restricting the support to larger distances cannot widen the line
    grid = np.linspace(-120.0, 20.0, 2801)
    wide = DistanceDistribution.uniform(30.0, 120.0, 121)
    narrow = DistanceDistribution.uniform(80.0, 120.0, 121)
    fwhm_wide = spectral_fwhm(surface_line_shape(wide, CFG, 5.305, grid))
    fwhm_narrow = spectral_fwhm(surface_line_shape(narrow, CFG, 5.305, grid))
    assert fwhm_narrow <= fwhm_wide + 1e-9


def test_config_validation():
    with pytest.raises(DomainError):
        VdwConfig(delta_c3=0.0)
    with pytest.raises(DomainError):
        VdwConfig(coupling_length=-1.0)
