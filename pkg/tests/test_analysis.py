import numpy as np
import pytest

from fiberatom import (
    AtomParams,
    CoincidenceModel,
    DegenerateFitError,
    DomainError,
    DriveParams,
    G2Curve,
    GeometryConfig,
    Histogram,
    Spectrum,
    VTypeScheme,
    excitation_spectrum,
    fit_coincidences,
    fit_exponential,
    fit_vtype_spectrum,
    g2_curve,
    localized_atom_count,
    mean_atom_number,
    n_atom_model,
    rabi_from_intensity,
    transit_time,
)

ATOM = AtomParams()


# ---------------------------------------------------------------------------
# exponential fit
# ---------------------------------------------------------------------------

def test_fit_exponential_noiseless_closure():
    t = np.linspace(0.0, 950.0, 20)
    y = 480.0 * np.exp(-t / 180.0) + 25.0
    res = fit_exponential(t, y)
    assert res.converged
    assert res["tau"] == pytest.approx(180.0, rel=1e-6)
    assert res["amplitude"] == pytest.approx(480.0, rel=1e-6)
    assert res["background"] == pytest.approx(25.0, rel=1e-4)


def test_fit_exponential_poisson_noise():
    rng = np.random.default_rng(4)
    t = np.arange(0.0, 1000.0, 50.0)
    y = rng.poisson(2000.0 * np.exp(-t / 180.0) + 10.0)
    res = fit_exponential(t, y)
    assert res.converged
    assert res["tau"] == pytest.approx(180.0, rel=0.1)
    assert res.uncertainties["tau"] > 0


def test_fit_exponential_degenerate():
    t = np.linspace(0, 10, 8)
    with pytest.raises(DegenerateFitError):
        fit_exponential(t, np.full(8, 42.0))
    with pytest.raises(DomainError):
        fit_exponential(t[:3], np.array([1.0, 2.0, 3.0]))


# ---------------------------------------------------------------------------
# coincidence fit
# ---------------------------------------------------------------------------

def make_histogram(n_atoms, amplitude, background, rabi=13.0, seed=None,
                   bin_width=2.0, k=200):
    centers = np.arange(-k, k + 1) * bin_width
    delays = centers[k:]
    g2 = g2_curve(ATOM, DriveParams(0.0, rabi), delays)
    model = n_atom_model(g2, CoincidenceModel(n_atoms, amplitude, background))
    fold = np.abs(np.round(centers / bin_width)).astype(int)
    values = model[fold]
    if seed is None:
        counts = np.round(values)
    else:
        rng = np.random.Generator(np.random.Philox(seed))
        counts = rng.poisson(values)
    return Histogram(bin_width, centers, counts)


def test_fit_coincidences_recovers_one_atom():
    hist = make_histogram(1, 230.0, 0.0, rabi=13.0, seed=101)
    res = fit_coincidences(hist, ATOM)
    assert res["n_atoms"] == 1
    assert res["rabi"] == pytest.approx(13.0, abs=0.5)
    assert not res.flags["no_antibunching"]


def test_fit_coincidences_recovers_two_atoms():
    hist = make_histogram(2, 115.0, 0.0, rabi=13.0, seed=102)
    res = fit_coincidences(hist, ATOM)
    assert res["n_atoms"] == 2
    assert res["rabi"] == pytest.approx(13.0, abs=0.5)


def test_fit_coincidences_with_known_background():
    hist = make_histogram(2, 100.0, 30.0, rabi=13.0, seed=103)
    res = fit_coincidences(hist, ATOM, background=30.0)
    assert res["n_atoms"] == 2
    assert res["rabi"] == pytest.approx(13.0, abs=0.5)
    assert res["background"] == 30.0


def test_fit_coincidences_flat_histogram_flags_no_antibunching():
    rng = np.random.default_rng(5)
    centers = np.arange(-150, 151) * 2.0
    hist = Histogram(2.0, centers, rng.poisson(60.0, centers.size))
    res = fit_coincidences(hist, ATOM)
    assert res["n_atoms"] == 0
    assert res.flags["no_antibunching"]
    assert res["background"] == pytest.approx(60.0, rel=0.05)


def test_fit_coincidences_scaling_invariance():
    # noiseless integer histogram with no empty bins: scaling the counts
    # scales amplitude and background and leaves (N, rabi) untouched
    hist1 = make_histogram(2, 100.0, 40.0, rabi=13.0, seed=None)
    scaled = Histogram(hist1.bin_width, hist1.centers, hist1.counts * 3)
    res1 = fit_coincidences(hist1, ATOM, background=40.0)
    res3 = fit_coincidences(scaled, ATOM, background=120.0)
    assert res1["n_atoms"] == res3["n_atoms"] == 2
    assert abs(res3["rabi"] - res1["rabi"]) < 1e-9
    assert res3["amplitude"] == pytest.approx(3 * res1["amplitude"], rel=1e-6)


def test_fit_coincidences_free_background_picks_smallest_n():
    # with a jointly fitted floor the N families are nested, so the
    # smallest candidate wins regardless of the generating N
    hist = make_histogram(2, 115.0, 0.0, rabi=13.0, seed=104)
    res = fit_coincidences(hist, ATOM, background=None)
    assert res["n_atoms"] == 1


def test_fit_coincidences_empty_histogram():
    centers = np.arange(-50, 51) * 2.0
    with pytest.raises(DomainError):
        fit_coincidences(Histogram(2.0, centers, np.zeros(centers.size)), ATOM)


# ---------------------------------------------------------------------------
# V-type spectrum fit
# ---------------------------------------------------------------------------

def make_vtype_spectrum(delta_split, rabi, amplitude=3.0, offset=0.05,
                        noise=0.0, seed=0):
    grid = np.linspace(-12.0, 12.0, 241)
    scheme = VTypeScheme(gamma=ATOM.gamma_pop, delta_split=delta_split, p=1.0)
    base = excitation_spectrum(scheme, grid, rabi).values
    values = amplitude * base + offset
    if noise > 0:
        rng = np.random.default_rng(seed)
        values = np.clip(values * (1 + noise * rng.standard_normal(grid.size)), 0, None)
    return Spectrum(grid, values)


def test_fit_vtype_noiseless_closure():
    spec = make_vtype_spectrum(1.5, 3.0)
    res = fit_vtype_spectrum(spec, VTypeScheme(gamma=ATOM.gamma_pop, p=1.0))
    assert res.converged
    assert res["delta_split"] == pytest.approx(1.5, rel=1e-6)
    assert res["rabi"] == pytest.approx(3.0, rel=1e-6)


def test_fit_vtype_three_intensities_with_noise():
    for intensity, seed in ((0.7, 1), (3.5, 2), (7.0, 3)):
        rabi = rabi_from_intensity(intensity, ATOM, scale=1.0 / 1.4)
        spec = make_vtype_spectrum(1.5, rabi, noise=0.005, seed=seed)
        res = fit_vtype_spectrum(spec, VTypeScheme(gamma=ATOM.gamma_pop, p=1.0))
        assert res["delta_split"] == pytest.approx(1.5, abs=0.2)


def test_fit_vtype_two_level_data_gives_zero_splitting():
    grid = np.linspace(-12.0, 12.0, 241)
    spec = Spectrum(grid, excitation_spectrum(ATOM, grid, 2.0).values)
    res = fit_vtype_spectrum(spec, VTypeScheme(gamma=ATOM.gamma_pop, p=1.0))
    assert res["delta_split"] <= res.uncertainties["delta_split"]


def test_fit_result_serialization():
    spec = make_vtype_spectrum(1.5, 2.0)
    res = fit_vtype_spectrum(spec, VTypeScheme(gamma=ATOM.gamma_pop, p=1.0))
    blob = res.to_json()
    assert '"delta_split"' in blob and '"converged": true' in blob


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def test_mean_atom_number_reference_values():
    geom = GeometryConfig(fiber_radius=200.0, shell_thickness=200.0,
                          observation_length=100.0)
    assert geom.shell_volume_um3 == pytest.approx(37.70, abs=0.01)
    assert mean_atom_number(0.7e9, geom) == pytest.approx(0.0264, abs=1e-4)
    full_mot = GeometryConfig(observation_length=2000.0)
    assert mean_atom_number(7e9, full_mot) == pytest.approx(5.3, abs=0.03)
    assert mean_atom_number(0.0, geom) == 0.0


def test_mean_atom_number_linearity():
    geom = GeometryConfig()
    base = mean_atom_number(1e9, geom)
    assert mean_atom_number(3e9, geom) == pytest.approx(3 * base, rel=1e-12)
    longer = GeometryConfig(observation_length=250.0)
    assert mean_atom_number(1e9, longer) == pytest.approx(2.5 * base, rel=1e-12)


def test_localized_atom_count():
    assert localized_atom_count(200.0, 1.0) == pytest.approx(200.0)
    assert localized_atom_count(3.3, 3.3) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        localized_atom_count(5.0, 0.0)


def test_localized_atom_count_from_spectra():
    grid = np.linspace(-20.0, 20.0, 401)
    single = excitation_spectrum(ATOM, grid, 1.0)
    many = Spectrum(grid, 200.0 * single.values)
    assert localized_atom_count(many, single) == pytest.approx(200.0, rel=0.01)


def test_transit_time():
    assert transit_time(10.0, 1.0) == pytest.approx(10.0, rel=1e-12)
    assert transit_time(20.0, 1.0) == pytest.approx(5.0, rel=1e-12)
    assert transit_time(8.0, 1.0) == pytest.approx(12.5, rel=1e-12)
    with pytest.raises(DomainError):
        transit_time(0.0, 1.0)


def test_geometry_validation():
    with pytest.raises(DomainError):
        GeometryConfig(fiber_radius=0.0)
