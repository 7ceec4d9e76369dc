import io
import json

import numpy as np
import pytest

from fiberatom import Histogram, Spectrum, spectral_fwhm
from fiberatom.cli import main

SUBCOMMANDS = ["spectrum", "g2", "hbt", "decay", "fit", "orbit"]


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.mark.parametrize("name", SUBCOMMANDS)
def test_help_available(name, capsys):
    with pytest.raises(SystemExit) as exc:
        main([name, "--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_spectrum_two_level_weak_drive(capsys):
    code, out, err = run(capsys, "spectrum", "--model", "two-level", "--rabi", "0.1",
                         "--grid-min", "-15", "--grid-max", "15", "--grid-points", "601")
    assert code == 0
    spec = Spectrum.from_csv(io.StringIO(out))
    step = spec.detunings[1] - spec.detunings[0]
    assert spectral_fwhm(spec) == pytest.approx(5.305, abs=step + 1e-3)
    assert "spectrum" in err


def test_spectrum_vtype_has_dip(capsys):
    code, out, _ = run(capsys, "spectrum", "--model", "vtype", "--delta-split", "1.5",
                       "--rabi", "2", "--grid-min", "-10", "--grid-max", "10",
                       "--grid-points", "201")
    assert code == 0
    spec = Spectrum.from_csv(io.StringIO(out))
    i0 = np.argmin(np.abs(spec.detunings))
    i2 = np.argmin(np.abs(spec.detunings - 2.0))
    assert spec.values[i0] < spec.values[i2]


def test_spectrum_vdw_surface(capsys):
    code, out, _ = run(capsys, "spectrum", "--model", "vdw-surface",
                       "--grid-min", "-60", "--grid-max", "15",
                       "--grid-points", "301")
    assert code == 0
    spec = Spectrum.from_csv(io.StringIO(out))
    assert spec.detunings[np.argmax(spec.values)] <= 0.0


def test_g2_starts_at_zero(capsys):
    code, out, _ = run(capsys, "g2", "--rabi", "13", "--max-delay", "100", "--step", "2")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "delay_ns,g2"
    first = lines[1].split(",")
    assert float(first[0]) == 0.0 and float(first[1]) == 0.0


def test_hbt_deterministic_and_worker_independent(tmp_path, capsys):
    args = ["hbt", "--seed", "7", "--duration", "150", "--bin-width", "2",
            "--max-delay", "60", "--dark-rate", "0"]
    out_files = []
    for tag, extra in (("a", []), ("b", []), ("w", ["--workers", "4"])):
        path = tmp_path / f"hist_{tag}.csv"
        code, _, _ = run(capsys, *args, "--output", str(path), *extra)
        assert code == 0
        out_files.append(path.read_bytes())
    assert out_files[0] == out_files[1] == out_files[2]


def test_hbt_requires_seed(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["hbt", "--duration", "10"])
    assert exc.value.code == 2


def test_decay_pipe_into_fit(tmp_path, capsys):
    scan_path = tmp_path / "scan.csv"
    code, _, _ = run(capsys, "decay", "--seed", "3", "--cycles", "1500",
                     "--arrival-rate", "0.02", "--cycle-period", "3000",
                     "--output", str(scan_path))
    assert code == 0
    code, out, err = run(capsys, "fit", "exp", str(scan_path))
    assert code == 0
    result = json.loads(out)
    assert result["converged"]
    assert result["parameters"]["tau"] == pytest.approx(180.0, rel=0.25)
    assert "tau" in err


def test_fit_vtype_roundtrip(tmp_path, capsys):
    spec_path = tmp_path / "spec.csv"
    code, _, _ = run(capsys, "spectrum", "--model", "vtype", "--delta-split", "1.5",
                     "--rabi", "3", "--grid-min", "-12", "--grid-max", "12",
                     "--grid-points", "241", "--output", str(spec_path))
    assert code == 0
    code, out, _ = run(capsys, "fit", "vtype", str(spec_path))
    assert code == 0
    result = json.loads(out)
    assert result["parameters"]["delta_split"] == pytest.approx(1.5, abs=0.2)


def test_fit_coincidences_from_file(tmp_path, capsys):
    hist_path = tmp_path / "hist.csv"
    code, _, _ = run(capsys, "hbt", "--seed", "11", "--duration", "2200",
                     "--bin-width", "2", "--max-delay", "400", "--dark-rate", "0",
                     "--output", str(hist_path))
    assert code == 0
    code, out, _ = run(capsys, "fit", "coincidences", str(hist_path),
                       "--background", "0")
    assert code == 0
    result = json.loads(out)
    assert result["parameters"]["n_atoms"] == 1
    assert result["parameters"]["rabi"] == pytest.approx(13.0, abs=0.5)


def test_orbit_sweep_csv(capsys):
    code, out, err = run(capsys, "orbit", "--sweep-L", "5:50:8")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "L,radius_nm,orbit_freq_MHz,radial_freq_MHz,stability"
    assert len(lines) == 9
    for line in lines[1:]:
        assert line.split(",")[4] in ("stable", "unstable", "none")
    assert "slope" in err


def test_missing_config_exits_2(capsys):
    code, _, err = run(capsys, "spectrum", "--config", "/no/such/file.yaml")
    assert code == 2
    assert "error" in err


def test_unknown_config_section_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense:\n  key: 1\n")
    code, _, err = run(capsys, "spectrum", "--config", str(bad))
    assert code == 2
    assert "unknown config section" in err


def test_unknown_config_key_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("atom:\n  gamma_pop: 33.3\n  bogus: 1\n")
    code, _, err = run(capsys, "spectrum", "--config", str(bad))
    assert code == 2
    assert "unknown keys" in err


def test_invalid_config_value_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("atom:\n  gamma_pop: -5\n")
    code, _, _ = run(capsys, "spectrum", "--config", str(bad))
    assert code == 2


def test_config_values_are_used(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("vtype:\n  delta_split: 3.0\n  p: 1.0\ndrive:\n  rabi: 2.0\n")
    code, out, _ = run(capsys, "spectrum", "--model", "vtype", "--config", str(cfg),
                       "--grid-min", "-10", "--grid-max", "10", "--grid-points", "401")
    assert code == 0
    spec = Spectrum.from_csv(io.StringIO(out))
    # flanking maxima sit near the arm resonances at +-split/2
    i_max = np.argmax(spec.values)
    assert abs(abs(spec.detunings[i_max]) - 1.5) < 0.5


def test_flag_overrides_config(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("vtype:\n  delta_split: 3.0\n")
    code, out, _ = run(capsys, "spectrum", "--model", "vtype", "--config", str(cfg),
                       "--delta-split", "8.0", "--rabi", "1.0",
                       "--grid-min", "-10", "--grid-max", "10", "--grid-points", "401")
    assert code == 0
    spec = Spectrum.from_csv(io.StringIO(out))
    i_max = np.argmax(spec.values)
    assert abs(abs(spec.detunings[i_max]) - 4.0) < 0.5


def test_hbt_output_parses_as_histogram(tmp_path, capsys):
    path = tmp_path / "h.csv"
    code, _, _ = run(capsys, "hbt", "--seed", "2", "--duration", "100",
                     "--max-delay", "50", "--output", str(path))
    assert code == 0
    hist = Histogram.from_csv(str(path))
    assert hist.total >= 0
