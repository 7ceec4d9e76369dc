"""Command-line front end: one subcommand per experiment recipe.

Every command reads an optional YAML config (validated strictly: unknown
keys are rejected and all values pass the module-level invariants at
load), applies flag overrides, and writes one machine-readable artifact
(CSV or JSON) to stdout or a file, plus a one-line summary on stderr.
Stochastic commands require an explicit --seed and are reproducible:
identical config, flags and seed give byte-identical output for any
worker count.

Exit codes: 0 success, 1 numerical failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np
import yaml

from . import analysis, bloch, correlations, montecarlo, orbit as orbit_mod, vdw
from .core import (
    AtomParams,
    ConfigError,
    DomainError,
    DriveParams,
    FiberAtomError,
    Histogram,
    Spectrum,
)

_SECTIONS = {
    "atom": AtomParams,
    "drive": DriveParams,
    "vtype": bloch.VTypeScheme,
    "occupancy": montecarlo.OccupancyModel,
    "gating": montecarlo.GatingConfig,
    "detector": montecarlo.DetectorConfig,
    "vdw": vdw.VdwConfig,
    "orbit": orbit_mod.OrbitParams,
    "geometry": analysis.GeometryConfig,
}
_SCALAR_KEYS = {"seed", "workers"}
_FIT_KEYS = {"candidates", "lifetime_ns", "p", "background"}


def load_config(path: str | None) -> dict:
    """Load and validate the nested key-value run configuration."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for section, content in raw.items():
        if section in _SCALAR_KEYS:
            continue
        if section == "fit":
            unknown = set(content) - _FIT_KEYS
            if unknown:
                raise ConfigError(f"unknown keys in fit section: {sorted(unknown)}")
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section: {section}")
        if not isinstance(content, dict):
            raise ConfigError(f"config section {section} must be a mapping")
        cls = _SECTIONS[section]
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(content) - known
        if unknown:
            raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
        try:
            cls(**content)                    # validate invariants at load
        except FiberAtomError as exc:
            raise ConfigError(f"invalid {section} section: {exc}") from exc
    return raw


def _build(cfg: dict, section: str, **overrides):
    """Instantiate a config section with flag overrides applied on top."""
    merged = dict(cfg.get(section, {}))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return _SECTIONS[section](**merged)
    except FiberAtomError as exc:
        raise ConfigError(f"invalid {section} parameters: {exc}") from exc


def _emit(text: str, output: str | None, summary: str):
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(summary, file=sys.stderr)


def _grid(args) -> np.ndarray:
    return np.linspace(args.grid_min, args.grid_max, args.grid_points)


def cmd_spectrum(args) -> int:
    cfg = load_config(args.config)
    atom = _build(cfg, "atom")
    if args.intensity is not None:
        rabi = DriveParams.from_intensity(args.intensity, atom, scale=args.rabi_scale).rabi
    else:
        rabi = args.rabi if args.rabi is not None else cfg.get("drive", {}).get("rabi", 1.0)
    grid = _grid(args)
    if args.model == "two-level":
        spec = bloch.excitation_spectrum(atom, grid, rabi)
        label = f"two-level rabi={rabi:g} MHz"
    elif args.model == "vtype":
        scheme = _build(cfg, "vtype", gamma=atom.gamma_pop, delta_split=args.delta_split,
                        p=args.p, drive_ratio=args.drive_ratio,
                        ground_split=args.ground_split)
        spec = bloch.excitation_spectrum(scheme, grid, rabi)
        label = f"vtype split={scheme.delta_split:g} MHz rabi={rabi:g} MHz"
    else:
        vcfg = _build(cfg, "vdw", delta_c3=args.delta_c3,
                      coupling_length=args.coupling_length)
        dist = vdw.DistanceDistribution.uniform(args.dist_min, args.dist_max, 201)
        width = args.natural_width if args.natural_width else atom.linewidth
        spec = vdw.surface_line_shape(dist, vcfg, width, grid)
        label = f"vdw band {args.dist_min:g}-{args.dist_max:g} nm"
    _emit(spec.to_csv(), args.output,
          f"spectrum({label}): {len(spec)} points, peak {spec.values.max():.6g}")
    return 0


def cmd_g2(args) -> int:
    cfg = load_config(args.config)
    atom = _build(cfg, "atom")
    drive = _build(cfg, "drive", rabi=args.rabi, detuning=args.detuning)
    delays = np.arange(0.0, args.max_delay + args.step / 2, args.step)
    if args.model == "vtype":
        model = _build(cfg, "vtype", gamma=atom.gamma_pop, delta_split=args.delta_split)
    else:
        model = atom
    curve = correlations.g2_curve(model, drive, delays)
    _emit(curve.to_csv(), args.output,
          f"g2: {len(curve)} delays, g2(0)={curve.values[0]:g}, "
          f"tail={curve.values[-1]:.4f}")
    return 0


def cmd_hbt(args) -> int:
    cfg = load_config(args.config)
    atom = _build(cfg, "atom")
    drive = _build(cfg, "drive", rabi=args.rabi, detuning=args.detuning)
    occupancy = _build(cfg, "occupancy", fixed_atoms=args.mean_atoms,
                       arrival_rate=args.arrival_rate, dwell_mean=args.dwell)
    gating = _build(cfg, "gating") if (args.gated or "gating" in cfg) else None
    detector = _build(cfg, "detector", detection_efficiency=args.efficiency,
                      dark_rate=args.dark_rate, split_ratio=args.split_ratio)
    stream = montecarlo.apply_occupancy_and_gating(
        atom, drive, occupancy, gating, args.duration, args.seed,
        n_workers=args.workers)
    ch1, ch2 = montecarlo.split_and_detect(stream, detector, args.seed)
    hist = montecarlo.cross_correlate(ch1, ch2, args.bin_width, args.max_delay)
    plateau = hist.plateau()
    zero = hist.counts[len(hist) // 2]
    ratio = zero / plateau if plateau > 0 else float("nan")
    _emit(hist.to_csv(), args.output,
          f"hbt: {stream.n} photons, {hist.total} coincidences, "
          f"zero-bin/plateau={ratio:.4f}")
    return 0


def cmd_decay(args) -> int:
    cfg = load_config(args.config)
    atom = _build(cfg, "atom")
    drive = _build(cfg, "drive", rabi=args.rabi)
    occupancy = _build(cfg, "occupancy", arrival_rate=args.arrival_rate,
                       dwell_mean=args.dwell)
    gating = _build(cfg, "gating", off_period=args.off_period,
                    cycle_period=args.cycle_period, gate_delay=args.gate_delay,
                    gate_width=args.gate_width)
    scan = montecarlo.decay_scan(atom, drive, occupancy, gating,
                                 args.cycles, args.seed, n_workers=args.workers)
    _emit(scan.to_csv(), args.output,
          f"decay: {scan.counts.sum()} counts over {args.cycles} cycles, "
          f"{scan.delays.size} gates")
    return 0


def _read_table(path: str | None):
    source = sys.stdin if path in (None, "-") else path
    data = np.loadtxt(source, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise ConfigError("expected a two-column CSV")
    return data[:, 0], data[:, 1]


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    fit_cfg = cfg.get("fit", {})
    lifetime_ns = args.lifetime_ns or fit_cfg.get("lifetime_ns", 30.0)
    atom = AtomParams(gamma_pop=1000.0 / lifetime_ns)
    if args.what == "exp":
        t, y = _read_table(args.input)
        result = analysis.fit_exponential(t, y)
        summary = f"fit exp: tau={result['tau']:.6g} us"
    elif args.what == "coincidences":
        source = sys.stdin if args.input in (None, "-") else args.input
        hist = Histogram.from_csv(source)
        candidates = (tuple(int(x) for x in args.candidates.split(","))
                      if args.candidates else fit_cfg.get("candidates", range(0, 6)))
        background = args.background if args.background is not None \
            else fit_cfg.get("background", 0.0)
        result = analysis.fit_coincidences(hist, atom, candidates=candidates,
                                           background=background)
        summary = (f"fit coincidences: N={result['n_atoms']}, "
                   f"rabi={result['rabi']:.6g} MHz")
    else:
        source = sys.stdin if args.input in (None, "-") else args.input
        spec = Spectrum.from_csv(source)
        scheme = bloch.VTypeScheme(gamma=atom.gamma_pop,
                                   p=args.p if args.p is not None else fit_cfg.get("p", 1.0))
        result = analysis.fit_vtype_spectrum(spec, scheme)
        summary = f"fit vtype: delta_split={result['delta_split']:.6g} MHz"
    _emit(result.to_json() + "\n", args.output, summary)
    return 0


def cmd_orbit(args) -> int:
    cfg = load_config(args.config)
    params = _build(cfg, "orbit", c3_surface=args.c3_surface,
                    power_law_n=args.power_law, c_n=args.c_n)
    if args.sweep_L:
        try:
            lo, hi, n = args.sweep_L.split(":")
            l_values = np.geomspace(float(lo), float(hi), int(n))
        except ValueError as exc:
            raise ConfigError("--sweep-L expects lo:hi:n") from exc
    else:
        l_values = np.array([args.L])
    rows = ["L,radius_nm,orbit_freq_MHz,radial_freq_MHz,stability"]
    found = []
    for l in l_values:
        sol = orbit_mod.stationary_orbit(float(l), params)
        if sol is None:
            rows.append(f"{l:.12g},nan,nan,nan,none")
        else:
            rows.append(f"{l:.12g},{sol.radius:.12g},{sol.orbit_frequency:.12g},"
                        f"{sol.radial_frequency:.12g},{sol.stability}")
            found.append(sol)
    text = "\n".join(rows) + "\n"
    if len(found) >= 2:
        slope = np.polyfit(np.log([s.radius for s in found]),
                           np.log([s.orbit_frequency for s in found]), 1)[0]
        summary = (f"orbit: {len(found)}/{l_values.size} stationary points, "
                   f"measured frequency-radius slope {slope:+.3f}")
    elif found:
        s = found[0]
        summary = (f"orbit: r={s.radius:.4g} nm, nu_orbit={s.orbit_frequency:.4g} MHz, "
                   f"nu_radial={s.radial_frequency:.4g} MHz ({s.stability})")
    else:
        summary = "orbit: no stationary point in bracket"
    _emit(text, args.output, summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fiberatom",
        description="Simulate and fit single-atom fluorescence observed "
                    "through an optical nanofiber.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--output", help="write the artifact to this file")

    p = sub.add_parser("spectrum", help="excitation spectrum CSV")
    common(p)
    p.add_argument("--model", choices=["two-level", "vtype", "vdw-surface"],
                   default="two-level")
    p.add_argument("--rabi", type=float)
    p.add_argument("--intensity", type=float, help="mW/cm^2 (alternative to --rabi)")
    p.add_argument("--rabi-scale", type=float, default=1.0)
    p.add_argument("--grid-min", type=float, default=-20.0)
    p.add_argument("--grid-max", type=float, default=20.0)
    p.add_argument("--grid-points", type=int, default=401)
    p.add_argument("--delta-split", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--drive-ratio", type=float)
    p.add_argument("--ground-split", type=float)
    p.add_argument("--dist-min", type=float, default=50.0)
    p.add_argument("--dist-max", type=float, default=100.0)
    p.add_argument("--delta-c3", type=float)
    p.add_argument("--coupling-length", type=float)
    p.add_argument("--natural-width", type=float)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("g2", help="analytic g2 curve CSV")
    common(p)
    p.add_argument("--model", choices=["two-level", "vtype"], default="two-level")
    p.add_argument("--rabi", type=float, default=13.0)
    p.add_argument("--detuning", type=float, default=0.0)
    p.add_argument("--delta-split", type=float)
    p.add_argument("--max-delay", type=float, default=500.0, help="ns")
    p.add_argument("--step", type=float, default=1.0, help="ns")
    p.set_defaults(func=cmd_g2)

    p = sub.add_parser("hbt", help="Monte-Carlo HBT coincidence histogram CSV")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--duration", type=float, default=2000.0, help="us")
    p.add_argument("--rabi", type=float, default=13.0)
    p.add_argument("--detuning", type=float)
    p.add_argument("--mean-atoms", type=int, default=1,
                   help="atoms held in the observation volume")
    p.add_argument("--arrival-rate", type=float)
    p.add_argument("--dwell", type=float)
    p.add_argument("--gated", action="store_true",
                   help="apply the trap switching cycle from the config")
    p.add_argument("--efficiency", type=float)
    p.add_argument("--dark-rate", type=float)
    p.add_argument("--split-ratio", type=float)
    p.add_argument("--bin-width", type=float, default=2.0, help="ns")
    p.add_argument("--max-delay", type=float, default=400.0, help="ns")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_hbt)

    p = sub.add_parser("decay", help="delayed-gate dwell-time scan CSV")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--cycles", type=int, default=10000)
    p.add_argument("--rabi", type=float, default=1.0)
    p.add_argument("--arrival-rate", type=float, default=0.01, help="atoms/us")
    p.add_argument("--dwell", type=float, default=180.0, help="us")
    p.add_argument("--off-period", type=float, default=1000.0, help="us")
    p.add_argument("--cycle-period", type=float, default=21000.0, help="us")
    p.add_argument("--gate-width", type=float, default=50.0, help="us")
    p.add_argument("--gate-delay", type=float, default=0.0, help="us")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("fit", help="fit a model to a CSV artifact, emit JSON")
    common(p)
    p.add_argument("what", choices=["exp", "coincidences", "vtype"])
    p.add_argument("input", nargs="?", help="CSV file ('-' or omitted: stdin)")
    p.add_argument("--candidates", help="comma-separated N candidates")
    p.add_argument("--background", type=float,
                   help="known uncorrelated floor, counts/bin")
    p.add_argument("--lifetime-ns", type=float)
    p.add_argument("--p", type=float)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("orbit", help="stationary-orbit sweep CSV")
    common(p)
    p.add_argument("--L", type=float, default=25.0, help="angular momentum, hbar")
    p.add_argument("--sweep-L", help="lo:hi:n geometric sweep")
    p.add_argument("--c3-surface", type=float)
    p.add_argument("--power-law", type=int)
    p.add_argument("--c-n", type=float)
    p.set_defaults(func=cmd_orbit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FiberAtomError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
