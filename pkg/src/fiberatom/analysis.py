"""Nonlinear least-squares fits of the forward models, plus the simple
geometric estimators (mean atom number, transit time, intensity ratios).

All fitters are damped Gauss-Newton (Levenberg-style) minimizers with
finite-difference Jacobians at relative step 1e-6, via
scipy.optimize.least_squares; they are deterministic given data and
starting point.  Initial guesses come from documented heuristics (peak
delay, log-linear decay slope, dip width) and can be overridden.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .core import (
    AtomParams,
    DegenerateFitError,
    DomainError,
    DriveParams,
    Histogram,
    Spectrum,
)
from .bloch import VTypeScheme, excitation_spectrum, spectral_fwhm, dip_metrics
from .correlations import CoincidenceModel, G2Curve, g2_curve, n_atom_model

__all__ = ["FitResult", "GeometryConfig", "fit_exponential", "fit_coincidences",
           "fit_vtype_spectrum", "mean_atom_number", "localized_atom_count",
           "transit_time"]

_DIFF_STEP = 1e-6


@dataclass
class FitResult:
    """Outcome of one least-squares fit."""

    parameters: dict
    uncertainties: dict
    residual_norm: float
    iterations: int
    converged: bool
    message: str = ""
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.converged and not np.isfinite(self.residual_norm):
            raise DomainError("converged fit must have a finite residual norm")

    def __getitem__(self, name: str) -> float:
        return self.parameters[name]

    def to_dict(self) -> dict:
        return {
            "parameters": {k: float(v) for k, v in self.parameters.items()},
            "uncertainties": {k: float(v) for k, v in self.uncertainties.items()},
            "residual_norm": float(self.residual_norm),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "message": self.message,
            "flags": self.flags,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _sigma_from_fit(res, n_data: int):
    """Per-parameter 1-sigma from the local quadratic model at the optimum."""
    n_par = res.x.size
    dof = max(n_data - n_par, 1)
    s2 = 2.0 * res.cost / dof
    try:
        cov = np.linalg.pinv(res.jac.T @ res.jac) * s2
        sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        sig = np.full(n_par, np.nan)
    return sig


def _poisson_sigma(counts: np.ndarray) -> np.ndarray:
    """Poisson standard deviations with empty bins clamped to one count."""
    return np.sqrt(np.maximum(counts, 1.0))


@dataclass(frozen=True)
class GeometryConfig:
    """Observation-volume geometry: a cylindrical shell around the fiber.

    fiber_radius, shell_thickness in nm; observation_length in um.
    """

    fiber_radius: float = 200.0
    shell_thickness: float = 200.0
    observation_length: float = 100.0

    def __post_init__(self):
        for name in ("fiber_radius", "shell_thickness", "observation_length"):
            if not getattr(self, name) > 0:
                raise DomainError(f"GeometryConfig.{name} must be > 0")

    @property
    def shell_volume_um3(self) -> float:
        r_um = self.fiber_radius * 1e-3
        t_um = self.shell_thickness * 1e-3
        return np.pi * ((r_um + t_um) ** 2 - r_um ** 2) * self.observation_length


def fit_exponential(times_us, counts, weights=None) -> FitResult:
    """Fit A exp(-t/tau) + B to gated counts; Poisson weights by default."""
    t = np.asarray(times_us, dtype=float)
    y = np.asarray(counts, dtype=float)
    if t.size != y.size or t.size < 4:
        raise DomainError("need at least 4 (time, count) samples")
    if np.any(y < 0):
        raise DomainError("counts must be nonnegative")
    if np.ptp(y) <= 1e-12 * max(1.0, np.abs(y).max()):
        raise DegenerateFitError("constant data cannot constrain a decay time")
    sigma = _poisson_sigma(y) if weights is None else 1.0 / np.sqrt(np.asarray(weights, float))

    # heuristics: baseline from the tail, decay time from a log-linear fit
    n_tail = max(2, t.size // 10)
    b0 = float(np.clip(y[-n_tail:].mean(), 0.0, None))
    z = y - b0
    pos = z > max(z.max() * 1e-3, 1e-12)
    if pos.sum() >= 2:
        slope = np.polyfit(t[pos], np.log(z[pos]), 1)[0]
        tau0 = -1.0 / slope if slope < 0 else (t[-1] - t[0])
    else:
        tau0 = (t[-1] - t[0]) / 3.0
    tau0 = float(np.clip(tau0, 1e-9, 1e12))
    a0 = float(max(z.max(), 1e-9))

    def residual(p):
        a, tau, b = p
        return (y - (a * np.exp(-t / tau) + b)) / sigma

    res = least_squares(residual, x0=[a0, tau0, max(b0, 1e-12)],
                        bounds=([0.0, 1e-12, 0.0], np.inf),
                        diff_step=_DIFF_STEP, xtol=1e-14, ftol=1e-14, gtol=1e-14)
    sig = _sigma_from_fit(res, t.size)
    return FitResult(
        parameters={"amplitude": res.x[0], "tau": res.x[1], "background": res.x[2]},
        uncertainties={"amplitude": sig[0], "tau": sig[1], "background": sig[2]},
        residual_norm=float(np.linalg.norm(res.fun)),
        iterations=int(res.nfev),
        converged=bool(res.success),
        message=res.message)


def _first_peak_delay_ns(centers: np.ndarray, counts: np.ndarray) -> float | None:
    """Delay of the first local maximum after the central dip (both sides
    folded), used as half a Rabi period."""
    pos = centers >= 0
    c = centers[pos]
    v = counts[pos].astype(float)
    neg = centers <= 0
    v_neg = counts[neg].astype(float)[::-1]
    m = min(v.size, v_neg.size)
    folded = v[:m] + v_neg[:m]
    if m >= 3:
        smooth = np.convolve(folded, np.ones(3) / 3.0, mode="same")
    else:
        return None
    for i in range(1, m - 1):
        if smooth[i] >= smooth[i - 1] and smooth[i] > smooth[i + 1] and c[i] > 0:
            return float(c[i])
    return None


def fit_coincidences(hist: Histogram, atom: AtomParams | None = None,
                     candidates=range(0, 6), background: float | None = 0.0,
                     rabi0: float | None = None) -> FitResult:
    """Fit the N-atom coincidence model to a delay histogram.

    For each candidate integer N the continuous parameters are optimized
    against ``amplitude [N g2(tau) + N(N-1)] + background`` with the
    single-atom g2 computed on the fly (decay rate fixed by ``atom``);
    the best residual wins, ties toward smaller N.  N = 0 is the flat
    hypothesis (no emitter, pure background).

    ``background`` is the uncorrelated floor in counts per bin, known from
    a separate no-atom measurement (default 0).  Passing None fits it
    jointly instead; note that a free floor makes the atom number
    non-identifiable (any N >= 2 curve equals an N = 1 curve plus extra
    floor), so the joint fit settles on the smallest consistent N.
    """
    if atom is None:
        atom = AtomParams()
    if len(hist) < 8:
        raise DomainError("histogram has too few bins to fit")
    if hist.total == 0:
        raise DomainError("histogram is empty")
    centers = hist.centers
    y = hist.counts.astype(float)
    sigma = _poisson_sigma(y)
    k = (len(hist) - 1) // 2
    delays = centers[k:]                       # 0 .. max delay
    fold_idx = np.abs(np.round(centers / hist.bin_width)).astype(int)
    free_bg = background is None
    bg_fixed = 0.0 if free_bg else float(background)
    if bg_fixed < 0:
        raise DomainError("background must be >= 0")

    plateau = hist.plateau()
    dip_val = float(y[k])
    if rabi0 is None:
        t_peak = _first_peak_delay_ns(centers, hist.counts)
        rabi0 = 500.0 / t_peak if t_peak else 2.0 * atom.linewidth
    rabi0 = float(np.clip(rabi0, 0.5, 0.45e3 / hist.bin_width))

    def g2_values(rabi: float) -> np.ndarray:
        curve = g2_curve(atom, DriveParams(detuning=0.0, rabi=rabi), delays)
        return curve.values[fold_idx]

    best = None
    for n_at in sorted(set(int(n) for n in candidates)):
        if n_at < 0:
            raise DomainError("candidate N must be >= 0")
        if n_at == 0:
            # flat hypothesis: the level itself is the (free) background
            bg = float(np.sum(y / sigma ** 2) / np.sum(1.0 / sigma ** 2))
            resid = (y - bg) / sigma
            cand = {
                "n_atoms": 0, "rabi": 0.0, "amplitude": 0.0, "background": bg,
                "norm": float(np.linalg.norm(resid)), "sig": np.zeros(3),
                "nfev": 1, "success": True, "message": "flat model, weighted mean",
            }
            sig_map = (0.0, 0.0, 0.0)
        else:
            amp0 = max((plateau - dip_val) / n_at, 1e-9)
            bg0 = max(plateau - amp0 * n_at ** 2, 0.0)

            def residual(p, n_at=n_at):
                rabi, amp = p[0], p[1]
                bg = p[2] if free_bg else bg_fixed
                model = amp * (n_at * g2_values(rabi) + n_at * (n_at - 1)) + bg
                return (y - model) / sigma

            x0 = [rabi0, amp0, bg0] if free_bg else [rabi0, amp0]
            lo = [0.05, 1e-12, 0.0] if free_bg else [0.05, 1e-12]
            res = least_squares(residual, x0=x0, bounds=(lo, np.inf),
                                diff_step=_DIFF_STEP, xtol=1e-13, ftol=1e-13, gtol=1e-13)
            sig = _sigma_from_fit(res, y.size)
            cand = {
                "n_atoms": n_at, "rabi": res.x[0], "amplitude": res.x[1],
                "background": res.x[2] if free_bg else bg_fixed,
                "norm": float(np.linalg.norm(res.fun)),
                "nfev": int(res.nfev), "success": bool(res.success),
                "message": res.message,
            }
            sig_map = (sig[0], sig[1], sig[2] if free_bg else 0.0)
        cand["sig"] = sig_map
        if best is None or cand["norm"] < best["norm"] * (1.0 - 1e-12):
            best = cand

    no_antibunching = best["n_atoms"] == 0 or best["amplitude"] <= best["sig"][1]
    return FitResult(
        parameters={"n_atoms": best["n_atoms"], "rabi": best["rabi"],
                    "amplitude": best["amplitude"], "background": best["background"]},
        uncertainties={"n_atoms": 0.0, "rabi": best["sig"][0],
                       "amplitude": best["sig"][1], "background": best["sig"][2]},
        residual_norm=best["norm"],
        iterations=best["nfev"],
        converged=best["success"],
        message=best["message"],
        flags={"no_antibunching": bool(no_antibunching)})


def fit_vtype_spectrum(spec: Spectrum, scheme: VTypeScheme | None = None,
                       delta0: float | None = None) -> FitResult:
    """Fit the V-type excitation spectrum model to a measured spectrum.

    Free parameters: upper-level splitting, Rabi frequency, amplitude and
    offset.  Decay rate and interference strength are fixed by ``scheme``
    (defaults: 30 ns lifetime, full interference).
    """
    if scheme is None:
        scheme = VTypeScheme()
    grid = spec.detunings
    v = spec.values
    if len(spec) < 9:
        raise DomainError("spectrum has too few samples to fit")
    span = grid[-1] - grid[0]
    linewidth = scheme.gamma / (2 * np.pi)

    offset0 = float(min(v[0], v[-1]))
    if delta0 is None:
        dip = dip_metrics(spec)
        delta0 = float(np.clip(dip.width, 0.1, 0.5 * span)) if dip else 1.0
    try:
        fwhm = spectral_fwhm(spec)
        rabi0 = float(np.sqrt(max(fwhm ** 2 - linewidth ** 2, 0.1) / 2.0))
    except Exception:
        rabi0 = linewidth / 2.0

    def model(p):
        delta_split, rabi, amp, off = p
        sch = VTypeScheme(gamma=scheme.gamma, delta_split=delta_split,
                          p=scheme.p, drive_ratio=scheme.drive_ratio,
                          ground_split=scheme.ground_split)
        base = excitation_spectrum(sch, grid, rabi).values
        return amp * base + off

    peak = float(v.max() - offset0)

    def residual(p):
        return v - model(p)

    res = least_squares(residual, x0=[delta0, rabi0, max(peak, 1e-9), offset0],
                        bounds=([1e-4, 1e-3, 1e-12, 0.0],
                                [2.0 * span, 10.0 * span, np.inf, np.inf]),
                        diff_step=_DIFF_STEP, xtol=1e-13, ftol=1e-13, gtol=1e-13)
    sig = _sigma_from_fit(res, v.size)
    names = ("delta_split", "rabi", "amplitude", "offset")
    return FitResult(
        parameters=dict(zip(names, res.x)),
        uncertainties=dict(zip(names, sig)),
        residual_norm=float(np.linalg.norm(res.fun)),
        iterations=int(res.nfev),
        converged=bool(res.success),
        message=res.message)


def mean_atom_number(density_cm3: float, geom: GeometryConfig) -> float:
    """Average atom number in the cylindrical observation shell."""
    if density_cm3 < 0:
        raise DomainError("density must be >= 0")
    density_um3 = density_cm3 * 1e-12
    return density_um3 * geom.shell_volume_um3


def _integrated(signal) -> float:
    if isinstance(signal, Spectrum):
        return float(np.trapezoid(signal.values, signal.detunings))
    return float(signal)


def localized_atom_count(integrated_many, integrated_single) -> float:
    """Atom-number estimate from the ratio of integrated spectra.

    Accepts either Spectrum objects (trapezoid-integrated) or already
    integrated scalar intensities.
    """
    many = _integrated(integrated_many)
    single = _integrated(integrated_single)
    if single <= 0:
        raise DomainError("single-atom reference intensity must be > 0")
    return many / single


def transit_time(speed_cm_s: float, length_um: float) -> float:
    """Free-flight transit time in us across a path of length_um."""
    if not speed_cm_s > 0 or not length_um > 0:
        raise DomainError("speed and length must be > 0")
    return length_um / (speed_cm_s * 0.01)
