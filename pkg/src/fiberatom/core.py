"""Shared physical constants, unit conventions and sampled-curve containers.

Unit convention, enforced at module boundaries:

* every externally visible frequency (detuning, Rabi, linewidth, splitting)
  is an ordinary frequency in MHz;
* every internal dynamical rate is angular, in rad/us.

With time in microseconds the conversion is simply ``omega = 2*pi*f``,
since 1 MHz = 1 cycle/us.  Decay rates such as ``gamma_pop`` are population
rates in 1/us (a 30 ns lifetime gives 33.33 /us and a natural linewidth of
``gamma_pop / 2pi`` = 5.305 MHz).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi
NS_PER_US = 1000.0

#: default Cs parameters: 30 ns spontaneous-emission time, D2 closed-transition
#: saturation intensity (not a measured quantity here, a documented constant)
DEFAULT_LIFETIME_US = 0.030
DEFAULT_I_SAT = 1.1          # mW/cm^2
CS_MASS_KG = 2.207e-25
CS_ALPHA_POL = 6.6e-39       # C m^2 / V, ground-state static polarizability


class FiberAtomError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FiberAtomError, ValueError):
    """An argument lies outside the physically meaningful domain."""


class ConfigError(FiberAtomError):
    """Invalid or inconsistent run configuration."""


class IntegrationError(FiberAtomError):
    """Time integration failed its step-halving convergence check."""


class NumericalError(FiberAtomError):
    """A linear solve or similar numerical step failed.

    Carries the condition number of the offending system when available.
    """

    def __init__(self, message: str, condition_number: float | None = None):
        if condition_number is not None:
            message = f"{message} (condition number {condition_number:.3e})"
        super().__init__(message)
        self.condition_number = condition_number


class DegenerateFitError(FiberAtomError):
    """The data cannot constrain the requested fit (e.g. constant input)."""


class NoPeakError(FiberAtomError):
    """The curve has no usable peak (flat or monotone input)."""


def angular(f_mhz):
    """Ordinary frequency in MHz -> angular rate in rad/us."""
    return TWO_PI * np.asarray(f_mhz, dtype=float) if np.ndim(f_mhz) else TWO_PI * float(f_mhz)


def ordinary(w_rad_us):
    """Angular rate in rad/us -> ordinary frequency in MHz."""
    return np.asarray(w_rad_us, dtype=float) / TWO_PI if np.ndim(w_rad_us) else float(w_rad_us) / TWO_PI


@dataclass(frozen=True)
class AtomParams:
    """Atomic constants for the two-level description.

    gamma_pop   population decay rate, 1/us (default: 30 ns lifetime)
    i_sat       saturation intensity, mW/cm^2
    mass        kg
    alpha_pol   static polarizability, C m^2/V
    c3_ground   ground-state surface-interaction coefficient, kHz um^3
    c3_excited  excited-state coefficient, kHz um^3 (>= ground: red shifts)
    """

    gamma_pop: float = 1.0 / DEFAULT_LIFETIME_US
    i_sat: float = DEFAULT_I_SAT
    mass: float = CS_MASS_KG
    alpha_pol: float = CS_ALPHA_POL
    c3_ground: float = 1.0
    c3_excited: float = 2.0

    def __post_init__(self):
        for name in ("gamma_pop", "i_sat", "mass", "alpha_pol", "c3_ground", "c3_excited"):
            if not getattr(self, name) > 0:
                raise DomainError(f"AtomParams.{name} must be strictly positive")
        if self.c3_excited < self.c3_ground:
            raise DomainError("c3_excited must be >= c3_ground")

    @property
    def linewidth(self) -> float:
        """Natural linewidth gamma_pop/2pi in MHz."""
        return self.gamma_pop / TWO_PI

    @property
    def delta_c3(self) -> float:
        """Differential surface coefficient c3_excited - c3_ground, kHz um^3."""
        return self.c3_excited - self.c3_ground


@dataclass(frozen=True)
class DriveParams:
    """Probe-drive parameters: detuning and Rabi frequency, both MHz."""

    detuning: float = 0.0
    rabi: float = 0.0

    def __post_init__(self):
        if self.rabi < 0:
            raise DomainError("rabi must be >= 0")

    @classmethod
    def from_intensity(cls, intensity: float, atom: AtomParams,
                       detuning: float = 0.0, scale: float = 1.0) -> "DriveParams":
        """Build a drive from laser intensity via :func:`rabi_from_intensity`."""
        return cls(detuning=detuning, rabi=rabi_from_intensity(intensity, atom, scale))


def rabi_from_intensity(intensity: float, atom: AtomParams, scale: float = 1.0) -> float:
    """Rabi frequency in MHz for a given drive intensity in mW/cm^2.

    ``rabi = scale * (gamma_pop/2pi) * sqrt(intensity / (2 i_sat))``, so the
    on-resonance saturation parameter equals ``intensity/i_sat`` at scale 1.
    ``scale`` absorbs the empirical reduction of the effective Rabi coupling
    for atoms bound near the fiber surface; it is never hard-coded.
    """
    if intensity < 0:
        raise DomainError("intensity must be >= 0")
    if not 0 < scale <= 1:
        raise DomainError("scale must lie in (0, 1]")
    return scale * atom.linewidth * np.sqrt(intensity / (2.0 * atom.i_sat))


def _write_csv(target, header: str, columns, fmt: str = "%.12g") -> str | None:
    """Write aligned columns as CSV to a path, file object, or return a string."""
    data = np.column_stack([np.asarray(c) for c in columns])
    buf = io.StringIO()
    buf.write(header + "\n")
    np.savetxt(buf, data, delimiter=",", fmt=fmt)
    text = buf.getvalue()
    if target is None:
        return text
    if hasattr(target, "write"):
        target.write(text)
        return None
    with open(target, "w") as fh:
        fh.write(text)
    return None


def _read_csv(source, n_cols: int):
    data = np.loadtxt(source, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != n_cols:
        raise ConfigError(f"expected {n_cols} CSV columns, got {data.shape[1]}")
    return [data[:, i] for i in range(n_cols)]


@dataclass
class Spectrum:
    """Sampled signal versus probe detuning.

    detunings  MHz, strictly ascending
    values     nonnegative signal, same length (emission rate per atom, 1/us,
               unless produced by a renormalized line-shape model)
    """

    detunings: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.detunings = np.asarray(self.detunings, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.detunings.ndim != 1 or self.detunings.shape != self.values.shape:
            raise DomainError("detunings and values must be 1-d arrays of equal length")
        if self.detunings.size < 2:
            raise DomainError("spectrum needs at least two samples")
        if not np.all(np.diff(self.detunings) > 0):
            raise DomainError("detunings must be strictly ascending")
        if np.any(self.values < 0):
            raise DomainError("spectrum values must be nonnegative")

    def __len__(self) -> int:
        return self.detunings.size

    def to_csv(self, target=None) -> str | None:
        return _write_csv(target, "detuning_MHz,signal", (self.detunings, self.values))

    @classmethod
    def from_csv(cls, source) -> "Spectrum":
        det, val = _read_csv(source, 2)
        return cls(det, val)


@dataclass
class Histogram:
    """Binned coincidence counts versus delay.

    bin_width  ns
    centers    bin-center delays in ns, uniform and symmetric around 0
    counts     nonnegative integers
    """

    bin_width: float
    centers: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        counts = np.asarray(self.counts)
        if np.any(counts < 0):
            raise DomainError("histogram counts must be nonnegative")
        if not np.all(counts == np.round(counts)):
            raise DomainError("histogram counts must be integers")
        self.counts = counts.astype(np.int64)
        if self.centers.shape != self.counts.shape or self.centers.ndim != 1:
            raise DomainError("centers and counts must be 1-d arrays of equal length")
        if self.centers.size >= 2:
            steps = np.diff(self.centers)
            if not np.allclose(steps, self.bin_width, rtol=1e-9, atol=1e-9):
                raise DomainError("histogram bins must be uniform with the stated width")
        if not np.allclose(self.centers, -self.centers[::-1], atol=1e-9):
            raise DomainError("histogram centers must be symmetric around 0")

    def __len__(self) -> int:
        return self.centers.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def plateau(self, fraction: float = 0.25) -> float:
        """Mean counts over the outermost ``fraction`` of bins on each side."""
        k = max(1, int(round(fraction * len(self) / 2)))
        return float(np.mean(np.concatenate([self.counts[:k], self.counts[-k:]])))

    def to_csv(self, target=None) -> str | None:
        return _write_csv(target, "delay_ns,counts",
                          (self.centers, self.counts), fmt="%.12g")

    @classmethod
    def from_csv(cls, source) -> "Histogram":
        centers, counts = _read_csv(source, 2)
        width = float(centers[1] - centers[0]) if centers.size >= 2 else 1.0
        return cls(width, centers, counts)
