"""Atom-surface level shifts and the near-surface excitation line shape.

An atom a distance d from the silica surface is red-shifted by
``-delta_c3 / d^3`` because the excited state binds more strongly than the
ground state.  A phenomenological distance distribution, weighted by an
exponential detection-coupling factor, turns the shift law into the
observed line shapes: a broad red tail when atoms sample short distances,
a near-resonance peak when they are held at tens of nanometers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError, Spectrum

__all__ = ["VdwConfig", "DistanceDistribution", "vdw_shift",
           "distance_for_shift", "surface_line_shape"]

_KHZ_UM3_TO_MHZ_NM3 = 1e6   # 1 kHz*um^3 = 1e-3 MHz * (1e3 nm)^3


@dataclass(frozen=True)
class VdwConfig:
    """delta_c3: differential surface coefficient (kHz um^3);
    coupling_length: detection-weight decay length (nm)."""

    delta_c3: float = 1.0
    coupling_length: float = 100.0

    def __post_init__(self):
        if not self.delta_c3 > 0:
            raise DomainError("delta_c3 must be > 0")
        if not self.coupling_length > 0:
            raise DomainError("coupling_length must be > 0")


@dataclass
class DistanceDistribution:
    """Normalized weights over a positive distance grid (nm)."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.support.shape != self.weights.shape or self.support.ndim != 1:
            raise DomainError("support and weights must be 1-d arrays of equal length")
        if np.any(self.support <= 0):
            raise DomainError("distances must be positive")
        if np.any(self.weights < 0):
            raise DomainError("weights must be nonnegative")
        total = self.weights.sum()
        if total <= 0:
            raise DomainError("weights must not all vanish")
        if abs(total - 1.0) > 1e-9:
            self.weights = self.weights / total

    @classmethod
    def uniform(cls, d_min: float, d_max: float, n: int = 101) -> "DistanceDistribution":
        if not 0 < d_min < d_max:
            raise DomainError("need 0 < d_min < d_max")
        support = np.linspace(d_min, d_max, n)
        return cls(support, np.full(n, 1.0 / n))

    @classmethod
    def delta(cls, d: float) -> "DistanceDistribution":
        return cls(np.array([d]), np.array([1.0]))


def vdw_shift(d_nm, cfg: VdwConfig):
    """Level shift in MHz at distance d (nm); strictly negative (red)."""
    d = np.asarray(d_nm, dtype=float)
    if np.any(d <= 0):
        raise DomainError("distance must be > 0")
    shift = -cfg.delta_c3 * _KHZ_UM3_TO_MHZ_NM3 / d ** 3
    return float(shift) if np.ndim(d_nm) == 0 else shift


def distance_for_shift(shift_mhz, cfg: VdwConfig):
    """Distance in nm producing the given red shift; inverse of vdw_shift."""
    s = np.asarray(shift_mhz, dtype=float)
    if np.any(s >= 0):
        raise DomainError("shift must be negative (red)")
    d = (cfg.delta_c3 * _KHZ_UM3_TO_MHZ_NM3 / (-s)) ** (1.0 / 3.0)
    return float(d) if np.ndim(shift_mhz) == 0 else d


def surface_line_shape(dist: DistanceDistribution, cfg: VdwConfig,
                       natural_width_mhz: float, grid_mhz) -> Spectrum:
    """Detection-weighted sum of shifted Lorentzians, unit-normalized.

    Each distance contributes a Lorentzian of FWHM ``natural_width_mhz``
    centered at its shift, weighted by the occupation probability times
    exp(-d / coupling_length); the result is renormalized to unit
    trapezoid integral over the grid.
    """
    if not natural_width_mhz > 0:
        raise DomainError("natural width must be > 0")
    grid = np.asarray(grid_mhz, dtype=float)
    if not np.all(np.diff(grid) > 0):
        raise DomainError("detuning grid must be strictly ascending")
    centers = vdw_shift(dist.support, cfg)
    weights = dist.weights * np.exp(-dist.support / cfg.coupling_length)
    hw = natural_width_mhz / 2.0
    profile = hw ** 2 / ((grid[None, :] - np.atleast_1d(centers)[:, None]) ** 2 + hw ** 2)
    values = np.atleast_1d(weights) @ profile
    norm = np.trapezoid(values, grid)
    if norm <= 0:
        raise DomainError("line shape vanished on the supplied grid")
    return Spectrum(grid, values / norm)
