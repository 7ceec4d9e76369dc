"""Second-order photon correlations and the N-atom coincidence model.

g2 curves come from the quantum regression theorem: after an emission the
atom is projected to the ground state, the master equation propagates that
reset state forward, and the conditional emission rate is normalized by
its steady-state value.  Closed-form results (damped Rabi oscillation of
the resonant two-level atom) are used only as test oracles, never as the
computation path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NS_PER_US, DomainError, DriveParams, _write_csv, _read_csv
from .bloch import build_system, evolve_density, steady_density, emission_rate

__all__ = ["G2Curve", "CoincidenceModel", "g2_curve", "n_atom_model",
           "dominant_oscillation"]


@dataclass
class G2Curve:
    """Normalized second-order correlation sampled on a delay grid (ns)."""

    delays: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.delays.shape != self.values.shape or self.delays.ndim != 1:
            raise DomainError("delays and values must be 1-d arrays of equal length")
        if self.delays[0] != 0 or not np.all(np.diff(self.delays) > 0):
            raise DomainError("delays must ascend from 0")
        if np.any(self.values < 0):
            raise DomainError("g2 values must be nonnegative")

    def __len__(self) -> int:
        return self.delays.size

    def to_csv(self, target=None) -> str | None:
        return _write_csv(target, "delay_ns,g2", (self.delays, self.values))

    @classmethod
    def from_csv(cls, source) -> "G2Curve":
        delays, values = _read_csv(source, 2)
        return cls(delays, values)


@dataclass(frozen=True)
class CoincidenceModel:
    """Scaling of a single-atom g2 to an N-atom coincidence curve."""

    n_atoms: int
    amplitude: float
    background: float = 0.0

    def __post_init__(self):
        if self.n_atoms < 1:
            raise DomainError("n_atoms must be >= 1")
        if not self.amplitude > 0:
            raise DomainError("amplitude must be > 0")
        if self.background < 0:
            raise DomainError("background must be >= 0")


def g2_curve(model, drive: DriveParams, delays_ns) -> G2Curve:
    """g2(tau) of a single emitter via the quantum regression theorem.

    Every emission lands the atom in its single ground level, so the
    post-jump reset state is exactly the ground state for both models.
    """
    delays_ns = np.asarray(delays_ns, dtype=float)
    if delays_ns.size == 0 or delays_ns[0] != 0 or not np.all(np.diff(delays_ns) > 0):
        raise DomainError("delays must ascend from 0")
    system = build_system(model, drive)
    rho_ss = steady_density(model, drive)
    flux_op = system.flux_operator()
    flux_ss = float(np.trace(flux_op @ rho_ss).real)
    if flux_ss <= 1e-30:
        raise DomainError("no steady-state emission; g2 is undefined")
    t_grid = delays_ns / NS_PER_US
    rhos = evolve_density(model, drive, t_grid)          # from ground
    flux = np.einsum("tij,ji->t", rhos, flux_op).real
    values = np.clip(flux / flux_ss, 0.0, None)
    values[0] = 0.0                                      # exact: reset state cannot emit
    return G2Curve(delays_ns, values)


def n_atom_model(g2: G2Curve, model: CoincidenceModel) -> np.ndarray:
    """Expected coincidences amplitude*[N g2(tau) + N(N-1)] + background."""
    n = model.n_atoms
    return model.amplitude * (n * g2.values + n * (n - 1)) + model.background


def dominant_oscillation(curve: G2Curve, window=None,
                         floor_factor: float = 5.0) -> float | None:
    """Frequency (MHz) of the dominant oscillation of (curve - 1).

    Uses a Hann-windowed zero-padded discrete transform with parabolic peak
    interpolation over the delay window (ns pair; default: whole curve).
    Returns None when no spectral peak stands above the noise floor by
    ``floor_factor`` times the median magnitude.
    """
    lo, hi = (curve.delays[0], curve.delays[-1]) if window is None else window
    mask = (curve.delays >= lo) & (curve.delays <= hi)
    t = curve.delays[mask]
    if t.size < 8:
        raise DomainError("window contains too few samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6):
        raise DomainError("oscillation extraction needs a uniform delay grid")
    x = curve.values[mask] - 1.0
    x = x - x.mean()                                     # suppress DC leakage
    if np.max(np.abs(x)) < 1e-12:
        return None
    n_pad = max(4096, 8 * t.size)
    spec = np.abs(np.fft.rfft(x * np.hanning(t.size), n_pad))
    freqs = np.fft.rfftfreq(n_pad, d=dt[0] / NS_PER_US)  # MHz
    # ignore DC and frequencies below two periods per window
    f_min = 2.0 / ((t[-1] - t[0]) / NS_PER_US)
    k0 = int(np.searchsorted(freqs, f_min))
    if k0 >= spec.size - 1:
        raise DomainError("window shorter than two oscillation periods")
    k = k0 + int(np.argmax(spec[k0:]))
    noise = np.median(spec[k0:])
    if spec[k] < floor_factor * max(noise, 1e-30):
        return None
    if 0 < k < spec.size - 1:                            # parabolic refinement
        a, b, c = spec[k - 1], spec[k], spec[k + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
        return float(freqs[k] + shift * (freqs[1] - freqs[0]))
    return float(freqs[k])
