"""Stochastic forward model of the nanofiber fluorescence experiment.

Photon emission is simulated by the quantum-jump unraveling of the master
equation.  Because every emission projects the atom onto its single ground
level, the jump times form a renewal process: inter-arrival times are
i.i.d. draws from the waiting-time distribution, whose survival function
is the squared norm of the state propagated with the non-Hermitian
effective Hamiltonian from the ground state.  The survival curve is
tabulated once per parameter set (propagation is exact on the table grid)
and sampled by inverse transform, which keeps antibunching exact at short
delays and makes million-photon streams cheap.

Randomness is counter-based: every independent unit of work (loading
window, atom, trajectory chunk, detector stage) derives its own generator
from the master seed via a distinct ``spawn_key``, never from shared-RNG
draw order.  Outputs are therefore identical for any worker count, and
histograms are accumulated by merging per-chunk partials.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .core import NS_PER_US, DomainError, DriveParams, Histogram, _write_csv
from .bloch import build_system

__all__ = [
    "PhotonStream",
    "OccupancyModel",
    "GatingConfig",
    "DetectorConfig",
    "DecayScan",
    "WaitingTimeSampler",
    "simulate_emission",
    "apply_occupancy_and_gating",
    "split_and_detect",
    "cross_correlate",
    "decay_scan",
    "mc_excited_population",
    "merge_streams",
]

# spawn-key namespaces so that different pipeline stages fed with related
# seeds can never collide on the same Philox counter stream
_KEY_ARRIVALS = 0
_KEY_EMISSION = 1
_KEY_DETECT = 2
_KEY_TRAJ = 3

_SURVIVAL_FLOOR = 1e-13
_TABLE_SIZE = 1 << 16


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass
class PhotonStream:
    """Time-tagged photon events.

    times     ns, sorted ascending (strictly, after detector quantization)
    channels  integer tag per event (0 = undetected emission, 1/2 = APDs)
    duration  simulated span in ns; all times lie in [0, duration)
    """

    times: np.ndarray
    channels: np.ndarray
    duration: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.channels = np.asarray(self.channels, dtype=np.int16)
        if self.times.shape != self.channels.shape or self.times.ndim != 1:
            raise DomainError("times and channels must be 1-d arrays of equal length")
        if self.times.size:
            if np.any(np.diff(self.times) < 0):
                raise DomainError("photon times must be sorted")
            if self.times[0] < 0 or self.times[-1] >= self.duration + 1e-9:
                raise DomainError("photon times must lie within [0, duration)")

    @property
    def n(self) -> int:
        return self.times.size

    def rate_per_us(self) -> float:
        return self.n / (self.duration / NS_PER_US) if self.duration > 0 else 0.0

    def to_csv(self, target=None) -> str | None:
        return _write_csv(target, "time_ns,channel", (self.times, self.channels))


def merge_streams(streams, duration: float) -> PhotonStream:
    """Time-ordered merge of several streams (stable under ties)."""
    if not streams:
        return PhotonStream(np.empty(0), np.empty(0, dtype=np.int16), duration)
    times = np.concatenate([s.times for s in streams])
    chans = np.concatenate([s.channels for s in streams])
    order = np.argsort(times, kind="stable")
    return PhotonStream(times[order], chans[order], duration)


@dataclass(frozen=True)
class OccupancyModel:
    """Atom number dynamics in the observation volume.

    arrival_rate      atoms/us while the trap is loading (Poisson)
    dwell_mean        mean residence time, us (exponential)
    fixed_atoms       if > 0, exactly this many atoms are present for the
                      whole run and the Poisson process is ignored
    load_during_probe allow arrivals inside probe windows (off by default:
                      the source is interrupted while the trap light is off)
    """

    arrival_rate: float = 0.0
    dwell_mean: float = 180.0
    fixed_atoms: int = 0
    load_during_probe: bool = False

    def __post_init__(self):
        if self.arrival_rate < 0 or self.dwell_mean < 0:
            raise DomainError("arrival_rate and dwell_mean must be >= 0")
        if self.fixed_atoms < 0:
            raise DomainError("fixed_atoms must be >= 0")


@dataclass(frozen=True)
class GatingConfig:
    """Trap-light switching cycle.  Each cycle is loading followed by a
    probe (switched-off) window of length ``off_period`` at its end.

    gate_delay/gate_width configure the delayed-gate decay scan: windows of
    ``gate_width`` tile the probe window starting at ``gate_delay``.
    """

    off_period: float
    cycle_period: float
    gate_delay: float = 0.0
    gate_width: float = 0.0

    def __post_init__(self):
        if not 0 < self.off_period <= self.cycle_period:
            raise DomainError("need 0 < off_period <= cycle_period")
        if self.gate_delay < 0 or self.gate_width < 0:
            raise DomainError("gate_delay and gate_width must be >= 0")
        if self.gate_width > 0 and self.gate_delay + self.gate_width > self.off_period + 1e-9:
            raise DomainError("gate windows must fit inside the probe window")

    @property
    def on_period(self) -> float:
        return self.cycle_period - self.off_period

    def probe_windows(self, duration_us: float) -> np.ndarray:
        """(n, 2) array of probe-window [start, end) in us, clipped."""
        n = int(np.ceil(duration_us / self.cycle_period))
        starts = np.arange(n) * self.cycle_period + self.on_period
        ends = np.minimum(starts + self.off_period, duration_us)
        keep = starts < duration_us
        return np.column_stack([starts[keep], ends[keep]])

    def loading_windows(self, duration_us: float) -> np.ndarray:
        n = int(np.ceil(duration_us / self.cycle_period))
        starts = np.arange(n) * self.cycle_period
        ends = np.minimum(starts + self.on_period, duration_us)
        keep = ends > starts
        return np.column_stack([starts[keep], ends[keep]])


@dataclass(frozen=True)
class DetectorConfig:
    """Beamsplitter + APD pair with dark counts and time quantization."""

    split_ratio: float = 0.5
    dark_rate: float = 1e3            # counts/s per channel
    resolution: float = 1.0           # ns
    detection_efficiency: float = 1.0
    dead_time: float = 0.0            # ns, optional, 0 disables

    def __post_init__(self):
        if not 0 <= self.split_ratio <= 1:
            raise DomainError("split_ratio must lie in [0, 1]")
        if not 0 <= self.detection_efficiency <= 1:
            raise DomainError("detection_efficiency must lie in [0, 1]")
        if self.dark_rate < 0 or self.resolution <= 0 or self.dead_time < 0:
            raise DomainError("invalid detector parameters")


class WaitingTimeSampler:
    """Tabulated waiting-time distribution of the jump process from ground.

    Propagates the ground state with exp(-i H_eff t) on a uniform grid
    (one matrix exponential per table, then a matvec recursion, so the
    table is exact at grid points).  The survival function S(t) is the
    squared norm; sampling inverts u = 1 - S(t) by interpolation.  For
    drives with a radiatively dark superposition the distribution is
    defective, S(inf) = q > 0, and draws return +inf with probability q:
    the atom has stopped fluorescing.
    """

    def __init__(self, model, drive: DriveParams):
        system = build_system(model, drive)
        self._excited = np.arange(system.dim) != 0
        heff = system.effective_hamiltonian()
        psi0 = system.ground_vector()
        self.emits = bool(np.max(np.abs(heff[1:, 0])) > 0)
        if not self.emits:
            # ground state is stationary: no excitation, no photons
            self.t = np.array([0.0, 1.0])
            self.survival = np.array([1.0, 1.0])
            self.mean_wait = np.inf
            self.never_prob = 1.0
            return
        t_max = 5.0 / system.gamma_total
        for _ in range(60):
            t, amps = self._propagate_table(heff, psi0, t_max)
            surv = np.einsum("ij,ij->i", np.abs(amps), np.abs(amps))
            if surv[-1] < _SURVIVAL_FLOOR:
                break
            # defective distribution: survival has flattened above the floor
            mid = np.searchsorted(t, 0.5 * t_max)
            if surv[mid] - surv[-1] < 1e-12 and surv[-1] > 1e3 * _SURVIVAL_FLOOR:
                break
            t_max *= 2.0
        self.t = t
        self.survival = surv
        self.never_prob = float(surv[-1]) if surv[-1] >= _SURVIVAL_FLOOR else 0.0
        pe = np.einsum("ij,ij->i", np.abs(amps[:, self._excited]),
                       np.abs(amps[:, self._excited]))
        self._excited_cond = pe / np.maximum(surv, 1e-300)
        self._cdf = 1.0 - surv
        if self.never_prob > 0:
            self.mean_wait = np.inf
        else:
            self.mean_wait = float(np.trapezoid(surv, t))

    @staticmethod
    def _propagate_table(heff, psi0, t_max, n=_TABLE_SIZE):
        t = np.linspace(0.0, t_max, n)
        step = expm(-1j * heff * (t[1] - t[0]))
        amps = np.empty((n, psi0.size), complex)
        amps[0] = psi0
        v = psi0
        for k in range(1, n):
            v = step @ v
            amps[k] = v
        return t, amps

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw i.i.d. waiting times in us (+inf when emission ceases)."""
        u = rng.random(size)
        waits = np.interp(u, self._cdf, self.t)
        if self.never_prob > 0:
            waits[u >= self._cdf[-1]] = np.inf
        return waits

    def stream_times(self, rng: np.random.Generator, t_start: float, t_end: float) -> np.ndarray:
        """Jump times of one renewal run over [t_start, t_end), us."""
        span = t_end - t_start
        if span <= 0 or not self.emits:
            return np.empty(0)
        out = []
        t_now = 0.0
        while t_now < span:
            if np.isfinite(self.mean_wait):
                n_est = int((span - t_now) / self.mean_wait * 1.25) + 16
            else:
                n_est = 16
            w = self.sample(rng, n_est)
            cum = np.cumsum(w) + t_now
            if not np.all(np.isfinite(cum)):
                stop = int(np.argmax(~np.isfinite(cum)))
                out.append(cum[:stop])
                t_now = np.inf
                break
            out.append(cum)
            t_now = cum[-1]
        times = np.concatenate(out) if out else np.empty(0)
        return t_start + times[times < span]

    def conditional_excited(self, dt: np.ndarray) -> np.ndarray:
        """Excited population of the no-jump state at time dt after a jump."""
        return np.interp(dt, self.t, self._excited_cond)


def simulate_emission(model, drive: DriveParams, duration_us: float, seed: int) -> PhotonStream:
    """Quantum-jump photon stream of one continuously present atom.

    Deterministic in ``seed``: identical arguments give identical streams.
    """
    if duration_us <= 0:
        raise DomainError("duration must be > 0")
    sampler = WaitingTimeSampler(model, drive)
    rng = _rng(seed, _KEY_EMISSION, 0, 0)
    times_us = sampler.stream_times(rng, 0.0, duration_us)
    return PhotonStream(times_us * NS_PER_US,
                        np.zeros(times_us.size, dtype=np.int16),
                        duration_us * NS_PER_US)


def _sample_window_atoms(occupancy: OccupancyModel, window, seed: int, widx: int):
    """Arrival/departure pairs for atoms born in one loading window."""
    w0, w1 = float(window[0]), float(window[1])
    rng = _rng(seed, _KEY_ARRIVALS, widx)
    n = rng.poisson(occupancy.arrival_rate * (w1 - w0))
    if n == 0:
        return np.empty(0), np.empty(0)
    arrivals = np.sort(rng.random(n)) * (w1 - w0) + w0
    dwells = rng.exponential(occupancy.dwell_mean, size=n)
    return arrivals, arrivals + dwells


def _atom_photons(sampler: WaitingTimeSampler, probe_windows: np.ndarray,
                  arrival: float, departure: float, rng) -> np.ndarray:
    """Photon times (us) of one atom: renewal emission restricted to the
    overlap of its residence with the probe windows.  The atom enters each
    probe window in the ground state (it was being cycled by the trap
    light just before)."""
    starts, ends = probe_windows[:, 0], probe_windows[:, 1]
    w = int(np.searchsorted(ends, arrival, side="right"))
    chunks = []
    while w < len(starts) and starts[w] < departure:
        a = max(arrival, starts[w])
        b = min(departure, ends[w])
        if b > a:
            chunks.append(sampler.stream_times(rng, a, b))
        w += 1
    return np.concatenate(chunks) if chunks else np.empty(0)


def _occupancy_photon_times(model, drive, occupancy: OccupancyModel,
                            gating: GatingConfig | None, duration_us: float,
                            seed: int, n_workers: int = 1) -> np.ndarray:
    """All photon emission times (us, sorted) of the occupancy pipeline."""
    sampler = WaitingTimeSampler(model, drive)
    if gating is None:
        probe = np.array([[0.0, duration_us]])
    else:
        probe = gating.probe_windows(duration_us)

    if occupancy.fixed_atoms > 0:
        def run_atom(i):
            rng = _rng(seed, _KEY_EMISSION, 0, i)
            return _atom_photons(sampler, probe, 0.0, duration_us, rng)

        parts = _map_chunks(run_atom, occupancy.fixed_atoms, n_workers)
        return np.sort(np.concatenate(parts)) if parts else np.empty(0)

    if gating is None or occupancy.load_during_probe:
        loading = np.array([[0.0, duration_us]])
    else:
        loading = gating.loading_windows(duration_us)

    first_probe_start = np.append(probe[:, 0], np.inf)

    def run_window(widx):
        arrivals, departures = _sample_window_atoms(occupancy, loading[widx], seed, widx)
        if arrivals.size == 0:
            return np.empty(0)
        # skip atoms that leave before the next probe window opens
        nxt = np.searchsorted(probe[:, 1], arrivals, side="right")
        alive = departures > first_probe_start[nxt]
        idx = np.nonzero(alive)[0]
        parts = []
        for i in idx:
            rng = _rng(seed, _KEY_EMISSION, widx, int(i))
            parts.append(_atom_photons(sampler, probe,
                                       float(arrivals[i]), float(departures[i]), rng))
        return np.concatenate(parts) if parts else np.empty(0)

    parts = _map_chunks(run_window, len(loading), n_workers)
    return np.sort(np.concatenate(parts)) if parts else np.empty(0)


def _map_chunks(fn, n_units: int, n_workers: int) -> list:
    """Apply fn to unit indices, optionally threaded; order-preserving, so
    the result is independent of the worker count."""
    if n_units == 0:
        return []
    if n_workers <= 1:
        return [fn(i) for i in range(n_units)]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, range(n_units)))


def apply_occupancy_and_gating(model, drive, occupancy: OccupancyModel,
                               gating: GatingConfig | None, duration_us: float,
                               seed: int, n_workers: int = 1) -> PhotonStream:
    """Photon stream of the full atom ensemble under trap gating.

    Atoms arrive as a Poisson process while the trap is loading, persist
    for exponential dwell times, and emit only inside probe windows.  With
    ``occupancy.fixed_atoms`` set, that many atoms are present throughout.
    """
    if duration_us <= 0:
        raise DomainError("duration must be > 0")
    times_us = _occupancy_photon_times(model, drive, occupancy, gating,
                                       duration_us, seed, n_workers)
    return PhotonStream(times_us * NS_PER_US,
                        np.zeros(times_us.size, dtype=np.int16),
                        duration_us * NS_PER_US)


def _dead_time_filter(times: np.ndarray, dead: float) -> np.ndarray:
    if dead <= 0 or times.size == 0:
        return times
    keep = np.empty(times.size, dtype=bool)
    last = -np.inf
    for i, t in enumerate(times):
        keep[i] = t - last >= dead
        if keep[i]:
            last = t
    return times[keep]


def split_and_detect(stream: PhotonStream, det: DetectorConfig,
                     seed: int) -> tuple[PhotonStream, PhotonStream]:
    """Beamsplitter routing, detection losses, dark counts, quantization.

    Each photon survives with probability ``detection_efficiency`` and goes
    to channel 1 with probability ``split_ratio``; independent Poisson dark
    counts are added per channel; all times are quantized to the detector
    resolution and simultaneous events within one channel merge into one.
    """
    rng = _rng(seed, _KEY_DETECT)
    kept = stream.times[rng.random(stream.n) < det.detection_efficiency]
    to_one = rng.random(kept.size) < det.split_ratio
    raw = [kept[to_one], kept[~to_one]]
    duration_s = stream.duration * 1e-9
    out = []
    for ch in (0, 1):
        n_dark = rng.poisson(det.dark_rate * duration_s)
        dark = rng.random(n_dark) * stream.duration
        times = np.concatenate([raw[ch], dark])
        times = np.floor(times / det.resolution) * det.resolution
        times = np.unique(times)                       # sorts and merges
        times = _dead_time_filter(times, det.dead_time)
        out.append(PhotonStream(times, np.full(times.size, ch + 1, dtype=np.int16),
                                stream.duration))
    return out[0], out[1]


def _ranges(counts: np.ndarray) -> np.ndarray:
    """Concatenation of arange(c) for every c in counts."""
    cum = np.cumsum(counts)
    total = int(cum[-1])
    return np.arange(total) - np.repeat(cum - counts, counts)


def cross_correlate(ch1: PhotonStream, ch2: PhotonStream,
                    bin_width_ns: float, max_delay_ns: float) -> Histogram:
    """Full pairwise coincidence histogram of (t2 - t1) over +-max_delay.

    Every pair inside the window is counted (not start-stop), so the
    histogram is proportional to the intensity correlation.
    """
    if bin_width_ns <= 0 or max_delay_ns <= 0:
        raise DomainError("bin width and max delay must be > 0")
    k = int(round(max_delay_ns / bin_width_ns))
    centers = np.arange(-k, k + 1) * bin_width_ns
    edges = (np.arange(-k, k + 2) - 0.5) * bin_width_ns
    counts = np.zeros(centers.size, dtype=np.int64)
    t1, t2 = ch1.times, ch2.times
    chunk = 8192
    for s in range(0, t1.size, chunk):
        c = t1[s:s + chunk]
        lo = np.searchsorted(t2, c + edges[0])
        hi = np.searchsorted(t2, c + edges[-1])
        m = hi - lo
        total = int(m.sum())
        if total == 0:
            continue
        gather = np.repeat(lo, m) + _ranges(m)
        diffs = t2[gather] - np.repeat(c, m)
        counts += np.histogram(diffs, edges)[0]
    return Histogram(bin_width_ns, centers, counts)


@dataclass
class DecayScan:
    """Gated fluorescence counts versus delay after trap switch-off."""

    delays: np.ndarray       # gate start delays, us
    counts: np.ndarray       # accumulated photon counts per gate
    n_cycles: int

    def to_csv(self, target=None) -> str | None:
        return _write_csv(target, "delay_us,counts", (self.delays, self.counts))


def decay_scan(model, drive, occupancy: OccupancyModel, gating: GatingConfig,
               n_cycles: int, seed: int, n_workers: int = 1) -> DecayScan:
    """Delayed-gate scan: photon counts per gate window accumulated over
    switching cycles.  Gate windows of ``gate_width`` tile the probe window
    from ``gate_delay``; with arrivals frozen during the probe the expected
    counts decay as exp(-delay / dwell_mean)."""
    if gating.gate_width <= 0:
        raise DomainError("decay scan needs gate_width > 0")
    if n_cycles < 1:
        raise DomainError("n_cycles must be >= 1")
    n_gates = int(np.floor((gating.off_period - gating.gate_delay) / gating.gate_width + 1e-9))
    if n_gates < 2:
        raise DomainError("need at least two gate windows inside the probe window")
    delays = gating.gate_delay + np.arange(n_gates) * gating.gate_width
    duration = n_cycles * gating.cycle_period
    times_us = _occupancy_photon_times(model, drive, occupancy, gating,
                                       duration, seed, n_workers)
    # delay of each photon inside its own probe window
    cycle_idx = np.floor(times_us / gating.cycle_period)
    local = times_us - cycle_idx * gating.cycle_period - gating.on_period
    gate_idx = np.floor((local - gating.gate_delay) / gating.gate_width).astype(int)
    ok = (local >= gating.gate_delay) & (gate_idx >= 0) & (gate_idx < n_gates)
    counts = np.bincount(gate_idx[ok], minlength=n_gates).astype(np.int64)
    return DecayScan(delays, counts, n_cycles)


def mc_excited_population(model, drive, checkpoints_us, n_traj: int,
                          seed: int, n_workers: int = 1):
    """Trajectory-averaged excited population at checkpoint times.

    Runs ``n_traj`` independent quantum-jump trajectories from the ground
    state and reconstructs each conditional state from the time since its
    last jump.  Returns (means, standard_errors) for comparison against the
    master-equation solution.
    """
    checkpoints = np.asarray(checkpoints_us, dtype=float)
    if checkpoints.ndim != 1 or checkpoints.size == 0 or np.any(checkpoints < 0):
        raise DomainError("checkpoints must be nonnegative times in us")
    sampler = WaitingTimeSampler(model, drive)
    t_max = float(checkpoints.max())
    n_chunks = min(64, n_traj)
    bounds = np.linspace(0, n_traj, n_chunks + 1).astype(int)

    def run_chunk(ci):
        size = bounds[ci + 1] - bounds[ci]
        rng = _rng(seed, _KEY_TRAJ, ci)
        if not sampler.emits:
            return np.zeros((checkpoints.size, 2))
        if np.isfinite(sampler.mean_wait):
            k0 = int(t_max / sampler.mean_wait * 1.5) + 8
        else:
            k0 = 8
        jumps = np.cumsum(sampler.sample(rng, size * k0).reshape(size, k0), axis=1)
        # extend rows whose jumps have not yet covered t_max
        while True:
            short = np.where(np.isfinite(jumps[:, -1]) & (jumps[:, -1] < t_max))[0]
            if short.size == 0:
                break
            extra = sampler.sample(rng, short.size * k0).reshape(short.size, k0)
            base = jumps[short, -1][:, None]
            jumps = np.pad(jumps, ((0, 0), (0, k0)), constant_values=np.inf)
            jumps[short, -k0:] = base + np.cumsum(extra, axis=1)
        stats = np.empty((checkpoints.size, 2))
        for i, tc in enumerate(checkpoints):
            n_before = (jumps <= tc).sum(axis=1)
            last = np.where(
                n_before > 0,
                np.take_along_axis(jumps, np.maximum(n_before - 1, 0)[:, None], axis=1)[:, 0],
                0.0)
            pe = sampler.conditional_excited(tc - last)
            stats[i] = (pe.sum(), (pe ** 2).sum())
        return stats

    partials = _map_chunks(run_chunk, n_chunks, n_workers)
    total = np.sum(partials, axis=0)
    mean = total[:, 0] / n_traj
    var = total[:, 1] / n_traj - mean ** 2
    stderr = np.sqrt(np.maximum(var, 0.0) / n_traj)
    return mean, stderr
