"""Density-matrix solvers for the driven atom near the fiber surface.

Two models share one master-equation engine:

* a two-level atom with population decay ``gamma_pop``;
* a V-type scheme with two closely spaced upper levels that decay to the
  single ground level with the same rate and interfere in the vacuum
  (cross-damping of strength ``p * gamma``).

Steady states come from a direct linear solve of the vectorized generator
with one redundant row replaced by the trace constraint; time evolution
uses a fixed-step 4th-order integrator with a step-halving check.  The
fluorescence signal is the total spontaneous-emission photon flux, which
includes the cross-damping contribution; it reduces to ``gamma * rho_ee``
for the two-level atom and to ``gamma * (rho_11 + rho_22)`` when the
interference is switched off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    AtomParams,
    DomainError,
    DriveParams,
    IntegrationError,
    NoPeakError,
    NumericalError,
    Spectrum,
    angular,
)

__all__ = [
    "TwoLevelState",
    "VTypeScheme",
    "DensityMatrix3",
    "BlochTrajectory",
    "two_level_steady",
    "two_level_evolve",
    "vtype_steady",
    "excitation_spectrum",
    "spectral_fwhm",
    "dip_metrics",
    "steady_density",
    "evolve_density",
    "emission_rate",
    "build_system",
]

STEPS_PER_RATE = 50          # integrator resolution: step <= 1/(50 * fastest rate)
_HALVING_TOL = 1e-6          # step-halving convergence threshold


@dataclass(frozen=True)
class TwoLevelState:
    """Two-level density-matrix summary: excited population and coherence."""

    rho_ee: float
    rho_eg: complex = 0j

    def __post_init__(self):
        if not -1e-12 <= self.rho_ee <= 1 + 1e-12:
            raise DomainError("rho_ee must lie in [0, 1]")
        if abs(self.rho_eg) ** 2 > self.rho_ee * (1 - self.rho_ee) + 1e-9:
            raise DomainError("coherence violates positivity bound")

    def as_matrix(self) -> np.ndarray:
        """Full 2x2 density matrix in the (ground, excited) basis."""
        return np.array(
            [[1.0 - self.rho_ee, np.conj(self.rho_eg)],
             [self.rho_eg, self.rho_ee]], dtype=complex)


@dataclass(frozen=True)
class VTypeScheme:
    """V-type interference scheme: one ground level, two close upper levels.

    gamma        decay rate of each upper level, 1/us (equal by assumption)
    delta_split  upper-level spacing, MHz
    p            cross-damping (vacuum interference) strength in [0, 1]
    drive_ratio  Rabi amplitude of the second arm relative to the first
    ground_split optional ground-doublet spacing in MHz; 0 keeps the plain
                 three-level scheme (the doublet variant is exploratory)
    """

    gamma: float = 1.0 / 0.030
    delta_split: float = 1.5
    p: float = 1.0
    drive_ratio: float = 1.0
    ground_split: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("gamma must be > 0")
        if self.delta_split < 0:
            raise DomainError("delta_split must be >= 0")
        if not 0 <= self.p <= 1:
            raise DomainError("p must lie in [0, 1]")
        if not self.drive_ratio > 0:
            raise DomainError("drive_ratio must be > 0")
        if self.ground_split < 0:
            raise DomainError("ground_split must be >= 0")


@dataclass
class DensityMatrix3:
    """Validated 3x3 density matrix over {ground, upper 1, upper 2}."""

    matrix: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.shape != (3, 3):
            raise DomainError("expected a 3x3 matrix")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-9:
            raise DomainError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > 1e-9:
            raise DomainError("density matrix trace != 1")
        if np.any(rho.diagonal().real < -1e-9) or np.any(rho.diagonal().real > 1 + 1e-9):
            raise DomainError("populations must lie in [0, 1]")
        self.matrix = rho

    @property
    def populations(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()

    @property
    def excited_population(self) -> float:
        return float(self.matrix[1, 1].real + self.matrix[2, 2].real)


@dataclass
class BlochTrajectory:
    """Two-level trajectory sampled on a time grid (times in us)."""

    times: np.ndarray
    rho_ee: np.ndarray
    rho_eg: np.ndarray

    def state(self, i: int) -> TwoLevelState:
        return TwoLevelState(float(self.rho_ee[i]), complex(self.rho_eg[i]))


# ---------------------------------------------------------------------------
# master-equation engine
# ---------------------------------------------------------------------------

@dataclass
class _System:
    """Hamiltonian + grouped jump operators of one atom model.

    Each dissipator group is a pair (ops, gmat): collapse operators L_i and
    a positive-semidefinite rate matrix so that
    D(rho) = sum_ij gmat[i,j] (L_i rho L_j^+ - {L_j^+ L_i, rho}/2).
    """

    hamiltonian: np.ndarray              # rad/us
    groups: list                         # [(ops, gmat), ...]
    rate_scale: float                    # fastest rate, 1/us
    gamma_total: float                   # per-level decay rate, 1/us

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def liouvillian(self) -> np.ndarray:
        """Vectorized generator for row-major rho vectorization."""
        d = self.dim
        eye = np.eye(d)
        H = self.hamiltonian
        L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
        for ops, gmat in self.groups:
            for i, Li in enumerate(ops):
                for j, Lj in enumerate(ops):
                    g = gmat[i, j]
                    if g == 0:
                        continue
                    LjLi = Lj.conj().T @ Li
                    L += g * (np.kron(Li, Lj.conj())
                              - 0.5 * np.kron(LjLi, eye)
                              - 0.5 * np.kron(eye, LjLi.T))
        return L

    def effective_hamiltonian(self) -> np.ndarray:
        """Non-Hermitian Hamiltonian H - (i/2) sum L^+L for jump unraveling."""
        Heff = self.hamiltonian.astype(complex).copy()
        for ops, gmat in self.groups:
            for i, Li in enumerate(ops):
                for j, Lj in enumerate(ops):
                    if gmat[i, j] != 0:
                        Heff -= 0.5j * gmat[i, j] * (Lj.conj().T @ Li)
        return Heff

    def flux_operator(self) -> np.ndarray:
        """Operator whose expectation is the photon emission rate (1/us)."""
        op = np.zeros((self.dim, self.dim), complex)
        for ops, gmat in self.groups:
            for i, Li in enumerate(ops):
                for j, Lj in enumerate(ops):
                    if gmat[i, j] != 0:
                        op += gmat[i, j] * (Lj.conj().T @ Li)
        return op

    def ground_vector(self) -> np.ndarray:
        psi = np.zeros(self.dim, complex)
        psi[0] = 1.0
        return psi


def _two_level_system(drive: DriveParams, atom: AtomParams) -> _System:
    delta = angular(drive.detuning)
    omega = angular(drive.rabi)
    H = np.array([[0.0, omega / 2], [omega / 2, -delta]], dtype=complex)
    sig = np.zeros((2, 2), complex)
    sig[0, 1] = 1.0                                  # |g><e|
    gmat = np.array([[atom.gamma_pop]])
    rate = max(atom.gamma_pop, omega, abs(delta))
    return _System(H, [([sig], gmat)], rate, atom.gamma_pop)


def _vtype_system(scheme: VTypeScheme, drive: DriveParams) -> _System:
    if scheme.ground_split > 0:
        return _vtype_doublet_system(scheme, drive)
    delta = angular(drive.detuning)                  # from doublet midpoint
    split = angular(scheme.delta_split)
    om1 = angular(drive.rabi)
    om2 = om1 * scheme.drive_ratio
    d1 = delta + split / 2                           # arm 1: lower upper level
    d2 = delta - split / 2                           # arm 2: upper upper level
    H = np.zeros((3, 3), complex)
    H[1, 1] = -d1
    H[2, 2] = -d2
    H[1, 0] = H[0, 1] = om1 / 2
    H[2, 0] = H[0, 2] = om2 / 2
    s1 = np.zeros((3, 3), complex)
    s1[0, 1] = 1.0
    s2 = np.zeros((3, 3), complex)
    s2[0, 2] = 1.0
    gmat = scheme.gamma * np.array([[1.0, scheme.p], [scheme.p, 1.0]])
    rate = max(scheme.gamma, om1, om2, abs(d1), abs(d2))
    return _System(H, [([s1, s2], gmat)], rate, scheme.gamma)


def _vtype_doublet_system(scheme: VTypeScheme, drive: DriveParams) -> _System:
    # exploratory 4-level variant: two ground sub-levels spaced ground_split,
    # each upper level decays to each ground level at gamma/2
    delta = angular(drive.detuning)
    split = angular(scheme.delta_split)
    gsplit = angular(scheme.ground_split)
    om = angular(drive.rabi)
    arm = [om, om * scheme.drive_ratio]
    H = np.zeros((4, 4), complex)
    H[0, 0] = -gsplit / 2
    H[1, 1] = +gsplit / 2
    H[2, 2] = -(delta + split / 2)
    H[3, 3] = -(delta - split / 2)
    for k in (0, 1):
        for i, e in enumerate((2, 3)):
            H[e, k] = H[k, e] = arm[i] / 2
    groups = []
    gmat = (scheme.gamma / 2) * np.array([[1.0, scheme.p], [scheme.p, 1.0]])
    for k in (0, 1):
        ops = []
        for e in (2, 3):
            s = np.zeros((4, 4), complex)
            s[k, e] = 1.0
            ops.append(s)
        groups.append((ops, gmat))
    rate = max(scheme.gamma, max(arm), abs(delta) + split / 2 + gsplit / 2)
    return _System(H, groups, rate, scheme.gamma)


def build_system(model, drive: DriveParams) -> _System:
    """Dispatch an AtomParams (two-level) or VTypeScheme to its system."""
    if isinstance(model, AtomParams):
        return _two_level_system(drive, model)
    if isinstance(model, VTypeScheme):
        return _vtype_system(model, drive)
    raise DomainError(f"unsupported model type: {type(model).__name__}")


def _solve_steady(L: np.ndarray, dim: int) -> np.ndarray:
    A = L.copy()
    A[0, :] = 0.0
    A[0, :: dim + 1] = 1.0                           # trace row
    b = np.zeros(dim * dim, complex)
    b[0] = 1.0
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise NumericalError("steady-state system is singular",
                             condition_number=float(np.linalg.cond(A)))
    residual = np.linalg.norm(A @ x - b)
    if not np.isfinite(residual) or residual > 1e-6:
        raise NumericalError("steady-state solve is ill-conditioned",
                             condition_number=float(np.linalg.cond(A)))
    rho = x.reshape(dim, dim)
    return 0.5 * (rho + rho.conj().T)                # symmetrize rounding noise


def steady_density(model, drive: DriveParams) -> np.ndarray:
    """Steady-state density matrix of the given model under the drive."""
    system = build_system(model, drive)
    return _solve_steady(system.liouvillian(), system.dim)


def _rk4_propagator(L: np.ndarray, h: float) -> np.ndarray:
    A = h * L
    eye = np.eye(L.shape[0], dtype=complex)
    P = eye + A
    term = A
    for k in (2.0, 3.0, 4.0):
        term = term @ A / k
        P += term
    return P


def _propagate(L: np.ndarray, v0: np.ndarray, t_grid: np.ndarray,
               rate_scale: float, check: bool = True) -> np.ndarray:
    """Fixed-step RK4 propagation of vec(rho), sampled at t_grid."""
    h_max = 1.0 / (STEPS_PER_RATE * max(rate_scale, 1e-12))

    def run(refine: int) -> np.ndarray:
        out = np.empty((len(t_grid), v0.size), complex)
        out[0] = v0
        v = v0
        cache: dict = {}
        for k in range(1, len(t_grid)):
            dt = float(t_grid[k] - t_grid[k - 1])
            if dt < 0:
                raise DomainError("time grid must be ascending")
            if dt == 0:
                out[k] = v
                continue
            n = max(1, math.ceil(dt / h_max)) * refine
            key = (round(dt, 15), n)
            if key not in cache:
                cache[key] = _rk4_propagator(L, dt / n)
            P = cache[key]
            for _ in range(n):
                v = P @ v
            out[k] = v
        return out

    out = run(1)
    if check and len(t_grid) > 1:
        out2 = run(2)
        dev = np.max(np.abs(out[-1] - out2[-1]))
        if dev > _HALVING_TOL:
            raise IntegrationError(
                f"step-halving check failed: deviation {dev:.3e} at t={t_grid[-1]:.6g} us "
                f"(base step {h_max:.3e} us)")
    return out


def evolve_density(model, drive: DriveParams, t_grid, rho0: np.ndarray | None = None,
                   check: bool = True) -> np.ndarray:
    """Master-equation evolution sampled on t_grid (us).

    Returns an array of density matrices with shape (len(t_grid), d, d).
    rho0 defaults to the ground state.
    """
    system = build_system(model, drive)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise DomainError("t_grid must be a nonempty 1-d array")
    d = system.dim
    if rho0 is None:
        rho0 = np.zeros((d, d), complex)
        rho0[0, 0] = 1.0
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (d, d):
        raise DomainError(f"rho0 must be {d}x{d}")
    vecs = _propagate(system.liouvillian(), rho0.reshape(-1), t_grid,
                      system.rate_scale, check=check)
    return vecs.reshape(len(t_grid), d, d)


def emission_rate(model, rho: np.ndarray, drive: DriveParams | None = None) -> float:
    """Photon emission rate (1/us) of state rho under the given model."""
    system = build_system(model, drive if drive is not None else DriveParams())
    rate = np.trace(system.flux_operator() @ rho).real
    return float(rate)


# ---------------------------------------------------------------------------
# typed wrappers
# ---------------------------------------------------------------------------

def two_level_steady(drive: DriveParams, atom: AtomParams) -> TwoLevelState:
    """Steady state of the driven two-level atom.

    Equals the textbook result rho_ee = (s/2)/(1+s) with saturation
    parameter s = (omega^2/2)/(delta^2 + gamma^2/4) in angular units.
    """
    rho = steady_density(atom, drive)
    ree = float(np.clip(rho[1, 1].real, 0.0, 1.0))
    return TwoLevelState(ree, complex(rho[1, 0]))


def two_level_evolve(initial: TwoLevelState | None, drive: DriveParams,
                     atom: AtomParams, t_grid) -> BlochTrajectory:
    """Optical-Bloch-equation evolution of the two-level atom.

    t_grid is in us, ascending from 0; index 0 returns the initial state
    unchanged.  The trajectory approaches :func:`two_level_steady` for
    times well beyond 1/gamma.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or t_grid[0] != 0:
        raise DomainError("t_grid must start at 0")
    rho0 = initial.as_matrix() if initial is not None else None
    rhos = evolve_density(atom, drive, t_grid, rho0=rho0)
    return BlochTrajectory(t_grid, rhos[:, 1, 1].real.copy(), rhos[:, 1, 0].copy())


def vtype_steady(scheme: VTypeScheme, drive: DriveParams) -> DensityMatrix3:
    """Steady state of the V-type scheme; detuning is measured from the
    midpoint of the upper doublet (arm detunings delta +- split/2)."""
    if scheme.ground_split > 0:
        raise DomainError("vtype_steady returns the 3-level state; "
                          "use steady_density for the ground-doublet variant")
    rho = steady_density(scheme, drive)
    return DensityMatrix3(rho)


def excitation_spectrum(model, detunings, rabi: float) -> Spectrum:
    """Fluorescence excitation spectrum over a detuning grid (MHz).

    The signal at each detuning is the steady-state photon emission rate
    (1/us per atom).  ``model`` is AtomParams or VTypeScheme.  The
    generator is affine in the detuning, so the whole grid is solved as
    one batched linear system.
    """
    detunings = np.asarray(detunings, dtype=float)
    if not np.all(np.diff(detunings) > 0):
        raise DomainError("detuning grid must be strictly ascending")
    sys0 = build_system(model, DriveParams(detuning=0.0, rabi=rabi))
    sys1 = build_system(model, DriveParams(detuning=1.0, rabi=rabi))
    L0 = sys0.liouvillian()
    L1 = sys1.liouvillian() - L0
    d = sys0.dim
    A = L0[None, :, :] + detunings[:, None, None] * L1[None, :, :]
    A[:, 0, :] = 0.0
    A[:, 0, :: d + 1] = 1.0
    b = np.zeros((detunings.size, d * d), complex)
    b[:, 0] = 1.0
    try:
        x = np.linalg.solve(A, b[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        raise NumericalError("steady-state system is singular on the grid",
                             condition_number=float(np.max(np.linalg.cond(A))))
    resid = np.linalg.norm(np.einsum("nij,nj->ni", A, x) - b, axis=1)
    if not np.all(np.isfinite(resid)) or np.max(resid) > 1e-6:
        worst = int(np.argmax(resid))
        raise NumericalError(
            f"steady-state solve ill-conditioned at detuning {detunings[worst]:g} MHz",
            condition_number=float(np.linalg.cond(A[worst])))
    rho = x.reshape(detunings.size, d, d)
    values = np.einsum("nij,ji->n", rho, sys0.flux_operator()).real
    # negatives beyond rounding noise indicate a bad solve, not physics
    floor = -1e-6 * max(float(np.max(values)), 1e-30)
    if np.min(values) < floor:
        raise NumericalError(f"emission rate came out negative: {np.min(values):.3e}")
    return Spectrum(detunings, np.clip(values, 0.0, None))


def spectral_fwhm(spec: Spectrum) -> float:
    """Full width at half maximum (MHz) by linear interpolation.

    The half level is measured from a baseline taken as the smaller of the
    two edge values; the peak must be interior and the half level must be
    crossed on both sides.
    """
    v = spec.values
    x = spec.detunings
    i = int(np.argmax(v))
    baseline = min(v[0], v[-1])
    peak = v[i]
    if i == 0 or i == len(v) - 1:
        raise NoPeakError("maximum lies on the grid edge")
    if peak - baseline <= 1e-30 or np.ptp(v) <= 1e-30:
        raise NoPeakError("spectrum is flat")
    half = baseline + 0.5 * (peak - baseline)

    def crossing(idx_from, idx_to, step):
        j = idx_from
        while j != idx_to and v[j] > half:
            j += step
        if v[j] > half:
            raise NoPeakError("half level not reached on one side")
        # linear interpolation between j and j-step
        x0, x1 = x[j - step], x[j]
        y0, y1 = v[j - step], v[j]
        return x0 + (half - y0) * (x1 - x0) / (y1 - y0)

    left = crossing(i, 0, -1)
    right = crossing(i, len(v) - 1, +1)
    return float(right - left)


@dataclass(frozen=True)
class DipMetrics:
    """Central-dip summary of a spectrum."""

    center: float        # detuning of the dip minimum, MHz
    depth: float         # smaller flanking maximum minus dip minimum
    width: float         # full width at half depth, MHz
    floor: float         # signal value at the dip minimum


def dip_metrics(spec: Spectrum, search_halfwidth: float | None = None) -> DipMetrics | None:
    """Locate a dip near zero detuning; None when no dip is present."""
    x, v = spec.detunings, spec.values
    if search_halfwidth is None:
        search_halfwidth = 0.25 * (x[-1] - x[0])
    inner = np.where(np.abs(x) <= search_halfwidth)[0]
    if inner.size < 3:
        return None
    i_min = inner[np.argmin(v[inner])]
    if i_min <= 0 or i_min >= len(v) - 1:
        return None
    left_max = np.max(v[:i_min])
    right_max = np.max(v[i_min + 1:])
    depth = min(left_max, right_max) - v[i_min]
    if depth <= 0:
        return None
    half = v[i_min] + 0.5 * depth

    def crossing(step):
        j = i_min
        while 0 < j < len(v) - 1 and v[j] < half:
            j += step
        if v[j] < half:
            return x[j]
        x0, x1 = x[j - step], x[j]
        y0, y1 = v[j - step], v[j]
        return x0 + (half - y0) * (x1 - x0) / (y1 - y0)

    width = float(crossing(+1) - crossing(-1))
    return DipMetrics(center=float(x[i_min]), depth=float(depth),
                      width=width, floor=float(v[i_min]))
