"""Classical effective-potential analysis of ion-anchored atom orbits.

A charge stuck at a surface prominence polarizes a passing atom and pulls
it with a -C/r^4 potential (point charge); together with the centrifugal
barrier and an optional surface attraction this defines an effective
radial potential whose stationary points are candidate orbits.  Energies
are expressed in frequency units (value of U/h in MHz), radii in nm, and
angular momentum in units of hbar.

The observed frequency-radius relation is left open: a point charge gives
orbit frequency scaling as 1/r^3 on stationary orbits, not the 1/r law
sometimes assumed, so the radius-from-frequency converter offers both a
fixed-speed mode and an anchored-scaling mode, and the measured power-law
slope can be reported for any parameter set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import elementary_charge, epsilon_0, h, hbar
from scipy.optimize import brentq

from .core import DomainError

__all__ = ["OrbitParams", "OrbitSolution", "ScalingReport", "effective_potential",
           "stationary_orbit", "radius_from_frequency", "frequency_radius_scaling"]

_KHZ_UM3_TO_MHZ_NM3 = 1e6
_DEFAULT_BRACKET = (1.0, 1000.0)   # nm


@dataclass(frozen=True)
class OrbitParams:
    """Constants of the charge + atom + surface system.

    charge       Coulombs (default one elementary charge)
    alpha_pol    static polarizability, C m^2/V
    mass         kg
    c3_surface   surface attraction coefficient, kHz um^3 (0 disables)
    power_law_n  exponent of the charge-induced potential, one of {2, 3, 4}
    c_n          coefficient in MHz nm^n for n != 4 (n = 4 is derived from
                 charge and polarizability)
    """

    charge: float = elementary_charge
    alpha_pol: float = 6.6e-39
    mass: float = 2.207e-25
    c3_surface: float = 0.0
    power_law_n: int = 4
    c_n: float | None = None

    def __post_init__(self):
        for name in ("charge", "alpha_pol", "mass"):
            if not getattr(self, name) > 0:
                raise DomainError(f"OrbitParams.{name} must be > 0")
        if self.c3_surface < 0:
            raise DomainError("c3_surface must be >= 0")
        if self.power_law_n not in (2, 3, 4):
            raise DomainError("power_law_n must be one of {2, 3, 4}")
        if self.power_law_n != 4 and (self.c_n is None or self.c_n <= 0):
            raise DomainError("c_n (MHz nm^n) is required for power_law_n != 4")

    def charge_coefficient(self) -> float:
        """C_n of the charge-induced term, MHz nm^n."""
        if self.power_law_n == 4:
            c4_joule_m4 = self.alpha_pol * self.charge ** 2 / (32 * np.pi ** 2 * epsilon_0 ** 2)
            return c4_joule_m4 / h * 1e30   # -> Hz m^4 -> MHz nm^4
        return float(self.c_n)

    def centrifugal_coefficient(self) -> float:
        """Coefficient of l^2 / r^2, MHz nm^2 (l in units of hbar)."""
        return hbar ** 2 / (2 * self.mass * h) * 1e12


@dataclass(frozen=True)
class OrbitSolution:
    """Stationary orbit: radius (nm), frequencies (MHz), stability flag.

    For an unstable point the radial frequency reports the magnitude of
    the barrier curvature.
    """

    radius: float
    orbit_frequency: float
    radial_frequency: float
    stability: str

    @property
    def stable(self) -> bool:
        return self.stability == "stable"


def _potential_terms(params: OrbitParams):
    cn = params.charge_coefficient()
    kl = params.centrifugal_coefficient()
    c3 = params.c3_surface * _KHZ_UM3_TO_MHZ_NM3
    n = params.power_law_n
    return cn, kl, c3, n


def effective_potential(r_nm, l_hbar: float, params: OrbitParams):
    """U_eff(r)/h in MHz: charge-induced well + centrifugal + surface term.

    The distance to the surface is identified with the orbit radius (the
    charge sits at the prominence tip)."""
    r = np.asarray(r_nm, dtype=float)
    if np.any(r <= 0):
        raise DomainError("radius must be > 0")
    cn, kl, c3, n = _potential_terms(params)
    u = -cn / r ** n + kl * l_hbar ** 2 / r ** 2 - c3 / r ** 3
    return float(u) if np.ndim(r_nm) == 0 else u


def _potential_derivatives(r, l_hbar, params):
    cn, kl, c3, n = _potential_terms(params)
    du = n * cn / r ** (n + 1) - 2 * kl * l_hbar ** 2 / r ** 3 + 3 * c3 / r ** 4
    d2u = (-n * (n + 1) * cn / r ** (n + 2) + 6 * kl * l_hbar ** 2 / r ** 4
           - 12 * c3 / r ** 5)
    return du, d2u


def stationary_orbit(l_hbar: float, params: OrbitParams,
                     bracket=_DEFAULT_BRACKET, n_scan: int = 800) -> OrbitSolution | None:
    """Radius where dU_eff/dr = 0, found by log scan plus bisection.

    Returns the stable stationary point when one exists, otherwise the
    innermost stationary point flagged unstable, or None when the bracket
    contains no stationary point at all.
    """
    if not l_hbar > 0:
        raise DomainError("angular momentum must be > 0")
    grid = np.geomspace(bracket[0], bracket[1], n_scan)
    du = _potential_derivatives(grid, l_hbar, params)[0]
    roots = []
    for i in np.nonzero(np.sign(du[:-1]) * np.sign(du[1:]) < 0)[0]:
        r = brentq(lambda x: _potential_derivatives(x, l_hbar, params)[0],
                   grid[i], grid[i + 1], xtol=1e-12, rtol=1e-14)
        roots.append(r)
    exact = grid[du == 0.0]
    roots.extend(exact.tolist())
    if not roots:
        return None
    roots.sort()
    curvatures = [_potential_derivatives(r, l_hbar, params)[1] for r in roots]
    stable = [r for r, c in zip(roots, curvatures) if c > 0]
    if stable:
        r_star = stable[0]
        d2u = _potential_derivatives(r_star, l_hbar, params)[1]
        stability = "stable"
    else:
        r_star = roots[0]
        d2u = curvatures[0]
        stability = "unstable"
    return OrbitSolution(
        radius=float(r_star),
        orbit_frequency=_orbit_frequency(r_star, l_hbar, params),
        radial_frequency=_radial_frequency(d2u, params),
        stability=stability)


def _orbit_frequency(r_nm: float, l_hbar: float, params: OrbitParams) -> float:
    """nu = L / (2 pi m r^2) in MHz."""
    r_m = r_nm * 1e-9
    return l_hbar * hbar / (2 * np.pi * params.mass * r_m ** 2) / 1e6


def _radial_frequency(d2u_mhz_nm2: float, params: OrbitParams) -> float:
    """sqrt(|U''|/m)/2pi in MHz from curvature in MHz/nm^2."""
    d2u_joule_m2 = abs(d2u_mhz_nm2) * h * 1e24
    return float(np.sqrt(d2u_joule_m2 / params.mass) / (2 * np.pi) / 1e6)


def radius_from_frequency(freq_mhz: float, speed_cm_s: float | None = None,
                          anchor: tuple[float, float] | None = None) -> float:
    """Orbit radius in nm implied by an observed frequency.

    Exactly one mode must be chosen: ``speed_cm_s`` assumes a fixed orbital
    speed (r = v / 2 pi nu); ``anchor`` = (r_ref_nm, nu_ref_mhz) assumes
    frequency inversely proportional to radius (r = r_ref nu_ref / nu).
    """
    if not freq_mhz > 0:
        raise DomainError("frequency must be > 0")
    if (speed_cm_s is None) == (anchor is None):
        raise DomainError("choose exactly one of speed_cm_s or anchor")
    if speed_cm_s is not None:
        if not speed_cm_s > 0:
            raise DomainError("speed must be > 0")
        return speed_cm_s * 0.01 / (2 * np.pi * freq_mhz * 1e6) * 1e9
    r_ref, nu_ref = anchor
    if not (r_ref > 0 and nu_ref > 0):
        raise DomainError("anchor values must be > 0")
    return r_ref * nu_ref / freq_mhz


@dataclass
class ScalingReport:
    """Measured power-law between orbit frequency and radius."""

    slope: float
    angular_momenta: np.ndarray
    radii: np.ndarray
    frequencies: np.ndarray


def frequency_radius_scaling(params: OrbitParams, l_min: float, l_max: float,
                             n: int = 25, bracket=_DEFAULT_BRACKET) -> ScalingReport:
    """Log-log slope of orbit frequency versus stationary radius across a
    range of angular momenta (the point-charge case gives -3)."""
    if not 0 < l_min < l_max:
        raise DomainError("need 0 < l_min < l_max")
    ls, radii, freqs = [], [], []
    for l in np.geomspace(l_min, l_max, n):
        sol = stationary_orbit(l, params, bracket=bracket)
        if sol is not None:
            ls.append(l)
            radii.append(sol.radius)
            freqs.append(sol.orbit_frequency)
    if len(radii) < 2:
        raise DomainError("not enough stationary orbits in the bracket to fit a slope")
    slope = np.polyfit(np.log(radii), np.log(freqs), 1)[0]
    return ScalingReport(float(slope), np.array(ls), np.array(radii), np.array(freqs))
