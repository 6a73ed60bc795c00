"""Physical constants, device/material descriptions, and elementary
spectroscopic conversions shared by every other module.

Unit conventions
----------------
Lengths are stored in meters internally; public APIs take and return
wavelengths in nm and linewidths in pm (parameter names carry the unit
suffix). All rates (kappa, gamma, g, beta) are ordinary frequencies in
Hz, i.e. the angular rate divided by 2*pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

__all__ = [
    "C_VACUUM",
    "HBAR",
    "EPSILON_0",
    "DiskGeometry",
    "MaterialStack",
    "WavelengthBand",
    "ModeId",
    "AtomLine",
    "Polarization",
    "cesium_d2",
    "fsr_wavelength_to_frequency",
    "q_from_linewidth",
    "finesse",
]

# Speed of light in vacuum (m/s)
C_VACUUM = 299_792_458.0

# Reduced Planck constant (J*s)
HBAR = 1.054_571_817e-34

# Vacuum permittivity (F/m)
EPSILON_0 = 8.854_187_8128e-12


class Polarization(Enum):
    """Mode polarization class of a thin dielectric disk.

    TE: dominant in-plane (rho, phi) electric field.
    TM: dominant vertical (z) electric field.
    """

    TE = "TE"
    TM = "TM"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class DiskGeometry:
    """Microdisk geometry. All lengths in meters.

    The pedestal diameter is informational only: low-radial-order
    whispering-gallery modes are confined at the rim and do not see a
    central pillar, so the mode solver ignores it.
    """

    diameter_m: float
    thickness_m: float
    pedestal_diameter_m: float = 0.0

    def __post_init__(self) -> None:
        if self.diameter_m <= 0:
            raise ValueError(f"diameter must be positive, got {self.diameter_m}")
        if self.thickness_m <= 0:
            raise ValueError(f"thickness must be positive, got {self.thickness_m}")
        if self.thickness_m >= self.diameter_m:
            raise ValueError("thickness must be smaller than diameter")
        if self.pedestal_diameter_m < 0:
            raise ValueError("pedestal diameter cannot be negative")

    @classmethod
    def from_microns(
        cls, diameter_um: float, thickness_nm: float, pedestal_diameter_um: float = 0.0
    ) -> "DiskGeometry":
        """Construct from the units used on device datasheets (um / nm)."""
        return cls(
            diameter_m=diameter_um * 1e-6,
            thickness_m=thickness_nm * 1e-9,
            pedestal_diameter_m=pedestal_diameter_um * 1e-6,
        )

    @property
    def radius_m(self) -> float:
        return self.diameter_m / 2.0


@dataclass(frozen=True)
class MaterialStack:
    """Refractive indices of disk, surround, and (informational) substrate.

    Constant (non-dispersive) indices; the nitride index 2.0 is a good
    approximation across the near-visible transparency window.
    """

    n_disk: float = 2.0
    n_clad: float = 1.0
    n_substrate: float = 3.5

    def __post_init__(self) -> None:
        if self.n_clad < 1.0:
            raise ValueError(f"cladding index must be >= 1, got {self.n_clad}")
        if self.n_disk <= self.n_clad:
            raise ValueError(
                f"disk index ({self.n_disk}) must exceed cladding index ({self.n_clad})"
            )


@dataclass(frozen=True)
class WavelengthBand:
    """Closed wavelength interval, in nm."""

    lambda_min_nm: float
    lambda_max_nm: float

    def __post_init__(self) -> None:
        if not (0 < self.lambda_min_nm < self.lambda_max_nm):
            raise ValueError(
                f"need 0 < lambda_min < lambda_max, got "
                f"({self.lambda_min_nm}, {self.lambda_max_nm})"
            )

    @property
    def center_nm(self) -> float:
        return 0.5 * (self.lambda_min_nm + self.lambda_max_nm)

    @property
    def span_nm(self) -> float:
        return self.lambda_max_nm - self.lambda_min_nm

    def contains(self, lambda_nm: float) -> bool:
        return self.lambda_min_nm <= lambda_nm <= self.lambda_max_nm


@dataclass(frozen=True)
class ModeId:
    """Whispering-gallery mode label: azimuthal number m, radial order p,
    and polarization class."""

    m: int
    p: int
    polarization: Polarization

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"azimuthal number m must be >= 1, got {self.m}")
        if self.p < 1:
            raise ValueError(f"radial order p must be >= 1, got {self.p}")

    def __str__(self) -> str:
        return f"{self.polarization},m={self.m},p={self.p}"


# The only rate convention this package supports: ordinary frequency,
# i.e. angular rate / 2*pi. The explicit flag guards against silently
# mixing conventions when user-supplied atom profiles enter.
RATE_CONVENTION = "value/2pi"


@dataclass(frozen=True)
class AtomLine:
    """Atomic transition used for cavity-QED estimates.

    gamma_perp_hz is the transverse (dipole) decay rate as an ordinary
    frequency (value/2pi); `convention` must say so explicitly.
    """

    lambda_nm: float
    dipole_moment_cm: float  # C*m
    gamma_perp_hz: float
    convention: str = RATE_CONVENTION
    label: str = ""

    def __post_init__(self) -> None:
        if self.lambda_nm <= 0:
            raise ValueError("transition wavelength must be positive")
        if self.dipole_moment_cm <= 0:
            raise ValueError("dipole moment must be positive")
        if self.gamma_perp_hz <= 0:
            raise ValueError("gamma_perp must be positive")
        if self.convention != RATE_CONVENTION:
            raise ValueError(
                f"rate convention flag must be {RATE_CONVENTION!r}, "
                f"got {self.convention!r}"
            )

    @property
    def omega_rad_s(self) -> float:
        """Angular transition frequency (rad/s)."""
        return 2.0 * math.pi * C_VACUUM / (self.lambda_nm * 1e-9)


def _cesium_d2_dipole_cm(lambda_nm: float, gamma_natural_hz: float) -> float:
    # Two-level (cycling) dipole from the natural linewidth:
    # Gamma = omega^3 d^2 / (3 pi eps0 hbar c^3), Gamma angular.
    omega = 2.0 * math.pi * C_VACUUM / (lambda_nm * 1e-9)
    gamma_ang = 2.0 * math.pi * gamma_natural_hz
    d_sq = 3.0 * math.pi * EPSILON_0 * HBAR * C_VACUUM**3 * gamma_ang / omega**3
    return math.sqrt(d_sq)


def cesium_d2() -> AtomLine:
    """Built-in cesium D2 cycling-transition profile.

    852.347 nm, natural linewidth 5.22 MHz, so gamma_perp = Gamma/2 =
    2.61 MHz; the dipole moment is the two-level cycling value derived
    from the natural linewidth (2.69e-29 C*m).
    """
    lam = 852.347
    gamma_natural = 5.2227e6
    return AtomLine(
        lambda_nm=lam,
        dipole_moment_cm=_cesium_d2_dipole_cm(lam, gamma_natural),
        gamma_perp_hz=gamma_natural / 2.0,
        label="Cs D2 (cycling)",
    )


def fsr_wavelength_to_frequency(lambda_center_nm: float, fsr_nm: float) -> float:
    """Convert a free spectral range from wavelength to frequency units.

    Parameters
    ----------
    lambda_center_nm : float
        Center wavelength of the band (nm).
    fsr_nm : float
        Wavelength spacing between adjacent azimuthal orders (nm).

    Returns
    -------
    float
        FSR in THz, c * dlambda / lambda^2.
    """
    if lambda_center_nm <= 0:
        raise ValueError(f"center wavelength must be positive, got {lambda_center_nm}")
    if fsr_nm < 0:
        raise ValueError(f"FSR must be non-negative, got {fsr_nm}")
    if fsr_nm >= lambda_center_nm:
        raise ValueError("FSR must be smaller than the center wavelength")
    lam = lambda_center_nm * 1e-9
    return C_VACUUM * (fsr_nm * 1e-9) / lam**2 / 1e12


def q_from_linewidth(lambda0_nm: float, linewidth_pm: float) -> float:
    """Quality factor lambda0 / dlambda from a resonance linewidth in pm."""
    if lambda0_nm <= 0:
        raise ValueError(f"wavelength must be positive, got {lambda0_nm}")
    if linewidth_pm <= 0:
        raise ValueError(f"linewidth must be positive, got {linewidth_pm}")
    return lambda0_nm * 1e3 / linewidth_pm


def finesse(fsr_nm: float, linewidth_pm: float) -> float:
    """Finesse: free spectral range divided by linewidth."""
    if fsr_nm <= 0:
        raise ValueError(f"FSR must be positive, got {fsr_nm}")
    if linewidth_pm <= 0:
        raise ValueError(f"linewidth must be positive, got {linewidth_pm}")
    return fsr_nm * 1e3 / linewidth_pm
