"""Fiber-taper-coupled SiNx microdisk resonator toolkit.

End-to-end desk-scale modeling of thin high-Q nitride microdisks:
whispering-gallery eigenmodes and mode volumes, cavity-QED rates,
taper-coupled transmission spectra with backscatter doublets, resonance
tuning (etch / thermal / adsorbed films), multi-disk array spectra, and
nonlinear least-squares recovery of resonator parameters from
transmission traces.
"""

from .core import (
    AtomLine,
    C_VACUUM,
    DiskGeometry,
    MaterialStack,
    ModeId,
    Polarization,
    WavelengthBand,
    cesium_d2,
    finesse,
    fsr_wavelength_to_frequency,
    q_from_linewidth,
)

__version__ = "0.1.0"

__all__ = [
    "AtomLine",
    "C_VACUUM",
    "DiskGeometry",
    "MaterialStack",
    "ModeId",
    "Polarization",
    "WavelengthBand",
    "cesium_d2",
    "finesse",
    "fsr_wavelength_to_frequency",
    "q_from_linewidth",
    "__version__",
]
