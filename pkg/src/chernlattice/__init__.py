"""Numerical twin of a quarter-flux Hofstadter lattice of microwave cavities."""

__version__ = "0.1.0"

from .lattice import Gauge, Lattice, SiteId, build_hofstadter, reference_lattice, to_hamiltonian  # noqa: E402
from .response import PortSpec, PulseSpec, time_evolve, transmission  # noqa: E402
from .spectral import BlochModel, band_gaps, bulk_bands, chern_number, strip_bands  # noqa: E402

__all__ = [
    "BlochModel", "Gauge", "Lattice", "PortSpec", "PulseSpec", "SiteId", "band_gaps", "build_hofstadter",
    "bulk_bands", "chern_number", "reference_lattice", "strip_bands", "time_evolve", "to_hamiltonian",
    "transmission",
]
