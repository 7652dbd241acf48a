"""Square-lattice Hofstadter models with a Peierls flux per plaquette.

Sites are addressed by 1-indexed ``(row, col)`` pairs with the origin in the
upper-left corner, so row numbers grow downwards on the page.  Matrices use a
row-major site order: ``index = (row - 1) * nx + (col - 1)``.

A coupling ``(a, b, phase)`` contributes ``H[a, b] = -t * exp(1j * phase)`` and
its Hermitian conjugate.  Walking a closed loop, a step ``a -> b`` collects
``+phase`` and a step ``b -> a`` collects ``-phase``; plaquette fluxes are the
sums collected walking each plaquette counterclockwise as drawn (row 1 on top).

Two gauges are available.  In the chiral-site gauge every site with an even row
and an even column carries three-post chiral modes: a photon entering through
arm ``a`` and leaving through arm ``b`` collects ``theta_a - theta_b``, with
arm angles 0, pi/2, pi, 3pi/2 for the right, up, left and down neighbours.  In
the Landau gauge horizontal hops are real and the upward hop in column ``m``
(0-indexed) carries ``2 pi alpha m``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import yaml

DEFAULT_FREQUENCY = 9560.0  # MHz
DEFAULT_HOPPING = 30.0  # MHz
Q_FUNDAMENTAL = 3000.0
Q_CHIRAL = 1500.0
WALL_DETUNING = 500.0  # MHz
HOPPING_RANGE = (20.0, 100.0)  # MHz, tunable coupler range

# (drow, dcol) -> arm angle, with "up" meaning row - 1.
ARM_ANGLES = {
    (0, 1): 0.0,
    (-1, 0): 0.5 * math.pi,
    (0, -1): math.pi,
    (1, 0): 1.5 * math.pi,
}


class LatticeError(ValueError):
    """Invalid lattice construction or lookup."""


class Gauge(str, Enum):
    CHIRAL_SITE = "chiral_site"
    LANDAU_X = "landau_x"


class SiteKind(str, Enum):
    FUNDAMENTAL = "fundamental"
    CHIRAL = "chiral"


@dataclass(frozen=True, order=True)
class SiteId:
    row: int
    col: int

    @classmethod
    def coerce(cls, value) -> "SiteId":
        if isinstance(value, SiteId):
            return value
        row, col = value
        return cls(int(row), int(col))

    def as_list(self) -> list[int]:
        return [self.row, self.col]


@dataclass(frozen=True)
class Site:
    id: SiteId
    kind: SiteKind
    frequency: float
    detuning: float = 0.0
    loss: float = 0.0

    def __post_init__(self):
        if self.loss < 0:
            raise LatticeError(f"negative loss at {self.id}")

    @property
    def energy(self) -> float:
        return self.frequency + self.detuning


@dataclass(frozen=True)
class Coupling:
    a: SiteId
    b: SiteId
    amplitude: float
    phase: float

    def __post_init__(self):
        if self.amplitude <= 0:
            raise LatticeError("coupling amplitude must be positive")
        if abs(self.a.row - self.b.row) + abs(self.a.col - self.b.col) != 1:
            raise LatticeError(f"{self.a} and {self.b} are not nearest neighbours")

    def reversed(self) -> "Coupling":
        return Coupling(self.b, self.a, self.amplitude, -self.phase)


@dataclass(frozen=True)
class SiteDefaults:
    frequency: float = DEFAULT_FREQUENCY
    q_fundamental: float = Q_FUNDAMENTAL
    q_chiral: float = Q_CHIRAL

    def loss(self, kind: SiteKind) -> float:
        q = self.q_chiral if kind is SiteKind.CHIRAL else self.q_fundamental
        return self.frequency / q


@dataclass(frozen=True)
class Lattice:
    nx: int
    ny: int
    flux: Fraction
    hopping: float
    gauge: Gauge
    sites: tuple[Site, ...]
    couplings: tuple[Coupling, ...]
    defaults: SiteDefaults = field(default_factory=SiteDefaults)

    @property
    def n_sites(self) -> int:
        return self.nx * self.ny

    def contains(self, site: SiteId) -> bool:
        return 1 <= site.row <= self.ny and 1 <= site.col <= self.nx

    def index(self, site) -> int:
        site = SiteId.coerce(site)
        if not self.contains(site):
            raise LatticeError(f"site {site} outside {self.ny}x{self.nx} lattice")
        return (site.row - 1) * self.nx + (site.col - 1)

    def site_id(self, index: int) -> SiteId:
        return SiteId(index // self.nx + 1, index % self.nx + 1)

    def site(self, site) -> Site:
        return self.sites[self.index(site)]

    @cached_property
    def _phase_map(self) -> dict[tuple[SiteId, SiteId], float]:
        out = {}
        for c in self.couplings:
            out[(c.a, c.b)] = c.phase
            out[(c.b, c.a)] = -c.phase
        return out

    def hop_phase(self, a, b) -> float:
        """Phase collected stepping from ``a`` to ``b``."""
        key = (SiteId.coerce(a), SiteId.coerce(b))
        try:
            return self._phase_map[key]
        except KeyError:
            raise LatticeError(f"no coupling between {key[0]} and {key[1]}") from None

    def site_map(self, values) -> np.ndarray:
        """Reshape a per-site vector onto the ``(ny, nx)`` grid."""
        return np.asarray(values).reshape(self.ny, self.nx)


def is_chiral_position(row: int, col: int) -> bool:
    return row % 2 == 0 and col % 2 == 0


def build_hofstadter(
    nx: int,
    ny: int,
    flux=Fraction(1, 4),
    t: float = DEFAULT_HOPPING,
    gauge: Gauge | str = Gauge.CHIRAL_SITE,
    defaults: SiteDefaults | None = None,
) -> Lattice:
    """Build an ``ny x nx`` lattice with ``flux`` quanta per plaquette.

    Parameters
    ----------
    nx, ny : int
        Number of columns and rows.
    flux : Fraction or str
        Flux per plaquette in units of the flux quantum.  The chiral-site
        layout only realises 1/4.
    t : float
        Hopping amplitude in MHz.
    gauge : Gauge
        Where the Peierls phases live.
    defaults : SiteDefaults
        Bare frequency and quality factors; chiral sites use ``q_chiral``.
    """
    if nx < 1 or ny < 1:
        raise LatticeError("lattice dimensions must be positive")
    flux = Fraction(flux)
    gauge = Gauge(gauge)
    defaults = defaults or SiteDefaults()
    if gauge is Gauge.CHIRAL_SITE and flux != Fraction(1, 4):
        raise LatticeError(f"chiral-site layout only supports flux 1/4, got {flux}")

    sites = []
    for row in range(1, ny + 1):
        for col in range(1, nx + 1):
            chiral = gauge is Gauge.CHIRAL_SITE and is_chiral_position(row, col)
            kind = SiteKind.CHIRAL if chiral else SiteKind.FUNDAMENTAL
            sites.append(Site(SiteId(row, col), kind, defaults.frequency, 0.0, defaults.loss(kind)))

    if gauge is Gauge.CHIRAL_SITE:
        couplings = _chiral_couplings(nx, ny, t)
    else:
        couplings = _landau_couplings(nx, ny, t, flux)
    return Lattice(nx, ny, flux, float(t), gauge, tuple(sites), tuple(couplings), defaults)


def _chiral_couplings(nx: int, ny: int, t: float) -> list[Coupling]:
    out = []
    for row in range(1, ny + 1):
        for col in range(1, nx + 1):
            for drow, dcol in ((0, 1), (1, 0)):
                r2, c2 = row + drow, col + dcol
                if r2 > ny or c2 > nx:
                    continue
                here, there = SiteId(row, col), SiteId(r2, c2)
                if is_chiral_position(row, col):
                    # arm of the chiral site pointing at the neighbour
                    out.append(Coupling(there, here, t, ARM_ANGLES[(drow, dcol)]))
                elif is_chiral_position(r2, c2):
                    out.append(Coupling(here, there, t, ARM_ANGLES[(-drow, -dcol)]))
                else:
                    out.append(Coupling(here, there, t, 0.0))
    return out


def _landau_couplings(nx: int, ny: int, t: float, flux: Fraction) -> list[Coupling]:
    out = []
    alpha = float(flux)
    for row in range(1, ny + 1):
        for col in range(1, nx + 1):
            if col < nx:
                out.append(Coupling(SiteId(row, col), SiteId(row, col + 1), t, 0.0))
            if row < ny:
                phase = 2 * math.pi * alpha * (col - 1)
                out.append(Coupling(SiteId(row + 1, col), SiteId(row, col), t, phase))
    return out


def wrap_angle(x):
    """Reduce angles to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, 2 * math.pi) - math.pi
    y = np.where(y == -math.pi, math.pi, y)
    return float(y) if np.ndim(y) == 0 else y


def plaquette_flux(lattice: Lattice, corner) -> float:
    """Counterclockwise phase sum around the plaquette whose upper-left site is ``corner``."""
    corner = SiteId.coerce(corner)
    r, c = corner.row, corner.col
    if not (1 <= r < lattice.ny and 1 <= c < lattice.nx):
        raise LatticeError(f"no plaquette with upper-left corner {corner}")
    loop = [SiteId(r, c), SiteId(r + 1, c), SiteId(r + 1, c + 1), SiteId(r, c + 1), SiteId(r, c)]
    total = sum(lattice.hop_phase(a, b) for a, b in zip(loop, loop[1:]))
    return wrap_angle(total)


def plaquette_corners(lattice: Lattice) -> list[SiteId]:
    return [SiteId(r, c) for r in range(1, lattice.ny) for c in range(1, lattice.nx)]


def apply_detuning_mask(lattice: Lattice, sites: Iterable, delta: float) -> Lattice:
    """Return a copy with ``delta`` MHz added to the detuning of each listed site."""
    new_sites = list(lattice.sites)
    for s in sites:
        i = lattice.index(s)
        new_sites[i] = replace(new_sites[i], detuning=new_sites[i].detuning + delta)
    return replace(lattice, sites=tuple(new_sites))


def wall_sites(lattice: Lattice, column: int = 6, gap_row: int = 6) -> list[SiteId]:
    """Every site of ``column`` except the single tunnelling site at ``gap_row``."""
    if not 1 <= column <= lattice.nx:
        raise LatticeError(f"column {column} outside lattice")
    return [SiteId(r, column) for r in range(1, lattice.ny + 1) if r != gap_row]


def with_wall(lattice: Lattice, column: int = 6, gap_row: int = 6, delta: float = WALL_DETUNING) -> Lattice:
    return apply_detuning_mask(lattice, wall_sites(lattice, column, gap_row), delta)


def with_disorder(lattice: Lattice, amplitude: float = 1.0, seed: int | None = None) -> Lattice:
    """Add uniform frequency jitter in ``[-amplitude, amplitude]`` MHz to every site."""
    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-amplitude, amplitude, size=lattice.n_sites)
    sites = tuple(replace(s, frequency=s.frequency + float(d)) for s, d in zip(lattice.sites, jitter))
    return replace(lattice, sites=sites)


def to_hamiltonian(lattice: Lattice) -> tuple[np.ndarray, np.ndarray]:
    """Dense Hamiltonian (MHz) and per-site loss rates in row-major order."""
    n = lattice.n_sites
    H = np.zeros((n, n), dtype=complex)
    for i, s in enumerate(lattice.sites):
        H[i, i] = s.energy
    for c in lattice.couplings:
        i, j = lattice.index(c.a), lattice.index(c.b)
        v = -c.amplitude * np.exp(1j * c.phase)
        H[i, j] += v
        H[j, i] += np.conj(v)
    loss = np.array([s.loss for s in lattice.sites])
    return H, loss


def reference_lattice(gauge: Gauge | str = Gauge.CHIRAL_SITE) -> Lattice:
    """The 11x11 quarter-flux sample: 9560 MHz sites, 30 MHz hopping."""
    return build_hofstadter(11, 11, Fraction(1, 4), DEFAULT_HOPPING, gauge)


# -- config documents -------------------------------------------------------

def lattice_to_config(lattice: Lattice) -> dict:
    """Serialize to a plain mapping; per-site deviations become overrides."""
    reference = build_hofstadter(
        lattice.nx, lattice.ny, lattice.flux, lattice.hopping, lattice.gauge, lattice.defaults
    )
    overrides = []
    for s, ref in zip(lattice.sites, reference.sites):
        entry = {}
        if s.frequency != ref.frequency:
            entry["frequency_MHz"] = s.frequency
        if s.detuning != ref.detuning:
            entry["detuning_MHz"] = s.detuning
        if s.loss != ref.loss:
            entry["loss_MHz"] = s.loss
        if entry:
            overrides.append({"site": s.id.as_list(), **entry})
    d = lattice.defaults
    return {
        "nx": lattice.nx,
        "ny": lattice.ny,
        "flux": f"{lattice.flux.numerator}/{lattice.flux.denominator}",
        "gauge": lattice.gauge.value,
        "hopping_MHz": lattice.hopping,
        "site_defaults": {
            "frequency_MHz": d.frequency,
            "q_fundamental": d.q_fundamental,
            "q_chiral": d.q_chiral,
        },
        "overrides": overrides,
        "detuning_masks": [],
    }


_TOP_KEYS = {"nx", "ny", "flux", "gauge", "hopping_MHz", "site_defaults", "overrides", "detuning_masks"}


def lattice_from_config(doc: Mapping, check_hopping_range: bool = True) -> Lattice:
    """Build a lattice from a config mapping (see :func:`lattice_to_config`)."""
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise LatticeError(f"unknown lattice keys: {sorted(unknown)}")
    for key in ("nx", "ny"):
        if key not in doc:
            raise LatticeError(f"lattice.{key} is required")
    t = float(doc.get("hopping_MHz", DEFAULT_HOPPING))
    lo, hi = HOPPING_RANGE
    if check_hopping_range and not lo <= t <= hi:
        raise LatticeError(f"lattice.hopping_MHz={t} outside tunable range [{lo}, {hi}]")
    sd = dict(doc.get("site_defaults") or {})
    extra = set(sd) - {"frequency_MHz", "q_fundamental", "q_chiral"}
    if extra:
        raise LatticeError(f"unknown lattice.site_defaults keys: {sorted(extra)}")
    defaults = SiteDefaults(
        float(sd.get("frequency_MHz", DEFAULT_FREQUENCY)),
        float(sd.get("q_fundamental", Q_FUNDAMENTAL)),
        float(sd.get("q_chiral", Q_CHIRAL)),
    )
    try:
        flux = Fraction(str(doc.get("flux", "1/4")))
    except (ValueError, ZeroDivisionError) as exc:
        raise LatticeError(f"lattice.flux: {exc}") from None
    lattice = build_hofstadter(
        int(doc["nx"]), int(doc["ny"]), flux, t, doc.get("gauge", Gauge.CHIRAL_SITE.value), defaults
    )

    sites = list(lattice.sites)
    for k, ov in enumerate(doc.get("overrides") or []):
        extra = set(ov) - {"site", "frequency_MHz", "detuning_MHz", "loss_MHz"}
        if extra:
            raise LatticeError(f"lattice.overrides[{k}]: unknown keys {sorted(extra)}")
        i = lattice.index(ov["site"])
        s = sites[i]
        sites[i] = replace(
            s,
            frequency=float(ov.get("frequency_MHz", s.frequency)),
            detuning=float(ov.get("detuning_MHz", s.detuning)),
            loss=float(ov.get("loss_MHz", s.loss)),
        )
    lattice = replace(lattice, sites=tuple(sites))
    for mask in doc.get("detuning_masks") or []:
        lattice = apply_detuning_mask(lattice, mask.get("sites", []), float(mask["delta_MHz"]))
    return lattice


def dump_document(doc: Mapping, path) -> None:
    path = Path(path)
    if path.suffix in (".yaml", ".yml"):
        path.write_text(yaml.safe_dump(dict(doc), sort_keys=False))
    else:
        path.write_text(json.dumps(doc, indent=2) + "\n")


def load_document(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        return yaml.safe_load(text)
    return json.loads(text)


def save_lattice(lattice: Lattice, path) -> None:
    dump_document(lattice_to_config(lattice), path)


def load_lattice(path) -> Lattice:
    return lattice_from_config(load_document(path))
