"""Driven-dissipative response of a finite lattice.

Frequencies are in MHz and times in ns.  Mode amplitudes obey

    da/dt = -2j*pi/1000 * (H - 0.5j*diag(kappa)) a + s(t) e_drive

so a monochromatic drive ``exp(-2j*pi*omega*t/1000)`` settles to
``(1000j / 2pi) * G(omega) e_drive`` with ``G = (omega - H + 0.5j*kappa)^-1``.
Time traces are written in the frame rotating at the pulse carrier, which is
what an IQ mixer referenced to the same oscillator returns.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from .lattice import Lattice, SiteId, to_hamiltonian

LN2 = math.log(2.0)


@dataclass(frozen=True)
class PortSpec:
    site: SiteId
    coupling: float = 0.1  # MHz

    def __post_init__(self):
        object.__setattr__(self, "site", SiteId.coerce(self.site))

    @classmethod
    def coerce(cls, value) -> "PortSpec":
        return value if isinstance(value, PortSpec) else cls(SiteId.coerce(value))


@dataclass(frozen=True)
class PulseSpec:
    """Drive envelope.

    ``gaussian``: amplitude FWHM ``width`` ns, peaking ``2 * width`` after
    ``delay``.  ``cw``: constant amplitude switched on at ``delay``.
    """

    carrier: float = 9600.0
    width: float = 75.0
    amplitude: float = 1.0
    delay: float = 0.0
    envelope: str = "gaussian"

    def __post_init__(self):
        if self.envelope not in ("gaussian", "cw"):
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if self.envelope == "gaussian" and self.width <= 0:
            raise ValueError("pulse width must be positive")

    @property
    def center(self) -> float:
        return self.delay + 2.0 * self.width

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.envelope == "cw":
            return np.where(t >= self.delay, self.amplitude, 0.0)
        return self.amplitude * np.exp(-4 * LN2 * (t - self.center) ** 2 / self.width ** 2)


@dataclass
class SpectrumTrace:
    frequencies: np.ndarray
    values: np.ndarray
    port_a: SiteId
    port_b: SiteId
    direction: str = "a->b"

    def rows(self):
        for f, v in zip(self.frequencies, self.values):
            yield [repr(float(f)), repr(float(v.real)), repr(float(v.imag)), repr(float(abs(v))),
                   repr(float(np.degrees(np.angle(v)))), f"{self.port_a.row}-{self.port_a.col}",
                   f"{self.port_b.row}-{self.port_b.col}", self.direction]


SPECTRUM_HEADER = ["frequency_MHz", "re", "im", "mag", "phase_deg", "port_a", "port_b", "direction"]


def write_spectra(traces: Iterable[SpectrumTrace], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SPECTRUM_HEADER)
        for tr in traces:
            w.writerows(tr.rows())


@dataclass
class TimeTrace:
    times: np.ndarray
    envelopes: np.ndarray  # (n_probes, n_times), rotating frame
    probes: tuple[SiteId, ...]
    drive: SiteId
    pulse: PulseSpec

    def envelope(self, site) -> np.ndarray:
        return self.envelopes[self.probes.index(SiteId.coerce(site))]

    def subset(self, sites) -> "TimeTrace":
        sites = tuple(SiteId.coerce(s) for s in sites)
        rows = [self.probes.index(s) for s in sites]
        return TimeTrace(self.times, self.envelopes[rows], sites, self.drive, self.pulse)

    def to_ndjson(self, path) -> None:
        drive = {"site": self.drive.as_list(), "carrier_MHz": self.pulse.carrier,
                 "width_ns": self.pulse.width, "envelope": self.pulse.envelope,
                 "amplitude": self.pulse.amplitude, "delay_ns": self.pulse.delay}
        times = [float(x) for x in self.times]
        with open(path, "w") as fh:
            for k, (site, env) in enumerate(zip(self.probes, self.envelopes)):
                rec = {"probe": k, "site": site.as_list(), "drive": drive, "time_ns": times,
                       "re": [float(x) for x in env.real], "im": [float(x) for x in env.imag]}
                fh.write(json.dumps(rec) + "\n")


def greens_column(H: np.ndarray, loss: np.ndarray, omega: float, source: int) -> np.ndarray:
    """Solve ``(omega - H + 0.5j*diag(loss)) G = e_source`` directly."""
    n = H.shape[0]
    A = omega * np.eye(n) - H + 0.5j * np.diag(loss)
    e = np.zeros(n, dtype=complex)
    e[source] = 1.0
    try:
        return np.linalg.solve(A, e)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular response matrix at {omega} MHz") from exc


@dataclass(frozen=True)
class LossyModes:
    """Eigendecomposition of the non-Hermitian matrix ``H - 0.5j*diag(kappa)``."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    inverse: np.ndarray

    @classmethod
    def from_matrix(cls, H: np.ndarray, loss: np.ndarray) -> "LossyModes":
        lam, V = np.linalg.eig(H - 0.5j * np.diag(loss))
        Vi = np.linalg.inv(V)
        for a in (lam, V, Vi):
            a.setflags(write=False)
        return cls(lam, V, Vi)

    def greens(self, omega: float, source: int | None = None) -> np.ndarray:
        d = 1.0 / (omega - self.eigenvalues)
        if source is None:
            return (self.vectors * d) @ self.inverse
        return self.vectors @ (d * self.inverse[:, source])

    def greens_element(self, frequencies, target: int, source: int) -> np.ndarray:
        w = self.vectors[target] * self.inverse[:, source]
        f = np.asarray(frequencies, dtype=float)
        return (w[None, :] / (f[:, None] - self.eigenvalues[None, :])).sum(axis=1)


@lru_cache(maxsize=16)
def lossy_modes(lattice: Lattice) -> LossyModes:
    H, loss = to_hamiltonian(lattice)
    return LossyModes.from_matrix(H, loss)


def transmission(lattice: Lattice, port_a, port_b, frequencies, reverse: bool = False) -> SpectrumTrace:
    """Transmission ``S_ba = 1j * sqrt(k_a k_b) * G_ba`` from ``port_a`` into ``port_b``.

    ``reverse=True`` returns the opposite direction ``S_ab`` for the same pair.
    """
    pa, pb = PortSpec.coerce(port_a), PortSpec.coerce(port_b)
    if pa.site == pb.site:
        raise ValueError("transmission needs two distinct ports")
    ia, ib = lattice.index(pa.site), lattice.index(pb.site)
    src, dst = (ib, ia) if reverse else (ia, ib)
    modes = lossy_modes(lattice)
    f = np.asarray(frequencies, dtype=float)
    g = modes.greens_element(f, dst, src)
    s = 1j * math.sqrt(pa.coupling * pb.coupling) * g
    return SpectrumTrace(f, s, pa.site, pb.site, "b->a" if reverse else "a->b")


def steady_state_map(lattice: Lattice, drive, omega: float) -> np.ndarray:
    """Green's-function column of the drive site on the ``(ny, nx)`` grid."""
    port = PortSpec.coerce(drive)
    H, loss = to_hamiltonian(lattice)
    g = greens_column(H, loss, omega, lattice.index(port.site))
    return lattice.site_map(g)


def _phi1(z):
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    return np.where(small, 1 + z / 2 + z * z / 6, np.expm1(zs) / zs)


def _phi2(z):
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    return np.where(small, 0.5 + z / 6 + z * z / 24, (np.expm1(zs) - zs) / zs ** 2)


def time_evolve(lattice: Lattice, drive, pulse: PulseSpec, times, probes=None,
                modes: LossyModes | None = None) -> TimeTrace:
    """Propagate the lattice under a pulsed drive on one site.

    The drive envelope is taken piecewise linear between the samples of
    ``times``; inside each interval the propagation in the lossy eigenbasis is
    exact.  Returned envelopes are in the frame rotating at ``pulse.carrier``.

    Raises
    ------
    ValueError
        If ``times`` is not a uniform grid starting before the drive, or if
        its spacing is too coarse to resolve the detuning of the fastest mode
        from the carrier.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2:
        raise ValueError("need at least two time samples")
    steps = np.diff(times)
    dt = float(steps[0])
    if dt <= 0 or not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise ValueError("time grid must be uniform and increasing")
    modes = modes or lossy_modes(lattice)
    detune = np.max(np.abs(modes.eigenvalues.real - pulse.carrier))
    if detune * dt / 1000.0 >= 0.5:
        raise ValueError(
            f"time step {dt} ns undersamples modes {detune:.1f} MHz from the carrier; "
            f"need dt < {500.0 / detune:.3f} ns"
        )
    site = PortSpec.coerce(drive).site
    src = lattice.index(site)
    probes = tuple(lattice.site_id(i) for i in range(lattice.n_sites)) if probes is None \
        else tuple(SiteId.coerce(p) for p in probes)
    rows = [lattice.index(p) for p in probes]

    mu = -2j * np.pi * (modes.eigenvalues - pulse.carrier) / 1000.0
    z = mu * dt
    prop = np.exp(z)
    w1 = dt * _phi1(z)
    w2 = dt * _phi2(z)
    u = modes.inverse[:, src]
    s = pulse(times)

    b = np.zeros(len(mu), dtype=complex)
    B = np.empty((len(mu), len(times)), dtype=complex)
    B[:, 0] = b
    for i in range(len(times) - 1):
        b = prop * b + u * (s[i] * w1 + (s[i + 1] - s[i]) * w2)
        B[:, i + 1] = b
    env = modes.vectors[rows] @ B
    return TimeTrace(times, env, probes, site, pulse)


def cw_steady_state(lattice: Lattice, drive, omega: float, amplitude: float = 1.0) -> np.ndarray:
    """Rotating-frame amplitudes reached under a constant drive at ``omega``."""
    port = PortSpec.coerce(drive)
    H, loss = to_hamiltonian(lattice)
    g = greens_column(H, loss, omega, lattice.index(port.site))
    return amplitude * 1000j / (2 * np.pi) * g
