"""Data reduction on simulated measurements.

Perimeter paths run counterclockwise on the page starting at the upper-left
corner: down the first column, along the last row, up the last column and back
along the first row.  Path indices are 1-based to match site labels.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import Lattice, SiteId, wrap_angle
from .response import LossyModes, PortSpec, TimeTrace, lossy_modes
from .spectral import fold_momentum

DISPERSION_WINDOW = (12, 18)
VELOCITY_WINDOW = (2, 11)
MAX_PHASE_RESIDUAL = 0.15  # rad rms; in-gap fits stay below 0.1, in-band ones exceed 0.18


class DispersionFitError(ValueError):
    pass


class NoFrontError(ValueError):
    pass


class LocalizationError(ValueError):
    pass


def perimeter_path(rows: int | Sequence[int], cols: int | Sequence[int] | None = None) -> list[SiteId]:
    """Counterclockwise ring around the rectangle spanned by ``rows`` x ``cols``.

    Integers mean ``1..n``; ranges pick a sub-rectangle such as one half of a
    walled lattice.
    """
    cols = rows if cols is None else cols
    r = list(range(1, rows + 1)) if isinstance(rows, int) else list(rows)
    c = list(range(1, cols + 1)) if isinstance(cols, int) else list(cols)
    if len(r) < 2 or len(c) < 2:
        raise ValueError("perimeter needs at least a 2x2 rectangle")
    top, bottom, left, right = r[0], r[-1], c[0], c[-1]
    path = [SiteId(x, left) for x in r]
    path += [SiteId(bottom, y) for y in c[1:]]
    path += [SiteId(x, right) for x in reversed(r[:-1])]
    path += [SiteId(top, y) for y in reversed(c[1:-1])]
    return path


def path_slice(path: Sequence[SiteId], first: int, last: int) -> list[SiteId]:
    return list(path[first - 1:last])


def unwrap_phase(phases) -> np.ndarray:
    p = np.asarray(phases, dtype=float)
    if p.size == 0:
        raise ValueError("nothing to unwrap")
    steps = wrap_angle(np.diff(p))
    return np.concatenate([p[:1], p[0] + np.cumsum(steps)])


@dataclass(frozen=True)
class DispersionPoint:
    frequency: float  # MHz
    momentum: float  # rad per site
    residual: float  # rms phase residual of the line fit, rad


def _phase_line(phases: np.ndarray, scale: float = 1.0):
    # Fitting scale*phase resolves the slope modulo 2*pi/scale, which keeps
    # steps near the unwrap ambiguity well away from it after folding.
    x = np.arange(len(phases), dtype=float)
    u = unwrap_phase(wrap_angle(scale * np.asarray(phases)))
    coef = np.polyfit(x, u, 1)
    res = u - np.polyval(coef, x)
    return float(coef[0]) / scale, float(np.sqrt(np.mean(res ** 2))) / scale


def edge_dispersion(lattice: Lattice, drive, sites: Sequence | None = None, frequencies=(),
                    mode: str = "single", fold: float | None = np.pi,
                    max_residual: float | None = MAX_PHASE_RESIDUAL) -> list[DispersionPoint]:
    """Edge momentum from the phase gradient of transmission along a side.

    ``mode="single"`` fits the phase of drive -> site transmission.
    ``mode="differenced"`` fits phase(forward) - phase(reverse), whose slope is
    twice the momentum but free of any port-dependent constant.  Momenta are
    folded into ``(-fold/2, fold/2]``; the default matches the two-site
    magnetic period along an edge.  ``fold=None`` keeps the raw slope.

    Raises ``DispersionFitError`` when a frequency's residual exceeds
    ``max_residual``, which happens for frequencies inside a band.
    """
    if mode not in ("single", "differenced"):
        raise ValueError(f"unknown mode {mode!r}")
    port = PortSpec.coerce(drive)
    if sites is None:
        sites = path_slice(perimeter_path(lattice.ny, lattice.nx), *DISPERSION_WINDOW)
    sites = [SiteId.coerce(s) for s in sites]
    if len(sites) < 3:
        raise ValueError("need at least three sites for a phase slope")
    if port.site in sites:
        raise ValueError("drive site lies inside the fit window")
    modes = lossy_modes(lattice)
    src = lattice.index(port.site)
    idx = [lattice.index(s) for s in sites]
    points = []
    for f in np.atleast_1d(np.asarray(frequencies, dtype=float)):
        fwd = modes.greens(f, src)[idx]
        ph = np.angle(fwd)
        if mode == "differenced":
            rev = np.array([modes.greens(f, j)[src] for j in idx])
            ph = wrap_angle(ph - np.angle(rev))
        per_k = 2.0 if mode == "differenced" else 1.0
        scale = 1.0 if fold is None else 2 * np.pi / fold / per_k
        slope, res = _phase_line(ph, scale)
        slope, res = slope / per_k, res / per_k
        k = slope if fold is None else float(fold_momentum(slope, fold))
        if max_residual is not None and res > max_residual:
            raise DispersionFitError(
                f"phase profile at {f} MHz is not linear (rms residual {res:.3f} rad); "
                "frequency is probably inside a band")
        points.append(DispersionPoint(float(f), k, res))
    return points


def write_dispersion(points: Sequence[DispersionPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frequency_MHz", "momentum_deg_per_site", "residual"])
        for p in points:
            w.writerow([repr(p.frequency), repr(float(np.degrees(p.momentum))), repr(p.residual)])


def peak_time(times: np.ndarray, envelope: np.ndarray) -> float:
    """Time of the envelope-magnitude maximum, refined by a parabola through three samples."""
    mag = np.abs(envelope)
    i = int(np.argmax(mag))
    if 0 < i < len(mag) - 1:
        a, b, c = mag[i - 1:i + 2]
        den = a - 2 * b + c
        if den != 0:
            return float(times[i] + 0.5 * (a - c) / den * (times[1] - times[0]))
    return float(times[i])


def arrival_times(trace: TimeTrace, sites: Sequence) -> np.ndarray:
    return np.array([peak_time(trace.times, trace.envelope(s)) for s in sites])


def is_monotonic(values, strict: bool = True) -> bool:
    d = np.diff(np.asarray(values, dtype=float))
    return bool(np.all(d > 0) if strict else np.all(d >= 0))


@dataclass(frozen=True)
class GroupVelocity:
    velocity: float  # sites per ns
    uncertainty: float
    indices: tuple[int, ...]
    arrivals: tuple[float, ...]


def group_velocity(trace: TimeTrace, path: Sequence | None = None,
                   window: tuple[int, int] = VELOCITY_WINDOW, min_r2: float = 0.9) -> GroupVelocity:
    """Inverse slope of envelope-peak arrival time against perimeter index.

    ``window`` is an inclusive 1-based index range along ``path`` (default: the
    full counterclockwise perimeter of the traced lattice).
    """
    if path is None:
        rows = max(s.row for s in trace.probes)
        cols = max(s.col for s in trace.probes)
        path = perimeter_path(rows, cols)
    first, last = window
    if last - first + 1 < 3:
        raise ValueError("velocity window needs at least three sites")
    idx = np.arange(first, last + 1)
    t = arrival_times(trace, path_slice(path, first, last))
    if np.any(t >= trace.times[-1] - (trace.times[1] - trace.times[0])):
        raise NoFrontError("pulse never peaked at some window sites within the traced time")
    (slope, icpt), cov = np.polyfit(idx, t, 1, cov=True)
    pred = slope * idx + icpt
    ss = np.sum((t - t.mean()) ** 2)
    r2 = 1 - np.sum((t - pred) ** 2) / ss if ss > 0 else 0.0
    if slope <= 0 or r2 < min_r2:
        raise NoFrontError(f"no propagating front (slope {slope:.3g} ns/site, R^2 {r2:.3f})")
    v = 1.0 / slope
    dv = float(np.sqrt(cov[0, 0])) / slope ** 2
    return GroupVelocity(float(v), dv, tuple(int(i) for i in idx), tuple(float(x) for x in t))


def backscatter_ratio(trace: TimeTrace, path: Sequence, distances: Sequence[int] = range(2, 11),
                      forward: tuple[int, int] = VELOCITY_WINDOW, guard: float | None = None) -> float:
    """Counter-rotating intensity before the forward front, relative to the forward peak.

    ``path[0]`` must be the drive site.  For each site ``d`` steps clockwise
    from the drive, the largest ``|a|^2`` seen before its counterclockwise
    arrival time minus ``guard`` (default one pulse width) is compared with
    the largest ``|a|^2`` over the forward window.  The nearest clockwise
    neighbour is excluded by default because the drive reaches it evanescently.
    """
    path = list(path)
    if SiteId.coerce(path[0]) != trace.drive:
        raise ValueError("path must start at the drive site")
    guard = trace.pulse.width if guard is None else guard
    fwd_sites = path_slice(path, *forward)
    fwd_peak = max(float(np.max(np.abs(trace.envelope(s)) ** 2)) for s in fwd_sites)
    worst = 0.0
    for d in distances:
        s = path[-d]
        env = np.abs(trace.envelope(s)) ** 2
        t_fwd = peak_time(trace.times, trace.envelope(s))
        early = trace.times < t_fwd - guard
        if np.any(early):
            worst = max(worst, float(env[early].max()))
    return worst / fwd_peak


def ring_intensity(trace: TimeTrace, sites: Sequence) -> float:
    """Peak ``|a|^2`` over the given sites and all times."""
    return max(float(np.max(np.abs(trace.envelope(s)) ** 2)) for s in sites)


@dataclass(frozen=True)
class Localization:
    length: float  # sites
    r2: float
    distances: tuple[int, ...]
    amplitudes: tuple[float, ...]


def localization_length(site_map: np.ndarray, drive, max_distance: int = 4,
                        min_r2: float = 0.5) -> Localization:
    """Exponential decay length of ``|map|`` against Manhattan distance from ``drive``.

    Each distance shell 1..``max_distance`` is averaged before a log-linear
    fit.  Raises ``LocalizationError`` when the profile does not decay or the
    fit quality falls below ``min_r2``.
    """
    site = SiteId.coerce(drive)
    ny, nx = site_map.shape
    margin = min(site.row - 1, site.col - 1, ny - site.row, nx - site.col)
    if margin < 3:
        raise ValueError(f"drive {site} is only {margin} sites from the edge")
    rr, cc = np.mgrid[1:ny + 1, 1:nx + 1]
    dist = np.abs(rr - site.row) + np.abs(cc - site.col)
    mag = np.abs(site_map)
    d = np.arange(1, max_distance + 1)
    shell = np.array([mag[dist == k].mean() for k in d])
    if np.any(shell <= 0):
        raise LocalizationError("response vanishes in a distance shell")
    y = np.log(shell)
    slope, icpt = np.polyfit(d, y, 1)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = float(1 - np.sum((y - (slope * d + icpt)) ** 2) / ss) if ss > 0 else 0.0
    if slope >= 0:
        raise LocalizationError(f"response does not decay away from the drive (slope {slope:.3f})")
    if r2 < min_r2:
        raise LocalizationError(f"no exponential regime (R^2 = {r2:.3f})")
    return Localization(float(-1 / slope), r2, tuple(int(x) for x in d), tuple(float(x) for x in shell))


@dataclass
class BandDensity:
    k: np.ndarray  # rad per site along the transformed axis
    frequencies: np.ndarray
    density: np.ndarray  # (n_freq, n_k), each row peaks at 1
    power: np.ndarray  # (n_freq,) unnormalized row maxima
    axis: str = "col"

    def ridge(self) -> np.ndarray:
        return self.k[np.argmax(self.density, axis=1)]

    def save(self, stem) -> tuple[str, str]:
        stem = str(stem)
        data, meta = stem + ".csv", stem + ".json"
        with open(data, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k_index", "omega_index", "density"])
            for j in range(self.density.shape[0]):
                for i in range(self.density.shape[1]):
                    w.writerow([i, j, repr(float(self.density[j, i]))])
        with open(meta, "w") as fh:
            json.dump({"axis": self.axis, "k_rad_per_site": [float(x) for x in self.k],
                       "frequency_MHz": [float(x) for x in self.frequencies],
                       "row_power": [float(x) for x in self.power]}, fh, indent=2)
        return data, meta


def reconstruct_band_structure(lattice: Lattice, drive, frequencies, axis: str = "col",
                               modes: LossyModes | None = None) -> BandDensity:
    """Spatial Fourier density of the driven site map.

    ``axis="col"`` sums the map over rows and transforms along columns;
    ``axis="row"`` does the opposite.
    """
    if axis not in ("col", "row"):
        raise ValueError("axis must be 'col' or 'row'")
    port = PortSpec.coerce(drive)
    modes = modes or lossy_modes(lattice)
    src = lattice.index(port.site)
    f = np.asarray(frequencies, dtype=float)
    n = lattice.nx if axis == "col" else lattice.ny
    out = np.empty((len(f), n))
    power = np.empty(len(f))
    for j, w in enumerate(f):
        m = lattice.site_map(modes.greens(w, src))
        line = m.sum(axis=0) if axis == "col" else m.sum(axis=1)
        p = np.abs(np.fft.fft(line)) ** 2
        power[j] = p.max()
        out[j] = p / power[j] if power[j] > 0 else p
    k = 2 * np.pi * np.arange(n) / n
    return BandDensity(k, f, out, power, axis)

