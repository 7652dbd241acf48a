"""Band theory of the Hofstadter model: Bloch bands, strips, gaps and Chern numbers.

Momenta are conjugate to the lattice indices: ``kx`` to the column and ``ky``
to the row (which grows downwards).  Bloch matrices use the Landau gauge of
:mod:`chernlattice.lattice`, so the magnetic cell is ``q`` sites wide and the
magnetic Brillouin zone is ``kx in [0, 2 pi / q)``, ``ky in [0, 2 pi)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .lattice import ARM_ANGLES, DEFAULT_FREQUENCY, DEFAULT_HOPPING, is_chiral_position

DEFAULT_GRID = 64


class GapClosureError(ValueError):
    """A requested band group touches a neighbouring band on the grid."""


@dataclass(frozen=True)
class BlochModel:
    flux: Fraction = Fraction(1, 4)
    t: float = DEFAULT_HOPPING
    onsite: float = DEFAULT_FREQUENCY

    def __post_init__(self):
        object.__setattr__(self, "flux", Fraction(self.flux))

    @property
    def q(self) -> int:
        return self.flux.denominator

    @property
    def alpha(self) -> float:
        return float(self.flux)

    def conjugate(self) -> "BlochModel":
        """Same model with every Peierls phase conjugated (flux -> -flux)."""
        return BlochModel(-self.flux, self.t, self.onsite)


@dataclass
class BandStructure:
    """Eigenvalues per k sample, sorted ascending along the last axis.

    ``k`` is ``(nk, 2)`` for bulk bands and ``(nk,)`` along a strip.  Strip
    results also carry the norm fraction on the two outer columns
    (``edge_weight``) and on the first column alone (``left_weight``).
    """

    k: np.ndarray
    energies: np.ndarray
    edge_weight: np.ndarray | None = None
    left_weight: np.ndarray | None = None

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]

    def intervals(self) -> list[tuple[float, float]]:
        return [(float(e.min()), float(e.max())) for e in self.energies.T]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            bulk = self.k.ndim == 2
            w.writerow((["kx", "ky"] if bulk else ["k"]) + ["band", "energy_MHz", "edge_weight"])
            for i in range(self.energies.shape[0]):
                kcols = [repr(float(x)) for x in np.atleast_1d(self.k[i])]
                for n in range(self.n_bands):
                    ew = "" if self.edge_weight is None else repr(float(self.edge_weight[i, n]))
                    w.writerow(kcols + [n + 1, repr(float(self.energies[i, n])), ew])


@dataclass
class GapReport:
    gaps: list[tuple[float, float]]
    below: list[int]  # 1-based band number under each gap

    def contains(self, omega: float) -> int | None:
        """Index of the gap containing ``omega``, or None."""
        for i, (lo, hi) in enumerate(self.gaps):
            if lo < omega < hi:
                return i
        return None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["below_band", "low_MHz", "high_MHz"])
            for n, (lo, hi) in zip(self.below, self.gaps):
                w.writerow([n, repr(lo), repr(hi)])


def bloch_hamiltonian(model: BlochModel, kx: float, ky: float) -> np.ndarray:
    """Harper-Hofstadter Bloch matrix of the ``q``-site Landau cell."""
    q = model.q
    t = model.t
    m = np.arange(q)
    h = np.diag(model.onsite - 2 * t * np.cos(ky - 2 * np.pi * model.alpha * m)).astype(complex)
    for j in range(q - 1):
        h[j, j + 1] += -t
        h[j + 1, j] += -t
    wrap = -t * np.exp(1j * q * kx)
    h[q - 1, 0] += wrap
    h[0, q - 1] += np.conj(wrap)
    return h


def chiral_cell_hamiltonian(kx: float, ky: float, t: float = DEFAULT_HOPPING,
                            onsite: float = DEFAULT_FREQUENCY) -> np.ndarray:
    """Bloch matrix of the 2x2 four-site cell of the chiral-site gauge (flux 1/4).

    Cell order: (odd row, odd col), (odd, even), (even, odd), (even, even);
    the last one is the chiral site.  The plane-wave factor of site ``(r, c)``
    is ``exp(1j * (kx * c + ky * r))``.
    """
    cell = [(1, 1), (1, 2), (2, 1), (2, 2)]
    h = np.zeros((4, 4), dtype=complex)
    for i, (r, c) in enumerate(cell):
        h[i, i] += onsite
        for (dr, dc), theta in ARM_ANGLES.items():
            r2, c2 = r + dr, c + dc
            j = cell.index(((r2 - 1) % 2 + 1, (c2 - 1) % 2 + 1))
            if is_chiral_position(r2, c2):
                phase = ARM_ANGLES[(-dr, -dc)]  # arm of the neighbour pointing back here
            elif is_chiral_position(r, c):
                phase = -theta
            else:
                phase = 0.0
            # H[i, j] for the hop partner displaced by (dr, dc)
            h[i, j] += -t * np.exp(1j * phase) * np.exp(1j * (kx * dc + ky * dr))
    return h


def magnetic_grid(model: BlochModel, n: int | tuple[int, int] = DEFAULT_GRID):
    nkx, nky = (n, n) if np.isscalar(n) else n
    kx = np.arange(nkx) * (2 * np.pi / model.q) / nkx
    ky = np.arange(nky) * (2 * np.pi) / nky
    return kx, ky


def _grid_eigh(model: BlochModel, n):
    kx, ky = magnetic_grid(model, n)
    E = np.empty((len(kx), len(ky), model.q))
    V = np.empty((len(kx), len(ky), model.q, model.q), dtype=complex)
    for i, a in enumerate(kx):
        for j, b in enumerate(ky):
            E[i, j], V[i, j] = np.linalg.eigh(bloch_hamiltonian(model, a, b))
    return kx, ky, E, V


def bulk_bands(model: BlochModel, grid: int | tuple[int, int] = DEFAULT_GRID) -> BandStructure:
    kx, ky, E, _ = _grid_eigh(model, grid)
    K = np.stack(np.meshgrid(kx, ky, indexing="ij"), axis=-1).reshape(-1, 2)
    return BandStructure(K, E.reshape(-1, model.q))


def band_gaps(bands: BandStructure, min_width: float = 1e-6) -> GapReport:
    """Gaps ``(max of band n, min of band n+1)`` wider than ``min_width`` MHz."""
    iv = bands.intervals()
    gaps, below = [], []
    for n in range(len(iv) - 1):
        lo, hi = iv[n][1], iv[n + 1][0]
        if hi - lo > min_width:
            gaps.append((lo, hi))
            below.append(n + 1)
    return GapReport(gaps, below)


def strip_hamiltonian(model: BlochModel, width: int, k: float) -> np.ndarray:
    """Strip of ``width`` columns, open across and periodic along the rows.

    The first column carries real vertical bonds, so its edge momentum equals
    the phase advance per site along that edge.
    """
    m = np.arange(width)
    h = np.diag(model.onsite - 2 * model.t * np.cos(k - 2 * np.pi * model.alpha * m)).astype(complex)
    off = -model.t * np.ones(width - 1)
    h += np.diag(off, 1) + np.diag(off, -1)
    return h


def strip_bands(model: BlochModel, width: int, k: Sequence[float] | int = 401) -> BandStructure:
    if width < model.q:
        raise ValueError(f"strip width {width} narrower than magnetic cell {model.q}")
    if np.isscalar(k):
        k = np.linspace(-np.pi, np.pi, int(k))
    k = np.asarray(k, dtype=float)
    E = np.empty((len(k), width))
    edge = np.empty_like(E)
    left = np.empty_like(E)
    for i, kk in enumerate(k):
        w, v = np.linalg.eigh(strip_hamiltonian(model, width, kk))
        p = np.abs(v) ** 2
        E[i] = w
        left[i] = p[0]
        edge[i] = p[0] + p[-1]
    return BandStructure(k, E, edge, left)


@dataclass(frozen=True)
class EdgeState:
    k: float  # rad per site, along +row on the first column
    slope: float  # dE/dk in MHz per rad
    left_weight: float

    @property
    def velocity(self) -> float:
        """Group velocity in sites per ns."""
        return 2 * np.pi * self.slope / 1000.0


def edge_branch(model: BlochModel, width: int, omega: float, n_scan: int = 721) -> EdgeState:
    """Locate the first-column edge state of a strip at energy ``omega``.

    A coarse scan brackets crossings of an edge-dominated eigenvalue with
    ``omega``; Newton steps with the Hellmann-Feynman slope refine it.
    """
    m = np.arange(width)

    def left_state(kk):
        w, v = np.linalg.eigh(strip_hamiltonian(model, width, kk))
        p = np.abs(v[0]) ** 2
        cand = np.flatnonzero(p > 0.2)
        if cand.size == 0:
            return None
        j = cand[np.argmin(np.abs(w[cand] - omega))]
        return w[j], v[:, j]

    ks = np.linspace(-np.pi, np.pi, n_scan)
    best = None
    prev = None
    for kk in ks:
        st = left_state(kk)
        cur = None if st is None else (kk, st[0] - omega)
        if prev is not None and cur is not None and prev[1] * cur[1] <= 0 \
                and abs(prev[1] - cur[1]) < 4 * abs(model.t) * (ks[1] - ks[0]):
            best = prev[0] - prev[1] * (cur[0] - prev[0]) / (cur[1] - prev[1])
            break
        prev = cur
    if best is None:
        raise ValueError(f"no first-column edge state at {omega} MHz")
    k = best
    for _ in range(50):
        st = left_state(k)
        if st is None:
            raise ValueError(f"edge state at {omega} MHz lost during refinement")
        e, vec = st
        slope = float(np.sum(np.abs(vec) ** 2 * 2 * model.t * np.sin(k - 2 * np.pi * model.alpha * m)))
        step = (e - omega) / slope
        k -= step
        if abs(step) < 1e-13:
            break
    return EdgeState(float(np.angle(np.exp(1j * k))), slope, float(abs(vec[0]) ** 2))


def _link(a: np.ndarray, b: np.ndarray) -> complex:
    d = np.linalg.det(a.conj().T @ b)
    return d / abs(d)


def chern_number(model: BlochModel, bands, grid: int | tuple[int, int] = DEFAULT_GRID,
                 gap_tol: float | None = None) -> int:
    """Chern number of a band or band group from gauge-invariant link variables.

    Parameters
    ----------
    bands : int or sequence of int
        1-based band numbers counted from the bottom; a group must be contiguous.
    grid : int or (int, int)
        Samples of the magnetic Brillouin zone.
    gap_tol : float
        Minimum separation (MHz) from the neighbouring bands anywhere on the
        grid; defaults to ``1e-3 * |t|``.

    Raises
    ------
    GapClosureError
        If the group is not isolated on the grid.
    """
    group = sorted([bands] if np.isscalar(bands) else list(bands))
    if group != list(range(group[0], group[-1] + 1)) or group[0] < 1 or group[-1] > model.q:
        raise ValueError(f"bands {bands} are not a contiguous subset of 1..{model.q}")
    tol = 1e-3 * abs(model.t) if gap_tol is None else gap_tol
    kx, ky, E, V = _grid_eigh(model, grid)
    lo, hi = group[0] - 1, group[-1]
    if lo > 0 and np.min(E[..., lo] - E[..., lo - 1]) < tol:
        raise GapClosureError(f"band {group[0]} touches band {group[0] - 1}")
    if hi < model.q and np.min(E[..., hi] - E[..., hi - 1]) < tol:
        raise GapClosureError(f"band {group[-1]} touches band {group[-1] + 1}")
    U = V[..., lo:hi]
    nx, ny = len(kx), len(ky)
    total = 0.0
    for i in range(nx):
        i1 = (i + 1) % nx
        for j in range(ny):
            j1 = (j + 1) % ny
            loop = (_link(U[i, j], U[i1, j]) * _link(U[i1, j], U[i1, j1])
                    * _link(U[i1, j1], U[i, j1]) * _link(U[i, j1], U[i, j]))
            total += np.angle(loop)
    c = total / (2 * np.pi)
    return int(round(c))


def fold_momentum(k, period: float = np.pi):
    """Map momenta into ``(-period/2, period/2]``."""
    y = np.mod(np.asarray(k, dtype=float) + period / 2, period) - period / 2
    y = np.where(np.isclose(y, -period / 2, atol=1e-15), period / 2, y)
    return float(y) if np.ndim(y) == 0 else y
