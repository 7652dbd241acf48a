"""Three-post chiral cavity hybridized with a magnetized YIG sphere.

Four linear modes: the three-post ring modes with winding 0, +1 and -1, and
the spin precession mode at ``LARMOR_SLOPE * B``.  The spin couples to the
co-rotating (+1) ring mode with ``g_plus`` and, through fabrication asymmetry,
to the counter-rotating one with the much weaker ``g_minus``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .lattice import wrap_angle

LARMOR_SLOPE = 28.0  # MHz per mT
DOUBLET_OFFSET = 1000.0  # MHz, winding +-1 pair above the winding-0 mode
SPLITTING_TARGET = 446.0  # MHz
BAND_GUARD = 350.0  # MHz, smallest chiral splitting the lattice bands must fit inside
DEFAULT_DOUBLET = 9160.0  # MHz, bare winding +-1 frequency
OPERATING_FREQUENCY = 9560.0  # MHz, bright branch frequency used as the lattice chiral site
LABELS = ("q0", "plus", "minus", "spin")
WINDING = {"q0": 0, "plus": 1, "minus": -1}


@dataclass(frozen=True)
class YigCavityParams:
    post_frequency: float = DEFAULT_DOUBLET - DOUBLET_OFFSET / 3  # MHz
    post_coupling: float = -DOUBLET_OFFSET / 3  # J < 0 lifts the doublet above q0
    bias_field: float = 323.7  # mT
    g_plus: float = 446.0  # MHz
    g_minus: float | None = None  # default g_plus / 20
    spin_loss: float = 1.0  # MHz
    post_loss: float = 3.2  # MHz

    @property
    def dark_coupling(self) -> float:
        return self.g_plus / 20 if self.g_minus is None else self.g_minus

    @property
    def larmor(self) -> float:
        return LARMOR_SLOPE * self.bias_field

    def ring_frequencies(self) -> tuple[float, float, float]:
        e, J = self.post_frequency, self.post_coupling
        return (e + 2 * J, e + 2 * J * np.cos(2 * np.pi / 3), e + 2 * J * np.cos(2 * np.pi / 3))

    def with_field(self, b: float) -> "YigCavityParams":
        return replace(self, bias_field=float(b))


def yig_hamiltonian(params: YigCavityParams) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian 4x4 matrix in the basis (q0, plus, minus, spin) and loss vector."""
    q0, qp, qm = params.ring_frequencies()
    H = np.diag([q0, qp, qm, params.larmor]).astype(complex)
    H[1, 3] = H[3, 1] = params.g_plus
    H[2, 3] = H[3, 2] = params.dark_coupling
    loss = np.array([params.post_loss] * 3 + [params.spin_loss])
    return H, loss


@dataclass(frozen=True)
class CavityModeSet:
    field: float  # mT
    frequencies: np.ndarray  # complex, ordered as ``labels``
    vectors: np.ndarray  # columns match ``frequencies``
    labels: tuple[str, ...]

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def frequency(self, label: str) -> float:
        return float(self.frequencies[self.index(label)].real)

    def weight(self, label: str, component: str) -> float:
        v = self.vectors[:, self.index(label)]
        return float(abs(v[LABELS.index(component)]) ** 2 / np.sum(np.abs(v) ** 2))

    def _richest(self, component: int) -> int:
        # ties (exact resonance splits the content evenly) go to the higher frequency
        w = np.abs(self.vectors[component]) ** 2 / np.sum(np.abs(self.vectors) ** 2, axis=0)
        cand = np.flatnonzero(w >= w.max() - 1e-9)
        return int(cand[np.argmax(self.frequencies[cand].real)])

    @property
    def bright(self) -> int:
        """Mode with the largest co-rotating ring content."""
        return self._richest(1)

    @property
    def dark(self) -> int:
        return self._richest(2)

    @property
    def splitting(self) -> float:
        return float(self.frequencies[self.bright].real - self.frequencies[self.dark].real)

    def winding(self, i: int) -> int:
        """Winding of the ring component that dominates mode ``i``."""
        w = np.abs(self.vectors[:3, i]) ** 2
        return (0, 1, -1)[int(np.argmax(w))]


def modes_at(params: YigCavityParams) -> CavityModeSet:
    H, loss = yig_hamiltonian(params)
    lam, V = np.linalg.eig(H - 0.5j * np.diag(loss))
    V = V / np.linalg.norm(V, axis=0)
    order = np.argsort(lam.real)
    return CavityModeSet(params.bias_field, lam[order], V[:, order], tuple(f"mode{i}" for i in range(4)))


def operating_splitting(params: YigCavityParams) -> float:
    return modes_at(params).splitting


@dataclass
class FieldSweep:
    fields: np.ndarray
    modes: list[CavityModeSet]  # labels follow each branch from its bare origin
    max_splitting: float
    max_field: float
    min_overlap: float

    def branch(self, label: str) -> np.ndarray:
        return np.array([m.frequency(label) for m in self.modes])

    def to_csv(self, path, angle_a: float = 0.0, angle_b: float = 45.0) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["B_mT", "mode", "frequency_MHz", "spin_fraction", "phase_deg"])
            for m in self.modes:
                for lab in m.labels:
                    i = m.index(lab)
                    w.writerow([repr(m.field), lab, repr(m.frequency(lab)), repr(m.weight(lab, "spin")),
                                repr(antenna_phase(m, i, angle_a, angle_b, differenced=True))])


def field_sweep(params: YigCavityParams, fields) -> FieldSweep:
    """Diagonalize across ``fields`` and follow each branch by eigenvector overlap.

    Branches are labelled by the bare mode they start from at the first field.
    The largest bright-dark splitting is refined between grid points.
    """
    fields = np.asarray(fields, dtype=float)
    if fields.ndim != 1 or len(fields) < 2 or not (np.all(np.diff(fields) > 0) or np.all(np.diff(fields) < 0)):
        raise ValueError("field range must be strictly monotone with at least two points")
    raw = [modes_at(params.with_field(b)) for b in fields]

    first = raw[0]
    perm = [int(np.argmax(np.abs(first.vectors[c]))) for c in range(4)]
    if len(set(perm)) != 4:
        perm = list(np.argmax(np.abs(first.vectors), axis=1))
    prev_vecs = first.vectors[:, perm]
    tracked = [CavityModeSet(first.field, first.frequencies[perm], prev_vecs, LABELS)]
    min_ov = 1.0
    for m in raw[1:]:
        ov = np.abs(prev_vecs.conj().T @ m.vectors)
        perm = _assign(ov)
        min_ov = min(min_ov, float(min(ov[i, perm[i]] for i in range(4))))
        prev_vecs = m.vectors[:, perm]
        tracked.append(CavityModeSet(m.field, m.frequencies[perm], prev_vecs, LABELS))

    split = np.array([m.splitting for m in raw])
    i = int(np.argmax(split))
    lo, hi = fields[max(i - 1, 0)], fields[min(i + 1, len(fields) - 1)]
    lo, hi = min(lo, hi), max(lo, hi)
    best_b, best = fields[i], split[i]
    if hi > lo:
        r = minimize_scalar(lambda b: -operating_splitting(params.with_field(b)), bounds=(lo, hi),
                            method="bounded", options={"xatol": 1e-6})
        if -r.fun > best:
            best_b, best = float(r.x), float(-r.fun)
    return FieldSweep(fields, tracked, float(best), float(best_b), min_ov)


def _assign(overlap: np.ndarray) -> list[int]:
    # greedy assignment by descending overlap; 4x4 so exhaustive matching is unnecessary
    perm = [-1] * overlap.shape[0]
    used = set()
    for flat in np.argsort(-overlap, axis=None):
        r, c = divmod(int(flat), overlap.shape[1])
        if perm[r] < 0 and c not in used:
            perm[r] = c
            used.add(c)
    return perm


def resonant_field(params: YigCavityParams) -> float:
    """Field at which the bare spin frequency meets the co-rotating ring mode."""
    return params.ring_frequencies()[1] / LARMOR_SLOPE


def calibrate_bright_coupling(params: YigCavityParams, target: float = SPLITTING_TARGET,
                              window: float = 60.0) -> YigCavityParams:
    """Return ``params`` with ``g_plus`` tuned so the largest splitting equals ``target``.

    The dark coupling keeps its ratio to ``g_plus`` when left at its default.
    """
    b0 = resonant_field(params)

    def peak(g):
        p = replace(params, g_plus=g)
        r = minimize_scalar(lambda b: -operating_splitting(p.with_field(b)),
                            bounds=(b0 - window, b0 + window), method="bounded", options={"xatol": 1e-7})
        return -r.fun

    g = brentq(lambda g: peak(g) - target, 0.2 * target, 2.0 * target, xtol=1e-9)
    return replace(params, g_plus=float(g))


def operating_field(params: YigCavityParams, target: float = OPERATING_FREQUENCY) -> float:
    """Field below resonance at which the bright branch sits at ``target``."""
    b0 = resonant_field(params)
    f = lambda b: modes_at(params.with_field(b)).frequencies[modes_at(params.with_field(b)).bright].real - target
    lo = b0 - 1e-6
    span = 4 * max(abs(params.g_plus), 1.0) / LARMOR_SLOPE
    if f(lo) < 0 or f(lo - span) > 0:
        raise ValueError(f"bright branch never reaches {target} MHz below resonance")
    return float(brentq(f, lo - span, lo, xtol=1e-9))


def two_mode_bright(params: YigCavityParams) -> complex:
    """Bright eigenfrequency of the spin plus co-rotating mode alone."""
    qp = params.ring_frequencies()[1]
    M = np.array([[qp - 0.5j * params.post_loss, params.g_plus],
                  [params.g_plus, params.larmor - 0.5j * params.spin_loss]])
    lam, V = np.linalg.eig(M)
    return complex(lam[int(np.argmax(np.abs(V[0]) ** 2))])


def antenna_phase(modes: CavityModeSet, index: int, angle_a: float, angle_b: float,
                  differenced: bool = False) -> float:
    """Transmission phase in degrees between antennas at two azimuths through one mode.

    A mode of winding ``w`` picks up ``w * (angle_b - angle_a)``.  The
    differenced value ``phase(S12) - phase(S21)`` equals ``-2 w (angle_b - angle_a)``
    wrapped to (-180, 180].
    """
    w = modes.winding(index)
    d = float(angle_b - angle_a)
    phase = -2 * w * d if differenced else w * d
    return float(np.degrees(wrap_angle(np.radians(phase))))


def check_band_guard(bandwidth: float, splitting: float, guard: float = BAND_GUARD) -> None:
    """Reject lattices whose band structure is wider than the chiral-mode splitting allows."""
    limit = min(guard, splitting)
    if bandwidth >= limit:
        raise ValueError(f"band structure spans {bandwidth:.1f} MHz, not inside the {limit:.1f} MHz "
                         "chiral-mode splitting")
