"""End-to-end checks of the twelve acceptance criteria at their stated tolerances.

Each test emits one ``PASS criterion N`` / ``FAIL criterion N`` line, collected
in an ``acceptance criteria`` section of the pytest summary.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from chernlattice.analysis import (
    LocalizationError, arrival_times, backscatter_ratio, edge_dispersion, group_velocity,
    localization_length, perimeter_path, reconstruct_band_structure, ring_intensity,
)
from chernlattice.lattice import Gauge, build_hofstadter, plaquette_corners, plaquette_flux, to_hamiltonian
from chernlattice.response import PulseSpec, cw_steady_state, steady_state_map, time_evolve, transmission
from chernlattice.spectral import (
    BlochModel, band_gaps, bulk_bands, chern_number, chiral_cell_hamiltonian, edge_branch, fold_momentum,
)
from chernlattice.yig import YigCavityParams, antenna_phase, calibrate_bright_coupling, field_sweep, modes_at, \
    operating_field
from oracles import allowed_momenta, fukui_single_band, periodic_cell_bloch, plane_wave_momenta


def test_criterion_1_flux(lattice, landau_lattice, verdict):
    devs = [abs(plaquette_flux(L, c) - math.pi / 2) for L in (lattice, landau_lattice)
            for c in plaquette_corners(L)]
    verdict(1, len(devs) == 200 and max(devs) < 1e-12,
            f"{len(devs)} plaquettes over two gauges, max |flux - pi/2| = {max(devs):.1e}")


def test_criterion_2_gauge_equivalence(lattice, landau_lattice, verdict):
    a = np.linalg.eigvalsh(to_hamiltonian(lattice)[0])
    b = np.linalg.eigvalsh(to_hamiltonian(landau_lattice)[0])
    rel = float(np.max(np.abs(a - b) / np.abs(b)))
    verdict(2, a.size == 121 and rel < 1e-9, f"121 eigenvalues, max relative difference {rel:.1e}")


def test_criterion_3_bands_and_gaps(verdict):
    m = BlochModel(Fraction(1, 4), 30.0, 9560.0)
    bands = bulk_bands(m, 64)
    rep = band_gaps(bands)
    (a, b), (c, d) = rep.gaps if len(rep.gaps) == 2 else ((0, 0), (0, 0))
    symmetric = abs((a + d) / 2 - 9560) < 1e-6 and abs((b + c) / 2 - 9560) < 1e-6
    inside = rep.contains(9600.0) and rep.contains(9622.0) and c < 9600 < d
    fine = bulk_bands(m, 128).energies
    touch = float(np.min(fine[:, 2] - fine[:, 1]))
    ok = len(bands.intervals()) == 4 and len(rep.gaps) == 2 and symmetric and inside and touch < 1e-4 * 30
    verdict(3, ok, f"4 bands, gaps [{a:.2f}, {b:.2f}] and [{c:.2f}, {d:.2f}] MHz, "
                   f"9600/9622 in upper gap: {inside}, band 2-3 min gap {touch:.1e} MHz")


def test_criterion_4_chern(verdict):
    m = BlochModel()
    results = {n: (chern_number(m, 1, n), chern_number(m, [2, 3], n), chern_number(m, 4, n)) for n in (16, 32, 64)}
    hk = lambda i, j: periodic_cell_bloch(4, 0.25, 30.0, 9560.0, 2 * np.pi * i / (4 * 32), 2 * np.pi * j / 32)
    oracle = (fukui_single_band(hk, 0, 32), None, fukui_single_band(hk, 3, 32))
    stable = len(set(results.values())) == 1
    c = results[64]
    ok = stable and c == (1, -2, 1) and sum(c) == 0 and (oracle[0], oracle[2]) == (c[0], c[2])
    verdict(4, ok, f"Chern (band 1, bands 2+3, band 4) = {c} on 16/32/64 grids, oracle outer bands "
                   f"{oracle[0]}, {oracle[2]}")


def test_criterion_5_edge_dispersion(lattice, verdict):
    lo, hi = band_gaps(bulk_bands(BlochModel(), 64)).gaps[1]
    core = (lo + 0.2 * (hi - lo), hi - 0.2 * (hi - lo))
    freqs = np.linspace(*core, 15)
    pts = edge_dispersion(lattice, (1, 1), frequencies=freqs)
    dev = max(abs(float(fold_momentum(p.momentum - fold_momentum(edge_branch(BlochModel(), 11, p.frequency).k))))
              for p in pts)
    k9610 = abs(np.degrees(edge_dispersion(lattice, (1, 1), frequencies=[9610.0])[0].momentum))
    ok = dev < 0.05 * math.pi and abs(k9610 - 54) <= 10
    verdict(5, ok, f"max deviation from strip edge branch over {core[0]:.1f}-{core[1]:.1f} MHz "
                   f"{math.degrees(dev):.2f} deg (limit 9), |k(9610)| = {k9610:.1f} deg/site")


def test_criterion_6_group_velocity(pulse_trace, ring, verdict):
    g = group_velocity(pulse_trace, ring)
    theory = edge_branch(BlochModel(), 11, 9600.0).velocity
    ok = abs(g.velocity - 0.32) <= 0.04 and abs(g.velocity / theory - 1) <= 0.1
    verdict(6, ok, f"velocity {g.velocity:.3f} +- {g.uncertainty:.3f} sites/ns, strip dw/dk {theory:.3f}")


def test_criterion_7_chirality(lattice, pulse_trace, ring, verdict):
    t = arrival_times(pulse_trace, ring[1:])
    step = np.diff(t)
    one_sense = bool(np.all(step > 0) or np.all(step < 0))
    back = backscatter_ratio(pulse_trace, ring)
    free = build_hofstadter(11, 11, Fraction(0), 30.0, Gauge.LANDAU_X)
    f = np.arange(9400.0, 9720.0, 0.5)
    recip = max(float(np.max(np.abs(transmission(free, a, b, f).values - transmission(free, a, b, f, reverse=True).values)))
                for a, b in [((1, 1), (1, 11)), ((5, 6), (6, 6)), ((1, 1), (11, 11))])
    bad = [(i + 2, round(float(s), 2)) for i, s in enumerate(step) if s <= 0]
    ok = one_sense and back < 0.05 and recip < 1e-12
    verdict(7, ok, f"arrival order monotonic: {one_sense} (non-increasing steps at path index {bad}), "
                   f"counter-rotating/forward {back:.3f}, zero-flux |S12 - S21| max {recip:.1e}")


def test_criterion_8_bulk_insulation(lattice, verdict):
    loc = localization_length(steady_state_map(lattice, (6, 6), 9630.0), (6, 6), min_r2=0.95)
    refused = []
    for w in (9530.0, 9560.0):
        try:
            localization_length(steady_state_map(lattice, (6, 6), w), (6, 6), min_r2=0.95)
            refused.append(False)
        except LocalizationError:
            refused.append(True)
    verdict(8, loc.r2 > 0.95 and all(refused),
            f"9630 MHz decay length {loc.length:.2f} sites, R^2 {loc.r2:.3f}; in-band fits refused: {refused}")


def test_criterion_9_cw_oracle(lattice, verdict):
    freqs = [9478.0, 9505.0, 9545.0, 9600.0, 9622.0]
    worst_mag = worst_ph = 0.0
    times = np.arange(0.0, 2500.0, 0.5)
    for w in freqs:
        final = time_evolve(lattice, (1, 1), PulseSpec(w, envelope="cw"), times).envelopes[:, -1]
        expect = cw_steady_state(lattice, (1, 1), w)
        big = np.abs(expect) > 0.05 * np.abs(expect).max()
        r = final[big] / expect[big]
        worst_mag = max(worst_mag, float(np.max(np.abs(np.abs(r) - 1))))
        worst_ph = max(worst_ph, float(np.max(np.abs(np.angle(r)))))
    verdict(9, worst_mag < 0.01 and worst_ph < 0.01,
            f"5 frequencies, max magnitude error {worst_mag:.1e}, max phase error {worst_ph:.1e} rad")


def test_criterion_10_wall(wall_trace, verdict):
    left = perimeter_path(range(1, 12), range(1, 6))
    right = perimeter_path(range(1, 12), range(7, 12))
    forward = ring_intensity(wall_trace, left[1:11])
    second = ring_intensity(wall_trace, right) / forward
    back = backscatter_ratio(wall_trace, left)
    verdict(10, second > 1e-3 and back < 0.05,
            f"second-ring peak intensity {second:.3f} of forward, first-ring counter-rotating {back:.3f}")


def test_criterion_11_yig(verdict):
    p = calibrate_bright_coupling(YigCavityParams())
    sweep = field_sweep(p, np.arange(250.0, 400.0, 0.5))
    m = modes_at(p.with_field(operating_field(p)))
    q0 = int(np.argmin(m.frequencies.real))
    ph = [antenna_phase(m, i, 0.0, 45.0, differenced=True) for i in (m.bright, m.dark, q0)]
    ok = abs(sweep.max_splitting - 446) <= 1 and all(abs(a - b) <= 1 for a, b in zip(ph, (-90, 90, 0)))
    verdict(11, ok, f"max splitting {sweep.max_splitting:.2f} MHz at {sweep.max_field:.2f} mT, "
                    f"bright/dark/q0 phases {ph[0]:.1f}/{ph[1]:.1f}/{ph[2]:.1f} deg")


def test_criterion_12_band_reconstruction(lattice, verdict):
    iv = bulk_bands(BlochModel(), 128).intervals()
    f = np.arange(9460.0, 9661.0, 1.0)
    f = f[[any(a <= w <= b for a, b in iv) for w in f]]
    ridge = reconstruct_band_structure(lattice, (6, 6), f).ridge()
    table = plane_wave_momenta(chiral_cell_hamiltonian)
    hits = []
    for w, k in zip(f, ridge):
        a = allowed_momenta(table, w)
        hits.append(a.size > 0 and float(np.min(np.abs(np.angle(np.exp(1j * (a - k)))))) <= 2 * np.pi / 11 + 1e-9)
    frac = float(np.mean(hits))
    verdict(12, frac >= 0.9, f"ridge on a theory band at {sum(hits)}/{len(hits)} in-band frequencies ({frac:.0%})")
