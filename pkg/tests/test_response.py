import json
from fractions import Fraction

import numpy as np
import pytest

from chernlattice.analysis import perimeter_path
from chernlattice.lattice import Gauge, build_hofstadter, to_hamiltonian
from chernlattice.response import (
    LossyModes, PortSpec, PulseSpec, SPECTRUM_HEADER, cw_steady_state, greens_column, lossy_modes,
    steady_state_map, time_evolve, transmission, write_spectra,
)
from oracles import ode_evolve

BANDS = [(9475.147, 9481.606), (9527.528, 9592.472), (9638.394, 9644.853)]
UPPER_GAP_CORE = (9601.6, 9629.2)


def test_single_site_resonance():
    H, loss = np.array([[9560.0 + 0j]]), np.array([3.2])
    g = greens_column(H, loss, 9560.0, 0)
    assert g[0] == pytest.approx(2 / (1j * 3.2))
    off = greens_column(H, loss, 9560.0 + 5 * 3.2, 0)
    assert abs(g[0]) / abs(off[0]) == pytest.approx(np.sqrt(1 + 100), rel=1e-12)


def test_two_sites_split_by_twice_hopping():
    t, kappa = 30.0, 0.5
    H = np.array([[9560, -t], [-t, 9560]], dtype=complex)
    f = np.linspace(9500, 9620, 24001)
    mag = np.array([abs(greens_column(H, np.full(2, kappa), w, 0)[1]) for w in f])
    inner = (f > 9520) & (f < 9600)
    peaks = f[1:-1][(mag[1:-1] > mag[:-2]) & (mag[1:-1] > mag[2:])]
    assert len(peaks) == 2 and inner.any()
    assert peaks[1] - peaks[0] == pytest.approx(2 * t, abs=0.02)


def test_eigen_route_matches_direct_solve(lattice):
    H, loss = to_hamiltonian(lattice)
    modes = LossyModes.from_matrix(H, loss)
    for w in (9480.0, 9560.0, 9622.0):
        assert np.allclose(modes.greens(w, 7), greens_column(H, loss, w, 7), rtol=1e-9, atol=1e-12)


def test_shared_cache_is_read_only(lattice):
    modes = lossy_modes(lattice)
    assert modes is lossy_modes(lattice)
    with pytest.raises(ValueError):
        modes.eigenvalues[0] = 0


def test_passivity_bound(lattice):
    f = np.arange(9450, 9700, 1.0)
    for a, b in [((5, 6), (6, 6)), ((1, 1), (1, 11))]:
        s = transmission(lattice, a, b, f).values
        assert np.all(np.isfinite(s)) and np.all(np.abs(s) <= 1)


def test_bulk_pair_shows_four_bands(lattice):
    f = np.arange(9450, 9700.01, 0.25)
    s = np.abs(transmission(lattice, (5, 6), (6, 6), f).values)
    peak = lambda lo, hi: s[(f >= lo) & (f <= hi)].max()
    dip = lambda lo, hi: s[(f > lo) & (f < hi)].min()
    lower, upper = dip(9481.606, 9527.528), dip(9592.472, 9638.394)
    band1, band23, band4 = peak(*BANDS[0]), peak(*BANDS[1]), peak(*BANDS[2])
    assert max(lower, upper) < 0.5 * min(band1, band23, band4)
    # the touching middle bands still show two maxima, one each side of the onsite frequency
    mid = (f > 9528) & (f < 9592)
    fm, sm = f[mid], s[mid]
    local = fm[1:-1][(sm[1:-1] > sm[:-2]) & (sm[1:-1] > sm[2:])]
    assert (local < 9560).any() and (local > 9560).any()


def test_edge_pair_gap_asymmetry(lattice):
    f = np.arange(9450, 9700, 0.5)
    s = np.abs(transmission(lattice, (1, 1), (1, 11), f).values)
    lower = s[(f > 9490) & (f < 9520)].mean()
    upper = s[(f > 9600) & (f < 9630)].mean()
    assert lower > 2 * upper


def test_reciprocity_without_flux():
    lat = build_hofstadter(11, 11, Fraction(0), 30, Gauge.LANDAU_X)
    f = np.arange(9440, 9680, 0.5)
    a = transmission(lat, (1, 1), (1, 11), f).values
    b = transmission(lat, (1, 1), (1, 11), f, reverse=True).values
    assert np.max(np.abs(a - b)) < 1e-12


def test_flux_breaks_reciprocity_most_strongly_in_gap(lattice):
    f = np.arange(9450, 9700, 0.25)
    fwd = np.abs(transmission(lattice, (1, 1), (3, 1), f).values)
    rev = np.abs(transmission(lattice, (1, 1), (3, 1), f, reverse=True).values)
    core = (f > UPPER_GAP_CORE[0]) & (f < UPPER_GAP_CORE[1])
    band = (f > 9530) & (f < 9590)
    assert np.all(fwd[core] > 2 * rev[core])
    ratio = np.abs(np.log(fwd / rev))
    assert np.median(ratio[core]) > 2 * np.median(ratio[band])


def test_port_validation(lattice):
    with pytest.raises(ValueError):
        transmission(lattice, (1, 1), (1, 1), [9600])
    with pytest.raises(ValueError):
        transmission(lattice, (1, 1), (12, 1), [9600])
    s = transmission(lattice, PortSpec((1, 1), 0.4), PortSpec((1, 2), 0.1), [9600.0]).values
    s0 = transmission(lattice, (1, 1), (1, 2), [9600.0]).values
    assert s == pytest.approx(2 * s0)


def test_edge_drive_map_is_chiral(lattice):
    m = steady_state_map(lattice, (1, 1), 9622.0)
    path = perimeter_path(11)
    ccw = np.array([abs(m[s.row - 1, s.col - 1]) for s in path[2:8]])
    cw = np.array([abs(m[s.row - 1, s.col - 1]) for s in path[::-1][1:7]])
    assert np.all(ccw > 2.5 * cw)


def test_off_resonant_drive_follows_perturbation_theory(lattice):
    for w in (10000.0, 13000.0):
        a = np.abs(steady_state_map(lattice, (6, 6), w))
        on = a[5, 5]
        a[5, 5] = 0
        assert a.max() / on == pytest.approx(30 / (w - 9560), rel=0.05)
    a = np.abs(steady_state_map(lattice, (6, 6), 13000.0))
    assert np.sort(a.ravel())[-2] / a[5, 5] < 1e-2


def test_spectrum_csv(tmp_path, lattice):
    tr = [transmission(lattice, (1, 1), (1, 11), [9600, 9601]),
          transmission(lattice, (1, 1), (1, 11), [9600, 9601], reverse=True)]
    write_spectra(tr, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].split(",") == SPECTRUM_HEADER and len(lines) == 5
    assert lines[3].endswith("1-1,1-11,b->a")


# -- time domain ------------------------------------------------------------

@pytest.fixture(scope="module")
def small():
    return build_hofstadter(4, 4)


def test_matches_adaptive_integrator(small):
    H, loss = to_hamiltonian(small)
    pulse = PulseSpec(9600.0, 20.0)
    times = np.arange(0.0, 120.0, 0.05)
    ours = time_evolve(small, (1, 1), pulse, times)
    ref = ode_evolve(H, loss, 0, pulse, times, 9600.0)
    assert np.max(np.abs(ours.envelopes - ref)) < 1e-4 * np.max(np.abs(ref))


def test_zero_pulse_gives_zero_trace(small):
    tr = time_evolve(small, (2, 2), PulseSpec(amplitude=0.0), np.arange(0, 300, 0.5))
    assert not np.any(tr.envelopes)


def test_linearity(small):
    times = np.arange(0, 300, 0.5)
    a = time_evolve(small, (1, 1), PulseSpec(amplitude=1.0), times)
    b = time_evolve(small, (1, 1), PulseSpec(amplitude=2.0), times)
    assert np.max(np.abs(b.envelopes - 2 * a.envelopes)) <= 1e-12 * np.max(np.abs(b.envelopes))


def test_norm_decays_within_loss_bounds(lattice):
    pulse = PulseSpec(9600.0, 20.0)
    times = np.arange(0.0, 400.0, 0.5)
    tr = time_evolve(lattice, (1, 1), pulse, times)
    norm = np.sum(np.abs(tr.envelopes) ** 2, axis=0)
    off = times > pulse.center + 4 * pulse.width
    n = norm[off]
    assert np.all(np.diff(n) <= 1e-12 * n[:-1])
    _, loss = to_hamiltonian(lattice)
    rate = -np.diff(np.log(n)) / 0.5
    assert rate.min() >= 2 * np.pi * loss.min() / 1000 * (1 - 1e-6)
    assert rate.max() <= 2 * np.pi * loss.max() / 1000 * (1 + 1e-6)


def test_envelopes_vanish_late(small):
    tr = time_evolve(small, (1, 1), PulseSpec(width=20.0), np.arange(0, 2000, 1.0))
    late = np.abs(tr.envelopes[:, -1]).max()
    assert late < 1e-6 * np.abs(tr.envelopes).max()


def test_nyquist_guard(lattice):
    with pytest.raises(ValueError, match="undersamples"):
        time_evolve(lattice, (1, 1), PulseSpec(9600.0), np.arange(0, 100, 12.0))
    with pytest.raises(ValueError, match="uniform"):
        time_evolve(lattice, (1, 1), PulseSpec(), np.array([0.0, 1.0, 3.0]))


@pytest.mark.parametrize("omega", [9478.0, 9505.0, 9545.0, 9600.0, 9622.0])
def test_long_cw_drive_reaches_greens_prediction(lattice, omega):
    pulse = PulseSpec(carrier=omega, envelope="cw")
    times = np.arange(0.0, 2500.0, 0.5)
    tr = time_evolve(lattice, (1, 1), pulse, times)
    final = tr.envelopes[:, -1]
    expect = cw_steady_state(lattice, (1, 1), omega)
    big = np.abs(expect) > 0.05 * np.abs(expect).max()
    assert np.max(np.abs(final[big] / expect[big] - 1)) < 0.01


def test_impulse_response_spectrum(small):
    fc = 9560.0
    pulse = PulseSpec(fc, 1.5, delay=0.0)
    dt = 0.05
    times = np.arange(0.0, 3000.0, dt)
    tr = time_evolve(small, (1, 1), pulse, times, probes=[(3, 4)])
    r = tr.envelopes[0]
    s = pulse(times)
    H, loss = to_hamiltonian(small)
    for w in (9500.0, 9540.0, 9560.0, 9590.0, 9620.0):
        kern = np.exp(2j * np.pi * (w - fc) * times / 1000)
        R, D = np.trapezoid(r * kern, times), np.trapezoid(s * kern, times)
        g = 2 * np.pi / 1000 / 1j * R / D
        expect = greens_column(H, loss, w, 0)[small.index((3, 4))]
        assert abs(g / expect - 1) < 0.01


def test_ndjson_layout(tmp_path, small):
    tr = time_evolve(small, (1, 1), PulseSpec(), np.arange(0, 10, 1.0), probes=[(1, 2), (2, 2)])
    tr.to_ndjson(tmp_path / "t.ndjson")
    recs = [json.loads(x) for x in (tmp_path / "t.ndjson").read_text().splitlines()]
    assert [r["site"] for r in recs] == [[1, 2], [2, 2]]
    assert len(recs[0]["time_ns"]) == len(recs[0]["re"]) == len(recs[0]["im"]) == 10
    assert recs[0]["drive"]["site"] == [1, 1] and recs[0]["drive"]["width_ns"] == 75.0


def test_pulse_spec_validation():
    with pytest.raises(ValueError):
        PulseSpec(width=0.0)
    with pytest.raises(ValueError):
        PulseSpec(envelope="square")
    p = PulseSpec(width=75.0, delay=10.0)
    assert p(p.center) == pytest.approx(1.0)
    assert p(p.center + 37.5) == pytest.approx(0.5)
