"""Named experiment pipelines and their config schema."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .analysis import (DISPERSION_WINDOW, backscatter_ratio, arrival_times, edge_dispersion, group_velocity,
                       is_monotonic, localization_length, path_slice, perimeter_path,
                       reconstruct_band_structure, ring_intensity, write_dispersion, LocalizationError,
                       NoFrontError)
from .lattice import (HOPPING_RANGE, Lattice, LatticeError, SiteId, lattice_from_config, lattice_to_config,
                      reference_lattice, wall_sites, with_disorder, with_wall)
from .response import PortSpec, PulseSpec, lossy_modes, steady_state_map, time_evolve, transmission, \
    write_spectra
from .spectral import BlochModel, band_gaps, bulk_bands, chern_number, strip_bands
from .yig import (BAND_GUARD, YigCavityParams, calibrate_bright_coupling, check_band_guard, field_sweep,
                  modes_at, operating_field, antenna_phase)

PRESETS = {"paper-11x11": reference_lattice}


class SchemaError(ValueError):
    """Config does not match the experiment schema."""


class PhysicsError(ValueError):
    """Config is well formed but describes an invalid physical setup."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Sweep(_Strict):
    start: float
    stop: float
    step: float = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.stop < self.start:
            raise ValueError("stop must not be below start")
        return self

    def values(self) -> np.ndarray:
        n = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(n)


Frequencies = Union[Sweep, list[float]]
Site = tuple[int, int]


def _freqs(f: Frequencies) -> np.ndarray:
    return f.values() if isinstance(f, Sweep) else np.asarray(f, dtype=float)


class SpectroscopyParams(_Strict):
    ports: list[tuple[Site, Site]] = [((5, 6), (6, 6)), ((1, 1), (1, 11))]
    frequencies: Frequencies = Sweep(start=9450, stop=9700, step=0.5)
    coupling_MHz: float = Field(0.1, gt=0)
    both_directions: bool = True


class SteadyStateParams(_Strict):
    drive: Site = (6, 6)
    frequencies: list[float] = [9622.0]
    localization_fit: bool = False


class PulseParams(_Strict):
    drive: Site = (1, 1)
    carrier_MHz: float = 9600.0
    width_ns: float = Field(75.0, gt=0)
    amplitude: float = 1.0
    delay_ns: float = 0.0
    t_stop_ns: float = Field(450.0, gt=0)
    dt_ns: float = Field(0.5, gt=0)
    probes: Literal["perimeter", "all"] = "perimeter"


class WallParams(PulseParams):
    width_ns: float = Field(50.0, gt=0)
    t_stop_ns: float = Field(500.0, gt=0)
    probes: Literal["perimeter", "all"] = "all"
    wall_column: int = 6
    gap_row: int = 6
    wall_detuning_MHz: float = 500.0


class DispersionParams(_Strict):
    drive: Site = (1, 1)
    frequencies: Frequencies = Sweep(start=9596, stop=9634, step=1)
    window: tuple[int, int] = DISPERSION_WINDOW
    mode: Literal["single", "differenced"] = "single"


class BandTheoryParams(_Strict):
    grid: int = Field(64, ge=4)
    strip_width: int = Field(11, ge=1)
    strip_k_points: int = Field(401, ge=2)


class ChernParams(_Strict):
    grids: list[int] = [16, 64]
    groups: list[list[int]] = [[1], [2, 3], [4]]


class YigParams(_Strict):
    field_start_mT: float = 250.0
    field_stop_mT: float = 400.0
    field_step_mT: float = Field(0.5, gt=0)
    calibrate: bool = True
    target_splitting_MHz: float = 446.0
    g_plus_MHz: float = 446.0
    g_minus_MHz: float | None = None
    doublet_MHz: float = 9160.0
    spin_loss_MHz: float = Field(1.0, ge=0)
    post_loss_MHz: float = Field(3.2, ge=0)
    antenna_angles_deg: tuple[float, float] = (0.0, 45.0)


class ReconstructParams(_Strict):
    drive: Site = (6, 6)
    frequencies: Frequencies = Sweep(start=9460, stop=9660, step=1)
    axis: Literal["col", "row"] = "col"


PARAMS: dict[str, type[_Strict]] = {
    "spectroscopy": SpectroscopyParams,
    "steady_state_map": SteadyStateParams,
    "pulse": PulseParams,
    "wall_pulse": WallParams,
    "dispersion": DispersionParams,
    "band_theory": BandTheoryParams,
    "chern": ChernParams,
    "yig_sweep": YigParams,
    "reconstruct_bands": ReconstructParams,
}

DESCRIPTIONS = {
    "spectroscopy": "transmission spectra between bulk and edge port pairs, with both directions",
    "steady_state_map": "steady-state response maps for a single driven site, optional localization fit",
    "pulse": "spatio-temporal trace of an edge pulse circling the perimeter",
    "wall_pulse": "edge pulse meeting a detuned wall that leaves one connecting cavity",
    "dispersion": "edge momentum versus frequency from the phase gradient along one side",
    "band_theory": "bulk magnetic bands, band gaps and the strip spectrum with edge weights",
    "chern": "Chern integers per band or touching band group on several grids",
    "yig_sweep": "bias-field sweep of the YIG-loaded chiral cavity with antenna phases",
    "reconstruct_bands": "band density from spatial Fourier transforms of bulk-driven maps",
}


class ExperimentConfig(_Strict):
    scenario: str
    lattice: Union[str, dict[str, Any]] = "paper-11x11"
    parameters: dict[str, Any] = {}
    output_dir: str | None = None
    seed: int | None = None
    disorder_MHz: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _known(self):
        if self.scenario not in PARAMS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose one of {sorted(PARAMS)}")
        if isinstance(self.lattice, str) and self.lattice not in PRESETS:
            raise ValueError(f"unknown lattice preset {self.lattice!r}; choose one of {sorted(PRESETS)}")
        return self


def _format(err: ValidationError, prefix: str = "") -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in (prefix, *e["loc"]) if x != "")
        lines.append(f"{loc or '<root>'}: {e['msg']}")
    return "; ".join(lines)


class Plan:
    """A validated experiment: config, parameter model and lattice, ready to run."""

    def __init__(self, config: ExperimentConfig, params: _Strict, lattice: Lattice):
        self.config = config
        self.params = params
        self.lattice = lattice

    def describe(self) -> dict:
        return {"scenario": self.config.scenario,
                "lattice": lattice_to_config(self.lattice),
                "parameters": json.loads(self.params.model_dump_json()),
                "seed": self.config.seed,
                "disorder_MHz": self.config.disorder_MHz}


def validate(doc: dict, seed: int | None = None) -> Plan:
    """Schema and physics validation.  Nothing is computed or written."""
    try:
        cfg = ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise SchemaError(_format(exc)) from None
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    try:
        params = PARAMS[cfg.scenario].model_validate(cfg.parameters)
    except ValidationError as exc:
        raise SchemaError(_format(exc, "parameters")) from None
    try:
        lattice = PRESETS[cfg.lattice]() if isinstance(cfg.lattice, str) else \
            lattice_from_config(cfg.lattice, check_hopping_range=False)
    except (LatticeError, KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"lattice: {exc}") from None
    if cfg.disorder_MHz > 0:
        lattice = with_disorder(lattice, cfg.disorder_MHz, cfg.seed)
    plan = Plan(cfg, params, lattice)
    _check_physics(plan)
    return plan


def _check_sites(plan: Plan, *sites):
    for s in sites:
        if not plan.lattice.contains(_site(s)):
            raise SchemaError(f"parameters: site {list(s)} is outside the {plan.lattice.ny}x{plan.lattice.nx} lattice")


def _site(s):
    return SiteId.coerce(s)


def _check_physics(plan: Plan) -> None:
    L, p, name = plan.lattice, plan.params, plan.config.scenario
    lo, hi = HOPPING_RANGE
    if not lo <= L.hopping <= hi:
        raise PhysicsError(f"hopping {L.hopping} MHz outside the tunable coupler range [{lo}, {hi}]")
    iv = bulk_bands(_model(L), 16).intervals()
    bandwidth = max(b for _, b in iv) - min(a for a, _ in iv)
    try:
        check_band_guard(bandwidth, BAND_GUARD)
    except ValueError as exc:
        raise PhysicsError(str(exc)) from None
    if name == "spectroscopy":
        for a, b in p.ports:
            _check_sites(plan, a, b)
            if tuple(a) == tuple(b):
                raise SchemaError("parameters.ports: a port pair must use two distinct sites")
    if hasattr(p, "drive"):
        _check_sites(plan, p.drive)
    if name in ("pulse", "wall_pulse"):
        modes = lossy_modes(_pulse_lattice(plan))
        detune = float(np.max(np.abs(modes.eigenvalues.real - p.carrier_MHz)))
        if detune * p.dt_ns / 1000 >= 0.5:
            raise PhysicsError(f"parameters.dt_ns={p.dt_ns} undersamples modes {detune:.0f} MHz from the carrier")
    if name == "steady_state_map" and p.localization_fit:
        s = _site(p.drive)
        if min(s.row - 1, s.col - 1, L.ny - s.row, L.nx - s.col) < 3:
            raise PhysicsError("localization fit needs the drive at least 3 sites from every edge")
    if name == "dispersion":
        first, last = p.window
        if not 1 <= first < last <= 2 * (L.nx + L.ny) - 4:
            raise SchemaError(f"parameters.window {list(p.window)} is not a range of perimeter indices")
    if name == "chern" and any(g < 4 for g in p.grids):
        raise SchemaError("parameters.grids: every grid needs at least 4 points per axis")


def _pulse_lattice(plan: Plan) -> Lattice:
    p = plan.params
    if isinstance(p, WallParams):
        return with_wall(plan.lattice, p.wall_column, p.gap_row, p.wall_detuning_MHz)
    return plan.lattice


def _model(lattice: Lattice) -> BlochModel:
    return BlochModel(lattice.flux, lattice.hopping, lattice.defaults.frequency)


def _json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _map(fn: Callable, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- pipelines: each returns the list of files it wrote ---------------------

def _spectroscopy(plan: Plan, out: Path, workers: int) -> list[Path]:
    p, L = plan.params, plan.lattice
    f = _freqs(p.frequencies)
    lossy_modes(L)  # build the shared cache before fanning out

    def pair(ab):
        a, b = PortSpec(ab[0], p.coupling_MHz), PortSpec(ab[1], p.coupling_MHz)
        tr = [transmission(L, a, b, f)]
        if p.both_directions:
            tr.append(transmission(L, a, b, f, reverse=True))
        return tr

    traces = [t for ts in _map(pair, p.ports, workers) for t in ts]
    path = out / "spectra.csv"
    write_spectra(traces, path)
    return [path]


def _steady_state(plan: Plan, out: Path, workers: int) -> list[Path]:
    p, L = plan.params, plan.lattice
    maps = _map(lambda w: steady_state_map(L, p.drive, w), p.frequencies, workers)
    path = out / "site_maps.csv"
    with open(path, "w") as fh:
        fh.write("frequency_MHz,row,col,re,im,mag\n")
        for w, m in zip(p.frequencies, maps):
            for r in range(L.ny):
                for c in range(L.nx):
                    v = m[r, c]
                    fh.write(f"{w!r},{r + 1},{c + 1},{float(v.real)!r},{float(v.imag)!r},{float(abs(v))!r}\n")
    files = [path]
    if p.localization_fit:
        fits = {}
        for w, m in zip(p.frequencies, maps):
            try:
                loc = localization_length(m, p.drive)
                fits[repr(w)] = {"length_sites": loc.length, "r2": loc.r2}
            except LocalizationError as exc:
                fits[repr(w)] = {"error": str(exc)}
        files.append(out / "localization.json")
        _json(files[-1], fits)
    return files


def _pulse(plan: Plan, out: Path, workers: int) -> list[Path]:
    p = plan.params
    L = _pulse_lattice(plan)
    pulse = PulseSpec(p.carrier_MHz, p.width_ns, p.amplitude, p.delay_ns)
    times = np.arange(0.0, p.t_stop_ns + p.dt_ns / 2, p.dt_ns)
    ring = perimeter_path(L.ny, L.nx)
    probes = ring if p.probes == "perimeter" else None
    tr = time_evolve(L, p.drive, pulse, times, probes)
    trace_path = out / "trace.ndjson"
    tr.to_ndjson(trace_path)
    summary: dict[str, Any] = {}
    if isinstance(p, WallParams):
        tr_all = tr if probes is None else time_evolve(L, p.drive, pulse, times)
        left = perimeter_path(range(1, L.ny + 1), range(1, p.wall_column))
        right = [s for s in tr_all.probes if s.col > p.wall_column]
        if _site(p.drive) == left[0]:
            fwd = ring_intensity(tr_all, path_slice(left, 2, 11))
            summary["first_ring_backscatter"] = backscatter_ratio(tr_all, left)
            summary["second_ring_relative_intensity"] = ring_intensity(tr_all, right) / fwd
        summary["wall_sites"] = [s.as_list() for s in wall_sites(L, p.wall_column, p.gap_row)]
    elif _site(p.drive) == ring[0]:
        try:
            v = group_velocity(tr, ring)
            summary["group_velocity_sites_per_ns"] = v.velocity
            summary["group_velocity_uncertainty"] = v.uncertainty
        except NoFrontError as exc:
            summary["group_velocity_error"] = str(exc)
        t = arrival_times(tr, ring)
        summary["arrival_ns"] = [float(x) for x in t]
        summary["arrival_strictly_monotonic"] = is_monotonic(t)
        summary["backscatter_ratio"] = backscatter_ratio(tr, ring)
    summary_path = out / "summary.json"
    _json(summary_path, summary)
    return [trace_path, summary_path]


def _dispersion(plan: Plan, out: Path, workers: int) -> list[Path]:
    p, L = plan.params, plan.lattice
    sites = path_slice(perimeter_path(L.ny, L.nx), *p.window)
    f = _freqs(p.frequencies)
    lossy_modes(L)
    pts = _map(lambda w: edge_dispersion(L, p.drive, sites, [w], p.mode, max_residual=None)[0], f, workers)
    path = out / "dispersion.csv"
    write_dispersion(pts, path)
    return [path]


def _band_theory(plan: Plan, out: Path, workers: int) -> list[Path]:
    p = plan.params
    model = _model(plan.lattice)
    bulk = bulk_bands(model, p.grid)
    strip = strip_bands(model, p.strip_width, p.strip_k_points)
    files = [out / "bulk_bands.csv", out / "strip_bands.csv", out / "gaps.csv"]
    bulk.to_csv(files[0])
    strip.to_csv(files[1])
    band_gaps(bulk).to_csv(files[2])
    return files


def _chern(plan: Plan, out: Path, workers: int) -> list[Path]:
    p = plan.params
    model = _model(plan.lattice)
    result = {"flux": f"{model.flux.numerator}/{model.flux.denominator}", "groups": []}
    for g in p.groups:
        per_grid = {}
        for n in p.grids:
            try:
                per_grid[str(n)] = chern_number(model, g, n)
            except ValueError as exc:
                per_grid[str(n)] = {"error": str(exc)}
        result["groups"].append({"bands": g, "chern": per_grid})
    path = out / "chern.json"
    _json(path, result)
    return [path]


def _yig(plan: Plan, out: Path, workers: int) -> list[Path]:
    p = plan.params
    params = YigCavityParams(post_frequency=p.doublet_MHz - 1000.0 / 3, g_plus=p.g_plus_MHz,
                             g_minus=p.g_minus_MHz, spin_loss=p.spin_loss_MHz, post_loss=p.post_loss_MHz)
    if p.calibrate:
        params = calibrate_bright_coupling(params, p.target_splitting_MHz)
    fields = np.arange(p.field_start_mT, p.field_stop_mT + p.field_step_mT / 2, p.field_step_mT)
    sweep = field_sweep(params, fields)
    a, b = p.antenna_angles_deg
    csv_path = out / "yig_sweep.csv"
    sweep.to_csv(csv_path, a, b)
    summary = {"g_plus_MHz": params.g_plus, "g_minus_MHz": params.dark_coupling,
               "max_splitting_MHz": sweep.max_splitting, "max_splitting_field_mT": sweep.max_field,
               "min_tracking_overlap": sweep.min_overlap}
    try:
        b_op = operating_field(params)
        m = modes_at(params.with_field(b_op))
        summary["operating_field_mT"] = b_op
        summary["operating_splitting_MHz"] = m.splitting
        summary["differenced_phase_deg"] = {
            "bright": antenna_phase(m, m.bright, a, b, True),
            "dark": antenna_phase(m, m.dark, a, b, True),
            "q0": antenna_phase(m, int(np.argmax(np.abs(m.vectors[0]))), a, b, True),
        }
    except ValueError as exc:
        summary["operating_point_error"] = str(exc)
    json_path = out / "yig_summary.json"
    _json(json_path, summary)
    return [csv_path, json_path]


def _reconstruct(plan: Plan, out: Path, workers: int) -> list[Path]:
    p = plan.params
    dens = reconstruct_band_structure(plan.lattice, p.drive, _freqs(p.frequencies), p.axis)
    return [Path(x) for x in dens.save(out / "band_density")]


PIPELINES: dict[str, Callable[[Plan, Path, int], list[Path]]] = {
    "spectroscopy": _spectroscopy,
    "steady_state_map": _steady_state,
    "pulse": _pulse,
    "wall_pulse": _pulse,
    "dispersion": _dispersion,
    "band_theory": _band_theory,
    "chern": _chern,
    "yig_sweep": _yig,
    "reconstruct_bands": _reconstruct,
}


def list_scenarios() -> list[str]:
    return [f"{name}: {DESCRIPTIONS[name]}" for name in PARAMS]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(plan: Plan, output_dir: str | os.PathLike | None = None, workers: int = 1) -> dict:
    """Execute a validated plan and write ``manifest.json`` next to its outputs."""
    out = Path(output_dir or plan.config.output_dir or f"runs/{plan.config.scenario}")
    out.mkdir(parents=True, exist_ok=True)
    files = PIPELINES[plan.config.scenario](plan, out, max(1, int(workers)))
    manifest = {
        "scenario": plan.config.scenario,
        "description": DESCRIPTIONS[plan.config.scenario],
        "code_version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": plan.describe(),
        "files": [{"path": f.name, "bytes": f.stat().st_size, "sha256": _sha256(f)} for f in files],
    }
    _json(out / "manifest.json", manifest)
    return manifest


def export_preset(name: str, scenario: str = "pulse") -> dict:
    """Full experiment document with the preset lattice expanded for editing."""
    if name not in PRESETS:
        raise SchemaError(f"unknown preset {name!r}; choose one of {sorted(PRESETS)}")
    if scenario not in PARAMS:
        raise SchemaError(f"unknown scenario {scenario!r}; choose one of {sorted(PARAMS)}")
    return {"scenario": scenario,
            "lattice": lattice_to_config(PRESETS[name]()),
            "parameters": json.loads(PARAMS[scenario]().model_dump_json()),
            "seed": None,
            "disorder_MHz": 0.0}
