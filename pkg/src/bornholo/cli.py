"""Command-line pipeline: simulate, reconstruct, analyze, compare.

Every command reads one strict JSON config (optionally expanded from a named
preset), writes its artifacts into --out, and finishes by digesting them into
manifest.json. With a fixed seed and one FFT thread, reruns produce
byte-identical numeric outputs; PNG renders are for inspection only.

Exit codes: 0 success, 1 config/validation problem, 2 runtime failure.
"""

import argparse
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import presets
from .errors import BornHoloError, ConfigError
from .fileio import (
    Field,
    export_png,
    grid_from_metadata,
    read_volume,
    validate_config,
    write_cost_history,
    write_manifest,
    write_volume,
)
from .forward import (
    FORWARD_MODES,
    ForwardConfig,
    extract_scattered,
    internal_field,
    synthesize_hologram,
)
from .grid import Hologram2D, PhysicalGrid, make_grid
from .phantom_analysis import (
    ParticleSet,
    PhantomSpec,
    convergence_metric,
    count_particles,
    depth_binned_recall,
    generate_phantom,
    match_particles,
    particles_for_density,
    rasterize_particles,
    snr_db,
)
from .propagation import build_kernels, set_fft_workers
from .solver import SolverConfig, bpm_reconstruct, calibrate_tau, reconstruct

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

log = logging.getLogger("born-holo")

DENSITY_SWEEP = (0.01, 0.02, 0.05, 0.1, 0.2, 0.4)


# --- config schema --------------------------------------------------------------

_GRID = {
    "nx": Field(int), "ny": Field(int), "nz": Field(int),
    "dx": Field(float), "dy": Field(float), "dz_voxel": Field(float),
    "slice_spacing": Field(float), "z0": Field(float),
    "lambda_vacuum": Field(float), "n_medium": Field(float), "na": Field(float),
}

_PHANTOM = {
    "layout": Field(str, "random", choices=("random", "occlusion")),
    "delta_n": Field(float, 0.19),
    "density": Field((float, list, type(None)), None),
    "n_particles": Field((int, type(None)), None),
    "radius": Field(float, 0.5e-6),
    "min_separation": Field((float, type(None)), None),
}

_FORWARD = {
    "order_K": Field(int, 10),
    "mode": Field(str, "full", choices=FORWARD_MODES),
    "include_self_interference": Field(bool, True),
    "noise_sigma": Field(float, 0.0),
    "save_internal": Field(bool, False),
}

_SOLVER = {
    "method": Field(str, "born", choices=("born", "bpm")),
    "order_K": Field(int, 1),
    "mode": Field(str, "full", choices=FORWARD_MODES),
    "tau": Field((float, type(None)), None),
    "tau_rel": Field(float, 1e-3),
    "axial_weight": Field(float, 1.0),
    "isotropic": Field(bool, True),
    "tv_inner_iters": Field(int, 10),
    "max_iters": Field(int, 150),
    "stop_tol": Field(float, 1e-6),
    "nonneg": Field(bool, True),
    "snapshot_iters": Field(list, []),
    "background_divide": Field(bool, False),
}

_ANALYSIS = {
    "threshold_rel": Field(float, 0.2),
    "min_voxels": Field(int, 2),
    "particle_radius": Field(float, 0.5e-6),
    "tol_lateral": Field(float, 1.0e-6),
    "tol_axial": Field(float, 7.5e-6),
    "depth_bins": Field(int, 4),
    "slice_pngs": Field(list, []),
}

_COMPARE = {
    "delta_n": Field(list, []),
    "density": Field(list, []),
    "methods": Field(list, ["born"]),
    "orders": Field(list, [1, 2]),
}

_IO = {
    "precision": Field(str, "complex128",
                       choices=("complex128", "complex64")),
}

_INPUTS = {
    "hologram": Field((str, type(None)), None),
    "volume": Field((str, type(None)), None),
    "truth_volume": Field((str, type(None)), None),
    "truth_particles": Field((str, type(None)), None),
}

_COMMON = {
    "preset": Field((str, type(None)), None),
    "seed": Field(int, 0),
    "out": Field((str, type(None)), None),
    "io": _IO,
}

_SECTIONS = {
    "grid": _GRID, "phantom": _PHANTOM, "forward": _FORWARD,
    "solver": _SOLVER, "analysis": _ANALYSIS, "compare": _COMPARE,
    "inputs": _INPUTS,
}

_CMD_SECTIONS = {
    "simulate": ("grid", "phantom", "forward"),
    "reconstruct": ("grid", "solver", "inputs"),
    "analyze": ("analysis", "inputs"),
    "compare": ("grid", "phantom", "forward", "solver", "analysis", "compare"),
}


def schema_for(command: str) -> dict:
    schema = dict(_COMMON)
    for name in _CMD_SECTIONS[command]:
        schema[name] = _SECTIONS[name]
    return schema


# --- presets --------------------------------------------------------------------

def _grid_dict(g: PhysicalGrid) -> dict:
    return {"nx": g.nx, "ny": g.ny, "nz": g.nz, "dx": g.dx, "dy": g.dy,
            "dz_voxel": g.dz_voxel, "slice_spacing": g.slice_spacing,
            "z0": g.z0, "lambda_vacuum": g.lambda_vacuum,
            "n_medium": g.n_medium, "na": g.na}


def _fig5_preset(delta_n: float) -> dict:
    return {
        "grid": _grid_dict(presets.density_grid()),
        "phantom": {"layout": "random", "delta_n": delta_n,
                    "density": list(DENSITY_SWEEP)},
        "forward": {"order_K": 20, "include_self_interference": False},
        "solver": {"method": "born", "order_K": 2, "tau_rel": 3e-3,
                   "max_iters": 300, "stop_tol": 1e-6},
        "analysis": {"threshold_rel": 0.2, "min_voxels": 2,
                     "tol_lateral": 1.0e-6, "tol_axial": 7.5e-6},
        "compare": {"delta_n": [delta_n], "density": list(DENSITY_SWEEP),
                    "methods": ["born"], "orders": [1, 2]},
    }


def preset_config(name: str) -> dict:
    """Full config fragment for a named canned experiment."""
    if name == "fig4":
        return {
            "grid": _grid_dict(presets.occlusion_grid()),
            "phantom": {"layout": "occlusion", "delta_n": 0.19},
            "forward": {"order_K": 10, "include_self_interference": False},
            "solver": {"method": "born", "order_K": 3, "tau_rel": 0.01,
                       "max_iters": 100, "stop_tol": 1e-6},
            "analysis": {"threshold_rel": 0.2},
        }
    if name == "fig5-weak":
        return _fig5_preset(presets.WEAK_INDEX - presets.MEDIUM_INDEX)
    if name == "fig5-strong":
        return _fig5_preset(presets.STRONG_INDEX - presets.MEDIUM_INDEX)
    if name.startswith("backscatter-"):
        case = name[len("backscatter-"):]
        if case in presets.BACKSCATTER_CASES:
            delta_n, density = presets.BACKSCATTER_CASES[case]
            return {
                "grid": _grid_dict(presets.backscatter_grid()),
                "phantom": {"layout": "random", "delta_n": delta_n,
                            "density": density},
                "forward": {"order_K": 10,
                            "include_self_interference": False},
            }
    known = ["fig4", "fig5-weak", "fig5-strong"] + \
            [f"backscatter-{c}" for c in sorted(presets.BACKSCATTER_CASES)]
    raise ConfigError(f"preset: unknown preset {name!r}; known: {known}")


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_run_config(path, command: str) -> dict:
    """Load, expand the preset if any, then strictly validate.

    The preset fills in defaults underneath the user's document, so a
    preset run can omit sections the schema otherwise requires while any
    explicitly given key still wins.
    """
    schema = schema_for(command)
    try:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from None
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: expected a JSON object at the top level")
    name = user.get("preset")
    if name is not None:
        if not isinstance(name, str):
            raise ConfigError("preset: expected a string")
        base = {k: v for k, v in preset_config(name).items() if k in schema}
        user = _merge(base, user)
    return validate_config(user, schema)


# --- shared helpers -------------------------------------------------------------

def _build_grid(cfg: dict) -> PhysicalGrid:
    grid_cfg = cfg.get("grid")
    if grid_cfg is None or any(v is None for v in grid_cfg.values()):
        raise ConfigError("grid: section is required for this command")
    try:
        return make_grid(**grid_cfg)
    except BornHoloError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def _kernel_dtype(cfg: dict):
    return np.complex64 if cfg["io"]["precision"] == "complex64" \
        else np.complex128


def _build_phantom(cfg: dict, grid: PhysicalGrid, seed):
    """Resolve the phantom section into (volume, particles)."""
    ph = cfg["phantom"]
    if ph["layout"] == "occlusion":
        try:
            _, volume, particles = presets.occlusion_scene(ph["delta_n"], grid)
        except ValueError as exc:
            raise ConfigError(f"phantom: {exc}") from exc
        return volume, particles
    contrast = presets.contrast_of(ph["delta_n"], grid)
    if (ph["density"] is None) == (ph["n_particles"] is None):
        raise ConfigError("phantom: give exactly one of density, n_particles")
    if ph["density"] is not None:
        n = particles_for_density(float(ph["density"]), grid, ph["radius"])
    else:
        n = ph["n_particles"]
    spec = PhantomSpec(n_particles=n, radius=ph["radius"], contrast=contrast,
                       min_separation=ph["min_separation"])
    return generate_phantom(grid, spec, np.random.default_rng(seed))


def _forward_config(cfg: dict) -> ForwardConfig:
    fw = cfg["forward"]
    return ForwardConfig(order_K=fw["order_K"], mode=fw["mode"],
                         include_self_interference=fw["include_self_interference"],
                         noise_sigma=fw["noise_sigma"])


def _solver_config(cfg: dict, kernels, measured) -> SolverConfig:
    s = cfg["solver"]
    base = SolverConfig(order_K=s["order_K"], mode=s["mode"], tau=0.0,
                        axial_weight=s["axial_weight"],
                        isotropic=s["isotropic"],
                        tv_inner_iters=s["tv_inner_iters"],
                        max_iters=s["max_iters"], stop_tol=s["stop_tol"],
                        nonneg=s["nonneg"])
    tau = s["tau"] if s["tau"] is not None else \
        calibrate_tau(kernels, measured, s["tau_rel"], base)
    return SolverConfig(order_K=s["order_K"], mode=s["mode"], tau=tau,
                        axial_weight=s["axial_weight"],
                        isotropic=s["isotropic"],
                        tv_inner_iters=s["tv_inner_iters"],
                        max_iters=s["max_iters"], stop_tol=s["stop_tol"],
                        nonneg=s["nonneg"])


def _write_convergence(path, report) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("order\te\n")
        for k, e in enumerate(report.e):
            fh.write(f"{k}\t{e:.17g}\n")


# --- commands -------------------------------------------------------------------

def _simulate_case(cfg, grid, kernels, out_dir: Path, rel_prefix: str, seed,
                   files: list, renders: dict):
    seed_key = [seed] if isinstance(seed, int) else list(seed)
    volume, particles = _build_phantom(cfg, grid, seed)
    fconf = _forward_config(cfg)
    rng = np.random.default_rng(seed_key + [1]) if fconf.noise_sigma > 0 \
        else None
    holo = synthesize_hologram(kernels, volume, fconf, rng=rng)
    measured = extract_scattered(holo, grid)
    report = convergence_metric(kernels, volume, fconf.order_K,
                                mode=fconf.mode)

    def emit(name, writer):
        rel = rel_prefix + name
        writer(out_dir / rel)
        files.append(rel)

    emit("phantom.mshv", lambda p: write_volume(p, volume, grid))
    emit("particles.tsv", lambda p: particles.to_tsv(p))
    emit("hologram.mshv", lambda p: write_volume(p, holo.values, grid))
    emit("scattered_re.mshv", lambda p: write_volume(p, measured, grid))
    emit("convergence.tsv", lambda p: _write_convergence(p, report))
    if cfg["forward"]["save_internal"]:
        field = internal_field(kernels, volume, fconf)
        emit("internal_field.mshv",
             lambda p: write_volume(p, field.values, grid))
    rel = rel_prefix + "hologram.png"
    renders[rel] = export_png(out_dir / rel, holo.values)
    files.append(rel)
    log.info("simulated %s: %d particles, hologram range [%.4g, %.4g]",
             rel_prefix or "scene", len(particles),
             holo.values.min(), holo.values.max())


def cmd_simulate(cfg: dict, out_dir: Path, seed: int) -> dict:
    grid = _build_grid(cfg)
    kernels = build_kernels(grid, dtype=_kernel_dtype(cfg))
    files, renders = [], {}
    density = cfg["phantom"]["density"]
    if isinstance(density, list):
        if not density:
            raise ConfigError("phantom.density: sweep list is empty")
        for i, rho in enumerate(density):
            if not isinstance(rho, (int, float)) or isinstance(rho, bool):
                raise ConfigError(f"phantom.density[{i}]: expected a number")
            case = dict(cfg)
            case["phantom"] = dict(cfg["phantom"], density=float(rho))
            subdir = f"density_{rho:g}"
            (out_dir / subdir).mkdir(exist_ok=True)
            _simulate_case(case, grid, kernels, out_dir, subdir + "/",
                           [seed, i], files, renders)
    else:
        _simulate_case(cfg, grid, kernels, out_dir, "", seed, files, renders)
    return {"files": files, "extra": {"renders": renders}}


def _load_hologram(cfg: dict, grid: PhysicalGrid):
    path = cfg["inputs"]["hologram"]
    if path is None:
        raise ConfigError("inputs.hologram: required for reconstruct")
    try:
        values, meta = read_volume(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"inputs.hologram: {exc}") from exc
    if values.ndim != 2:
        raise ConfigError(f"inputs.hologram: expected a 2D record, "
                          f"got shape {values.shape}")
    if values.shape != (grid.ny, grid.nx):
        raise ConfigError(f"inputs.hologram: shape {values.shape} does not "
                          f"match grid ({grid.ny}, {grid.nx})")
    stored = [meta[k] for k in sorted(meta)]
    configured = [getattr(grid, k) for k in sorted(meta)]
    if not np.allclose(stored, configured, rtol=1e-12, atol=0.0):
        raise ConfigError("inputs.hologram: stored physical metadata "
                          "disagrees with the configured grid")
    if np.any(values < 0):
        raise ConfigError("inputs.hologram: negative intensities; "
                          "not a hologram record")
    return values.astype(np.float64)


def cmd_reconstruct(cfg: dict, out_dir: Path, seed: int) -> dict:
    grid = _build_grid(cfg)
    intensity = _load_hologram(cfg, grid)
    if cfg["solver"]["background_divide"]:
        mean = float(intensity.mean())
        if mean <= 0:
            raise ConfigError("inputs.hologram: zero mean, cannot "
                              "divide out the background")
        intensity = intensity / mean
    kernels = build_kernels(grid, dtype=_kernel_dtype(cfg))
    measured = extract_scattered(Hologram2D(intensity, grid.dx, grid.dy), grid)

    files = []
    extra = {"method": cfg["solver"]["method"]}
    if cfg["solver"]["method"] == "bpm":
        volume = bpm_reconstruct(kernels, measured, fit_scale=True)
        write_volume(out_dir / "volume.mshv", volume, grid)
        files.append("volume.mshv")
    else:
        sconf = _solver_config(cfg, kernels, measured)
        wanted = set()
        for i, it in enumerate(cfg["solver"]["snapshot_iters"]):
            if not isinstance(it, int) or isinstance(it, bool) or it < 1:
                raise ConfigError(
                    f"solver.snapshot_iters[{i}]: expected a positive int")
            wanted.add(it)
        snapshots = {}

        def grab(iteration, f, row):
            if iteration in wanted:
                snapshots[iteration] = f

        state = reconstruct(kernels, measured, sconf, callback=grab)
        write_volume(out_dir / "volume.mshv", state.f, grid)
        files.append("volume.mshv")
        write_cost_history(out_dir / "cost_history.tsv", state.cost_history)
        files.append("cost_history.tsv")
        for it in sorted(snapshots):
            rel = f"snapshot_{it:04d}.mshv"
            write_volume(out_dir / rel, snapshots[it], grid)
            files.append(rel)
        extra.update(status=state.status, iterations=state.iterations,
                     tau=sconf.tau, order_K=sconf.order_K)
        if state.diagnostic:
            extra["diagnostic"] = state.diagnostic
        log.info("reconstruct: %s after %d iterations",
                 state.status, state.iterations)
    return {"files": files, "extra": extra}


def _load_truth(cfg: dict):
    truth_parts = truth_vol = None
    path = cfg["inputs"]["truth_particles"]
    if path is not None:
        try:
            truth_parts = ParticleSet.from_tsv(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"inputs.truth_particles: {exc}") from exc
    path = cfg["inputs"]["truth_volume"]
    if path is not None:
        try:
            truth_vol, _ = read_volume(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"inputs.truth_volume: {exc}") from exc
    return truth_parts, truth_vol


def cmd_analyze(cfg: dict, out_dir: Path, seed: int) -> dict:
    path = cfg["inputs"]["volume"]
    if path is None:
        raise ConfigError("inputs.volume: required for analyze")
    try:
        volume, meta = read_volume(path)
        grid = grid_from_metadata(volume.shape, meta)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"inputs.volume: {exc}") from exc
    volume = np.real(volume).astype(np.float64)
    truth_parts, truth_vol = _load_truth(cfg)

    an = cfg["analysis"]
    detected = count_particles(volume, grid, threshold_rel=an["threshold_rel"],
                               min_voxels=an["min_voxels"])
    area = grid.nx * grid.dx * grid.ny * grid.dy
    report = {
        "count": int(detected.count),
        "r_g_estimate":
            float(detected.count * np.pi * an["particle_radius"] ** 2 / area),
        "threshold_rel": an["threshold_rel"],
    }
    if truth_parts is not None:
        match = match_particles(truth_parts, detected,
                                tol_lateral=an["tol_lateral"],
                                tol_axial=an["tol_axial"])
        recall_bins = depth_binned_recall(truth_parts, match, grid,
                                          n_bins=an["depth_bins"])
        report.update(
            true_count=len(truth_parts),
            count_error=(detected.count - len(truth_parts))
            / max(len(truth_parts), 1),
            precision=float(match.precision), recall=float(match.recall),
            depth_bin_recall=[None if np.isnan(r) else float(r)
                              for r in recall_bins],
        )
    else:
        log.warning("no truth particle table given; "
                    "matching metrics are disabled")
    if truth_vol is not None:
        if truth_vol.shape != volume.shape:
            raise ConfigError("inputs.truth_volume: shape does not match "
                              "the analyzed volume")
        report["snr_db"] = float(snr_db(volume, np.real(truth_vol)))
    elif truth_parts is None:
        log.warning("no truth volume given; SNR is disabled")

    files = []
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files.append("report.json")

    renders = {}
    vmax = float(volume.max()) if volume.size else 0.0
    proj = volume.max(axis=0)
    renders["max_projection.png"] = export_png(
        out_dir / "max_projection.png", proj, vmin=0.0, vmax=vmax)
    files.append("max_projection.png")
    indices = an["slice_pngs"] or sorted({0, grid.nz // 2, grid.nz - 1})
    for i, idx in enumerate(indices):
        if not isinstance(idx, int) or isinstance(idx, bool) \
                or not 0 <= idx < grid.nz:
            raise ConfigError(f"analysis.slice_pngs[{i}]: slice index out of "
                              f"range 0..{grid.nz - 1}")
        rel = f"slice_{idx:03d}.png"
        renders[rel] = export_png(out_dir / rel, volume[idx],
                                  vmin=0.0, vmax=vmax)
        files.append(rel)
    return {"files": files, "extra": {"report": report, "renders": renders}}


def _compare_cell(cfg, grid, kernels, delta_n, density, seed_parts):
    """Simulate one sweep cell and reconstruct it with every method/order."""
    case = dict(cfg)
    case["phantom"] = dict(cfg["phantom"], layout="random",
                           delta_n=float(delta_n), density=float(density),
                           n_particles=None)
    truth, particles = _build_phantom(case, grid, seed_parts)
    holo = synthesize_hologram(kernels, truth, _forward_config(cfg))
    measured = extract_scattered(holo, grid)
    an = cfg["analysis"]

    rows = []
    for method in cfg["compare"]["methods"]:
        orders = cfg["compare"]["orders"] if method == "born" else [0]
        for order in orders:
            t0 = time.perf_counter()
            status = "ok"
            final_cost = e_k = float("nan")
            try:
                if method == "bpm":
                    est = bpm_reconstruct(kernels, measured, fit_scale=True)
                else:
                    sub = dict(case)
                    sub["solver"] = dict(cfg["solver"], order_K=int(order))
                    sconf = _solver_config(sub, kernels, measured)
                    state = reconstruct(kernels, measured, sconf)
                    est = state.f
                    final_cost = float(state.cost_history[-1, 2])
                    if state.status != "converged":
                        status = state.status
                    e_k = convergence_metric(kernels, truth,
                                             int(order)).e[int(order)]
                s = snr_db(est, truth)
                detected = count_particles(est, grid,
                                           threshold_rel=an["threshold_rel"],
                                           min_voxels=an["min_voxels"])
                count_err = (detected.count - len(particles)) \
                    / max(len(particles), 1)
            except BornHoloError as exc:
                status = f"failed:{type(exc).__name__}"
                s = count_err = float("nan")
            rows.append((delta_n, density, method, int(order), s, count_err,
                         final_cost, e_k, time.perf_counter() - t0, status))
            log.info("compare dn=%g Rg=%g %s K=%d: SNR=%.3f dB [%s]",
                     delta_n, density, method, order,
                     rows[-1][4], rows[-1][9])
    return rows


def cmd_compare(cfg: dict, out_dir: Path, seed: int) -> dict:
    sweep = cfg["compare"]
    for key in ("delta_n", "density"):
        for i, v in enumerate(sweep[key]):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"compare.{key}[{i}]: expected a number")
    for i, m in enumerate(sweep["methods"]):
        if m not in ("born", "bpm"):
            raise ConfigError(f"compare.methods[{i}]: {m!r} is not "
                              "born or bpm")
    for i, k in enumerate(sweep["orders"]):
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            raise ConfigError(f"compare.orders[{i}]: expected a positive int")
    if not sweep["delta_n"] or not sweep["density"] or not sweep["methods"]:
        raise ConfigError("compare: empty sweep; need delta_n, density "
                          "and methods lists")
    if "born" in sweep["methods"] and not sweep["orders"]:
        raise ConfigError("compare.orders: required when methods include born")

    grid = _build_grid(cfg)
    kernels = build_kernels(grid, dtype=_kernel_dtype(cfg))
    rows = []
    for i, dn in enumerate(sweep["delta_n"]):
        for j, rho in enumerate(sweep["density"]):
            rows.extend(_compare_cell(cfg, grid, kernels, dn, rho,
                                      [seed, i, j]))

    header = ("delta_n", "R_g", "method", "K", "SNR_dB", "count_error",
              "final_cost", "e_K", "runtime_s", "status")
    with open(out_dir / "sweep.tsv", "w", newline="") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join([
                f"{row[0]:.9g}", f"{row[1]:.9g}", row[2], str(row[3]),
                f"{row[4]:.9g}", f"{row[5]:.9g}", f"{row[6]:.9g}",
                f"{row[7]:.9g}", f"{row[8]:.3f}", row[9]]) + "\n")
    return {"files": ["sweep.tsv"], "extra": {"rows": len(rows)}}


_COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "analyze": cmd_analyze,
    "compare": cmd_compare,
}


# --- entry point ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; the contract reserves 2 for
    # runtime failures, so route usage problems to the validation code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="born-holo",
                     description="Multiple-scattering holography pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
            ("simulate", "phantom volume to hologram"),
            ("reconstruct", "hologram to contrast volume"),
            ("analyze", "volume metrics and renderings"),
            ("compare", "method/order sweep table")):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", default=None, metavar="DIR")
        p.add_argument("--seed", type=_u64, default=None)
        p.add_argument("--threads", type=int, default=None)
    return parser


@contextmanager
def _locked_dir(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(f"{out_dir}: already locked by another writer "
                           "(stale .lock?)") from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _resolve_threads(flag) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("BORN_HOLO_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(
                f"BORN_HOLO_THREADS: {env!r} is not an integer") from None
    return 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    level = os.environ.get("BORN_HOLO_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s",
                        level=getattr(logging, level, logging.INFO))
    try:
        threads = _resolve_threads(args.threads)
        if threads < 1:
            raise ConfigError("threads: must be >= 1")
        cfg = load_run_config(args.config, args.command)
        out = args.out or cfg.get("out")
        if out is None:
            raise ConfigError("out: give --out or the config key")
        seed = args.seed if args.seed is not None else cfg["seed"]
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    set_fft_workers(threads)
    try:
        out_dir = Path(out)
        with _locked_dir(out_dir):
            result = _COMMANDS[args.command](cfg, out_dir, seed)
            extra = dict(result.get("extra", {}))
            extra.update(command=args.command, seed=seed,
                         preset=cfg.get("preset"), threads=threads)
            write_manifest(out_dir, result["files"], extra=extra)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except (BornHoloError, RuntimeError, OSError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
