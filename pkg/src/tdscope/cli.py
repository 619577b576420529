"""Command-line front end: ``tdscope synthesize|image|noise-study|validate``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import datafiles
from .config import ConfigError, ExperimentConfig
from .em_kernels import Incidence, synthesize_far_field
from .imaging import SearchGrid, sweep_grid, td_multi, td_single
from .noise import NoiseModel, monte_carlo_image_stats, multi_incidences, theoretical_snr
from .sphere_math import build_quadrature, fibonacci_directions, orthonormal_triad
from .validation import run_identity_suite

log = logging.getLogger("tdscope")

MANIFEST = "manifest.json"


def _quadrature(config: ExperimentConfig):
    acq = config.data["acquisition"]
    return build_quadrature(acq["quadrature_count"], acq["quadrature_scheme"])


def _incidences(config: ExperimentConfig) -> list[tuple[int, Incidence]]:
    acq = config.data["acquisition"]
    if acq["mode"] == "single":
        theta = fibonacci_directions(acq["n_directions"])[0]
        return [(0, Incidence(orthonormal_triad(theta), 1))]
    n = acq["n_directions"]
    return [(j // 2, inc) for j, inc in enumerate(multi_incidences(n))]


def run_synthesize(config: ExperimentConfig, out) -> list[Path]:
    """Write one far-field file per incidence plus ``manifest.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    labelled = _incidences(config)
    datasets = synthesize_far_field(
        config.medium(), config.inclusion(), [inc for _, inc in labelled], _quadrature(config)
    )
    entries, paths = [], []
    for (j, inc), data in zip(labelled, datasets):
        name = f"farfield_j{j:04d}_l{inc.pol_index}.dat"
        datafiles.write_far_field(out / name, data, config.hash)
        entries.append({"file": name, "direction_index": j, "pol_index": inc.pol_index})
        paths.append(out / name)
    manifest = {
        "config_hash": config.hash,
        "mode": config.data["acquisition"]["mode"],
        "n_directions": config.data["acquisition"]["n_directions"],
        "quadrature_count": config.data["acquisition"]["quadrature_count"],
        "files": entries,
    }
    datafiles.write_json(out / MANIFEST, manifest)
    config.save(out / "config.json")
    log.info("wrote %d far-field files to %s", len(paths), out)
    return paths


def run_image(config: ExperimentConfig, data_dir, out, threads: int = 1, timing: bool = False) -> dict:
    """Image the far-field files in ``data_dir``; returns the summary."""
    start = time.perf_counter()
    data_dir, out = Path(data_dir), Path(out)
    manifest_path = data_dir / MANIFEST
    if not manifest_path.exists():
        raise FileNotFoundError(f"{manifest_path} not found; run 'synthesize' first")
    manifest = json.loads(manifest_path.read_text())
    if manifest["config_hash"] != config.hash:
        raise ValueError(
            f"config hash mismatch: data was synthesized with {manifest['config_hash'][:12]}, "
            f"config is {config.hash[:12]}"
        )
    paths = [data_dir / e["file"] for e in manifest["files"]]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise FileNotFoundError(f"missing data files: {', '.join(missing)}")
    datasets, hashes = datafiles.read_far_field_set(paths)
    if hashes != {config.hash}:
        raise ValueError("a data file carries a different config hash than the manifest")

    medium, trial, grid = config.medium(), config.trial(), config.grid()
    if len(datasets) == 1:
        mode = "single"
        data = datasets[0]
        functional = lambda z: td_single(data, medium, trial, z)  # noqa: E731
    else:
        mode = "multi"
        functional = lambda z: td_multi(datasets, medium, trial, z)  # noqa: E731
    image = sweep_grid(grid, functional, threads=threads)
    peak = image.peak

    out.mkdir(parents=True, exist_ok=True)
    formats = config.data["output"]["formats"]
    lam = config.wavelength
    center = config.inclusion().center
    summary = {
        "config_hash": config.hash,
        "mode": mode,
        "n_datasets": len(datasets),
        "kappa": medium.kappa,
        "wavelength": lam,
        "grid": {"origin": grid.origin, "spacing": grid.spacing, "dims": list(grid.dims), "scan_order": "x fastest, then y, then z"},
        "inclusion_center": center,
        "peak_location": peak.point,
        "peak_index": list(peak.index),
        "peak_value": peak.value,
        "peak_offset_cells": float(np.max(np.abs(peak.point - center)) / grid.spacing),
        "fwhm": peak.fwhm,
        "fwhm_wavelengths": peak.fwhm / lam,
    }
    if "csv" in formats:
        datafiles.write_map_csv(out / "map.csv", image)
    if "pgm" in formats:
        files = datafiles.write_pgm_slices(out, image, peak.index)
        summary["pgm"] = {"files": files, "normalization": "per-slice min-max mapped to 0..255"}
    if timing:
        summary["runtime_s"] = time.perf_counter() - start
    if "json" in formats:
        datafiles.write_json(out / "summary.json", summary)
    log.info("peak at %s, FWHM %.4g wavelengths", np.round(peak.point, 4), peak.fwhm / lam)
    return summary


def _rel(empirical, theoretical):
    if theoretical == 0:
        return math.inf
    return abs(empirical / theoretical - 1.0)


def run_noise_study(config: ExperimentConfig, out, threads: int = 1) -> dict:
    """Monte Carlo noise study with pass/fail per tolerance; returns the report."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    nz = config.data["noise"]
    tol = nz["tolerances"]
    medium, inclusion, trial = config.medium(), config.inclusion(), config.trial()
    quad = _quadrature(config)
    lam = config.wavelength
    n = nz["n_directions"]

    if nz["sigma"] is None:
        sigma = theoretical_snr(medium, inclusion, NoiseModel(1.0), n) / nz["target_snr"]
    else:
        sigma = float(nz["sigma"])
    model = NoiseModel(sigma, nz["seed"])
    degenerate = sigma == 0

    def study(n_dirs, separations, tag):
        stream = np.random.SeedSequence(nz["seed"]) if tag == 0 else np.random.SeedSequence([nz["seed"], tag])
        return monte_carlo_image_stats(
            medium, inclusion, trial, model, n_dirs, quad, nz["trials"],
            separations=separations, probe_direction=nz["probe_direction"],
            rng_stream=stream, threads=threads,
        )

    main = study(n, [s * lam for s in nz["separations_wavelengths"]], 0)
    base = nz["scaling_base_n"]
    low, high = study(base, [], 1), study(4 * base, [], 2)
    ratio = low.empirical_variance / high.empirical_variance if high.empirical_variance > 0 else None

    checks = []

    def check(name, empirical, theoretical, tolerance, relative_error=None):
        if degenerate:
            checks.append({"name": name, "status": "skipped", "empirical": empirical, "theoretical": theoretical})
            return
        err = _rel(empirical, theoretical) if relative_error is None else relative_error
        checks.append({
            "name": name, "status": "pass" if err <= tolerance else "fail",
            "empirical": empirical, "theoretical": theoretical,
            "relative_error": err, "tolerance": tolerance,
        })

    check("variance_at_peak", main.empirical_variance, main.theoretical_variance, tol["variance"])
    for c in main.covariance_samples:
        check(f"covariance_sep_{c.separation / lam:g}_wavelengths", c.empirical, c.theoretical, tol["covariance"])
    check(f"variance_ratio_n{base}_vs_n{4 * base}", ratio, 4.0, tol["scaling"],
          None if ratio is None else abs(ratio / 4.0 - 1.0))
    if main.empirical_snr is not None and main.theoretical_snr is not None:
        check("snr", main.empirical_snr, main.theoretical_snr, tol["snr"])

    report = {
        "config_hash": config.hash,
        "degenerate": degenerate,
        "sigma": sigma,
        "wavelength": lam,
        "main": main.to_dict(),
        "scaling": {
            "n_low": base, "n_high": 4 * base,
            "variance_low": low.empirical_variance, "variance_high": high.empirical_variance,
            "ratio": ratio, "expected_ratio": 4.0,
        },
        "checks": checks,
        "all_passed": (not degenerate) and all(c["status"] == "pass" for c in checks),
    }
    datafiles.write_json(out / "noise_report.json", report)
    for c in checks:
        log.info("%-40s %s", c["name"], c["status"])
    return report


def run_validate(config: ExperimentConfig, out) -> dict:
    """Run the identity suite; writes ``validation_report.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    val = config.data["validation"]
    full = config.grid()
    extent = full.spacing * (np.array(full.dims) - 1)
    # coarser cube with the imaging grid's center and largest extent
    grid = SearchGrid.centered(full.origin + 0.5 * extent, float(extent.max()), val["grid_points"])
    results = run_identity_suite(
        config.medium(), config.inclusion(), config.trial(), _quadrature(config),
        grid, val["multi_n"], val["seed"],
    )
    report = {
        "config_hash": config.hash,
        "all_passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
    }
    datafiles.write_json(out / "validation_report.json", report)
    for r in results:
        log.info("%-22s residual %.3e  tol %.1e  %s", r.name, r.residual, r.tolerance, "PASS" if r.passed else "FAIL")
    return report


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdscope", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synthesize", "image", "noise-study", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON configuration (defaults if omitted)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override noise.seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        if name == "image":
            p.add_argument("--data", type=Path, help="far-field directory (default: --out)")
            p.add_argument("--timing", action="store_true", help="record runtime in summary.json")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            config = config.with_overrides(noise={"seed": args.seed})
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.command == "synthesize":
            run_synthesize(config, args.out)
        elif args.command == "image":
            run_image(config, args.data or args.out, args.out, args.threads, args.timing)
        elif args.command == "noise-study":
            run_noise_study(config, args.out, args.threads)
        else:
            run_validate(config, args.out)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
