"""Command-line front end.

    nlijsf jsi        --config cfg.json --out DIR
    nlijsf marginal   --config cfg.json --out DIR
    nlijsf design     --n-stages 3 --l1 50 [--config cfg.json] [--target-m 2]
    nlijsf experiment --config cfg.json --out DIR [--seed N]

Every command writes a manifest.json with the config digest and a sha256
of each emitted file.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .analysis import (
    AnalysisError,
    Rank,
    ResolutionError,
    find_fringe,
    find_islands,
    jsi,
    marginal,
)
from .config import ConfigError, RunConfig, config_digest, load_config
from .engine import (
    UnsupportedConfigurationError,
    binomial_lengths,
    island_wavelengths,
    roundness_ratio,
    stripe_width,
    synthesize_jsa,
)
from .experiment import (
    DetectionModel,
    calibrate_to_peak,
    fit_sweeps,
    raman_subtract,
    run_scan,
)
from .physics import NM, FiberSegment, PumpPulse, pump_sigma, C

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, cfg_digest: str | None, seed, files: list[Path], started: datetime,
                   command: str) -> Path:
    manifest = {
        "tool": "nlijsf",
        "version": __version__,
        "command": command,
        "config_digest": cfg_digest,
        "seed": seed,
        "started_utc": started.isoformat(),
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "files": [{"name": p.name, "sha256": file_digest(p)} for p in files],
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _smf(cfg: RunConfig) -> FiberSegment | None:
    gaps = cfg.spec.dispersive_segments
    return gaps[0] if gaps else None


def cmd_jsi(cfg: RunConfig, out: Path, workers: int = 1) -> list[Path]:
    jsa = synthesize_jsa(cfg.spec, cfg.pump, cfg.grid, cfg.normalization, workers=workers)
    intensity = jsi(jsa)
    g = cfg.grid
    rows = ((float(ls / NM), float(li / NM), float(intensity[a, b]))
            for a, ls in enumerate(g.signal) for b, li in enumerate(g.idler))
    f1 = write_csv(out / "jsi.csv", ["lambda_s_nm", "lambda_i_nm", "jsi"], rows)
    islands = find_islands(intensity, g, cfg.pump, _smf(cfg), cfg.spec.n_stages)
    f2 = write_csv(out / "islands.csv",
                   ["center_s_nm", "center_i_nm", "m", "rank", "class", "rho", "peak"],
                   ((s.center[0] / NM, s.center[1] / NM, s.order_m, s.rank.value,
                     s.correlation_class.value, s.rho, s.peak_intensity) for s in islands))
    return [f1, f2]


def fringe_table(cfg: RunConfig, spectrum, axis: str) -> list[tuple]:
    """(m, peak_nm, trough_nm, visibility) for each order whose fringe fits the grid."""
    smf = _smf(cfg)
    if smf is None or cfg.spec.n_stages < 2:
        return []
    wl = spectrum.wavelengths
    lo, hi = float(wl.min()), float(wl.max())
    rows = []
    m = 1
    while True:
        pos = island_wavelengths(m, smf, cfg.pump)
        nxt = island_wavelengths(m + 1, smf, cfg.pump)
        k = 0 if axis == "signal" else 1
        guess, neighbor = pos[k], nxt[k]
        if not (lo < guess < hi):
            if abs(guess - cfg.pump.lambda_p0) > max(abs(lo - cfg.pump.lambda_p0),
                                                      abs(hi - cfg.pump.lambda_p0)):
                break
            m += 1
            continue
        try:
            f = find_fringe(spectrum, guess, search_window=0.5 * abs(neighbor - guess))
        except AnalysisError:
            m += 1
            continue
        if f.trough_wavelength in (wl[0], wl[-1]):
            break  # trough not resolved inside the grid
        rows.append((m, f.peak_wavelength / NM, f.trough_wavelength / NM, f.visibility))
        m += 1
    return rows


def cmd_marginal(cfg: RunConfig, out: Path, workers: int = 1) -> list[Path]:
    jsa = synthesize_jsa(cfg.spec, cfg.pump, cfg.grid, workers=workers)
    files = []
    vis_rows = []
    for axis, name in (("signal", "marginal_s.csv"), ("idler", "marginal_i.csv")):
        bw = max(cfg.marginal_band_width, cfg.grid.step(axis))
        spec = marginal(jsa, axis, bw, cfg.pump)
        files.append(write_csv(out / name, ["lambda_nm", "intensity"],
                               zip((w / NM for w in spec.wavelengths), spec.intensity.tolist())))
        vis_rows += [(axis,) + r for r in fringe_table(cfg, spec, axis)]
    files.append(write_csv(out / "visibility.csv",
                           ["axis", "m", "peak_nm", "trough_nm", "visibility"], vis_rows))
    return files


def design_report(n_stages: int, l1: float, pump: PumpPulse, smf: FiberSegment,
                  orders=range(1, 5), target_m: int | None = None) -> dict:
    """Binomial lengths, roundness ratio per order, and the most nearly round order."""
    if n_stages < 2:
        raise ValueError("design needs n_stages >= 2")
    table = [(m, stripe_width(n_stages, m, smf, pump), roundness_ratio(n_stages, m, smf, pump))
             for m in orders]
    flagged = min(table, key=lambda r: abs(r[2] - 1.0))[0]
    report = {
        "n_stages": n_stages,
        "lengths_m": binomial_lengths(n_stages, l1),
        "orders": [{"m": m, "sigma_int_rad_per_s": s, "ratio": r,
                    "center_s_nm": island_wavelengths(m, smf, pump)[0] / NM,
                    "center_i_nm": island_wavelengths(m, smf, pump)[1] / NM}
                   for m, s, r in table],
        "flagged_m": flagged,
    }
    if target_m is not None:
        # SMF length that makes order target_m exactly round
        sp = pump_sigma(pump)
        length = 2.0 * C / ((n_stages - 1) * target_m * pump.lambda_p0**2 * smf.dispersion * sp**2)
        report["target_m"] = target_m
        report["smf_length_for_round_m"] = length
    return report


def cmd_design(n_stages: int, l1: float, pump: PumpPulse, smf: FiberSegment, out: Path | None,
               max_order: int = 4, target_m: int | None = None) -> tuple[dict, list[Path]]:
    rep = design_report(n_stages, l1, pump, smf, range(1, max_order + 1), target_m)
    files = []
    if out is not None:
        files.append(write_csv(out / "design.csv",
                               ["m", "sigma_int_rad_per_s", "ratio", "center_s_nm", "center_i_nm",
                                "flagged"],
                               ((o["m"], o["sigma_int_rad_per_s"], o["ratio"], o["center_s_nm"],
                                 o["center_i_nm"], int(o["m"] == rep["flagged_m"]))
                                for o in rep["orders"])))
        files.append(write_csv(out / "lengths.csv", ["stage", "length_m"],
                               enumerate(rep["lengths_m"], start=1)))
    return rep, files


def _detection(cfg: RunConfig, workers: int) -> DetectionModel:
    det = cfg.detection or DetectionModel()
    cal = cfg.calibration
    if cal is None or cal.pin_true_cc is None:
        return det
    ref = synthesize_jsa(cal.reference_spec, cfg.pump, cfg.grid, workers=workers)
    return calibrate_to_peak(ref, cfg.pump, cal.reference_scan, det, cal.pin_true_cc)


def cmd_experiment(cfg: RunConfig, out: Path, workers: int = 1) -> list[Path]:
    if cfg.scan is None:
        raise ConfigError(["scan: block required for the experiment command"])
    if cfg.seed is None:
        raise ConfigError(["seed: required for the experiment command"])
    det = _detection(cfg, workers)
    jsa = synthesize_jsa(cfg.spec, cfg.pump, cfg.grid, workers=workers)
    records = run_scan(jsa, cfg.pump, cfg.scan, det, cfg.seed, workers=workers)
    files = [write_csv(
        out / "scan.csv",
        ["lambda_s_nm", "lambda_i_nm", "P_a_uW", "t_s", "singles_s", "singles_i", "cc", "cacc", "true"],
        ((r.lambda_s / NM, r.lambda_i / NM, r.avg_power * 1e6, r.integration_time, r.singles_s,
          r.singles_i, r.cc, r.cacc, r.true_coincidences) for r in records))]
    files.append(write_csv(out / "calibration.csv",
                           ["calibration_counts_per_s_per_m2", "efficiency_signal", "efficiency_idler",
                            "raman_density_per_s_per_w"],
                           [(det.calibration, det.efficiency_signal, det.efficiency_idler,
                             det.raman_at(cfg.pump.lambda_p0))]))
    if len(set(cfg.scan.avg_powers)) >= 3:
        fit_rows = []
        for channel in ("signal", "idler"):
            for (ls, li), fit in sorted(fit_sweeps(records, channel).items()):
                fit_rows.append((ls / NM, li / NM, channel, fit.s1, fit.s2, fit.residual))
        files.append(write_csv(out / "ramanfit.csv",
                               ["lambda_s_nm", "lambda_i_nm", "channel", "s1_per_s_per_W",
                                "s2_per_s_per_W2", "residual_rss"], fit_rows))
        for channel, name in (("signal", "fwm_marginal_s.csv"), ("idler", "fwm_marginal_i.csv")):
            try:
                spec = raman_subtract(records, channel, cfg.pump.avg_power, cfg.pump.lambda_p0)
            except ValueError:
                continue
            files.append(write_csv(out / name, ["lambda_nm", "fwm_intensity"],
                                   zip((w / NM for w in spec.wavelengths), spec.intensity.tolist())))
    return files


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlijsf", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"nlijsf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON run configuration")
        sp.add_argument("--out", help="output directory (default: config output_dir or '.')")
        sp.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
        sp.add_argument("--grid-points", type=int, help="override points per grid axis")
        sp.add_argument("--workers", type=int, default=1, help="threads for grid evaluation")

    common(sub.add_parser("jsi", help="joint spectral intensity and island catalog"))
    common(sub.add_parser("marginal", help="marginal spectra and fringe visibilities"))
    common(sub.add_parser("experiment", help="simulated filter scan with Raman fitting"))
    d = sub.add_parser("design", help="binomial lengths and roundness per order")
    common(d, config_required=False)
    d.add_argument("--n-stages", type=int, required=True)
    d.add_argument("--l1", type=float, required=True, help="first DSF length [m]")
    d.add_argument("--target", choices=["round"], default="round")
    d.add_argument("--target-m", type=int, help="order to make exactly round (reports SMF length)")
    d.add_argument("--max-order", type=int, default=4)
    return p


def _effective_doc(path: str, seed, grid_points) -> dict:
    doc = json.loads(Path(path).read_text())
    if seed is not None:
        doc["seed"] = seed
    if grid_points is not None:
        doc.setdefault("grid", {})["signal_points"] = grid_points
        doc["grid"]["idler_points"] = grid_points
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = datetime.now(timezone.utc)
    cfg = None
    try:
        if args.config:
            cfg = load_config(args.config, seed=args.seed, grid_points=args.grid_points)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for prob in exc.problems:
            print(f"  - {prob}", file=sys.stderr)
        return EXIT_INVALID

    out_arg = args.out or (cfg.output_dir if cfg else None) or "."
    out = Path(out_arg)
    out.mkdir(parents=True, exist_ok=True)
    digest = config_digest(_effective_doc(args.config, args.seed, args.grid_points)) if cfg else None

    try:
        if args.command == "jsi":
            files = cmd_jsi(cfg, out, args.workers)
        elif args.command == "marginal":
            files = cmd_marginal(cfg, out, args.workers)
        elif args.command == "experiment":
            files = cmd_experiment(cfg, out, args.workers)
        else:
            if cfg is not None:
                pump, smf = cfg.pump, _smf(cfg)
            else:
                pump = PumpPulse.from_lab_units(1553.3, 1.4, 36.8, 60.0)
                smf = FiberSegment.dispersive(10.0, 17.0)
            if smf is None:
                raise ConfigError(["design: configuration has no dispersive segment"])
            rep, files = cmd_design(args.n_stages, args.l1, pump, smf, out, args.max_order,
                                    args.target_m)
            print(f"lengths [m]: {', '.join(format(x, 'g') for x in rep['lengths_m'])}")
            for o in rep["orders"]:
                mark = "  <- closest to round" if o["m"] == rep["flagged_m"] else ""
                print(f"m={o['m']}: sigma_int/(sqrt2 sigma_p) = {o['ratio']:.3f}{mark}")
            if "smf_length_for_round_m" in rep:
                print(f"SMF length for a round m={rep['target_m']} island: "
                      f"{rep['smf_length_for_round_m']:.3f} m")
    except ConfigError as exc:
        for prob in exc.problems:
            print(f"  - {prob}", file=sys.stderr)
        return EXIT_INVALID
    except (ResolutionError, UnsupportedConfigurationError, AnalysisError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    seed = cfg.seed if cfg else None
    write_manifest(out, digest, seed, files, started, args.command)
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
