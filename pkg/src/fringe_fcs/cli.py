"""``fringe-fcs`` batch command line.

Exit status is 0 when every internal cross-check passes, 1 when a check
fails (the outputs are still written), and 2 for unusable input.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .binning import BinnedComponents, snapshot_matrix
from .config import RunConfig, config_hash, parse_config
from .estimation import (ZERO_INFORMATION, asymptotic_sigma, fisher_information,
                         fisher_information_wavefunction, fisher_sigma, fit_phases,
                         phase_histogram)
from .exceptions import ConfigError, FringeFCSError
from .fcs import brute_force_probability, exact_probabilities, lambda_lattice_probability
from .io import ResultManifest, counts_to_image, read_counts, write_csv, write_pgm
from .physics import TWO_PI
from .sampling import SnapshotSampler, counts_array

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_INPUT = 0, 1, 2
SUM_TOL = 1e-6
FISHER_REL_TOL = 1e-8
SLOPE_TARGET, SLOPE_TOL = -0.25, 0.01


def _count_columns(k: int) -> list[str]:
    return [f"n_{i + 1}" for i in range(k)]


def cmd_exact(config: RunConfig, out: Path, manifest: ResultManifest) -> None:
    state = config.state()
    bins = config.bins(state.lattice)
    n, k = state.n, bins.k
    size = math.comb(n + k - 1, k - 1)
    if size > config["exact.max_snapshots"]:
        raise ConfigError(f"enumerating {size} snapshots exceeds exact.max_snapshots = "
                          f"{config['exact.max_snapshots']}")
    snaps = snapshot_matrix(n, k)
    quad = config.quadrature()
    p_exact = exact_probabilities(state, bins, snaps, quad)
    brute = n <= 4
    lam = n <= 4 and k <= 3
    p_brute = [brute_force_probability(state, bins, s) if brute else None for s in snaps]
    p_lam = [lambda_lattice_probability(state, bins, s, quad) if lam else None for s in snaps]

    rows = [(i, *s.tolist(), p_exact[i], p_brute[i], p_lam[i]) for i, s in enumerate(snaps)]
    header = ["snapshot_id", *_count_columns(k), "p_exact", "p_bruteforce", "p_lambda"]
    manifest.files.append(write_csv(out / "probabilities.csv", header, rows).name)

    total = float(p_exact.sum())
    manifest.check("normalisation", abs(total - 1.0) <= SUM_TOL, total=total, tol=SUM_TOL)
    tol = config["exact.oracle_tol"]
    bad = []
    for name, values, active in (("bruteforce", p_brute, brute), ("lambda", p_lam, lam)):
        if not active:
            continue
        diff = np.abs(p_exact - np.array(values, dtype=float))
        manifest.check(f"oracle_{name}", bool(diff.max() <= tol), max_abs_diff=float(diff.max()), tol=tol)
        bad += [(i, name, p_exact[i], values[i], diff[i]) for i in np.flatnonzero(diff > tol)]
    if bad:
        bad.sort(key=lambda r: (r[0], r[1]))
        path = write_csv(out / "diagnostics.csv",
                         ["snapshot_id", "route", "p_exact", "p_other", "abs_diff"], bad)
        manifest.files.append(path.name)
    manifest.results.update(snapshots=len(snaps), bruteforce=brute, lambda_lattice=lam)


def cmd_sample(config: RunConfig, out: Path, manifest: ResultManifest) -> None:
    state = config.state()
    bins = config.bins(state.lattice)
    records = SnapshotSampler(state, bins, config.sampler(), config.quadrature()).batch()
    counts = counts_array(records)
    header = ["shot_index", *_count_columns(bins.k)]
    rows = [(r.shot_index, *r.snapshot.counts.tolist()) for r in records]
    manifest.files.append(write_csv(out / "shots.csv", header, rows).name)
    if config["sample.calibration"]:
        path = write_csv(out / "hidden.csv", ["shot_index", "theta"],
                         [(r.shot_index, r.hidden_theta) for r in records])
        manifest.files.append(path.name)
    if config["sample.images"]:
        (out / "images").mkdir(exist_ok=True)
        scale = int(counts.max())
        for r in records:
            name = f"images/shot_{r.shot_index:06d}.pgm"
            write_pgm(out / name, counts_to_image(r.snapshot.counts, scale, config["sample.image_height"]))
            manifest.files.append(name)
    totals = counts.sum(axis=1)
    manifest.check("snapshot_totals", bool(np.all(totals == state.n)), expected=state.n)
    manifest.results.update(shots=len(records), mode=config["sampler.mode"])


def cmd_estimate(config: RunConfig, out: Path, manifest: ResultManifest, shots_file: Path) -> None:
    if not shots_file.exists():
        raise ConfigError(f"shots file {shots_file} does not exist")
    index, counts = read_counts(shots_file)
    if counts.shape[0] == 0:
        raise ConfigError(f"empty input: {shots_file} holds no shots")
    state = config.state()
    bins = config.bins(state.lattice)
    if counts.shape[1] != bins.k:
        raise ConfigError(f"{shots_file} has {counts.shape[1]} bins, config has bins.k = {bins.k}")
    totals = counts.sum(axis=1)
    if np.any(totals != state.n):
        raise ConfigError(f"shot {int(index[np.argmax(totals != state.n)])} does not hold N = {state.n} particles")

    comps = BinnedComponents.from_state(state, bins)
    theta, residual, flat = fit_phases(counts, comps, config["estimate.method"])
    info = fisher_information(state, theta)
    zero = ~flat & (info < ZERO_INFORMATION)
    ok = ~flat & ~zero
    status = np.where(flat, "degenerate", np.where(zero, "zero-information", "ok"))
    sigma = np.full(theta.shape, np.nan)
    sigma[ok] = 1.0 / np.sqrt(info[ok])
    rows = [(int(i), None if flat[j] else theta[j], None if flat[j] else residual[j], sigma[j], status[j])
            for j, i in enumerate(index)]
    path = write_csv(out / "estimates.csv",
                     ["shot_index", "theta_hat", "residual", "sigma_cr", "status"], rows)
    manifest.files.append(path.name)

    hist = phase_histogram(theta[~flat], config["estimate.hist_bins"], degenerate=int(flat.sum()))
    path = write_csv(out / "p_theta_hist.csv", ["bin_center", "count"], zip(hist.centers, hist.counts.tolist()))
    manifest.files.append(path.name)
    manifest.results.update(
        shots=int(len(index)), degenerate=int(flat.sum()), uniformity=hist.verdict,
        chi2=None if math.isnan(hist.chi2) else hist.chi2,
        p_value=None if math.isnan(hist.p_value) else hist.p_value,
    )


def cmd_fisher(config: RunConfig, out: Path, manifest: ResultManifest) -> None:
    state = config.state()
    points = config["fisher.theta_points"]
    thetas = TWO_PI * np.arange(points) / points
    i_efg = np.asarray(fisher_information(state, thetas))
    i_dhg = np.asarray(fisher_information_wavefunction(state, thetas))
    zero = (i_efg < ZERO_INFORMATION) | (i_dhg < ZERO_INFORMATION)
    rows = []
    rel = []
    for t, a, b, z in zip(thetas, i_efg, i_dhg, zero):
        if z:
            rows.append((t, None, None, None, "zero-information"))
            continue
        r = abs(a - b) / a
        rel.append(r)
        rows.append((t, 1.0 / math.sqrt(a), 1.0 / math.sqrt(b), r, "ok"))
    path = write_csv(out / "fisher.csv", ["theta", "sigma_efg", "sigma_dhg", "rel_diff", "status"], rows)
    manifest.files.append(path.name)
    if rel:
        manifest.check("fisher_forms", max(rel) < FISHER_REL_TOL, max_rel_diff=max(rel), tol=FISHER_REL_TOL)

    theta0 = config["fisher.theta"]
    spec1, spec2 = config.cloud(1), config.cloud(2)
    rows, logs = [], []
    for n in config["fisher.n_values"]:
        scaled = state.with_numbers(n, n)
        asym = asymptotic_sigma(spec1.with_n(n), spec2.with_n(n))
        info = float(fisher_information(scaled, theta0))
        if info < ZERO_INFORMATION:
            rows.append((n, n, None, asym.value, asym.in_regime, "zero-information"))
            continue
        sigma = fisher_sigma(scaled, theta0)
        logs.append((math.log(n * n), math.log(sigma)))
        rows.append((n, n, sigma, asym.value, asym.in_regime, "ok"))
    path = write_csv(out / "scaling.csv", ["N1", "N2", "sigma_cr", "asymptotic", "in_regime", "status"], rows)
    manifest.files.append(path.name)
    if len(logs) >= 2:
        x, y = np.array(logs).T
        slope = float(np.polyfit(x, y, 1)[0])
        manifest.check("scaling_slope", abs(slope - SLOPE_TARGET) <= SLOPE_TOL, slope=slope,
                       target=SLOPE_TARGET, tol=SLOPE_TOL)
    manifest.results.update(zero_information_rows=int(zero.sum()) + len(config["fisher.n_values"]) - len(logs))


COMMANDS = {"exact": cmd_exact, "sample": cmd_sample, "estimate": cmd_estimate, "fisher": cmd_fisher}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fringe-fcs", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="key = value run configuration")
    parser.add_argument("--out", required=True, type=Path, help="output directory")
    parser.add_argument("--seed", type=int, help="override sampler.seed")
    parser.add_argument("--shots", type=int, help="override sampler.shots")
    parser.add_argument("--pin-theta", type=float, help="override sampler.pin_theta (diagnostic)")
    parser.add_argument("--workers", type=int, help="override sampler.workers")
    parser.add_argument("--input", type=Path, help="shots file for 'estimate' (default: <out>/shots.csv)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    config = parse_config(args.config.read_text(encoding="utf-8"))
    updates = {}
    if args.seed is not None:
        updates["sampler__seed"] = args.seed
    if args.shots is not None:
        updates["sampler__shots"] = args.shots
    if args.pin_theta is not None:
        updates["sampler__pin_theta"] = float(args.pin_theta)
    if args.workers is not None:
        updates["sampler__workers"] = args.workers
    updates["output__dir"] = str(args.out)
    return config.replace(**updates)


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        config = load_config(args)
    except (OSError, FringeFCSError) as exc:
        print(f"fringe-fcs: config error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = ResultManifest(args.command, config_hash(config), __version__, config["sampler.seed"])
    try:
        if args.command == "estimate":
            cmd_estimate(config, out, manifest, args.input or out / "shots.csv")
        else:
            COMMANDS[args.command](config, out, manifest)
    except (ValueError, FringeFCSError) as exc:
        print(f"fringe-fcs {args.command}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    manifest.wall_time = time.perf_counter() - start
    manifest.write(out)
    for name, check in manifest.checks.items():
        if not check["passed"]:
            print(f"fringe-fcs {args.command}: check {name} failed: {check}", file=sys.stderr)
    return EXIT_OK if manifest.passed else EXIT_CHECK_FAILED


def main() -> None:
    sys.exit(run())
