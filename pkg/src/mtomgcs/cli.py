"""Command-line entry point: ``mtomgcs <subcommand> ...``.

Every run writes a JSON manifest next to its outputs (argv, resolved
configuration, seeds, input/output sha256 digests, tool version);
``mtomgcs replay MANIFEST`` reruns it into a scratch directory and compares
the digests.

Exit codes: 0 success, 1 domain error, 2 usage error, 3 partial sweep failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .air import evaluate
from .channel import AwgnChannel, LinkModel, TrxParams, read_link_config, write_link_config
from .constellation import (
    brgc_qam,
    expand_quadrant,
    merged_fraction,
    moments,
    read_constellation,
    reduce_to_quadrant,
    write_constellation,
)
from .fit import EXPERIMENT_FIBER, cmaes_fit, read_grid_csv, synthetic_grid, write_grid_csv
from .optimizer import OptimizationDiverged, OptimizerConfig, optimize_restarts
from .pas import evaluate_pas, mb_for_entropy, pas_net_rate
from .rate_planner import RatePlan, plan_for_target, rate_step_table
from .sweep import (
    SCALES,
    ConstellationCache,
    awgn_required_snr,
    gcs_training_spans,
    max_distance,
    nd_grid,
    snr_grid,
)

CONFIG_ENV = "MTOMGCS_CONFIG_DIR"
EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2, 3

# argparse destinations holding output paths (rewritten on replay) and input paths (digested)
OUTPUT_ARGS = ("out", "trace", "out_dir", "link_out", "report")
INPUT_ARGS = ("link", "init", "constellation", "grid")

log = logging.getLogger("mtomgcs")


def code_rate(text: str) -> float:
    """FEC rate from ``5/6`` or a decimal; decimals quoted to 1e-4 snap to a ratio with denominator <= 64."""
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid code rate {text!r}") from None
    snapped = value.limit_denominator(64)
    if abs(snapped - value) <= Fraction(1, 10**4):
        value = snapped
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"code rate {text} outside (0, 1]")
    return float(value)


class UsageError(Exception):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve_config(path: str | None) -> Path | None:
    """Existing path as given, else relative to ``$MTOMGCS_CONFIG_DIR``."""
    if path is None:
        return None
    p = Path(path)
    if p.exists():
        return p
    base = os.environ.get(CONFIG_ENV)
    if base and (Path(base) / path).exists():
        return Path(base) / path
    raise UsageError(f"file not found: {path}")


def _channel(args):
    trx = TrxParams(snr_trx=args.snr_trx, n_qbits=args.qbits)
    if getattr(args, "awgn_snr", None) is not None:
        if args.link:
            raise UsageError("--awgn-snr and --link are mutually exclusive")
        return AwgnChannel(args.awgn_snr, trx)
    if args.link:
        link = read_link_config(resolve_config(args.link))
    else:
        default = os.environ.get(CONFIG_ENV)
        link = read_link_config(Path(default) / "link.ini") if default and (Path(default) / "link.ini").exists() else LinkModel()
    if args.spans is not None:
        link = link.with_spans(args.spans)
    if args.launch_power is not None:
        link = link.with_power(args.launch_power)
    return link


def _add_channel_flags(p, awgn=True):
    if awgn:
        p.add_argument("--awgn-snr", type=float, help="AWGN channel at this SNR (dB)")
    p.add_argument("--link", help="link configuration (INI); looked up in $%s if not found" % CONFIG_ENV)
    p.add_argument("--spans", type=int, help="override the number of spans of the link")
    p.add_argument("--launch-power", type=float, help="launch power per channel (dBm)")
    p.add_argument("--snr-trx", type=float, default=float("inf"), help="transceiver SNR for AWGN runs (dB)")
    p.add_argument("--qbits", type=int, default=None, help="DAC/ADC resolution for AWGN runs (default: none)")


def _check_nd(args):
    if not 0 <= args.nd <= args.m - 2:
        raise UsageError(f"--nd {args.nd} outside [0, m-2 = {args.m - 2}]")


# -- subcommands --------------------------------------------------------------


def cmd_optimize(args) -> int:
    _check_nd(args)
    channel = _channel(args)
    init = read_constellation(resolve_config(args.init)) if args.init else brgc_qam(args.m)
    if init.m != args.m:
        raise UsageError(f"initial constellation has m={init.m}, expected {args.m}")
    cfg = OptimizerConfig(
        n_d_target=args.nd,
        n_symbols_total=args.symbols_per_epoch,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        optimize_launch_power=args.optimize_power,
        max_epochs=args.max_epochs,
        convergence_tol=args.tol,
    )
    try:
        q, power, trace = optimize_restarts(reduce_to_quadrant(init), channel, cfg, args.restarts)
    except OptimizationDiverged as exc:
        print(f"error: optimization diverged: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    c = expand_quadrant(q)
    write_constellation(c, args.out)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_objective", "validation_objective", "launch_power_dbm"])
            for row in trace.rows():
                w.writerow([row["epoch"], repr(row["train_objective"]), repr(row["validation_objective"]), repr(row["launch_power_dbm"])])
    _, mu4, mu6, papr = moments(c)
    print(f"epochs={trace.epochs} stop={trace.stop_reason} seed={trace.seed} launch_power={power:.3f} dBm")
    print(f"mu4={mu4:.4f} mu6={mu6:.4f} papr={papr:.4f} merged={merged_fraction(c, trace.data_positions):.3f}")
    return EXIT_OK


def cmd_plan(args) -> int:
    if args.target_eta is not None:
        plan = plan_for_target(args.K, args.N, args.m, args.target_eta)
    elif args.nd_bits is not None:
        plan = RatePlan(args.K, args.N, args.m, args.nd_bits)
    else:
        raise UsageError("give --target-eta or --N-D")
    rec = plan.as_record()
    print(" ".join(f"{k}={v}" for k, v in rec.items()))
    if args.out:
        rows = rate_step_table(args.K, args.N, args.m)
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N_D", "n_d", "eta", "eta_exact", "eta_step"])
            for n_dummy, eta, step in rows:
                if (args.N + n_dummy) % args.m == 0:
                    n_d = args.m * n_dummy / (args.N + n_dummy)
                    w.writerow([n_dummy, repr(n_d), repr(float(eta)), str(eta), repr(float(step))])
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _check_nd(args)
    channel = _channel(args)
    c = read_constellation(resolve_config(args.constellation)) if args.constellation else brgc_qam(args.m)
    rep = evaluate(c, channel, args.nd, args.symbols, args.seed, launch_power=args.launch_power)
    rec = {"constellation": args.constellation or f"brgc{2 ** c.m}", "link": channel.describe(), "seed": args.seed, **rep.as_record()}
    print(f"AIR={rep.air_mtom:.5f} +- {rep.confidence_halfwidth:.5f} bits/2D (n_d={args.nd})")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rec), lineterminator="\n")
            w.writeheader()
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})
    return EXIT_OK


def cmd_sweep(args) -> int:
    scale = SCALES[args.scale]
    if args.restarts:
        scale = dataclasses.replace(scale, n_restarts=args.restarts)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = ConstellationCache(args.cache_dir) if args.cache_dir else ConstellationCache()
    n_ds = nd_grid(args.m, args.nd_step or scale.nd_step, args.nd_max)
    result = None
    if args.kind == "awgn":
        grid = snr_grid(args.snr_min, args.snr_max, args.snr_step)
        for scheme in args.schemes:
            part = awgn_required_snr(scheme, n_ds, grid, args.R, args.m, scale, cache, args.seed)
            result = part if result is None else result.extend(part)
        name = "fig5_top.csv"
    else:
        link = _channel(args)
        spans = range(1, args.max_spans + 1)
        train = gcs_training_spans(link, n_ds, args.R, args.m, spans, scale, args.seed) if "MTOM-GCS" in args.schemes else None
        for scheme in args.schemes:
            part = max_distance(scheme, link, n_ds, args.R, args.m, spans, scale, cache, args.seed, train)
            result = part if result is None else result.extend(part)
        name = "fig6.csv"
    result.to_csv(out_dir / name)
    for scheme in args.schemes:
        th = result.thresholds(scheme)
        print(scheme, " ".join(f"{rate:.3f}:{v:g}" for rate, v in th.items()))
    if result.failed:
        print(f"warning: {len(result.failed)} sweep cells failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_grid(args) -> int:
    params = (args.nf, args.snr_trx_fit, args.alpha, args.gamma)
    g = synthetic_grid(params, EXPERIMENT_FIBER, noise_db=args.noise, seed=args.seed)
    write_grid_csv(g, args.out)
    print(f"wrote {len(g)} records")
    return EXIT_OK


def cmd_fit(args) -> int:
    grid = read_grid_csv(resolve_config(args.grid))
    res = cmaes_fit(grid, seed=args.seed, budget=args.budget, method=args.method)
    text = res.to_text()
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text)
    if args.link_out:
        write_link_config(res.link(EXPERIMENT_FIBER, grid.n_qbits), args.link_out)
    return EXIT_OK


def cmd_pas(args) -> int:
    base = brgc_qam(args.m)
    pmf = mb_for_entropy(base, args.H)
    net = pas_net_rate(pmf.entropy, args.m, args.R)
    _, mu4, mu6, papr = moments(pmf.constellation, pmf.probs)
    print(f"H={pmf.entropy:.4f} nu={pmf.nu:.6g} net_rate={net:.3f} mu4={mu4:.4f} mu6={mu6:.4f} papr={papr:.4f}")
    if args.awgn_snr is not None or args.link:
        channel = _channel(args)
        air, mi, hw = evaluate_pas(pmf, channel, args.symbols, args.seed, args.launch_power)
        print(f"AIR={air:.5f} +- {hw:.5f} bits/2D feasible={air >= net}")
    if args.out:
        write_constellation(pmf.constellation, args.out, pmf=pmf.probs)
    return EXIT_OK


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest.get("tool_version") != __version__:
        print(f"warning: manifest written by version {manifest.get('tool_version')}", file=sys.stderr)
    for path, digest in manifest["inputs"].items():
        if not Path(path).exists() or sha256(path) != digest:
            print(f"input changed or missing: {path}", file=sys.stderr)
            return EXIT_DOMAIN
    with tempfile.TemporaryDirectory() as tmp:
        argv = list(manifest["argv"])
        remap = {}
        for dest in OUTPUT_ARGS:
            flag = "--" + dest.replace("_", "-")
            if flag in argv:
                k = argv.index(flag)
                new = str(Path(tmp) / f"{dest}_{Path(argv[k + 1]).name}")
                remap[argv[k + 1]] = new
                argv[k + 1] = new
        code = main(["--no-manifest"] + argv)
        if code != manifest["exit_code"]:
            print(f"exit code {code} differs from recorded {manifest['exit_code']}", file=sys.stderr)
            return EXIT_DOMAIN
        mismatches = []
        for path, digest in manifest["outputs"].items():
            new = _replayed_path(path, remap)
            if new is None or not Path(new).exists() or sha256(new) != digest:
                mismatches.append(path)
        for path in mismatches:
            print(f"mismatch: {path}", file=sys.stderr)
        print(f"replayed {len(manifest['outputs'])} outputs, {len(mismatches)} mismatches")
        return EXIT_DOMAIN if mismatches else EXIT_OK


def _replayed_path(path: str, remap: dict) -> str | None:
    for old, new in remap.items():
        if path == old:
            return new
        if Path(path).parent == Path(old) or str(path).startswith(str(Path(old)) + os.sep):
            return str(Path(new) / Path(path).relative_to(old))
    return None


# -- parser / manifest ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtomgcs", description="Rate-adaptive geometric constellation shaping toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("--threads", type=int, default=1, help="cap on worker threads (results do not depend on it)")
    p.add_argument("--manifest", help="manifest path (default: next to the primary output)")
    p.add_argument("--no-manifest", action="store_true", help=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("optimize", help="optimize an MTOM-GCS constellation")
    o.add_argument("--m", type=int, default=8, help="bits per symbol")
    o.add_argument("--nd", type=float, required=True, help="target dummy bits per symbol")
    _add_channel_flags(o)
    o.add_argument("--init", help="initial constellation file (default: BRGC QAM)")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--restarts", type=int, default=1, help="independent runs; the best held-out AIR wins")
    o.add_argument("--lr", type=float, default=1e-3)
    o.add_argument("--weight-decay", type=float, default=1e-5)
    o.add_argument("--batch-size", type=int, default=500)
    o.add_argument("--symbols-per-epoch", type=int, default=100_000)
    o.add_argument("--max-epochs", type=int, default=300)
    o.add_argument("--tol", type=float, default=1e-4, help="convergence tolerance (bits)")
    o.add_argument("--optimize-power", action="store_true", help="treat the launch power as a variable")
    o.add_argument("--out", required=True, help="output constellation file")
    o.add_argument("--trace", help="training trace CSV")
    o.set_defaults(func=cmd_optimize)

    pl = sub.add_parser("plan", help="dummy-bit budget for a target net rate")
    pl.add_argument("--K", type=int, required=True)
    pl.add_argument("--N", type=int, required=True)
    pl.add_argument("--m", type=int, required=True)
    pl.add_argument("--target-eta", type=float)
    pl.add_argument("--N-D", dest="nd_bits", type=int)
    pl.add_argument("--out", help="rate-step table CSV")
    pl.set_defaults(func=cmd_plan)

    e = sub.add_parser("evaluate", help="Monte Carlo AIR of a constellation")
    e.add_argument("--constellation", help="constellation file (default: BRGC QAM)")
    e.add_argument("--m", type=int, default=8)
    e.add_argument("--nd", type=float, default=0.0)
    _add_channel_flags(e)
    e.add_argument("--symbols", type=int, default=100_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="report CSV")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="required-SNR (awgn) or max-distance (nlin) sweeps")
    s.add_argument("--kind", choices=("awgn", "nlin"), required=True)
    s.add_argument("--schemes", nargs="+", default=["BRGC", "MTOM-unshaped", "TH", "MTOM-GCS"],
                   choices=("BRGC", "MTOM-unshaped", "MTOM-GCS", "TH", "TH-GCS", "PAS"))
    s.add_argument("--R", type=code_rate, default=0.75, help="FEC code rate, e.g. 3/4 or 0.75")
    s.add_argument("--m", type=int, default=8)
    s.add_argument("--scale", choices=sorted(SCALES), default="desk")
    s.add_argument("--nd-step", type=float, help="n_d grid step (default from --scale)")
    s.add_argument("--nd-max", type=float, help="largest n_d (default min(3, m-5))")
    s.add_argument("--snr-min", type=float, default=10.0)
    s.add_argument("--snr-max", type=float, default=22.0)
    s.add_argument("--snr-step", type=float, default=0.6)
    s.add_argument("--max-spans", type=int, default=30)
    s.add_argument("--restarts", type=int, default=0, help="optimizer restarts per GCS constellation")
    _add_channel_flags(s, awgn=False)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cache-dir", help="persist optimized constellations here")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_sweep, awgn_snr=None)

    g = sub.add_parser("grid", help="write a synthetic effective-SNR measurement grid")
    g.add_argument("--nf", type=float, default=6.17)
    g.add_argument("--snr-trx-fit", type=float, default=20.78)
    g.add_argument("--alpha", type=float, default=0.183)
    g.add_argument("--gamma", type=float, default=0.986)
    g.add_argument("--noise", type=float, default=0.0, help="uniform noise half-width (dB)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_grid)

    f = sub.add_parser("fit", help="fit link parameters to a measured SNR grid")
    f.add_argument("--grid", required=True, help="CSV with distance_km, power_dbm, snr_db")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--budget", type=int, default=4000, help="objective evaluations")
    f.add_argument("--method", choices=("cmaes", "nelder-mead"), default="cmaes")
    f.add_argument("--out", help="fit result (text)")
    f.add_argument("--link-out", help="fitted link configuration (INI)")
    f.set_defaults(func=cmd_fit)

    a = sub.add_parser("pas", help="Maxwell-Boltzmann PAS baseline")
    a.add_argument("--m", type=int, default=8)
    a.add_argument("--H", type=float, required=True, help="target entropy (bits)")
    a.add_argument("--R", type=code_rate, required=True, help="FEC code rate, e.g. 5/6 or 0.8333")
    _add_channel_flags(a)
    a.add_argument("--symbols", type=int, default=100_000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", help="constellation file with the PMF")
    a.set_defaults(func=cmd_pas)

    r = sub.add_parser("replay", help="rerun a manifest and compare output digests")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay)
    return p


def _outputs(args) -> list:
    paths = []
    for dest in OUTPUT_ARGS:
        value = getattr(args, dest, None)
        if not value:
            continue
        p = Path(value)
        if p.is_dir():
            paths.extend(sorted(str(f) for f in p.rglob("*") if f.is_file() and not f.name.endswith(".manifest.json")))
        elif p.exists():
            paths.append(str(p))
    return paths


def _manifest_path(args) -> Path | None:
    if args.manifest:
        return Path(args.manifest)
    for dest in OUTPUT_ARGS:
        value = getattr(args, dest, None)
        if value:
            p = Path(value)
            return (p / f"{args.command}.manifest.json") if dest == "out_dir" else p.with_name(p.name + ".manifest.json")
    return None


def write_manifest(args, argv, code) -> None:
    path = _manifest_path(args)
    if path is None:
        return
    config = {k: v for k, v in vars(args).items() if k not in ("func", "manifest", "no_manifest")}
    inputs = {}
    for dest in INPUT_ARGS:
        value = getattr(args, dest, None)
        if value:
            try:
                resolved = resolve_config(value)
            except UsageError:
                continue
            inputs[str(resolved)] = sha256(resolved)
    manifest = {
        "tool": "mtomgcs",
        "tool_version": __version__,
        "subcommand": args.command,
        "argv": argv,
        "config": json.loads(json.dumps(config, default=str)),
        "seeds": {"seed": getattr(args, "seed", None)},
        "environment": {CONFIG_ENV: os.environ.get(CONFIG_ENV)},
        "inputs": inputs,
        "outputs": {p: sha256(p) for p in _outputs(args)},
        "exit_code": code,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    import torch

    torch.set_num_threads(max(1, args.threads))
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_DOMAIN
    if args.command != "replay" and not args.no_manifest:
        clean = [a for a in argv if a != "--no-manifest"]
        write_manifest(args, clean, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
