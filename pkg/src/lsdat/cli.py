"""Command line entry point: ``lsdat attack | sweep-l0 | dict-stats | make-synthetic | serve``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .constraints import L0, make_constraint
from .dictionary import DictionaryFormatError
from .harness.campaign import (CampaignConfig, ConfigError, dictionary_stats, run_campaign,
                               sweep_l0)
from .harness.dataset import DatasetError, load_dataset, save_dataset
from .harness.report import emit_report, load_report, stats_to_csv, sweep_to_csv, sweep_to_json
from .harness.synthetic import make_benchmark
from .oracle import CentroidOracle, LinearOracle, Oracle, OracleError, RemoteOracle, ReplayOracle
from .rpca import RpcaConfig

EXIT_OK, EXIT_CONFIG, EXIT_ORACLE, EXIT_IO = 0, 1, 2, 3

logger = logging.getLogger("lsdat")


def build_oracle(descriptor: str, class_count: int, timeout: float = 10.0, retries: int = 3) -> Oracle:
    """Parse ``linear:<npz>``, ``centroid:<npz>``, ``remote:<url>`` or ``replay:<json>``."""
    kind, sep, source = descriptor.partition(":")
    if not sep or not source:
        raise ConfigError(f"oracle must look like kind:source, got {descriptor!r}")
    if kind == "linear":
        with np.load(source) as f:
            return LinearOracle(f["weights"], f["bias"] if "bias" in f else None)
    if kind == "centroid":
        with np.load(source) as f:
            return CentroidOracle(f["centroids"])
    if kind == "remote":
        return RemoteOracle(source, class_count=class_count, timeout=timeout, retries=retries)
    if kind == "replay":
        return ReplayOracle.load(source)
    raise ConfigError(f"unknown oracle kind {kind!r}")


def _campaign_args(p: argparse.ArgumentParser, with_budget: bool = True) -> None:
    p.add_argument("--manifest", required=True)
    p.add_argument("--oracle", required=True, help="linear:<npz> | centroid:<npz> | remote:<url> | replay:<json>")
    if with_budget:
        p.add_argument("--norm", choices=["l0", "l2", "linf"], required=True)
        p.add_argument("--budget", type=float, required=True, help="k, epsilon or sigma")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--explore", type=int, default=100, help="initial sample budget G")
    p.add_argument("--mode", choices=["R", "D"], default="R")
    p.add_argument("--dict", dest="dict_path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--sequential", action="store_true", help="force one image at a time")
    p.add_argument("--verify-clean", action="store_true")
    p.add_argument("--strict", action="store_true", help="abort on the first oracle failure")
    p.add_argument("--no-clip", action="store_true", help="do not clip queried images to [0, 1]")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--rpca-tol", type=float, default=1e-7)
    p.add_argument("--rpca-max-iter", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="json")


def _config(args, constraint) -> CampaignConfig:
    if args.mode == "D" and not args.dict_path:
        raise ConfigError("--mode D requires --dict")
    return CampaignConfig(
        constraint=constraint,
        alpha=args.alpha,
        max_iter=args.max_iter,
        explore=args.explore,
        mode=args.mode,
        dict_path=args.dict_path if args.mode == "D" else None,
        seed=args.seed,
        parallelism=1 if args.sequential else args.parallel,
        clip_pixels=not args.no_clip,
        verify_clean=args.verify_clean,
        strict=args.strict,
        oracle=args.oracle,
        rpca=RpcaConfig(tolerance=args.rpca_tol, max_iterations=args.rpca_max_iter),
    )


def cmd_attack(args) -> int:
    try:
        constraint = make_constraint(args.norm, args.budget)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = _config(args, constraint)
    data = load_dataset(args.manifest)
    oracle = build_oracle(args.oracle, data.class_count, args.timeout, args.retries)
    report = run_campaign(cfg, data, oracle)
    emit_report(report, args.format, args.out)
    aq = "n/a" if report.aq is None else f"{report.aq:.2f}"
    print(f"FR {report.fr:.4f}  AQ {aq}  images {report.dataset_size}  queries {report.oracle_queries}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        rates = [float(r) for r in args.rates.split(",") if r.strip()]
    except ValueError:
        raise ConfigError(f"bad --rates {args.rates!r}") from None
    cfg = _config(args, L0(1))
    data = load_dataset(args.manifest)
    oracle = build_oracle(args.oracle, data.class_count, args.timeout, args.retries)
    result = sweep_l0(cfg, data, oracle, rates)
    text = sweep_to_json(result) if args.format == "json" else sweep_to_csv(result)
    Path(args.out).write_text(text)
    for rate, k, fr in zip(result.rates, result.budgets, result.fooling_rates):
        print(f"P={rate}%  k={k}  FR {fr:.4f}")
    print(f"FR non-decreasing in P%: {result.fr_non_decreasing}")
    return EXIT_OK


def cmd_dict_stats(args) -> int:
    stats = dictionary_stats(load_report(args.report))
    if stats.note:
        print(stats.note)
    text = stats_to_csv(stats)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if stats.top1_share is not None:
        print(f"top-1 share {stats.top1_share:.3f}  top-5 share {stats.top5_share:.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_make_synthetic(args) -> int:
    bench = make_benchmark(args.seed, n_samples=args.samples, class_count=args.classes, size=args.size,
                           channels=args.channels)
    out = Path(args.out)
    manifest = save_dataset(out, bench.images, bench.labels, bench.class_count, ids=bench.ids, fmt=args.format)
    np.savez(out / "centroids.npz", centroids=bench.centroids)
    (out / "benchmark.json").write_text(json.dumps({"seed": args.seed, "universal_id": bench.universal_id}) + "\n")
    print(f"wrote {manifest} and {out / 'centroids.npz'}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .harness.serve import serve_oracle

    oracle = build_oracle(args.oracle, args.classes)
    server = serve_oracle(oracle, args.host, args.port)
    print(f"serving {args.oracle} at {server.url}/classify", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsdat", description="Low-rank/sparse decision-based attack toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="run an attack campaign over a dataset")
    _campaign_args(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep-l0", help="l0 campaigns over perturbation rates (percent of coordinates)")
    _campaign_args(p, with_budget=False)
    p.add_argument("--rates", default="0.5,1,2.36,3.05,4.29")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dict-stats", help="per initial-sample success table of a mode D report")
    p.add_argument("--report", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dict_stats)

    p = sub.add_parser("make-synthetic", help="write the seeded synthetic benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--format", choices=["npy", "raw", "png"], default="npy")
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("serve", help="serve a local oracle over the /classify protocol")
    p.add_argument("--oracle", required=True)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LSDAT_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except OracleError as exc:
        logger.error("oracle failure: %s", exc)
        return EXIT_ORACLE
    except (DatasetError, DictionaryFormatError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except (ConfigError, ValueError, KeyError) as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
