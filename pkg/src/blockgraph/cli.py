"""Command-line interface for block-structured graphical-model workflows.

Subcommands
-----------
simulate    draw a synthetic dataset (or run a replicated benchmark with --experiment)
sample      run the structure-learning chain on a data matrix
summarize   turn sampled graphs into inclusion probabilities and a selected graph
metrics     score an estimated graph against a reference graph
smooth      fit the functional smoother to curves observed on a grid
oracle      exact posterior over all admissible graphs of a tiny instance

Every run writes its outputs plus a ``manifest.json`` into the --out directory.
The ``BLOCKGRAPH_LOG`` environment variable (DEBUG/INFO/WARNING/ERROR) controls
log verbosity.  Exit status: 0 success, 1 usage or configuration error,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .functional import GridTooCoarse, smooth as run_smoother
from .graphs import EdgePrior, Partition
from .gwishart import (
    GWishartParams,
    NoConvergence,
    NotDecomposable,
    NotPositiveDefinite,
    exact_graph_posterior,
)
from .io import (
    SCHEMA_VERSION,
    ConfigError,
    RunManifest,
    load_config,
    read_chain_samples,
    read_graph_json,
    read_matrix_csv,
    sampler_config_from,
    smoother_config_from,
    write_chain_output,
    write_estimate_json,
    write_graph_json,
    write_matrix_csv,
    write_metrics_json,
)
from .posterior import bfdr_threshold, edge_inclusion, median_model, select_graph
from .report import curve_overlay, inclusion_heatmap, metric_boxplots
from .sampler import NumericalOverflow, SamplerConfig, run_chain
from .simbench import SyntheticScenario, confusion, draw_scenario, run_experiment

log = logging.getLogger("blockgraph")

_NUMERICAL_ERRORS = (
    NoConvergence,
    NotPositiveDefinite,
    NotDecomposable,
    NumericalOverflow,
    np.linalg.LinAlgError,
    FloatingPointError,
)


def _configure_logging() -> None:
    name = os.environ.get("BLOCKGRAPH_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(level)


def _prepare(args) -> tuple[Path, dict, RunManifest]:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = load_config(args.config) if args.config else {}
    manifest = RunManifest(
        command=args.command,
        seed=args.seed if args.seed is not None else cfg.get("seed"),
        config=cfg,
    )
    return out_dir, cfg, manifest


def _finish(manifest: RunManifest, out_dir: Path) -> int:
    path = manifest.write(out_dir)
    log.info("wrote %s", path)
    return 0


# ---------------------------------------------------------------------------
# simulate


def _scenario_from(cfg: dict, path, experiment: int | None) -> SyntheticScenario:
    defaults: dict = {}
    if experiment == 1:
        defaults = {"partition": [2] * 10, "n": 500, "theta": [0.2, 0.6]}
    elif experiment == 2:
        defaults = {
            "partition": [2] * 8,
            "n": 500,
            "theta": [0.2, 0.6],
            "within_block_removal_prob": 0.25,
        }
    merged = {**defaults, **cfg}
    try:
        group_sizes = tuple(int(v) for v in merged["partition"])
        theta = merged.get("theta", 0.5)
        if isinstance(theta, (list, tuple)):
            theta = (float(theta[0]), float(theta[1]))
        else:
            theta = float(theta)
        return SyntheticScenario(
            group_sizes=group_sizes,
            n=int(merged["n"]),
            theta=theta,
            within_block_removal_prob=float(merged.get("within_block_removal_prob", 0.0)),
            b=float(merged.get("b", 3.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"{path}:1: missing required config key {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}:1: {exc}") from exc


def _experiment_template(cfg: dict, path, seed: int) -> SamplerConfig:
    partition = [int(v) for v in cfg["partition"]]
    chain_cfg = {
        "partition": partition,
        "theta": cfg.get("chain_theta", 0.5),
        "b": cfg.get("b", 3.0),
        "iterations": cfg.get("iterations", 100_000),
        "burn_in": cfg.get("burn_in", 20_000),
        "thinning": cfg.get("thinning", 10),
        "alpha_g": cfg.get("alpha_g", 0.5),
        "sigma_g2": cfg.get("sigma_g2", 0.5),
        "seed": seed,
    }
    _, template = sampler_config_from(chain_cfg, path=path)
    return template


def cmd_simulate(args) -> int:
    out_dir, cfg, manifest = _prepare(args)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    manifest.seed = seed
    scenario = _scenario_from(cfg, args.config or "config", args.experiment)

    if args.experiment is not None:
        merged = dict(cfg)
        merged.setdefault("partition", list(scenario.group_sizes))
        template = _experiment_template(merged, args.config or "config", seed)
        replicates = args.replicates or int(cfg.get("replicates", 10))
        target = float(cfg.get("bfdr_target", 0.05))
        results = run_experiment(
            scenario,
            template,
            replicates=replicates,
            master_seed=seed,
            bfdr_target=target,
            threads=args.threads,
        )
        rows = [r.to_row() for r in results]
        table_path = out_dir / "experiment.csv"
        with open(table_path, "w") as fh:
            keys = list(rows[0])
            fh.write(",".join(keys) + "\n")
            for row in rows:
                fh.write(",".join(str(row[k]) for k in keys) + "\n")
        fig_path = metric_boxplots(
            out_dir / "experiment_metrics.png",
            rows,
            title=f"Experiment {args.experiment}: {replicates} replicates",
        )
        medians = {
            k: float(np.median([row[k] for row in rows]))
            for k in ("f1", "std_shd", "sensitivity", "specificity")
        }
        print(
            "medians  "
            + "  ".join(f"{k}={v:.4f}" for k, v in medians.items())
        )
        manifest.add(table_path, fig_path)
        return _finish(manifest, out_dir)

    drawn = draw_scenario(scenario, np.random.default_rng(seed))
    data_path = out_dir / "data.csv"
    truth_path = out_dir / "truth.json"
    precision_path = out_dir / "precision.csv"
    write_matrix_csv(data_path, drawn.data)
    write_graph_json(truth_path, drawn.target, partition=scenario.partition, theta=drawn.theta)
    write_matrix_csv(precision_path, drawn.precision)
    manifest.add(data_path, truth_path, precision_path)
    print(f"wrote {data_path} ({drawn.data.shape[0]} rows) and {truth_path}")
    return _finish(manifest, out_dir)


# ---------------------------------------------------------------------------
# sample


def cmd_sample(args) -> int:
    out_dir, cfg, manifest = _prepare(args)
    if not args.config:
        raise ConfigError("sample: --config is required")
    partition, chain_cfg = sampler_config_from(cfg, path=args.config, seed_override=args.seed)
    manifest.seed = chain_cfg.seed
    data = read_matrix_csv(args.data)
    if data.shape[1] != partition.n_nodes:
        raise ConfigError(
            f"{args.data}:1: data has {data.shape[1]} columns but the partition"
            f" declares {partition.n_nodes} nodes"
        )
    output = run_chain(data, partition, chain_cfg)
    inclusion = edge_inclusion(output.graphs)
    files = write_chain_output(out_dir, output, inclusion)
    inc_path = out_dir / "inclusion.csv"
    write_matrix_csv(inc_path, inclusion)
    fig_path = inclusion_heatmap(out_dir / "inclusion.png", inclusion)
    manifest.add(*files, inc_path, fig_path)
    print(
        f"kept {output.n_samples} samples,"
        f" acceptance rate {output.acceptance_rate:.3f}"
    )
    return _finish(manifest, out_dir)


# ---------------------------------------------------------------------------
# summarize


def cmd_summarize(args) -> int:
    out_dir, _, manifest = _prepare(args)
    partition, samples = read_chain_samples(args.samples)
    inclusion = edge_inclusion(samples)
    if args.median:
        estimate = median_model(samples)
        label = "median-probability model"
    else:
        target = args.bfdr
        thr = bfdr_threshold(inclusion, target)
        estimate = select_graph(inclusion, thr, target)
        label = f"BFDR {target:g} model (threshold {thr:g})"
    inc_path = out_dir / "inclusion.csv"
    est_path = out_dir / "estimate.json"
    write_matrix_csv(inc_path, inclusion)
    write_estimate_json(est_path, estimate, partition=partition)
    fig_path = inclusion_heatmap(out_dir / "inclusion.png", inclusion)
    manifest.add(inc_path, est_path, fig_path)
    print(f"{label}: {estimate.n_edges} edges from {len(samples)} samples")
    return _finish(manifest, out_dir)


# ---------------------------------------------------------------------------
# metrics


def cmd_metrics(args) -> int:
    out_dir, _, manifest = _prepare(args)
    est = read_graph_json(args.estimate)
    truth = read_graph_json(args.truth)
    report = confusion(est.adjacency, truth.adjacency)
    path = out_dir / "metrics.json"
    write_metrics_json(path, report)
    manifest.add(path)
    print(
        f"std_shd={report.std_shd:.6f}  f1={report.f1:.6f}"
        f"  sensitivity={report.sensitivity:.6f}  specificity={report.specificity:.6f}"
    )
    return _finish(manifest, out_dir)


# ---------------------------------------------------------------------------
# smooth


def cmd_smooth(args) -> int:
    out_dir, cfg, manifest = _prepare(args)
    if not args.config:
        raise ConfigError("smooth: --config is required")
    smoother_cfg = smoother_config_from(cfg, path=args.config, seed_override=args.seed)
    manifest.seed = smoother_cfg.seed
    curves = read_matrix_csv(args.curves)
    grid = read_matrix_csv(args.grid).ravel()
    result = run_smoother(curves, grid, smoother_cfg)

    inclusion = edge_inclusion(result.graphs)
    target = float(cfg.get("bfdr_target", 0.05))
    thr = bfdr_threshold(inclusion, target)
    estimate = select_graph(inclusion, thr, target)

    fitted_path = out_dir / "fitted.csv"
    inc_path = out_dir / "inclusion.csv"
    graph_path = out_dir / "graph.json"
    write_matrix_csv(fitted_path, result.fitted)
    write_matrix_csv(inc_path, inclusion)
    write_estimate_json(graph_path, estimate, partition=smoother_cfg.partition)
    overlay_path = curve_overlay(out_dir / "curves.png", grid, curves, result.fitted)
    heat_path = inclusion_heatmap(out_dir / "inclusion.png", inclusion)
    manifest.add(fitted_path, inc_path, graph_path, overlay_path, heat_path)
    rmse = float(np.sqrt(np.mean((result.fitted - curves) ** 2)))
    print(
        f"fitted {curves.shape[0]} curves, rmse {rmse:.5f},"
        f" selected {estimate.n_edges} edges, acceptance {result.acceptance_rate:.3f}"
    )
    return _finish(manifest, out_dir)


# ---------------------------------------------------------------------------
# oracle


def cmd_oracle(args) -> int:
    out_dir, cfg, manifest = _prepare(args)
    if not args.config:
        raise ConfigError("oracle: --config is required")
    wanted = {k: cfg[k] for k in ("partition", "theta", "b", "D", "seed") if k in cfg}
    partition, chain_cfg = sampler_config_from(
        {**wanted, "iterations": 1}, path=args.config, seed_override=args.seed
    )
    data = read_matrix_csv(args.data)
    table = exact_graph_posterior(partition, chain_cfg.prior, chain_cfg.gwishart, data)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "exact_posterior",
        "partition": list(partition.group_sizes),
        "graphs": [
            {"edges": [list(e) for e in gb.present_edges()], "probability": prob}
            for gb, prob in table
        ],
    }
    path = out_dir / "oracle.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    manifest.add(path)
    best = max(table, key=lambda t: t[1])
    print(
        f"enumerated {len(table)} graphs;"
        f" mode has edges {best[0].present_edges()} with probability {best[1]:.4f}"
    )
    return _finish(manifest, out_dir)


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors must exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit(self.prog + ": error: " + message)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="config JSON file")
    sub.add_argument("--seed", type=int, metavar="N", help="override the config seed")
    sub.add_argument("--out", metavar="DIR", default=".", help="output directory")
    sub.add_argument(
        "--threads", type=int, metavar="N", default=1, help="worker processes for replicates"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockgraph", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="draw synthetic data or run a benchmark")
    sim.add_argument(
        "--experiment",
        type=int,
        choices=(1, 2),
        help="replicated benchmark: 1 = block-faithful truth, 2 = degraded blocks",
    )
    sim.add_argument("--replicates", type=int, metavar="R", help="replicates per experiment")
    _add_common(sim)
    sim.set_defaults(func=cmd_simulate)

    samp = commands.add_parser("sample", help="run the structure-learning chain")
    samp.add_argument("data", metavar="DATA_CSV", help="observation matrix, rows = cases")
    _add_common(samp)
    samp.set_defaults(func=cmd_sample)

    summ = commands.add_parser("summarize", help="summarize sampled graphs")
    summ.add_argument("samples", metavar="SAMPLES_JSON", help="chain summary or samples file")
    pick = summ.add_mutually_exclusive_group()
    pick.add_argument(
        "--bfdr", type=float, default=0.05, metavar="Q", help="false-discovery target"
    )
    pick.add_argument("--median", action="store_true", help="median-probability model")
    _add_common(summ)
    summ.set_defaults(func=cmd_summarize)

    met = commands.add_parser("metrics", help="score an estimate against a reference")
    met.add_argument("estimate", metavar="EST_JSON")
    met.add_argument("truth", metavar="TRUTH_JSON")
    _add_common(met)
    met.set_defaults(func=cmd_metrics)

    smo = commands.add_parser("smooth", help="fit the functional smoother")
    smo.add_argument("curves", metavar="CURVES_CSV", help="one curve per row")
    smo.add_argument("grid", metavar="GRID_CSV", help="grid values, one per line")
    _add_common(smo)
    smo.set_defaults(func=cmd_smooth)

    orc = commands.add_parser("oracle", help="exact tiny-instance posterior")
    orc.add_argument("data", metavar="DATA_CSV")
    _add_common(orc)
    orc.set_defaults(func=cmd_oracle)

    return parser


def cli(argv: list[str] | None = None) -> int:
    """Run one command; returns the process exit code."""
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        return 0 if exc.code in (0, None) else 1
    except (ConfigError, GridTooCoarse, FileNotFoundError, NotADirectoryError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _NUMERICAL_ERRORS as exc:
        log.error("numerical failure: %s", exc)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def entry_point() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    entry_point()
