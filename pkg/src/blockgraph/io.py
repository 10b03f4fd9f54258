"""Persistence: delimited matrices, graph documents, configs, and run manifests.

Matrices travel as row-major CSV with an optional header row.  Graphs, chain
summaries, metric reports, and manifests travel as JSON objects stamped with a
``schema_version`` field.  All loaders report the file and line of the first
malformed token they encounter.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .functional import SmootherConfig
from .graphs import BlockGraph, EdgePrior, Multigraph, Partition
from .gwishart import GWishartParams
from .posterior import GraphEstimate
from .sampler import ChainOutput, SamplerConfig

__all__ = [
    "ConfigError",
    "SCHEMA_VERSION",
    "read_matrix_csv",
    "write_matrix_csv",
    "GraphDocument",
    "write_graph_json",
    "write_estimate_json",
    "read_graph_json",
    "write_metrics_json",
    "write_chain_output",
    "read_chain_samples",
    "load_config",
    "sampler_config_from",
    "smoother_config_from",
    "RunManifest",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """A config or data file could not be parsed; the message carries file:line."""


# ---------------------------------------------------------------------------
# matrices


def write_matrix_csv(path, matrix: np.ndarray, header: bool = False) -> None:
    """Write a matrix (or a 1-d vector as a single column) row-major to CSV."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.ndim != 2:
        raise ValueError(f"expected a 1-d or 2-d array, got ndim={matrix.ndim}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"c{j}" for j in range(matrix.shape[1])])
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    """Read a numeric CSV, skipping a header row if the first row is non-numeric."""
    rows: list[list[float]] = []
    width: int | None = None
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            try:
                values = [float(cell) for cell in record]
            except ValueError as exc:
                if lineno == 1 and not rows:
                    continue  # header row
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ConfigError(
                    f"{path}:{lineno}: expected {width} columns, found {len(values)}"
                )
            rows.append(values)
    if not rows:
        raise ConfigError(f"{path}:1: no numeric rows found")
    return np.asarray(rows, dtype=float)


# ---------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class GraphDocument:
    """A graph read back from disk: node-level adjacency plus optional grouping."""

    adjacency: np.ndarray
    partition: Partition | None
    kind: str
    meta: dict = field(default_factory=dict)


def _edge_list(adjacency: np.ndarray) -> list[list[int]]:
    i, j = np.nonzero(np.triu(np.asarray(adjacency, dtype=bool), k=1))
    return [[int(a), int(b)] for a, b in zip(i, j)]


def _graph_payload(graph, partition: Partition | None) -> dict:
    if isinstance(graph, Multigraph):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "multigraph",
            "partition": list(graph.partition.group_sizes),
            "edges": [list(e) for e in graph.present_edges()],
        }
    if isinstance(graph, BlockGraph):
        partition = graph.partition
        adjacency = graph.adjacency
    else:
        adjacency = np.asarray(graph, dtype=bool)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "graph",
        "n_nodes": int(adjacency.shape[0]),
        "partition": list(partition.group_sizes) if partition is not None else None,
        "edges": _edge_list(adjacency),
    }


def write_graph_json(path, graph, partition: Partition | None = None, **extra) -> None:
    """Serialize a multigraph, block graph, or plain adjacency as a JSON edge list."""
    payload = _graph_payload(graph, partition)
    payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_estimate_json(
    path, estimate: GraphEstimate, partition: Partition | None = None
) -> None:
    """Serialize a selected graph along with its threshold and error-rate target."""
    write_graph_json(
        path,
        estimate.adjacency,
        partition=partition,
        threshold=estimate.threshold,
        bfdr_target=estimate.target,
    )


def _require(payload: dict, key: str, path) -> object:
    if key not in payload:
        raise ConfigError(f"{path}:1: missing required key {key!r}")
    return payload[key]


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}:1: expected a JSON object at top level")
    return payload


def read_graph_json(path) -> GraphDocument:
    """Read a graph JSON document back into a node-level adjacency matrix."""
    payload = _load_json(path)
    kind = payload.get("kind", "graph")
    raw_partition = payload.get("partition")
    partition = Partition(tuple(raw_partition)) if raw_partition else None
    try:
        if kind == "multigraph":
            if partition is None:
                raise ConfigError(f"{path}:1: multigraph document needs a partition")
            gm = Multigraph(partition, frozenset(tuple(e) for e in payload["edges"]))
            adjacency = gm.expand().adjacency
        else:
            n = int(_require(payload, "n_nodes", path))
            adjacency = np.zeros((n, n), dtype=bool)
            for e in _require(payload, "edges", path):
                i, j = int(e[0]), int(e[1])
                adjacency[i, j] = adjacency[j, i] = True
        meta = {
            k: v
            for k, v in payload.items()
            if k not in {"schema_version", "kind", "partition", "edges", "n_nodes"}
        }
        return GraphDocument(adjacency=adjacency, partition=partition, kind=kind, meta=meta)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}:1: malformed graph document ({exc})") from exc


def write_metrics_json(path, metrics) -> None:
    payload = {"schema_version": SCHEMA_VERSION, "kind": "metrics"}
    payload.update(metrics.to_dict())
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# chain samples


def write_chain_output(out_dir, output: ChainOutput, inclusion: np.ndarray) -> list[Path]:
    """Persist a chain run: summary JSON, sampled graphs JSON, precision stack .npy."""
    out_dir = Path(out_dir)
    graphs_path = out_dir / "graphs.json"
    prec_path = out_dir / "precisions.npy"
    summary_path = out_dir / "samples.json"

    with open(graphs_path, "w") as fh:
        json.dump(
            {
                "schema_version": SCHEMA_VERSION,
                "kind": "multigraph_samples",
                "partition": list(output.partition.group_sizes),
                "samples": [[list(e) for e in g.present_edges()] for g in output.graphs],
            },
            fh,
        )
        fh.write("\n")
    np.save(prec_path, output.precisions)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "kind": "chain_summary",
        "partition": list(output.partition.group_sizes),
        "n_samples": output.n_samples,
        "iterations": output.config.iterations,
        "burn_in": output.config.burn_in,
        "thinning": output.config.thinning,
        "seed": output.config.seed,
        "acceptance_rate": output.acceptance_rate,
        "edge_inclusion": inclusion.tolist(),
        "files": {"graphs": graphs_path.name, "precisions": prec_path.name},
    }
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return [summary_path, graphs_path, prec_path]


def read_chain_samples(path) -> tuple[Partition, list[Multigraph]]:
    """Read sampled graphs back from either a summary JSON or a samples JSON."""
    payload = _load_json(path)
    kind = payload.get("kind")
    if kind == "chain_summary":
        inner = Path(path).parent / payload["files"]["graphs"]
        return read_chain_samples(inner)
    if kind != "multigraph_samples":
        raise ConfigError(f"{path}:1: expected a chain_summary or multigraph_samples document")
    try:
        partition = Partition(tuple(payload["partition"]))
        samples = [
            Multigraph(partition, frozenset(tuple(e) for e in edges))
            for edges in payload["samples"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}:1: malformed sample document ({exc})") from exc
    return partition, samples


# ---------------------------------------------------------------------------
# configs


def load_config(path) -> dict:
    """Read a config JSON object, raising ConfigError with file:line on failure."""
    return _load_json(path)


def _config_value(cfg: dict, key: str, default=None, required: bool = False, path="config"):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"{path}:1: missing required config key {key!r}")
    return default


def _partition_from(cfg: dict, path) -> Partition:
    raw = _config_value(cfg, "partition", required=True, path=path)
    try:
        return Partition(tuple(int(v) for v in raw))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}:1: bad partition {raw!r} ({exc})") from exc


def _inv_scale_from(cfg: dict, p: int, path, base_dir: Path) -> np.ndarray:
    raw = cfg.get("D")
    if raw is None:
        return np.eye(p)
    if isinstance(raw, str):
        target = Path(raw)
        if not target.is_absolute():
            target = base_dir / target
        return read_matrix_csv(target)
    try:
        return np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}:1: bad matrix for D ({exc})") from exc


def sampler_config_from(
    cfg: dict, path="config", seed_override: int | None = None
) -> tuple[Partition, SamplerConfig]:
    """Build a chain configuration from a parsed config object.

    Recognized keys: partition (required), iterations (required), theta, b, D
    (inline rows or a CSV path), alpha_g, sigma_g2, burn_in, thinning, seed.
    """
    base_dir = Path(path).parent if isinstance(path, (str, Path)) else Path(".")
    partition = _partition_from(cfg, path)
    p = partition.n_nodes
    try:
        prior = EdgePrior(float(_config_value(cfg, "theta", 0.5)))
        gw = GWishartParams(
            b=float(_config_value(cfg, "b", 3.0)),
            D=_inv_scale_from(cfg, p, path, base_dir),
        )
        seed = int(_config_value(cfg, "seed", 0))
        if seed_override is not None:
            seed = seed_override
        sampler = SamplerConfig(
            prior=prior,
            gwishart=gw,
            iterations=int(_config_value(cfg, "iterations", required=True, path=path)),
            burn_in=int(_config_value(cfg, "burn_in", 0)),
            thinning=int(_config_value(cfg, "thinning", 1)),
            seed=seed,
            alpha_g=float(_config_value(cfg, "alpha_g", 0.5)),
            sigma_g2=float(_config_value(cfg, "sigma_g2", 0.5)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}:1: {exc}") from exc
    return partition, sampler


def smoother_config_from(
    cfg: dict, path="config", seed_override: int | None = None
) -> SmootherConfig:
    """Build a smoother configuration from a parsed config object.

    Keys as for the chain config, plus: sigma2 (prior variance of the shared
    mean), ig_shape and ig_rate (noise-variance prior), gwishart_shape
    (alias for b).
    """
    base_dir = Path(path).parent if isinstance(path, (str, Path)) else Path(".")
    partition = _partition_from(cfg, path)
    p = partition.n_nodes
    try:
        seed = int(_config_value(cfg, "seed", 0))
        if seed_override is not None:
            seed = seed_override
        theta = cfg.get("theta")
        shape = float(cfg.get("gwishart_shape", cfg.get("b", 3.0)))
        return SmootherConfig(
            partition=partition,
            iterations=int(_config_value(cfg, "iterations", required=True, path=path)),
            burn_in=int(_config_value(cfg, "burn_in", 0)),
            thinning=int(_config_value(cfg, "thinning", 1)),
            seed=seed,
            prior=EdgePrior(float(theta)) if theta is not None else None,
            gwishart_shape=shape,
            gwishart_inv_scale=_inv_scale_from(cfg, p, path, base_dir),
            mu_var=float(_config_value(cfg, "sigma2", 100.0)),
            ig_shape=float(_config_value(cfg, "ig_shape", 1.0)),
            ig_rate=float(_config_value(cfg, "ig_rate", 1.0)),
            alpha_g=float(_config_value(cfg, "alpha_g", 0.5)),
            sigma_g2=float(_config_value(cfg, "sigma_g2", 1.0)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}:1: {exc}") from exc


# ---------------------------------------------------------------------------
# run manifests


@dataclass
class RunManifest:
    """Record of one CLI run: what ran, with which inputs, producing which files."""

    command: str
    seed: int | None
    config: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    _started: float = field(default_factory=time.monotonic, repr=False)

    def add(self, *paths) -> None:
        self.outputs.extend(str(p) for p in paths)

    def _relative_outputs(self, out_dir) -> list[str]:
        base = Path(out_dir).resolve()
        rel = []
        for p in self.outputs:
            resolved = Path(p).resolve()
            try:
                rel.append(str(resolved.relative_to(base)))
            except ValueError:
                rel.append(str(p))
        return rel

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        path = out_dir / "manifest.json"
        payload = {
            "schema_version": SCHEMA_VERSION,
            "kind": "run_manifest",
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "version": __version__,
            "duration_seconds": round(time.monotonic() - self._started, 3),
            "outputs": sorted(self._relative_outputs(out_dir)),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        return path
