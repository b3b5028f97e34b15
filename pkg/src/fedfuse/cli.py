"""Command-line interface: gen-data, build-graph, train, report."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import fileio, report as report_mod
from .codec import CodecError
from .fileio import ConfigError
from .graph import build_knn_graph, compute_sketch, network_from_json, network_to_json
from .harness import consensus_gap, generate_federation, train


def _load_cfg(args) -> dict:
    cfg = fileio.load_config(args.config)
    if getattr(args, "set", None):
        cfg = fileio.config_overrides(cfg, args.set)
    return cfg


def _cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    spec = fileio.federation_spec_from_config(cfg)
    partition = fileio.partition_from_config(cfg, spec.d_features)
    shared_w, cluster_w = fileio.federation_ground_truth_from_config(cfg)
    clients = generate_federation(
        spec, partition, shared_weights=shared_w, cluster_weights=cluster_w
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "federation.json"
    fileio.save_federation(path, clients, spec)
    print(f"wrote {path} ({spec.n_clients} clients)")
    return 0


def _cmd_build_graph(args) -> int:
    clients, _meta = fileio.load_federation(args.data)
    if args.k is not None:
        k = args.k
    elif args.config is not None:
        k = fileio.load_config(args.config)["graph"]["k"]
    else:
        raise ConfigError("build-graph needs --k or a --config with a graph section")
    sketches = [compute_sketch(c.train.features, client_id=c.client_id) for c in clients]
    network = build_knn_graph(sketches, k)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(network_to_json(network))
    print(f"wrote {path} ({network.n_nodes} nodes, {network.n_edges} edges)")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    clients, _meta = fileio.load_federation(args.data)
    graph_path = Path(args.graph)
    if not graph_path.exists():
        raise ConfigError(f"network file not found: {graph_path}")
    network = network_from_json(graph_path.read_text())
    partition = fileio.partition_from_config(cfg, clients[0].train.d)
    train_cfg = fileio.train_config_from_config(cfg)

    tic = time.perf_counter()
    state, metrics = train(train_cfg, clients, network, partition)
    elapsed = time.perf_counter() - tic

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.save_checkpoint(
        out / "checkpoint.json",
        state,
        round_index=train_cfg.rounds,
        seeds={"train": train_cfg.seed},
    )
    fileio.write_metrics_csv(out / "metrics.csv", metrics)
    fileio.write_run_summary(
        out / "run.json", cfg, metrics, extra={"consensus_gap": consensus_gap(state.Z)}
    )
    (out / "timing.json").write_text(json.dumps({"train_seconds": elapsed}))
    final = metrics[-1] if metrics else None
    acc = f"{final.mean_accuracy:.4f}" if final else "n/a"
    print(f"wrote {out}/checkpoint.json metrics.csv run.json (mean acc {acc})")
    return 0


def _cmd_report(args) -> int:
    result = report_mod.report(args.runs, args.out, by=args.by)
    print(f"wrote {result['summary']} and {len(result['figures'])} figures")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedfuse",
        description=(
            "Simulate personalized federated learning with similarity-graph "
            "fusion and measure update compressibility."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize a federation from a config")
    p.add_argument("--config", required=True, help="config JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config entry (repeatable)")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("build-graph", help="build the client-similarity network")
    p.add_argument("--data", required=True, help="federation.json from gen-data")
    p.add_argument("--out", required=True, help="output network JSON path")
    p.add_argument("--k", type=int, default=None, help="neighbor count")
    p.add_argument("--config", default=None, help="config JSON (fallback for k)")
    p.set_defaults(func=_cmd_build_graph)

    p = sub.add_parser("train", help="run federated training")
    p.add_argument("--config", required=True, help="config JSON file")
    p.add_argument("--data", required=True, help="federation.json")
    p.add_argument("--graph", required=True, help="network JSON from build-graph")
    p.add_argument("--out", required=True, help="output run directory")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config entry (repeatable)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("report", help="aggregate runs into tables and figures")
    p.add_argument("--runs", nargs="+", required=True, help="run directories")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--by", choices=report_mod.SWEEP_KEYS, default="gamma",
                   help="hyperparameter the runs sweep")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CodecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
