"""Config parsing and on-disk formats: federation files, graph files,
checkpoints, metrics CSV and run summaries. All JSON, all deterministic
for a fixed seed."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .client import LocalDataset
from .harness import ClientData, FederationSpec, RoundMetrics, TrainConfig
from .partition import ModelPartition
from .server import FederatedState, ServerHyper

__all__ = [
    "ConfigError",
    "load_config",
    "config_overrides",
    "federation_spec_from_config",
    "partition_from_config",
    "train_config_from_config",
    "save_federation",
    "load_federation",
    "save_checkpoint",
    "load_checkpoint",
    "write_metrics_csv",
    "read_metrics_csv",
    "write_run_summary",
    "load_run_summary",
]

METRICS_COLUMNS = (
    "round",
    "client_id",
    "accuracy",
    "objective",
    "uplink_bytes",
    "downlink_bytes",
)

_SECTIONS = ("federation", "graph", "partition", "train", "cer", "codec")

_DEFAULTS = {
    "federation": {"noise_std": 0.0, "seed": 0},
    "graph": {"k": 3},
    "train": {
        "rounds": 10,
        "x_steps": 1,
        "z_steps": 1,
        "admm_steps": 50,
        "lambda": 0.1,
        "rho": 1.0,
        "eta": 0.1,
        "p": 2,
        "batch_size": 0,
        "eval_every": 1,
        "seed": 0,
        "loss": "logistic",
    },
    "cer": {"gamma": 0.0, "rho": 1.0, "inner_iters": 50},
    "codec": {"tol": 1e-4},
}


class ConfigError(ValueError):
    """Raised for missing or ill-typed configuration."""


def _require(section: dict, section_name: str, key: str, kinds, where: str = "config"):
    if key not in section:
        raise ConfigError(f"{where}: missing key {section_name}.{key}")
    value = section[key]
    if not isinstance(value, kinds) or isinstance(value, bool):
        names = getattr(kinds, "__name__", None) or "/".join(k.__name__ for k in kinds)
        raise ConfigError(
            f"{where}: {section_name}.{key} must be {names}, got {type(value).__name__}"
        )
    return value


def load_config(path) -> dict:
    """Read and validate a config file, filling defaults section by section."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"config file {path}: unknown sections {sorted(unknown)}")

    cfg: dict = {}
    for name in _SECTIONS:
        section = raw.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"config section {name!r} must be an object")
        merged = dict(_DEFAULTS.get(name, {}))
        merged.update(section)
        cfg[name] = merged

    _require(cfg["federation"], "federation", "n_clients", int)
    _require(cfg["federation"], "federation", "samples_per_client", int)
    _require(cfg["federation"], "federation", "d_features", int)
    _require(cfg["federation"], "federation", "delta", (int, float))
    _require(cfg["federation"], "federation", "clusters", list)
    _require(cfg["graph"], "graph", "k", int)
    if "split_at" not in cfg["partition"] and "shared" not in cfg["partition"]:
        raise ConfigError(
            "config: partition needs either 'split_at' or explicit "
            "'shared'/'personal' row lists"
        )
    for key in ("rounds", "x_steps", "z_steps", "admm_steps", "p", "batch_size", "eval_every", "seed"):
        _require(cfg["train"], "train", key, int)
    for key in ("lambda", "rho", "eta"):
        _require(cfg["train"], "train", key, (int, float))
    _require(cfg["cer"], "cer", "gamma", (int, float))
    _require(cfg["cer"], "cer", "rho", (int, float))
    _require(cfg["cer"], "cer", "inner_iters", int)
    _require(cfg["codec"], "codec", "tol", (int, float))
    return cfg


def config_overrides(cfg: dict, assignments: list[str]) -> dict:
    """Apply ``section.key=json_value`` overrides from the command line."""
    cfg = json.loads(json.dumps(cfg))  # deep copy
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        target, _, text = item.partition("=")
        if "." not in target:
            raise ConfigError(f"override target {target!r} is not of the form section.key")
        section, _, key = target.partition(".")
        if section not in _SECTIONS:
            raise ConfigError(f"override names unknown section {section!r}")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text  # bare strings allowed
        cfg.setdefault(section, {})[key] = value
    return cfg


def federation_spec_from_config(cfg: dict) -> FederationSpec:
    fed = cfg["federation"]
    return FederationSpec(
        n_clients=fed["n_clients"],
        samples_per_client=fed["samples_per_client"],
        d_features=fed["d_features"],
        delta=float(fed["delta"]),
        cluster_assignment=tuple(int(c) for c in fed["clusters"]),
        noise_std=float(fed.get("noise_std", 0.0)),
        seed=int(fed.get("seed", 0)),
    )


def federation_ground_truth_from_config(cfg: dict):
    """Optional explicit ground-truth weights (shared block, cluster rows)."""
    fed = cfg["federation"]
    shared = fed.get("shared_weights")
    clusters = fed.get("cluster_weights")
    if shared is not None:
        shared = np.asarray(shared, dtype=float)
    if clusters is not None:
        clusters = np.asarray(clusters, dtype=float)
    return shared, clusters


def partition_from_config(cfg: dict, d: int) -> ModelPartition:
    part = cfg["partition"]
    if "split_at" in part:
        split = part["split_at"]
        if not isinstance(split, int) or isinstance(split, bool):
            raise ConfigError("config: partition.split_at must be an integer")
        return ModelPartition.from_split(d, split)
    shared = part.get("shared")
    personal = part.get("personal")
    if not isinstance(shared, list) or not isinstance(personal, list):
        raise ConfigError(
            "config: partition needs 'shared' and 'personal' 1-based row lists"
        )
    try:
        return ModelPartition.from_rows(d, shared, personal)
    except ValueError as exc:
        raise ConfigError(f"config: invalid partition rows: {exc}") from exc


def train_config_from_config(cfg: dict) -> TrainConfig:
    tr, cer, codec = cfg["train"], cfg["cer"], cfg["codec"]
    try:
        return TrainConfig(
            rounds=tr["rounds"],
            x_steps=tr["x_steps"],
            z_steps=tr["z_steps"],
            admm_steps=tr["admm_steps"],
            lam=float(tr["lambda"]),
            gamma=float(cer["gamma"]),
            rho=float(tr["rho"]),
            eta=float(tr["eta"]),
            p=tr["p"],
            batch_size=tr["batch_size"],
            eval_every=tr["eval_every"],
            seed=tr["seed"],
            loss=tr.get("loss", "logistic"),
            cer_rho=float(cer["rho"]),
            cer_steps=cer["inner_iters"],
            codec_tol=float(codec["tol"]),
        )
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from exc


def _dataset_payload(ds: LocalDataset) -> dict:
    return {"features": ds.features.tolist(), "labels": ds.labels.tolist()}


def _dataset_from_payload(payload: dict, where: str) -> LocalDataset:
    try:
        return LocalDataset(
            features=np.asarray(payload["features"], dtype=float),
            labels=np.asarray(payload["labels"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: invalid dataset payload: {exc}") from exc


def save_federation(path, clients: list[ClientData], spec: FederationSpec) -> None:
    payload = {
        "n_clients": spec.n_clients,
        "samples_per_client": spec.samples_per_client,
        "d_features": spec.d_features,
        "delta": spec.delta,
        "noise_std": spec.noise_std,
        "seed": spec.seed,
        "clients": [
            {
                "client_id": c.client_id,
                "cluster": c.cluster,
                "train": _dataset_payload(c.train),
                "test": _dataset_payload(c.test),
            }
            for c in clients
        ],
    }
    Path(path).write_text(json.dumps(payload))


def load_federation(path) -> tuple[list[ClientData], dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"federation file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"federation file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "clients" not in payload:
        raise ConfigError(f"federation file {path} missing 'clients'")
    clients = []
    for i, entry in enumerate(payload["clients"]):
        where = f"federation file {path}, client #{i}"
        if not isinstance(entry, dict) or "train" not in entry or "test" not in entry:
            raise ConfigError(f"{where}: needs 'train' and 'test' splits")
        clients.append(
            ClientData(
                client_id=int(entry.get("client_id", i + 1)),
                cluster=int(entry.get("cluster", 0)),
                train=_dataset_from_payload(entry["train"], where),
                test=_dataset_from_payload(entry["test"], where),
            )
        )
    meta = {k: v for k, v in payload.items() if k != "clients"}
    return clients, meta


def save_checkpoint(path, state: FederatedState, round_index: int, seeds: dict) -> None:
    """Checkpoint: blocks (personalized matrix row-major), hyperparameters,
    round counter and the RNG seeds that reproduce the run."""
    d2, n = state.Z.shape
    payload = {
        "x": state.x.tolist(),
        "Z": {"shape": [d2, n], "data": state.Z.reshape(-1).tolist()},
        "hyper": {
            "lambda": state.hyper.lam,
            "rho": state.hyper.rho,
            "eta": state.hyper.eta,
            "p": state.hyper.p,
            "admm_iters": state.hyper.admm_iters,
        },
        "round": round_index,
        "seeds": seeds,
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path) -> tuple[FederatedState, int, dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"checkpoint file {path} is not valid JSON: {exc}") from exc
    try:
        shape = payload["Z"]["shape"]
        Z = np.asarray(payload["Z"]["data"], dtype=float).reshape(shape)
        hyper = ServerHyper(
            lam=payload["hyper"]["lambda"],
            rho=payload["hyper"]["rho"],
            eta=payload["hyper"]["eta"],
            p=payload["hyper"]["p"],
            admm_iters=payload["hyper"]["admm_iters"],
        )
        state = FederatedState(x=np.asarray(payload["x"], dtype=float), Z=Z, hyper=hyper)
        return state, int(payload["round"]), dict(payload.get("seeds", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"checkpoint file {path} has invalid schema: {exc}") from exc


def write_metrics_csv(path, metrics: list[RoundMetrics]) -> None:
    """Fixed schema: one row per client per evaluation round plus a 'mean'
    row; objective and byte counters are global, repeated on every row."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for m in metrics:
            shared = (repr(m.objective), m.uplink_bytes, m.downlink_bytes)
            for cid, acc in enumerate(m.client_accuracy, start=1):
                writer.writerow((m.round_index, cid, repr(acc), *shared))
            writer.writerow((m.round_index, "mean", repr(m.mean_accuracy), *shared))


def read_metrics_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"metrics file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
            raise ConfigError(
                f"metrics file {path} has columns {reader.fieldnames}, "
                f"expected {list(METRICS_COLUMNS)}"
            )
        return [dict(row) for row in reader]


def write_run_summary(path, cfg: dict, metrics: list[RoundMetrics], extra: dict) -> None:
    """Machine-readable run record for the report tool (no wall times)."""
    payload = {
        "config": cfg,
        "totals": {
            "uplink_bytes": sum(m.uplink_bytes for m in metrics),
            "downlink_bytes": sum(m.downlink_bytes for m in metrics),
            "uplink_msgs": sum(m.uplink_msgs for m in metrics),
            "downlink_msgs": sum(m.downlink_msgs for m in metrics),
        },
        "final": {
            "round": metrics[-1].round_index if metrics else 0,
            "mean_accuracy": metrics[-1].mean_accuracy if metrics else None,
            "objective": metrics[-1].objective if metrics else None,
        },
    }
    payload["final"].update(extra)
    Path(path).write_text(json.dumps(payload))


def load_run_summary(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"run summary not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"run summary {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "config" not in payload:
        raise ConfigError(f"run summary {path} missing 'config'")
    return payload
