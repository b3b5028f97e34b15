import json

import numpy as np
import pytest

from fedfuse import fileio
from fedfuse.fileio import ConfigError
from fedfuse.harness import RoundMetrics
from fedfuse.server import FederatedState, ServerHyper

from instances import two_cluster_federation

BASE_CONFIG = {
    "federation": {
        "n_clients": 4,
        "samples_per_client": 40,
        "d_features": 4,
        "delta": 1.0,
        "clusters": [1, 1, 2, 2],
        "seed": 5,
    },
    "graph": {"k": 2},
    "partition": {"split_at": 2},
    "train": {"rounds": 2, "lambda": 0.1},
    "cer": {"gamma": 1.0},
    "codec": {"tol": 1e-3},
}


def write_config(tmp_path, payload=None):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload if payload is not None else BASE_CONFIG))
    return path


class TestLoadConfig:
    def test_defaults_filled(self, tmp_path):
        cfg = fileio.load_config(write_config(tmp_path))
        assert cfg["train"]["eta"] == 0.1
        assert cfg["cer"]["inner_iters"] == 50
        assert cfg["train"]["lambda"] == 0.1

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            fileio.load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        with pytest.raises(ConfigError, match="not valid JSON"):
            fileio.load_config(path)

    def test_missing_required_key(self, tmp_path):
        payload = json.loads(json.dumps(BASE_CONFIG))
        del payload["federation"]["n_clients"]
        with pytest.raises(ConfigError, match="federation.n_clients"):
            fileio.load_config(write_config(tmp_path, payload))

    def test_wrong_type(self, tmp_path):
        payload = json.loads(json.dumps(BASE_CONFIG))
        payload["train"]["rounds"] = "ten"
        with pytest.raises(ConfigError, match="train.rounds"):
            fileio.load_config(write_config(tmp_path, payload))

    def test_unknown_section(self, tmp_path):
        payload = dict(BASE_CONFIG, extras={})
        with pytest.raises(ConfigError, match="unknown sections"):
            fileio.load_config(write_config(tmp_path, payload))

    def test_partition_requires_spec(self, tmp_path):
        payload = json.loads(json.dumps(BASE_CONFIG))
        payload["partition"] = {}
        with pytest.raises(ConfigError, match="split_at"):
            fileio.load_config(write_config(tmp_path, payload))


class TestOverrides:
    def test_override_values(self, tmp_path):
        cfg = fileio.load_config(write_config(tmp_path))
        cfg2 = fileio.config_overrides(cfg, ["train.lambda=0.5", "cer.gamma=10"])
        assert cfg2["train"]["lambda"] == 0.5
        assert cfg2["cer"]["gamma"] == 10
        assert cfg["train"]["lambda"] == 0.1  # original untouched

    def test_bad_override_shapes(self, tmp_path):
        cfg = fileio.load_config(write_config(tmp_path))
        with pytest.raises(ConfigError, match="section.key=value"):
            fileio.config_overrides(cfg, ["train.lambda"])
        with pytest.raises(ConfigError, match="unknown section"):
            fileio.config_overrides(cfg, ["nope.lambda=1"])


class TestBuilders:
    def test_partition_split(self, tmp_path):
        cfg = fileio.load_config(write_config(tmp_path))
        part = fileio.partition_from_config(cfg, 4)
        assert part.d1 == 2 and part.d2 == 2

    def test_partition_explicit_rows(self, tmp_path):
        payload = json.loads(json.dumps(BASE_CONFIG))
        payload["partition"] = {"shared": [2, 4], "personal": [1, 3]}
        cfg = fileio.load_config(write_config(tmp_path, payload))
        part = fileio.partition_from_config(cfg, 4)
        assert part.shared_idx.tolist() == [1, 3]
        assert part.personal_idx.tolist() == [0, 2]

    def test_partition_bad_rows(self, tmp_path):
        payload = json.loads(json.dumps(BASE_CONFIG))
        payload["partition"] = {"shared": [1], "personal": [1, 2, 3]}
        cfg = fileio.load_config(write_config(tmp_path, payload))
        with pytest.raises(ConfigError, match="invalid partition rows"):
            fileio.partition_from_config(cfg, 4)

    def test_train_config(self, tmp_path):
        cfg = fileio.load_config(write_config(tmp_path))
        tc = fileio.train_config_from_config(cfg)
        assert tc.rounds == 2 and tc.lam == 0.1 and tc.gamma == 1.0
        assert tc.codec_tol == 1e-3

    def test_federation_spec(self, tmp_path):
        cfg = fileio.load_config(write_config(tmp_path))
        spec = fileio.federation_spec_from_config(cfg)
        assert spec.n_clients == 4 and spec.cluster_assignment == (1, 1, 2, 2)


class TestFederationFile:
    def test_round_trip(self, tmp_path):
        spec, clients = two_cluster_federation(delta=2.0, samples=40)
        path = tmp_path / "federation.json"
        fileio.save_federation(path, clients, spec)
        loaded, meta = fileio.load_federation(path)
        assert meta["n_clients"] == spec.n_clients
        for a, b in zip(clients, loaded):
            assert a.client_id == b.client_id and a.cluster == b.cluster
            assert np.array_equal(a.train.features, b.train.features)
            assert np.array_equal(a.test.labels, b.test.labels)

    def test_same_seed_same_bytes(self, tmp_path):
        spec, clients = two_cluster_federation(delta=1.0, samples=30)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        fileio.save_federation(p1, clients, spec)
        spec2, clients2 = two_cluster_federation(delta=1.0, samples=30)
        fileio.save_federation(p2, clients2, spec2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            fileio.load_federation(tmp_path / "gone.json")

    def test_schema_violation(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text(json.dumps({"clients": [{"train": {}}]}))
        with pytest.raises(ConfigError, match="client #0"):
            fileio.load_federation(path)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        state = FederatedState(
            x=np.array([1.0, -2.0]),
            Z=np.arange(6.0).reshape(2, 3),
            hyper=ServerHyper(lam=0.3, rho=1.0, eta=0.05, p=2, admm_iters=7),
        )
        path = tmp_path / "checkpoint.json"
        fileio.save_checkpoint(path, state, round_index=4, seeds={"train": 11})
        loaded, round_index, seeds = fileio.load_checkpoint(path)
        assert round_index == 4 and seeds == {"train": 11}
        assert np.array_equal(loaded.x, state.x)
        assert np.array_equal(loaded.Z, state.Z)
        assert loaded.hyper == state.hyper

    def test_row_major_layout(self, tmp_path):
        state = FederatedState(
            x=np.zeros(1), Z=np.array([[1.0, 2.0], [3.0, 4.0]]),
            hyper=ServerHyper(0.0, 1.0, 0.1),
        )
        path = tmp_path / "checkpoint.json"
        fileio.save_checkpoint(path, state, 1, {})
        payload = json.loads(path.read_text())
        assert payload["Z"] == {"shape": [2, 2], "data": [1.0, 2.0, 3.0, 4.0]}

    def test_schema_violation(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text(json.dumps({"x": []}))
        with pytest.raises(ConfigError, match="invalid schema"):
            fileio.load_checkpoint(path)


def _metrics_row(round_index=1):
    return RoundMetrics(
        round_index=round_index,
        client_accuracy=(0.5, 0.75),
        mean_accuracy=0.625,
        objective=1.25,
        uplink_bytes=100,
        downlink_bytes=200,
        uplink_msgs=4,
        downlink_msgs=4,
        wall_time=0.01,
    )


class TestMetricsCsv:
    def test_write_read(self, tmp_path):
        path = tmp_path / "metrics.csv"
        fileio.write_metrics_csv(path, [_metrics_row(1), _metrics_row(2)])
        rows = fileio.read_metrics_csv(path)
        assert len(rows) == 6  # 2 rounds x (2 clients + mean)
        assert rows[0]["client_id"] == "1"
        assert rows[2]["client_id"] == "mean"
        assert float(rows[2]["accuracy"]) == 0.625
        assert rows[0]["uplink_bytes"] == "100"

    def test_no_wall_time_column(self, tmp_path):
        path = tmp_path / "metrics.csv"
        fileio.write_metrics_csv(path, [_metrics_row()])
        header = path.read_text().splitlines()[0]
        assert "wall" not in header
        assert header == "round,client_id,accuracy,objective,uplink_bytes,downlink_bytes"

    def test_bad_columns(self, tmp_path):
        path = tmp_path / "metrics.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ConfigError, match="columns"):
            fileio.read_metrics_csv(path)


class TestRunSummary:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "run.json"
        fileio.write_run_summary(path, {"train": {"lambda": 0.1}},
                                 [_metrics_row()], extra={"consensus_gap": 0.5})
        payload = fileio.load_run_summary(path)
        assert payload["totals"]["uplink_bytes"] == 100
        assert payload["final"]["consensus_gap"] == 0.5
        assert payload["final"]["mean_accuracy"] == 0.625

    def test_missing_config(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{}")
        with pytest.raises(ConfigError, match="missing 'config'"):
            fileio.load_run_summary(path)
