import json
import hashlib

import numpy as np
import pytest

from fisherhash.binary_codes import BinaryCodeMatrix
from fisherhash.cli import main
from fisherhash.datasets import write_features, write_labels


def run_cli(*argv):
    return main(list(argv))


def write_train_config(path, *, epochs=3, seed=5, classes=2, per_class=20, dim=4,
                       separation=6.0, extra_hyper=None):
    hyper = {
        "bits": 2, "epochs": epochs, "batch_size": 16, "lr": 0.05, "seed": seed,
        "mu": 4.0, "nu": 8.0, "eta": 0.2,
        "center_inner_lr": 0.02, "center_inner_steps": 40,
    }
    if extra_hyper:
        hyper.update(extra_hyper)
    cfg = {
        "dataset": {"synthetic": {
            "classes": classes, "per_class": per_class, "dim": dim,
            "separation": separation, "seed": 77, "query_fraction": 0.2,
        }},
        "hyper": hyper,
        "encoder": {"hidden_layers": [[8, "relu"]], "seed": seed},
    }
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return cfg


FIXTURE_DB = np.array([
    [1, 1, 1, 1, -1],
    [1, 1, 1, -1, -1],
    [1, 1, -1, -1, -1],
    [1, -1, -1, -1, -1],
])
FIXTURE_Q = np.array([
    [1, -1, -1],
    [1, -1, 1],
    [1, -1, -1],
    [1, -1, 1],
])
FIXTURE_DB_LABELS = [{0}, {1}, {1}, {0}, {2}]
FIXTURE_Q_LABELS = [{0}, {2}, {0, 1}]


def write_eval_fixture(tmp_path):
    BinaryCodeMatrix.from_signs(FIXTURE_DB).save(tmp_path / "db.fhsh")
    BinaryCodeMatrix.from_signs(FIXTURE_Q).save(tmp_path / "q.fhsh")
    write_labels(tmp_path / "db_labels.txt", FIXTURE_DB_LABELS)
    write_labels(tmp_path / "q_labels.txt", FIXTURE_Q_LABELS)


class TestTrainCommand:
    def test_two_class_run_writes_artifacts_and_map(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        write_train_config(cfg_path, epochs=8)
        out = tmp_path / "run"
        assert run_cli("train", "--config", str(cfg_path), "--out", str(out)) == 0
        for name in ("encoder.fhnn", "codes.fhsh", "centers.fhsh", "report.json", "meta.json"):
            assert (out / name).exists()
        report = json.loads((out / "report.json").read_text())
        assert report["train_map"] == 1.0
        assert report["config_hash"] == json.loads((out / "meta.json").read_text())["config_hash"]

    def test_missing_dataset_path_exits_3(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "dataset": {"manifest": "missing/manifest.json"},
            "hyper": {"bits": 2, "epochs": 1},
        }))
        code = run_cli("train", "--config", str(cfg_path), "--out", str(tmp_path / "o"))
        assert code == 3
        assert "missing/manifest.json" in capsys.readouterr().err

    def test_zero_epochs_succeeds(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        write_train_config(cfg_path, epochs=0)
        out = tmp_path / "run"
        assert run_cli("train", "--config", str(cfg_path), "--out", str(out)) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["epochs"] == []

    def test_invalid_hyper_exits_2_with_json_error(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        write_train_config(cfg_path, extra_hyper={"batch_size": 1})
        code = run_cli("train", "--config", str(cfg_path),
                       "--out", str(tmp_path / "o"), "--json")
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "config"
        assert "batch_size" in err["message"]

    def test_refuses_nonempty_out_without_force(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        write_train_config(cfg_path, epochs=1)
        out = tmp_path / "run"
        out.mkdir()
        (out / "stale.txt").write_text("old")
        assert run_cli("train", "--config", str(cfg_path), "--out", str(out)) == 2
        assert run_cli("train", "--config", str(cfg_path), "--out", str(out), "--force") == 0
        assert not (out / "stale.txt").exists()

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg = write_train_config(cfg_path, epochs=0, seed=5)
        del cfg["encoder"]["seed"]  # encoder init follows hyper.seed
        cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert run_cli("train", "--config", str(cfg_path), "--out", str(out_a), "--seed", "9") == 0
        assert run_cli("train", "--config", str(cfg_path), "--out", str(out_b)) == 0
        meta = json.loads((out_a / "meta.json").read_text())
        assert meta["resolved"]["seed_override"] == 9
        a = (out_a / "codes.fhsh").read_bytes()
        b = (out_b / "codes.fhsh").read_bytes()
        assert a != b


class TestDeterminism:
    def test_bit_identical_artifacts_across_runs_and_threads(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        write_train_config(cfg_path, epochs=4)
        digests = []
        for name, threads in (("r1", "1"), ("r2", "1"), ("r3", "8")):
            out = tmp_path / name
            assert run_cli("train", "--config", str(cfg_path),
                           "--out", str(out), "--threads", threads) == 0
            blob = b"".join(
                (out / f).read_bytes()
                for f in ("encoder.fhnn", "codes.fhsh", "centers.fhsh",
                          "centers.v.f64", "report.json", "report.csv", "meta.json")
            )
            digests.append(hashlib.sha256(blob).hexdigest())
        assert len(set(digests)) == 1


class TestEncodeIndexQuery:
    def test_pipeline(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        write_train_config(cfg_path, epochs=6)
        run_dir = tmp_path / "run"
        assert run_cli("train", "--config", str(cfg_path), "--out", str(run_dir)) == 0

        # encode the query split of the same synthetic dataset
        from fisherhash.datasets import make_synthetic
        ds = make_synthetic(2, 20, 4, 6.0, seed=77, query_fraction=0.2)
        q_idx = ds.split("query")
        write_features(tmp_path / "queries.fhft", ds.features[:, q_idx])
        enc_dir = tmp_path / "enc"
        assert run_cli("encode", "--checkpoint", str(run_dir / "encoder.fhnn"),
                       "--features", str(tmp_path / "queries.fhft"),
                       "--out", str(enc_dir)) == 0
        q_codes = BinaryCodeMatrix.load(enc_dir / "codes.fhsh")
        assert q_codes.n == len(q_idx) and q_codes.K == 2

        # index the database codes with labels
        train_idx = ds.split("train")
        write_labels(tmp_path / "db_labels.txt", ds.subset_labels(train_idx))
        idx_dir = tmp_path / "index"
        assert run_cli("index", "--codes", str(run_dir / "codes.fhsh"),
                       "--labels", str(tmp_path / "db_labels.txt"),
                       "--classes", "2", "--name", "toy",
                       "--out", str(idx_dir)) == 0
        assert json.loads((idx_dir / "index.json").read_text())["items"] == len(train_idx)

        # query it
        q_dir = tmp_path / "qres"
        assert run_cli("query", "--index", str(idx_dir),
                       "--queries", str(enc_dir / "codes.fhsh"),
                       "--k", "3", "--out", str(q_dir)) == 0
        lines = (q_dir / "results.csv").read_text().splitlines()
        assert lines[0] == "query,rank,item,distance"
        assert len(lines) == 1 + 3 * q_codes.n

    def test_query_k_out_of_range(self, tmp_path, capsys):
        write_eval_fixture(tmp_path)
        idx_dir = tmp_path / "index"
        assert run_cli("index", "--codes", str(tmp_path / "db.fhsh"),
                       "--labels", str(tmp_path / "db_labels.txt"),
                       "--classes", "3", "--out", str(idx_dir)) == 0
        code = run_cli("query", "--index", str(idx_dir),
                       "--queries", str(tmp_path / "q.fhsh"),
                       "--k", "9", "--out", str(tmp_path / "q"))
        assert code == 2


class TestEvalCommand:
    def test_fixture_metrics_match_goldens(self, tmp_path):
        write_eval_fixture(tmp_path)
        out = tmp_path / "metrics"
        assert run_cli("eval",
                       "--db-codes", str(tmp_path / "db.fhsh"),
                       "--db-labels", str(tmp_path / "db_labels.txt"),
                       "--query-codes", str(tmp_path / "q.fhsh"),
                       "--query-labels", str(tmp_path / "q_labels.txt"),
                       "--classes", "3", "--ks", "1,2,5",
                       "--out", str(out)) == 0
        import pathlib
        golden_dir = pathlib.Path(__file__).parent / "data"
        for name in ("map.csv", "prn.csv", "pr.csv"):
            assert (out / name).read_bytes() == (golden_dir / name).read_bytes(), name

    def test_self_query_map_is_one(self, tmp_path):
        signs = np.array([[1, -1], [1, 1], [-1, -1]])
        BinaryCodeMatrix.from_signs(signs).save(tmp_path / "codes.fhsh")
        write_labels(tmp_path / "labels.txt", [{0}, {1}])
        out = tmp_path / "m"
        assert run_cli("eval",
                       "--db-codes", str(tmp_path / "codes.fhsh"),
                       "--db-labels", str(tmp_path / "labels.txt"),
                       "--query-codes", str(tmp_path / "codes.fhsh"),
                       "--query-labels", str(tmp_path / "labels.txt"),
                       "--classes", "2", "--ks", "1", "--out", str(out)) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["map"]["1"] == 1.0

    def test_k_beyond_database_rejected(self, tmp_path, capsys):
        write_eval_fixture(tmp_path)
        code = run_cli("eval",
                       "--db-codes", str(tmp_path / "db.fhsh"),
                       "--db-labels", str(tmp_path / "db_labels.txt"),
                       "--query-codes", str(tmp_path / "q.fhsh"),
                       "--query-labels", str(tmp_path / "q_labels.txt"),
                       "--classes", "3", "--ks", "6",
                       "--out", str(tmp_path / "m"))
        assert code == 2
        assert "k must be" in capsys.readouterr().err


class TestAblateCommand:
    def ablate_config(self, path, seeds, variants=None):
        cfg = {
            "dataset": {"synthetic": {
                "classes": 3, "per_class": 30, "dim": 8,
                "separation": 3.0, "seed": 100, "query_fraction": 0.2,
            }},
            "hyper": {
                "bits": 4, "epochs": 4, "batch_size": 16, "lr": 0.05,
                "mu": 2.0, "nu": 2.0, "eta": 0.2,
                "center_inner_lr": 0.02, "center_inner_steps": 30,
            },
            "encoder": {"hidden_layers": [[16, "relu"]], "seed": 0},
            "ablate": {"seeds": seeds},
        }
        if variants is not None:
            cfg["ablate"]["variants"] = variants
        path.write_text(json.dumps(cfg), encoding="utf-8")

    def test_runs_requested_variants_only(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        self.ablate_config(cfg_path, seeds=[0, 1], variants=["pair"])
        out = tmp_path / "ab"
        assert run_cli("ablate", "--config", str(cfg_path), "--out", str(out)) == 0
        rows = (out / "ablation.csv").read_text().splitlines()
        assert rows[0] == "variant,seed,map"
        assert len(rows) == 1 + 2
        assert all(r.startswith("pair,") for r in rows[1:])

    def test_duplicate_seeds_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        self.ablate_config(cfg_path, seeds=[3, 3])
        assert run_cli("ablate", "--config", str(cfg_path), "--out", str(tmp_path / "o")) == 2
        assert "duplicate" in capsys.readouterr().err

    def test_full_table_shape(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        self.ablate_config(cfg_path, seeds=[0, 1])
        out = tmp_path / "ab"
        assert run_cli("ablate", "--config", str(cfg_path), "--out", str(out)) == 0
        rows = (out / "ablation.csv").read_text().splitlines()
        assert len(rows) == 1 + 3 * 2
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["medians"]) == {"pair", "pair+intra", "full"}


class TestCurvesCommand:
    def test_writes_expected_grid(self, tmp_path):
        out = tmp_path / "c"
        assert run_cli("curves", "--margins", "0,1,2", "--points", "41",
                       "--out", str(out)) == 0
        lines = (out / "curves.csv").read_text().splitlines()
        assert lines[0] == "D,m,loss_similar,loss_dissimilar"
        assert len(lines) == 1 + 3 * 41

    def test_negative_margin_rejected(self, tmp_path):
        assert run_cli("curves", "--margins", "-1", "--out", str(tmp_path / "c")) == 2
