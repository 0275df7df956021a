import json

import numpy as np
import pytest

from manetids.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from manetids.classifiers import load_model
from manetids.features import LABELS, Dataset, read_dataset, write_dataset

SMALL = {"sim": {"node_count": 20, "duration": 30.0, "sampling_interval": 10.0,
                 "attack_kind": "flooding", "malicious_count": 3, "rng_seed": 5}}


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(SMALL))
    return p


def run(*argv):
    return main([str(a) for a in argv])


def manifest(d):
    return json.loads((d / "manifest.json").read_text())["runs"]


def synthetic(path, seed, gap=20.0, n=40, dt=10.0):
    rng = np.random.default_rng(seed)
    X = np.abs(np.vstack([rng.normal(gap * (i + 1), 1, (n, 8)) for i in range(5)]))
    X[:, 0] = np.round(X[:, 0])
    labels = [lab for lab in LABELS for _ in range(n)]
    m = len(labels)
    write_dataset(Dataset(X, labels, np.arange(m), np.zeros(m, int), ["syn"] * m,
                          np.zeros(m, int), dt), path)
    return path


def test_simulate_row_count_and_manifest(tmp_path, cfg):
    out = tmp_path / "a" / "flood.csv"
    assert run("simulate", "--config", cfg, "--out", out) == EXIT_OK
    d = read_dataset(out)
    assert len(d) == 17 * 3
    runs = manifest(out.parent)
    assert len(runs) == 1
    (entry,) = runs.values()
    assert entry["resolved"]["sim"]["malicious_count"] == 3
    assert entry["seeds"] == {"rng_seed": 5}
    assert set(entry["outputs"]) == {"flood.csv", "flood.csv.json"}
    assert len(entry["config_digest"]) == 64


def test_flags_override_file(tmp_path, cfg):
    out = tmp_path / "n.csv"
    assert run("simulate", "--config", cfg, "--set", "attack_kind=none",
               "--set", "sim.malicious_count=0", "--seed", 9, "--out", out) == EXIT_OK
    d = read_dataset(out)
    assert len(d) == 20 * 3 and set(d.labels) == {"normal"}
    (entry,) = manifest(tmp_path).values()
    assert entry["resolved"]["sim"]["rng_seed"] == 9


def test_simulate_is_idempotent(tmp_path, cfg):
    out = tmp_path / "x.csv"
    run("simulate", "--config", cfg, "--out", out)
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    run("simulate", "--config", cfg, "--out", out)
    assert {p.name: p.read_bytes() for p in tmp_path.iterdir()} == first


def test_config_errors(tmp_path, cfg, capsys):
    assert run("simulate", "--config", tmp_path / "nope.json", "--out", tmp_path / "o.csv") \
        == EXIT_USAGE
    assert "cannot read config" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sim": {"malicious_count": 60}}))
    assert run("simulate", "--config", bad, "--out", tmp_path / "o.csv") == EXIT_USAGE
    assert "malicious_count < node_count" in capsys.readouterr().err
    assert run("simulate", "--config", cfg, "--set", "warp=9", "--out", tmp_path / "o.csv") \
        == EXIT_USAGE
    assert run("tune", "--model", "forest", "--data", "x", "--out", "y") == EXIT_USAGE
    assert run("bogus") == EXIT_USAGE


def test_build_dataset_merges_and_rejects_mixed_intervals(tmp_path):
    a, b = synthetic(tmp_path / "a.csv", 1), synthetic(tmp_path / "b.csv", 2)
    c = synthetic(tmp_path / "c.csv", 3, dt=15.0)
    assert run("build-dataset", a, b, "--out", tmp_path / "m.csv") == EXIT_OK
    assert len(read_dataset(tmp_path / "m.csv")) == 400
    assert run("build-dataset", a, "--out", tmp_path / "one.csv") == EXIT_OK
    assert read_dataset(tmp_path / "one.csv") == read_dataset(a)
    assert run("build-dataset", a, c, "--out", tmp_path / "bad.csv") == EXIT_DATA
    assert run("build-dataset", tmp_path / "missing.csv", "--out", tmp_path / "z.csv") == EXIT_DATA


def test_tune_svm_deterministic(tmp_path):
    data = synthetic(tmp_path / "d.csv", 1, n=10)
    outs = []
    for name in ("h1", "h2"):
        out = tmp_path / name / "hp.json"
        assert run("tune", "--model", "svm", "--task", "binary", "--data", data,
                   "--seed", 3, "--folds", 3, "--out", out) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    res = json.loads(outs[0])
    assert len(res["table"]) == 16 and set(res["best"]) == {"sigma", "c"}


def test_train_evaluate_round_trip(tmp_path):
    train = synthetic(tmp_path / "train.csv", 1)
    test = synthetic(tmp_path / "test.csv", 2)
    model = tmp_path / "m" / "mlp.json"
    assert run("train", "--model", "mlp", "--data", train, "--param", "eta=0.01",
               "--param", "T=10", "--param", "nh=10", "--out", model) == EXIT_OK
    assert load_model(model).sampling_interval == 10.0
    for name, data in (("own", train), ("held", test)):
        assert run("evaluate", "--model", model, "--data", data,
                   "--out", tmp_path / "r" / f"{name}.json") == EXIT_OK
    own = json.loads((tmp_path / "r" / "own.json").read_text())
    held = json.loads((tmp_path / "r" / "held.json").read_text())
    assert own["hyperparameters"] == {"eta": 0.01, "T": 10, "nh": 10}
    assert own["error"] <= held["error"]
    assert len(manifest(tmp_path / "r")) == 2


def test_train_from_tune_output(tmp_path):
    data = synthetic(tmp_path / "d.csv", 1, n=10)
    hp = tmp_path / "hp.json"
    run("tune", "--model", "svm", "--task", "binary", "--data", data, "--folds", 3, "--out", hp)
    assert run("train", "--model", "svm", "--task", "binary", "--data", data, "--hp", hp,
               "--out", tmp_path / "svm.json") == EXIT_OK
    best = json.loads(hp.read_text())["best"]
    assert load_model(tmp_path / "svm.json").hp.to_dict() == best


def test_train_needs_hyperparameters(tmp_path, capsys):
    data = synthetic(tmp_path / "d.csv", 1, n=5)
    assert run("train", "--model", "svm", "--data", data, "--out", tmp_path / "m.json") \
        == EXIT_USAGE
    assert "missing hyperparameters" in capsys.readouterr().err


def test_evaluate_interval_mismatch(tmp_path, capsys):
    train = synthetic(tmp_path / "a.csv", 1, n=5)
    other = synthetic(tmp_path / "b.csv", 1, n=5, dt=15.0)
    run("train", "--model", "nb", "--data", train, "--out", tmp_path / "nb.json")
    assert run("evaluate", "--model", tmp_path / "nb.json", "--data", other,
               "--out", tmp_path / "r.json") == EXIT_DATA
    err = capsys.readouterr().err
    assert "10 s" in err and "15 s" in err


def test_report_over_nothing_is_header_only(tmp_path):
    out = tmp_path / "t.csv"
    assert run("report", "--out", out, "--summary", tmp_path / "s.csv") == EXIT_OK
    assert out.read_text() == "dt,malicious_count,pause_time,seed,model,task,metric,value\n"
    assert (tmp_path / "s.csv").read_text().count("\n") == 1


def test_report_flattens_reports(tmp_path):
    train = synthetic(tmp_path / "d.csv", 1, n=10)
    run("train", "--model", "nb", "--data", train, "--out", tmp_path / "nb.json")
    run("evaluate", "--model", tmp_path / "nb.json", "--data", train, "--out", tmp_path / "r.json")
    assert run("report", tmp_path / "r.json", "--out", tmp_path / "t.csv") == EXIT_OK
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 + 4
    assert run("report", tmp_path / "d.csv", "--out", tmp_path / "t2.csv") == EXIT_DATA


def test_detect_online(tmp_path, cfg):
    train = synthetic(tmp_path / "d.csv", 1, n=10)
    run("train", "--model", "nb", "--task", "binary", "--data", train, "--out", tmp_path / "nb.json")
    out = tmp_path / "alarms.csv"
    assert run("detect-online", "--config", cfg, "--model", tmp_path / "nb.json", "--out", out) \
        == EXIT_OK
    rows = out.read_text().splitlines()
    assert rows[0] == "time,node,scope,label"
    assert all(float(r.split(",")[0]) % 10 == 0 for r in rows[1:])


def test_experiment_end_to_end_is_reproducible(tmp_path):
    conf = {
        "sim": {"node_count": 30, "duration": 20.0},
        "experiment": {"train_counts": [5], "train_pauses": [200.0], "normal_replicas": 1,
                       "test_seeds": [7], "models": ["nb", "svm"], "tasks": ["binary"],
                       "hyperparameters": {"svm": {"sigma": 10, "c": 1}}},
    }
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(conf))
    store = tmp_path / "store"
    for name in ("one", "two"):
        assert run("experiment", "--config", p, "--sweep", "attackers", "--store", store,
                   "--out", tmp_path / name) == EXIT_OK
    one = {f.name: f.read_bytes() for f in (tmp_path / "one").iterdir()}
    two = {f.name: f.read_bytes() for f in (tmp_path / "two").iterdir()}
    assert one == two
    assert {"reports.json", "table.csv", "summary.csv", "tuning.json", "manifest.json",
            "model-dt10-nb-binary.json", "model-dt10-svm-binary.json"} <= set(one)
    reports = json.loads(one["reports.json"])["reports"]
    assert len(reports) == 3 * 2
    (entry,) = manifest(tmp_path / "one").values()
    assert entry["resolved"]["sweep"] == "attackers"
    assert entry["seeds"]["test_seeds"] == [7]
