import csv
import json

import pytest

from rgnpp.cli import main


def run(argv):
    return main(argv)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """generate -> train once; downstream commands reuse the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    runs = root / "run"
    assert run(["generate", "--process", "poisson", "--rate", "1.0",
                "--horizon", "5.0", "--num-seq", "20", "--seed", "3",
                "--out-dir", str(data)]) == 0
    config = {
        "num_types": 1, "d_in": 8, "d_e": 4, "num_heads": 2, "num_gat_layers": 1,
        "dropout_p": 0.0, "alpha": 0.0,
        "epochs": 2, "lr": 1e-3, "tbptt_steps": 20, "batch_size": 8, "seed": 5,
        "mc_samples": 5,
        "train_path": str(data / "train.jsonl"), "val_path": str(data / "val.jsonl"),
        "out_dir": str(runs),
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config))
    assert run(["train", "--config", str(cfg_path)]) == 0
    return {"root": root, "data": data, "runs": runs, "config": cfg_path,
            "config_dict": config}


def test_generate_outputs(workspace):
    data = workspace["data"]
    for name in ("train.jsonl", "val.jsonl", "test.jsonl", "config.json"):
        assert (data / name).exists()
    n = sum(1 for _ in open(data / "train.jsonl"))
    assert n == 16  # 80% of 20


def test_train_artifacts(workspace):
    runs = workspace["runs"]
    for name in ("metrics.csv", "timings.csv", "best_nll.json", "final.json", "config.json"):
        assert (runs / name).exists()
    with open(runs / "metrics.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 4  # 2 epochs x (train, val)
    assert {r["split"] for r in rows} == {"train", "val"}


def test_train_determinism_byte_identical(workspace, tmp_path):
    cfg = dict(workspace["config_dict"])
    outs = []
    for tag in ("r1", "r2"):
        cfg["out_dir"] = str(tmp_path / tag)
        p = tmp_path / f"{tag}.json"
        p.write_text(json.dumps(cfg))
        assert run(["train", "--config", str(p)]) == 0
        outs.append((tmp_path / tag / "metrics.csv").read_bytes())
    assert outs[0] == outs[1]


def test_evaluate(workspace, tmp_path):
    out = tmp_path / "eval"
    code = run(["evaluate", "--checkpoint", str(workspace["runs"] / "best_nll.json"),
                "--data", str(workspace["data"] / "test.jsonl"),
                "--quad-steps", "50", "--out-dir", str(out)])
    assert code == 0
    doc = json.loads((out / "metrics.json").read_text())
    assert {"nll_per_event", "type_acc", "time_rmse", "total_ll",
            "ll_per_event", "ll_per_sequence"} <= set(doc)
    with open(out / "metrics.csv") as f:
        header = next(csv.reader(f))
    assert header == ["nll_per_event", "type_acc", "time_rmse"]


def test_gof(workspace, tmp_path):
    out = tmp_path / "gof"
    code = run(["gof", "--checkpoint", str(workspace["runs"] / "best_nll.json"),
                "--data", str(workspace["data"] / "test.jsonl"),
                "--quad-steps", "50", "--out-dir", str(out)])
    assert code == 0
    doc = json.loads((out / "gof.json").read_text())
    assert {"ks_statistic", "critical_5pct", "pass_5pct"} <= set(doc)
    with open(out / "pp.csv") as f:
        header = next(csv.reader(f))
    assert header == ["model_cdf", "empirical_cdf"]


def test_inspect_attention(workspace, tmp_path):
    out = tmp_path / "attn"
    code = run(["inspect-attention", "--checkpoint", str(workspace["runs"] / "best_nll.json"),
                "--data", str(workspace["data"] / "test.jsonl"),
                "--sequence-index", "0", "--out-dir", str(out)])
    assert code == 0
    with open(out / "attention.csv") as f:
        rows = list(csv.DictReader(f))
    assert rows and set(rows[0]) == {"event_index", "layer", "head", "receiver",
                                     "sender", "weight"}


def test_complexity(workspace, tmp_path, capsys):
    out = tmp_path / "cx"
    code = run(["complexity", "--config", str(workspace["config"]),
                "--seq-len", "100", "--out-dir", str(out)])
    assert code == 0
    doc = json.loads((out / "complexity.json").read_text())
    assert doc["attention_scores_per_event"] == 1 * 2 * 1 * 1
    assert doc["attention_scores_total"] == 200


def test_missing_dataset_exits_1(workspace, capsys):
    cfg = dict(workspace["config_dict"])
    cfg["train_path"] = "/nonexistent/never.jsonl"
    p = workspace["root"] / "missing.json"
    p.write_text(json.dumps(cfg))
    assert run(["train", "--config", str(p)]) == 1
    assert "/nonexistent/never.jsonl" in capsys.readouterr().err


def test_unknown_config_key_exits_1(workspace, capsys):
    cfg = dict(workspace["config_dict"])
    cfg["learning_rate"] = 0.1  # wrong name
    p = workspace["root"] / "unknown.json"
    p.write_text(json.dumps(cfg))
    assert run(["train", "--config", str(p)]) == 1
    assert "learning_rate" in capsys.readouterr().err


def test_missing_checkpoint_exits_1(workspace, capsys):
    assert run(["evaluate", "--checkpoint", "/nope.json",
                "--data", str(workspace["data"] / "test.jsonl"),
                "--out-dir", str(workspace["root"] / "x")]) == 1
    assert "checkpoint" in capsys.readouterr().err


def test_hawkes_generate(tmp_path):
    out = tmp_path / "hk"
    assert run(["generate", "--process", "hawkes",
                "--mu", "[0.2, 0.2]", "--alpha", "[[0.5, 0.3], [0.3, 0.5]]",
                "--beta-decay", "1.0", "--horizon", "10.0", "--num-seq", "10",
                "--seed", "1", "--out-dir", str(out)]) == 0
    from rgnpp.datagen import load_dataset
    seqs = load_dataset(out / "train.jsonl", num_types=2)
    assert len(seqs) == 8


def test_nonstationary_hawkes_exits_1(tmp_path, capsys):
    assert run(["generate", "--process", "hawkes",
                "--mu", "[0.2]", "--alpha", "[[1.5]]", "--beta-decay", "1.0",
                "--horizon", "5.0", "--num-seq", "4",
                "--out-dir", str(tmp_path / "bad")]) == 1
    assert "spectral radius" in capsys.readouterr().err
