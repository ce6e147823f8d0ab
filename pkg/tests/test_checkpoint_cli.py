import json

import numpy as np
import pytest

from nbd import experiments as ex
from nbd.baselines import MahalanobisModel
from nbd.checkpoint import load_checkpoint, save_checkpoint
from nbd.cli import DATA_FILE, MANIFEST_FILE, main
from nbd.datagen import io as dio
from nbd.divergences import DivergenceModel, bregman, closed_form_generator
from nbd.encoder import EncoderConfig, init_encoder
from nbd.icnn import IcnnConfig, init_icnn

SMALL_REGRESS = ["--task", "regress", "--set", "data.pairs=300", "--set", "train.epochs=2",
                 "--set", "model.widths=[8,8]", "--set", "train.batch_size=64"]


@pytest.mark.parametrize("variant", ["plain", "sqrt", "gsb"])
def test_checkpoint_round_trip_is_bit_exact(tmp_path, variant):
    enc = init_encoder(EncoderConfig(5, (6,), 3), 1)
    model = DivergenceModel(init_icnn(IcnnConfig(3, (8, 4)), 0), enc, variant)
    save_checkpoint(model, tmp_path / "c.json", {"note": "x"})
    back, meta = load_checkpoint(tmp_path / "c.json")
    assert meta == {"note": "x"}
    assert back.arrays().keys() == model.arrays().keys()
    for k, v in model.arrays().items():
        assert back.arrays()[k].tobytes() == v.tobytes()
    x = np.random.default_rng(0).standard_normal((4, 5))
    y = np.random.default_rng(1).standard_normal((4, 5))
    assert back.bind().divergence(x, y).data.tobytes() == model.bind().divergence(x, y).data.tobytes()


def test_checkpoint_other_models(tmp_path):
    maha = MahalanobisModel.identity(3)
    maha.arrays()["maha.L"][0, 1] = 0.25
    save_checkpoint(maha, tmp_path / "m.json")
    back, _ = load_checkpoint(tmp_path / "m.json")
    np.testing.assert_array_equal(back.arrays()["maha.L"], maha.arrays()["maha.L"])
    fixed = DivergenceModel(closed_form_generator("xlogx"))
    save_checkpoint(fixed, tmp_path / "f.json")
    back, _ = load_checkpoint(tmp_path / "f.json")
    assert back.bind().divergence(np.array([[4.0]]), np.array([[6.0]])).data[0] == pytest.approx(0.378, abs=5e-4)
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.json")


def test_invalid_family_is_usage_error(tmp_path, capsys):
    code = main(["generate", "--task", "cluster", "--set", "data.family=poisson", "--out", str(tmp_path)])
    assert code == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_task_and_bad_override_exit_2(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["generate", "--task", "nope"])
    assert info.value.code == 2
    assert main(["generate", "--task", "regress", "--set", "novalue", "--out", str(tmp_path)]) == 2
    assert main(["reproduce", "no-such-experiment", "--out", str(tmp_path)]) == 2


def test_generate_cluster_default(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["generate", "--task", "cluster", "--out", str(a)]) == 0
    assert main(["generate", "--task", "cluster", "--out", str(b)]) == 0
    records = dio.read_jsonl(a / DATA_FILE)
    assert len(records) == 1000
    assert set(records[0]) == {"x", "label", "split"}
    ma, mb = json.loads((a / MANIFEST_FILE).read_text()), json.loads((b / MANIFEST_FILE).read_text())
    assert ma["sha256"] == mb["sha256"] == dio.file_sha256(a / DATA_FILE)
    assert ma["seed"] == 0 and ma["spec"]["family"] == "gaussian"


def test_generate_regress_default(tmp_path):
    assert main(["generate", "--task", "regress", "--out", str(tmp_path)]) == 0
    records = dio.read_jsonl(tmp_path / DATA_FILE)
    assert len(records) == 20000
    assert set(records[0]) == {"a", "b", "target", "split"}


def test_missing_dataset_is_usage_error(tmp_path):
    assert main(["train", "--data", str(tmp_path / "missing")]) == 2
    assert main(["eval", "--data", str(tmp_path / "missing"), "--checkpoint", str(tmp_path / "c.json")]) == 2


def test_train_eval_round_trip(tmp_path):
    data, run_a, run_b = tmp_path / "data", tmp_path / "ra", tmp_path / "rb"
    assert main(["generate", *SMALL_REGRESS, "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(run_a)]) == 0
    assert main(["train", "--data", str(data), "--out", str(run_b)]) == 0
    assert (run_a / "checkpoint.json").read_bytes() == (run_b / "checkpoint.json").read_bytes()
    model, meta = load_checkpoint(run_a / "checkpoint.json")
    train, _ = dio.load_pairs(dio.read_jsonl(data / DATA_FILE), "train"), None
    pred = model.bind().divergence(train.a, train.b).data
    assert abs(np.mean((pred - train.target) ** 2) - meta["train_loss"]) <= 1e-9
    trace = (run_a / "trace.csv").read_text().splitlines()
    assert trace[0] == "epoch,split,loss" and len(trace) == 1 + 2 * 2

    e1, e2 = tmp_path / "e1", tmp_path / "e2"
    ckpt = str(run_a / "checkpoint.json")
    assert main(["eval", "--data", str(data), "--checkpoint", ckpt, "--out", str(e1)]) == 0
    assert main(["eval", "--data", str(data), "--checkpoint", ckpt, "--out", str(e2)]) == 0
    assert (e1 / "metrics.csv").read_bytes() == (e2 / "metrics.csv").read_bytes()
    rows = ex.read_metrics_csv(e1 / "metrics.csv")
    assert rows[0]["dataset"] == "regress:sq-euclidean" and float(rows[0]["mae"]) >= 0


def test_train_cluster_requires_labeled_split(tmp_path):
    data = tmp_path / "data"
    assert main(["generate", "--task", "cluster", "--set", "data.n=60", "--set", "data.k=3", "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(tmp_path / "r")]) == 2


def test_train_and_eval_cluster(tmp_path):
    data, run, ev = tmp_path / "data", tmp_path / "run", tmp_path / "ev"
    args = ["--task", "cluster", "--set", "data.n=60", "--set", "data.n_train=60", "--set", "data.k=3",
            "--set", "train.epochs=1", "--set", "model.widths=[8]"]
    assert main(["generate", *args, "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(run)]) == 0
    assert main(["eval", "--data", str(data), "--checkpoint", str(run / "checkpoint.json"), "--out", str(ev)]) == 0
    row = ex.read_metrics_csv(ev / "metrics.csv")[0]
    assert 0 < float(row["purity"]) <= 1 and 0 < float(row["rand"]) <= 1


def test_config_file_and_seed_flag(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("task: regress\nseed: 3\ndata:\n  pairs: 100\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert json.loads((tmp_path / "a" / MANIFEST_FILE).read_text())["seed"] == 3
    assert main(["generate", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "b" / MANIFEST_FILE).read_text())["seed"] == 4
    (tmp_path / "bad.yaml").write_text("- not a mapping\n")
    assert main(["generate", "--config", str(tmp_path / "bad.yaml"), "--out", str(tmp_path / "c")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_training_exits_1(tmp_path):
    data = tmp_path / "data"
    assert main(["generate", *SMALL_REGRESS, "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--set", "train.lr=1e300", "--out", str(tmp_path / "r")]) == 1


def test_bench(tmp_path, monkeypatch):
    monkeypatch.setenv("NBD_NUM_THREADS", "1")
    assert main(["bench", "--sizes", "5,100", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "bench.csv").read_text().splitlines()
    assert lines[0] == "size,single_s,batched_s,pairwise_s" and len(lines) == 3
    assert main(["bench", "--sizes", "", "--out", str(tmp_path)]) == 2
    assert main(["bench", "--sizes", "a,b", "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("NBD_NUM_THREADS", "many")
    assert main(["bench", "--sizes", "5", "--out", str(tmp_path)]) == 2


def test_bench_pairwise_matches_scalar_evaluations():
    # the same model the bench command times
    model = DivergenceModel(init_icnn(IcnnConfig(10), 0))
    bound = model.bind(None)
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((100, 10)), rng.standard_normal((100, 10))
    m = bound.pairwise(x, y).data
    scalar = np.array([[float(bregman(bound.generator, a, b).data) for b in y] for a in x])
    assert np.max(np.abs(m - scalar)) <= 1e-9


def test_reproduce_list(capsys):
    assert main(["reproduce", "list"]) == 0
    names = capsys.readouterr().out.split()
    assert {"regress-sym", "regress-asym", "cluster"} <= set(names)
