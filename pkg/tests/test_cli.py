import json

import numpy as np
import pytest

from tdelm.cli import main
from tdelm.io import load_tensor, save_tensor

CONFIG = {"channel": {"n_tx": 4, "n_rx": 2, "n_freq": 64}, "hidden_sizes": [5, 10],
          "rank_grid": [[2, 2, 2], [4, 2, 4]], "repeats": 2, "timing_repeats": 1,
          "nn_epochs": 20, "methods": ["TDELM", "TELM", "Mean", "LMSE"]}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(CONFIG))
    return path


@pytest.fixture
def data(tmp_path, config):
    out = tmp_path / "d"
    assert main(["gen", "--config", str(config), "--out", str(out), "--seed", "3"]) == 0
    return out


def test_gen_outputs(data):
    grid = load_tensor(data / "channel")
    assert np.iscomplexobj(grid) and grid.shape == (4, 2, 64)
    cfg = json.loads((data / "config.json").read_text())
    assert cfg["seed"] == 3
    manifest = json.loads((data / "dataset.json").read_text())
    assert set(manifest["splits"]) == {"train", "test"}
    feats = load_tensor(data / manifest["splits"]["train"]["real"]["features"])
    assert feats.shape[1:] == (4, 2, 4)


def test_global_flags_before_subcommand(tmp_path, config):
    out = tmp_path / "g"
    assert main(["--seed", "9", "--window-mode", "consecutive", "gen", "--config", str(config),
                 "--out", str(out)]) == 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["seed"] == 9 and cfg["window_mode"] == "consecutive"


@pytest.mark.parametrize("method", ["tdelm", "telm", "elm", "nn", "tdnn", "mean", "lmse"])
def test_train_and_evaluate(tmp_path, data, method):
    model = tmp_path / f"m_{method}"
    assert main(["train", "--method", method, "--data", str(data), "--out", str(model)]) == 0
    assert main(["evaluate", "--model", str(model), "--data", str(data)]) == 0
    metrics = json.loads((model / "metrics.json").read_text())
    assert metrics["mse"] == pytest.approx(sum(metrics["planes"].values()))
    assert (model / "predictions.csv").exists()


def test_train_with_explicit_cell(tmp_path, data):
    model = tmp_path / "m"
    assert main(["train", "--method", "tdelm", "--data", str(data), "--out", str(model),
                 "--hidden", "6", "--ranks", "3,2,2"]) == 0
    manifest = json.loads((model / "model.json").read_text())
    assert manifest["L"] == 6 and manifest["ranks"] == [3, 2, 2]


def test_decompose_sample_mode(tmp_path):
    rng = np.random.default_rng(0)
    save_tensor(tmp_path / "t", rng.standard_normal((6, 3, 4, 10)))
    out = tmp_path / "dec"
    assert main(["decompose", "--in", str(tmp_path / "t.bin"), "--ranks", "4,2,2",
                 "--out", str(out)]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["core_shape"] == [4, 2, 2, 10] and 0 < fit["fit"] < 1
    assert load_tensor(out / "factor_0").shape == (6, 4)


def test_decompose_full_order(tmp_path):
    save_tensor(tmp_path / "t", np.random.default_rng(1).standard_normal((4, 3, 2)))
    out = tmp_path / "dec"
    assert main(["decompose", "--in", str(tmp_path / "t"), "--ranks", "4,3,2",
                 "--method", "hosvd", "--out", str(out)]) == 0
    assert json.loads((out / "fit.json").read_text())["fit"] == pytest.approx(1.0)


def test_gridsearch_writes_report(tmp_path, config):
    out = tmp_path / "r"
    assert main(["gridsearch", "--config", str(config), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report["methods"]) == set(CONFIG["methods"])


def test_bench(tmp_path, capsys):
    assert main(["bench", "--n", "50", "--hidden", "20", "--repeats", "1",
                 "--out", str(tmp_path)]) == 0
    cells = json.loads((tmp_path / "bench.json").read_text())["cells"]
    assert cells[0]["mults_telm"] == 50 * 20 * 768
    assert cells[0]["mults_tdelm"] * 3 == cells[0]["mults_telm"]
    assert "66.7% fewer" in capsys.readouterr().out


def test_bench_from_config(tmp_path, config):
    assert main(["bench", "--config", str(config), "--repeats", "1", "--out", str(tmp_path)]) == 0
    cells = json.loads((tmp_path / "bench.json").read_text())["cells"]
    assert len(cells) == 4


def test_exit_code_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"repeats": 0}))
    assert main(["gridsearch", "--config", str(bad)]) == 2
    assert main(["gridsearch", "--config", str(tmp_path / "missing.json")]) == 2
    save_tensor(tmp_path / "t", np.ones((3, 3)))
    assert main(["decompose", "--in", str(tmp_path / "t"), "--ranks", "5,1"]) == 2


def test_exit_code_numerical_failure(tmp_path):
    cfg = dict(CONFIG, methods=["NN"], nn_step=1e308, hidden_sizes=[3], nn_epochs=5)
    path = tmp_path / "nn.json"
    path.write_text(json.dumps(cfg))
    assert main(["gridsearch", "--config", str(path), "--out", str(tmp_path / "o")]) == 3


def test_seed_range_checked():
    with pytest.raises(SystemExit) as info:
        main(["gen", "--seed", str(2**64)])
    assert info.value.code == 2
