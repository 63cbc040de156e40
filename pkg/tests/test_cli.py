import json

import pytest

from wildclass.cli import main
from wildclass.config import save_config
from wildclass.util import read_json


@pytest.fixture(scope="module")
def demo_run(tmp_path_factory):
    """One tiny demo invocation shared by the CLI tests (16 images, 1+1 epochs)."""
    out = tmp_path_factory.mktemp("demo")
    code = main(["demo", "--output-dir", str(out), "--images", "16",
                 "--repeats", "1", "--epochs", "1"])
    assert code == 0
    return out


def test_demo_produces_evaluated_experiment(demo_run):
    aggregate = read_json(demo_run / "experiments" / "demo" / "aggregate.json")
    assert aggregate["iterations"] == 1
    assert 0.0 <= aggregate["accuracy"] <= 1.0
    record = read_json(demo_run / "experiments" / "demo" / "record.json")
    assert record["status"] == "evaluated"
    assert (demo_run / "work" / "manifest.json").exists()
    assert (demo_run / "work" / "split.json").exists()


def test_demo_no_overwrite_refuses(demo_run):
    code = main(["demo", "--output-dir", str(demo_run), "--no-overwrite"])
    assert code == 3


def test_compare_table_and_json(demo_run, capsys):
    store = str(demo_run / "experiments")
    assert main(["compare", "--store", store]) == 0
    table = capsys.readouterr().out
    assert "demo" in table and "accuracy" not in table  # tabular header uses short names

    assert main(["compare", "--store", store, "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload[0]["experiment_id"] == "demo"
    assert payload[0]["aggregate"]["iterations"] == 1


def test_compare_scheme_filter(demo_run, capsys):
    store = str(demo_run / "experiments")
    assert main(["compare", "--store", store, "--scheme", "nothing", "--json"]) == 0
    assert json.loads(capsys.readouterr().out) == []


def test_evaluate_uncertainty_override(demo_run, capsys):
    config_path = demo_run / "experiment.toml"
    code = main(["evaluate", "--config", str(config_path), "--experiment-id", "demo",
                 "--uncertainty-threshold", "0.99"])
    assert code == 0
    result = read_json(demo_run / "experiments" / "demo" / "runs" / "run-000" / "result.json")
    assert result["uncertainty_threshold"] == 0.99
    # restore the stored default-threshold evaluation for other tests
    assert main(["evaluate", "--config", str(config_path), "--experiment-id", "demo"]) == 0
    result = read_json(demo_run / "experiments" / "demo" / "runs" / "run-000" / "result.json")
    assert result["uncertainty_threshold"] == 0.5


def test_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[io]\ndata_dir = 'x'\noutput_dir = 'y'\n[training]\nbackbone = 'alexnet'\ntarget_scheme = 's'\n")
    assert main(["preprocess", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_data_exits_3(tmp_path, capsys):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(
        f'[io]\ndata_dir = "{tmp_path}/nodata"\noutput_dir = "{tmp_path}/out"\n'
        '[training]\ntarget_scheme = "age"\n'
    )
    assert main(["preprocess", "--config", str(cfg)]) == 3


def test_cli_preprocess_override_flags(small_dataset, tmp_path, capsys):
    config = small_dataset["config"]
    config_path = tmp_path / "exp.toml"
    save_config(config, config_path)
    code = main(["preprocess", "--config", str(config_path), "--confidence-threshold", "0.999"])
    assert code == 3  # everything filtered out -> empty dataset
    code = main(["preprocess", "--config", str(config_path)])
    assert code == 0
    assert "17 entries" in capsys.readouterr().out
