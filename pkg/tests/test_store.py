import time

import pytest

from test_evaluation import make_result
from wildclass.config import config_from_dict
from wildclass.errors import DuplicateRunId
from wildclass.store import ExperimentStore
from wildclass.training import TrainRecord


def make_config(tmp_path, scheme="age", seed=0):
    return config_from_dict(
        {
            "io": {"data_dir": str(tmp_path / "data"), "output_dir": str(tmp_path / "out")},
            "training": {"target_scheme": scheme, "seed": seed},
        }
    )


def make_train_record(run_id="run-000"):
    return TrainRecord(
        run_id=run_id, seed=0, config_fingerprint="cf", experiment_fingerprint="ef"
    )


def test_save_load_round_trip(tmp_path):
    store = ExperimentStore(tmp_path / "store")
    config = make_config(tmp_path)
    store.create_experiment("exp1", config)
    result = make_result("run-000", 0.9)
    store.save_run("exp1", make_train_record(), result)
    loaded = store.load_result("exp1", "run-000")
    assert loaded == result


def test_duplicate_run_id(tmp_path):
    store = ExperimentStore(tmp_path / "store")
    store.create_experiment("exp1", make_config(tmp_path))
    store.save_run("exp1", make_train_record(), make_result("run-000", 0.9))
    with pytest.raises(DuplicateRunId):
        store.save_run("exp1", make_train_record(), make_result("run-000", 0.9))
    # explicit overwrite is the idempotent re-evaluation path
    store.save_run("exp1", make_train_record(), make_result("run-000", 0.8), overwrite=True)
    assert store.load_record("exp1").run_ids == ["run-000"]


def test_temp_files_ignored(tmp_path):
    store = ExperimentStore(tmp_path / "store")
    store.create_experiment("exp1", make_config(tmp_path))
    store.save_run("exp1", make_train_record(), make_result("run-000", 0.9))
    # simulate a crash-interrupted write
    (store.experiment_dir("exp1") / "aggregate.json.tmp").write_text("{garbage")
    (store.root / "leftover.tmp").write_text("junk")
    summaries = store.list_experiments()
    assert len(summaries) == 1
    assert store.load_aggregate("exp1") is None


def test_list_experiments_sorted_and_filtered(tmp_path):
    store = ExperimentStore(tmp_path / "store")
    assert store.list_experiments() == []
    store.create_experiment("age-exp", make_config(tmp_path, "age"))
    time.sleep(0.01)
    store.create_experiment("sex-exp", make_config(tmp_path, "sex"))
    summaries = store.list_experiments()
    assert [s["experiment_id"] for s in summaries] == ["age-exp", "sex-exp"]
    only_age = store.list_experiments("age")
    assert [s["experiment_id"] for s in only_age] == ["age-exp"]


def test_summary_metrics_equal_aggregate(tmp_path):
    store = ExperimentStore(tmp_path / "store")
    store.create_experiment("exp1", make_config(tmp_path))
    store.save_run("exp1", make_train_record("run-000"), make_result("run-000", 0.9))
    store.save_run("exp1", make_train_record("run-001"), make_result("run-001", 0.8))
    aggregate = store.save_aggregate("exp1")
    summary = store.list_experiments()[0]
    assert summary["aggregate"]["accuracy"] == aggregate.accuracy
    assert summary["aggregate"]["iterations"] == 2


def test_config_round_trip_through_store(tmp_path):
    store = ExperimentStore(tmp_path / "store")
    config = make_config(tmp_path)
    store.create_experiment("exp1", config)
    assert store.load_experiment_config("exp1") == config


def test_reopen_from_directory_alone(tmp_path):
    root = tmp_path / "store"
    store = ExperimentStore(root)
    store.create_experiment("exp1", make_config(tmp_path))
    store.save_run("exp1", make_train_record(), make_result("run-000", 0.9))
    store.save_aggregate("exp1")
    fresh = ExperimentStore(root)  # no hidden state beyond the tree
    assert fresh.load_record("exp1").run_ids == ["run-000"]
    assert fresh.load_aggregate("exp1").iterations == 1


def test_review_logs_written(tmp_path):
    store = ExperimentStore(tmp_path / "store")
    store.create_experiment("exp1", make_config(tmp_path))
    result = make_result("run-000", 0.8, n=10)  # 2 wrong
    store.save_run("exp1", make_train_record(), result)
    from wildclass.util import read_json

    errors = read_json(store.run_dir("exp1", "run-000") / "errors.json")
    assert len(errors) == 2
    assert all(e["predicted_label"] == "b" for e in errors)
