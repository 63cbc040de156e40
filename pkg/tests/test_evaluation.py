from fractions import Fraction

import numpy as np
import pytest

from wildclass.data import ClassScheme
from wildclass.errors import EmptyEvaluation, MissingAttribute, MixedConfig, UnknownLabel
from wildclass.evaluation import (
    MetricsReport,
    PredictionRecord,
    RunResult,
    aggregate_runs,
    apply_uncertainty_threshold,
    compute_metrics,
    confusion_matrix,
    evaluate_records,
    metrics_fractions,
    record_review_sets,
    stratified_metrics,
    unknown_quality_adjustment,
)

AB = ClassScheme("cls", ("a", "b"))
ABC = ClassScheme("cls", ("a", "b", "c"))


def rec(i, true, pred, conf=0.9, certain=True, metadata=None):
    return PredictionRecord(f"b{i}", true, pred, conf, certain, "run-000", metadata or {})


def records_from(true, pred, confs=None):
    confs = confs or [0.9] * len(true)
    return [rec(i, t, p, c) for i, (t, p, c) in enumerate(zip(true, pred, confs))]


def test_compute_metrics_worked_example():
    # true=[a,a,b], pred=[a,b,b]
    m = compute_metrics(records_from(["a", "a", "b"], ["a", "b", "b"]), AB)
    assert m.accuracy == pytest.approx(2 / 3, abs=1e-15)
    assert m.weighted_precision == pytest.approx(2 / 3 * 1 + 1 / 3 * 0.5, abs=1e-12)  # 0.8333
    assert m.weighted_recall == pytest.approx(2 / 3, abs=1e-15)
    assert m.weighted_f1 == pytest.approx(2 / 3, abs=1e-12)
    assert m.weighted_recall == m.accuracy  # exact
    assert m.confusion == ((1, 1), (0, 1))


def test_perfect_predictions():
    m = compute_metrics(records_from(["a", "b", "a"], ["a", "b", "a"]), AB)
    assert (m.accuracy, m.weighted_precision, m.weighted_recall, m.weighted_f1) == (1.0, 1.0, 1.0, 1.0)


def test_absent_class_scores_zero_with_zero_weight():
    m = compute_metrics(records_from(["a", "a", "b"], ["a", "b", "b"]), ABC)
    assert m.per_class["c"].precision == 0.0
    assert m.per_class["c"].recall == 0.0
    assert m.per_class["c"].f1 == 0.0
    assert m.per_class["c"].support == 0
    two_class = compute_metrics(records_from(["a", "a", "b"], ["a", "b", "b"]), AB)
    assert m.weighted_precision == two_class.weighted_precision
    assert m.accuracy == two_class.accuracy


def test_unknown_label_and_empty():
    with pytest.raises(UnknownLabel):
        compute_metrics(records_from(["a"], ["z"]), AB)
    with pytest.raises(UnknownLabel):
        compute_metrics(records_from(["z"], ["a"]), AB)
    with pytest.raises(EmptyEvaluation):
        compute_metrics([], AB)


def test_confusion_matrix_sums():
    records = records_from(["a", "a", "b", "b", "b"], ["a", "b", "b", "b", "a"])
    matrix = confusion_matrix(records, AB)
    assert matrix.sum() == 5
    assert list(matrix.sum(axis=1)) == [2, 3]  # row sums = true counts
    assert list(matrix.sum(axis=0)) == [2, 3]  # column sums = predicted counts
    assert np.trace(matrix) / matrix.sum() == compute_metrics(records, AB).accuracy


def test_weighted_recall_equals_accuracy_random():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        true = [ABC.labels[int(v)] for v in rng.integers(0, 3, n)]
        pred = [ABC.labels[int(v)] for v in rng.integers(0, 3, n)]
        m = compute_metrics(records_from(true, pred), ABC)
        assert m.weighted_recall == m.accuracy


def brute_force_metrics(pairs, labels):
    """Definitional oracle: count-based, exact rational arithmetic."""
    n = len(pairs)
    out = {}
    per_p, per_r, per_f = {}, {}, {}
    for label in labels:
        tp = sum(1 for t, p in pairs if t == label and p == label)
        pred_n = sum(1 for _, p in pairs if p == label)
        true_n = sum(1 for t, _ in pairs if t == label)
        p = Fraction(tp, pred_n) if pred_n else Fraction(0)
        r = Fraction(tp, true_n) if true_n else Fraction(0)
        f = 2 * p * r / (p + r) if p + r else Fraction(0)
        per_p[label], per_r[label], per_f[label] = p, r, f
    out["accuracy"] = Fraction(sum(1 for t, p in pairs if t == p), n)
    out["weighted_precision"] = sum(Fraction(sum(1 for t, _ in pairs if t == lb), n) * per_p[lb] for lb in labels)
    out["weighted_recall"] = sum(Fraction(sum(1 for t, _ in pairs if t == lb), n) * per_r[lb] for lb in labels)
    out["weighted_f1"] = sum(Fraction(sum(1 for t, _ in pairs if t == lb), n) * per_f[lb] for lb in labels)
    return out


def test_metrics_match_definitional_oracle_random():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(1, 25))
        pairs = [(ABC.labels[int(a)], ABC.labels[int(b)]) for a, b in rng.integers(0, 3, (n, 2))]
        oracle = brute_force_metrics(pairs, ABC.labels)
        matrix = confusion_matrix(records_from(*zip(*pairs)), ABC)
        ours = metrics_fractions(matrix)
        for key in ("accuracy", "weighted_precision", "weighted_recall", "weighted_f1"):
            assert ours[key] == oracle[key]  # bitwise in rational arithmetic


def test_metrics_order_invariance():
    pairs = [("a", "a"), ("a", "b"), ("b", "b"), ("c", "a"), ("b", "b")]
    fwd = compute_metrics(records_from(*zip(*pairs)), ABC)
    rev = compute_metrics(records_from(*zip(*reversed(pairs))), ABC)
    assert fwd.accuracy == rev.accuracy
    assert fwd.weighted_f1 == rev.weighted_f1
    assert fwd.confusion == rev.confusion


def test_apply_uncertainty_threshold():
    records = records_from(["a"] * 4, ["a"] * 4, confs=[0.3, 0.5, 0.75, 0.9])
    certain, uncertain = apply_uncertainty_threshold(records, 0.5)
    assert [r.confidence for r in certain] == [0.5, 0.75, 0.9]  # >= comparison
    assert [r.confidence for r in uncertain] == [0.3]
    assert all(r.certain for r in certain) and not any(r.certain for r in uncertain)
    certain, uncertain = apply_uncertainty_threshold(records, 0.0)
    assert len(certain) == 4 and not uncertain


def test_uncertainty_accounting_random():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(1, 50))
        confs = rng.random(n).tolist()
        records = records_from(["a"] * n, ["a"] * n, confs=confs)
        ut = float(rng.random())
        certain, uncertain = apply_uncertainty_threshold(records, ut)
        assert len(certain) + len(uncertain) == n


def test_stratified_metrics_by_season():
    records = [
        rec(0, "a", "a", metadata={"season": "summer"}),
        rec(1, "a", "b", metadata={"season": "summer"}),
        rec(2, "b", "b", metadata={"season": "winter"}),
    ]
    by_season = stratified_metrics(records, AB, "season")
    assert set(by_season) == {"summer", "winter"}
    assert by_season["summer"].accuracy == 0.5
    assert by_season["winter"].accuracy == 1.0


def test_stratified_single_stratum_equals_overall():
    records = [rec(i, "a", "a", metadata={"season": "summer"}) for i in range(5)]
    by_season = stratified_metrics(records, AB, "season")
    assert by_season["summer"] == compute_metrics(records, AB)


def test_stratified_missing_attribute():
    records = [rec(0, "a", "a", metadata={}), rec(1, "a", "a", metadata={"season": "summer"})]
    with pytest.raises(MissingAttribute):
        stratified_metrics(records, AB, "season")


def test_stratum_weighted_accuracy_equals_overall():
    rng = np.random.default_rng(13)
    records = []
    for i in range(60):
        season = "summer" if rng.random() < 0.6 else "winter"
        true = AB.labels[int(rng.integers(0, 2))]
        pred = AB.labels[int(rng.integers(0, 2))]
        records.append(rec(i, true, pred, metadata={"season": season}))
    by_season = stratified_metrics(records, AB, "season")
    overall = compute_metrics(records, AB)
    weighted = sum(
        m.accuracy * sum(1 for r in records if r.metadata["season"] == s)
        for s, m in by_season.items()
    ) / len(records)
    assert weighted == pytest.approx(overall.accuracy, abs=1e-12)


def test_record_review_sets():
    records = [rec(i, "a", "a" if i < 8 else "b", certain=True) for i in range(10)]
    errors, uncertain = record_review_sets(records)
    assert len(errors) == 2 and not uncertain

    all_good = [rec(i, "a", "a", certain=True) for i in range(4)]
    errors, uncertain = record_review_sets(all_good)
    assert errors == [] and uncertain == []


def test_evaluate_records_include_uncertain():
    records = records_from(["a", "a", "b"], ["a", "b", "b"], confs=[0.9, 0.3, 0.9])
    result = evaluate_records("run-000", records, AB, ut=0.5, exclude_uncertain=False)
    assert result.metrics.n_certain == 2
    assert result.metrics.n_uncertain == 1
    assert sum(sum(row) for row in result.metrics.confusion) == 3  # uncertain still counted
    _, uncertain = record_review_sets(result.records)
    assert len(uncertain) == 1  # and still logged

    excl = evaluate_records("run-000", records, AB, ut=0.5, exclude_uncertain=True)
    assert sum(sum(row) for row in excl.metrics.confusion) == excl.n_certain == 2
    assert excl.n_excluded == 1


def make_result(run_id, accuracy, n=20, ut=0.75, fingerprint="fp", n_certain=None, n_excluded=0, conf=0.9):
    """RunResult with an exact target accuracy via a crafted confusion mix."""
    correct = round(accuracy * n)
    true = ["a"] * n
    pred = ["a"] * correct + ["b"] * (n - correct)
    records = tuple(
        PredictionRecord(f"{run_id}-{i}", t, p, conf, True, run_id)
        for i, (t, p) in enumerate(zip(true, pred))
    )
    metrics = compute_metrics(records, AB)
    return RunResult(
        run_id=run_id,
        scheme=AB,
        metrics=metrics,
        uncertainty_threshold=ut,
        exclude_uncertain=True,
        n_certain=n_certain if n_certain is not None else n,
        n_excluded=n_excluded,
        mean_confidence_certain=conf,
        experiment_fingerprint=fingerprint,
        records=records,
    )


def test_aggregate_single_run_equals_itself():
    result = make_result("run-000", 0.9)
    agg = aggregate_runs([result])
    assert agg.iterations == 1
    assert agg.accuracy == result.metrics.accuracy
    assert agg.pooled_confusion == result.metrics.confusion


def test_aggregate_k_copies_equals_one():
    result = make_result("run-000", 0.85)
    agg = aggregate_runs([result] * 4)
    assert agg.iterations == 4
    assert agg.accuracy == pytest.approx(result.metrics.accuracy, abs=1e-15)
    assert agg.pooled_confusion == tuple(tuple(4 * v for v in row) for row in result.metrics.confusion)


def test_aggregate_mixed_config_rejected():
    a = make_result("run-000", 0.9, fingerprint="fp1")
    b = make_result("run-001", 0.8, fingerprint="fp2")
    with pytest.raises(MixedConfig):
        aggregate_runs([a, b])


def test_aggregate_mean_certain_excluded_counts():
    # published uncertainty accounting at ut 0.75: age keeps a mean of 2070
    # certain predictions and excludes 1530, at mean confidence 0.845
    results = [
        make_result("run-000", 0.9, n_certain=2000, n_excluded=1600, conf=0.84),
        make_result("run-001", 0.9, n_certain=2140, n_excluded=1460, conf=0.85),
    ]
    agg = aggregate_runs(results)
    assert agg.mean_n_certain == 2070
    assert agg.mean_n_excluded == 1530
    assert agg.mean_confidence_certain == pytest.approx(0.845, abs=1e-12)

    # the sex counterpart: mean 2261 certain / 1039 excluded, confidence 0.905
    results = [
        make_result("run-000", 0.9, n_certain=2261 - 40, n_excluded=1039 + 40, conf=0.90),
        make_result("run-001", 0.9, n_certain=2261 + 40, n_excluded=1039 - 40, conf=0.91),
    ]
    agg = aggregate_runs(results)
    assert agg.mean_n_certain == 2261
    assert agg.mean_n_excluded == 1039
    assert agg.mean_confidence_certain == pytest.approx(0.905, abs=1e-12)


def crafted_result(run_id, accuracy, precision, recall, f1, g=2):
    """RunResult carrying explicit per-run metric values (aggregation input)."""
    metrics = MetricsReport(
        labels=AB.labels,
        accuracy=accuracy,
        weighted_precision=precision,
        weighted_recall=recall,
        weighted_f1=f1,
        per_class={},
        confusion=tuple(tuple(0 for _ in range(g)) for _ in range(g)),
        n_certain=0,
        n_uncertain=0,
        mean_confidence_certain=None,
    )
    return RunResult(
        run_id=run_id,
        scheme=AB,
        metrics=metrics,
        uncertainty_threshold=0.75,
        exclude_uncertain=True,
        n_certain=0,
        n_excluded=0,
        mean_confidence_certain=None,
        experiment_fingerprint="fp",
    )


@pytest.mark.parametrize(
    "n_runs,acc,prec,rec,f1",
    [
        (24, 0.9068, 0.8222, 0.9068, 0.8624),  # published age aggregate
        (22, 0.9253, 0.9279, 0.9253, 0.9196),  # published sex aggregate
    ],
)
def test_aggregate_reproduces_published_values(n_runs, acc, prec, rec, f1):
    # per-run metrics perturbed symmetrically around the published means;
    # the unweighted-mean contract must recover them and report the run count
    results = []
    for i in range(n_runs):
        d = 0.005 if i % 2 == 0 else -0.005
        results.append(crafted_result(f"run-{i:03d}", acc + d, prec + d, rec + d, f1 + d))
    agg = aggregate_runs(results)
    assert agg.iterations == n_runs
    assert agg.accuracy == pytest.approx(acc, abs=1e-12)
    assert agg.weighted_precision == pytest.approx(prec, abs=1e-12)
    assert agg.weighted_recall == pytest.approx(rec, abs=1e-12)
    assert agg.weighted_f1 == pytest.approx(f1, abs=1e-12)


def test_unknown_quality_adjustment_identity():
    counts = {"adult": 10, "unknown": 5}
    adjusted = unknown_quality_adjustment(counts, "unknown", 0.0)
    assert adjusted.counts == counts


def test_unknown_quality_adjustment_reduction():
    counts = {"adult": 2946, "juvenile": 517, "yearling": 420, "unknown": 84}
    adjusted = unknown_quality_adjustment(counts, "unknown", 0.820)
    assert adjusted.counts["unknown"] == 84 - round(0.820 * 84)  # 15
    assert adjusted.counts["adult"] == 2946
    assert sum(adjusted.percentages.values()) == pytest.approx(100.0, abs=1e-9)


def test_unknown_quality_adjustment_validation():
    with pytest.raises(ValueError):
        unknown_quality_adjustment({"unknown": 5}, "unknown", 1.5)
    with pytest.raises(KeyError):
        unknown_quality_adjustment({"adult": 5}, "unknown", 0.5)
