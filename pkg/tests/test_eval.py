import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from penlive.data import Dataset, Point, StrokeLog
from penlive.errors import DegenerateSplit, LengthMismatch, SingleClass
from penlive.evaluate import (CSV_COLUMNS, ExperimentConfig,
                              SplitSpec, auc, compute_metrics, confusion,
                              render_table, run_experiment, split_dataset,
                              sweep_split, write_metrics_csv)
from penlive.features import FeatureConfig
from penlive.train import TrainConfig


def make_dataset(n_human, n_synth, device="stylus", seed=0):
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_human + n_synth):
        label = "human" if i < n_human else "synthetic"
        speed = 1.0 if label == "human" else 0.15
        n = int(rng.integers(8, 14))
        pts, x, t = [], 0.0, 0.0
        for _ in range(n):
            pts.append(Point(x, 0.0, t))
            x += speed * 10 + rng.normal(0, 0.3)
            t += 10.0
        samples.append(StrokeLog(id=f"{label}-{i}", label=label, symbol_class="c",
                                 writer=f"w{i % 4}", device=device,
                                 strokes=(tuple(pts),)))
    return Dataset(samples=tuple(samples), name="toy")


def trapezoid_auc(scores, truth):
    """Independent oracle: trapezoidal integration of the ROC curve."""
    scores = np.asarray(scores, dtype=float)
    pos = np.array([t == "human" for t in truth])
    thresholds = np.unique(scores)[::-1]
    tpr = [0.0]
    fpr = [0.0]
    for th in thresholds:
        pred = scores >= th
        tpr.append(np.sum(pred & pos) / pos.sum())
        fpr.append(np.sum(pred & ~pos) / (~pos).sum())
    return float(np.trapezoid(tpr, fpr))


class TestSplit:
    def test_stratified_exact_allocation(self):
        d = make_dataset(50, 50)
        train, val, test = split_dataset(d, SplitSpec(seed=1))
        assert (len(train), len(val), len(test)) == (70, 10, 20)
        for part, want in ((train, 35), (val, 5), (test, 10)):
            assert sum(s.label == "human" for s in part.samples) == want

    def test_same_seed_identical(self):
        d = make_dataset(30, 30)
        a = split_dataset(d, SplitSpec(seed=7))
        b = split_dataset(d, SplitSpec(seed=7))
        assert [s.id for s in a[0].samples] == [s.id for s in b[0].samples]

    def test_required_partition_must_be_nonempty(self):
        d = make_dataset(5, 5)
        with pytest.raises(DegenerateSplit):
            split_dataset(d, SplitSpec(fractions=(1.0, 0.0, 0.0)), require=("val",))
        train, val, test = split_dataset(d, SplitSpec(fractions=(1.0, 0.0, 0.0)))
        assert len(train) == 10 and len(val) == 0 and len(test) == 0

    def test_empty_dataset_rejected(self):
        with pytest.raises(DegenerateSplit):
            split_dataset(Dataset(samples=(), name="e"), SplitSpec())

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 60), st.integers(0, 60), st.integers(0, 2**31 - 1))
    def test_partition_disjoint_and_exhaustive(self, n_h, n_s, seed):
        d = make_dataset(n_h, n_s)
        parts = split_dataset(d, SplitSpec(seed=seed))
        ids = [s.id for p in parts for s in p.samples]
        assert len(ids) == len(d) and len(set(ids)) == len(ids)
        assert set(ids) == {s.id for s in d.samples}

    def test_fraction_validation(self):
        with pytest.raises(ValueError):
            SplitSpec(fractions=(0.5, 0.5, 0.5))

    def test_sweep_split_arithmetic(self):
        spec = sweep_split(0.4, seed=3)
        assert spec.fractions == pytest.approx((0.32, 0.08, 0.6))
        assert spec.seed == 3


class TestConfusion:
    def test_all_correct(self):
        labels = ["human"] * 10 + ["synthetic"] * 10
        assert confusion(labels, labels) == (10, 0, 0, 10)

    def test_all_predicted_human(self):
        truth = ["human"] * 4 + ["synthetic"] * 6
        assert confusion(["human"] * 10, truth) == (4, 6, 0, 0)

    def test_crossed_pair(self):
        assert confusion(["human", "synthetic"], ["synthetic", "human"]) == (0, 1, 1, 0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion(["human"], [])


class TestMetrics:
    def test_balanced_example(self):
        m = compute_metrics((40, 10, 10, 40))
        assert (m.precision, m.recall, m.accuracy) == (0.8, 0.8, 0.8)
        assert m.f1 == pytest.approx(0.8, abs=1e-12)
        assert m.precision_weighted == pytest.approx(0.8)

    def test_zero_denominator_flags(self):
        m = compute_metrics((0, 0, 10, 10))
        assert m.precision == 0.0 and m.recall == 0.0
        assert "precision" in m.zero_denominator

    def test_f1_harmonic_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            tp, fp, fn, tn = rng.integers(0, 50, size=4)
            if tp + fp + fn + tn == 0:
                continue
            m = compute_metrics((int(tp), int(fp), int(fn), int(tn)))
            if m.precision + m.recall > 0:
                assert m.f1 == pytest.approx(
                    2 * m.precision * m.recall / (m.precision + m.recall), abs=1e-12)
            assert m.accuracy == pytest.approx((tp + tn) / (tp + fp + fn + tn))


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.9, 0.8, 0.2, 0.1], ["human", "human", "synthetic", "synthetic"]) == 1.0

    def test_all_ties_half(self):
        assert auc([0.5, 0.5, 0.5, 0.5], ["human", "human", "synthetic", "synthetic"]) == 0.5

    def test_hand_counted_example(self):
        assert auc([0.9, 0.4, 0.6, 0.2], ["human", "human", "synthetic", "synthetic"]) == 0.75

    def test_single_class_rejected(self):
        with pytest.raises(SingleClass):
            auc([0.1, 0.9], ["human", "human"])

    def test_rank_statistic_matches_trapezoid_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 40))
            truth = ["human"] * (n // 2 + 1) + ["synthetic"] * (n // 2 + 1)
            scores = rng.choice(np.round(rng.random(8), 2), size=len(truth))
            assert auc(scores, truth) == pytest.approx(trapezoid_auc(scores, truth), abs=1e-9)


class TestRunExperiment:
    def test_empty_dataset_fails_before_training(self):
        with pytest.raises(DegenerateSplit):
            run_experiment(ExperimentConfig(dataset=Dataset(samples=(), name="e")))

    def test_separable_toy_data_gru_perfect(self):
        cfg = ExperimentConfig(
            dataset=make_dataset(30, 30), system="gru",
            split=SplitSpec(seed=0),
            train=TrainConfig(learning_rate=0.01, batch_size=16, max_epochs=60,
                              patience=60, seed=0),
            features=FeatureConfig(),
        )
        result = run_experiment(cfg)
        assert result.metrics.accuracy == 1.0
        assert result.metrics.auc == 1.0

    def test_dtw_baseline_on_toy_data(self):
        cfg = ExperimentConfig(dataset=make_dataset(30, 30), system="dtw1nn",
                               split=SplitSpec(seed=1))
        result = run_experiment(cfg)
        assert result.metrics.accuracy == 1.0
        assert result.n_val == 0
        assert len(result.predictions) == result.n_test

    def test_device_filter_never_leaks(self):
        a = make_dataset(20, 20, device="stylus", seed=1)
        b = make_dataset(20, 20, device="finger", seed=2)
        renamed = tuple(
            StrokeLog(id=s.id + "-f", label=s.label, symbol_class=s.symbol_class,
                      writer=s.writer, device=s.device, strokes=s.strokes)
            for s in b.samples)
        mixed = Dataset(samples=a.samples + renamed, name="mixed")
        cfg = ExperimentConfig(dataset=mixed, system="dtw1nn", split=SplitSpec(seed=3),
                               train_device="stylus", test_device="finger")
        result = run_experiment(cfg)
        assert result.train_device == "stylus" and result.test_device == "finger"
        test_ids = {sid for sid, _, _ in result.predictions}
        assert all(sid.endswith("-f") for sid in test_ids)

    def test_single_device_after_filter_raises(self):
        d = make_dataset(10, 0, device="stylus")
        with pytest.raises((SingleClass, DegenerateSplit)):
            run_experiment(ExperimentConfig(dataset=d, system="dtw1nn",
                                            train_device="finger"))


def test_metrics_csv_and_table_round_trip():
    d = make_dataset(30, 30)
    result = run_experiment(ExperimentConfig(dataset=d, system="dtw1nn", split=SplitSpec(seed=1)))
    sink = io.StringIO()
    write_metrics_csv([result], sink, provenance={"seed": 0})
    text = sink.getvalue()
    assert text.startswith("# seed=0\n")
    assert CSV_COLUMNS in text
    import csv as _csv
    rows = list(_csv.DictReader(io.StringIO(
        "".join(ln for ln in text.splitlines(keepends=True) if not ln.startswith("#")))))
    table = render_table(rows)
    assert "dtw1nn" in table and "100.00" in table
