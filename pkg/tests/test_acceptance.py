"""Acceptance gate: every criterion runs at its stated tolerance and prints
one PASS/FAIL line (run with `pytest -s` to see them live).

The heavy criteria share the session-scoped simulated corpus from
conftest; results are deterministic for the pinned seeds.
"""

import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from penlive import nn, slm
from penlive.data import canonicalize
from penlive.dtw import dtw_distance
from penlive.errors import SingleClass
from penlive.evaluate import (ExperimentConfig, SplitSpec, auc, compute_metrics,
                              confusion, run_experiment, sweep_split)
from penlive.extract import extract
from penlive.features import mean_abs_second_difference, velocity_profile
from penlive.train import TrainConfig

from probes import PROBES
from test_dtw import brute_force_dtw
from test_eval import trapezoid_auc
from test_extract import random_plan

pytestmark = pytest.mark.acceptance

_REPORT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "_cache",
                       "acceptance_report.txt")


def _record(line: str) -> None:
    print(line, flush=True)
    os.makedirs(os.path.dirname(_REPORT), exist_ok=True)
    with open(_REPORT, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")


@contextmanager
def criterion(num: int, name: str):
    try:
        yield
    except BaseException as exc:
        _record(f"ACCEPTANCE {num} ({name}): FAIL — {exc}")
        raise
    _record(f"ACCEPTANCE {num} ({name}): PASS")


# -- criterion 1: gradient correctness ---------------------------------------


def test_criterion_1_gradient_correctness():
    with criterion(1, "gradient correctness"):
        start = time.time()
        worst = {}
        for kind, probe in sorted(PROBES.items()):
            rng = np.random.default_rng(0xC0FFEE ^ hash(kind) % 2**30)
            errs = []
            for _ in range(20):
                loss_fn, params = probe(rng)
                errs.append(nn.grad_check(loss_fn, params, eps=1e-5))
            worst[kind] = max(errs)
            assert worst[kind] <= 1e-4, f"{kind}: max rel err {worst[kind]:.2e}"
        elapsed = time.time() - start
        assert elapsed <= 120.0, f"took {elapsed:.0f}s (> 2 min)"


# -- criterion 2: DTW oracle equivalence -------------------------------------


def test_criterion_2_dtw_matches_exhaustive_enumeration():
    with criterion(2, "DTW oracle equivalence"):
        start = time.time()
        rng = np.random.default_rng(2024)
        cache = {}
        for _ in range(10_000):
            a = tuple(rng.integers(0, 3, size=rng.integers(1, 7)).tolist())
            b = tuple(rng.integers(0, 3, size=rng.integers(1, 7)).tolist())
            key = (a, b)
            if key not in cache:
                cache[key] = brute_force_dtw(list(map(float, a)), list(map(float, b)))
            got = dtw_distance(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
            assert got == cache[key], f"{a} vs {b}: {got} != {cache[key]}"
        elapsed = time.time() - start
        assert elapsed <= 60.0, f"took {elapsed:.0f}s (> 1 min)"


# -- criterion 3: kinematic model ---------------------------------------------


def test_criterion_3_kinematic_model():
    with criterion(3, "kinematic model"):
        # single-stroke displacement within 0.5% at 200 Hz
        stroke = slm.LognormalStroke(D=100.0, t0=0.0, mu=-1.6, sigma=0.25,
                                     theta_s=0.0, theta_e=0.0)
        plan = slm.SigmaLognormalParams(strokes=(stroke,), origin=(0.0, 0.0))
        pts = slm.synthesize(plan, 200.0).points()
        assert abs(pts[-1, 0] - 100.0) <= 0.5
        # speed-peak time within one sample period of t0 + exp(mu - sigma^2)
        sample = slm.synthesize(plan, 200.0)
        v = velocity_profile(sample)
        t_mid = (pts[:-1, 2] + pts[1:, 2]) / 2000.0
        t_peak = t_mid[int(np.argmax(v.values))]
        assert abs(t_peak - stroke.peak_time) <= 1.0 / 200.0
        # extraction round trip: >= 15 dB in >= 90% of 100 randomized trials
        rng = np.random.default_rng(314159)
        good = 0
        for _ in range(100):
            log = slm.synthesize(random_plan(rng), 200.0)
            _, snr = extract(log)
            good += snr >= 15.0
        assert good >= 90, f"only {good}/100 round trips reached 15 dB"


# -- criterion 4: desk-scale corpus reproduction ------------------------------


@pytest.fixture(scope="module")
def desk_scale_cells(desk_subset_2000):
    """GRU, 1NN-DTW, and custom-CNN cells on the same 2000-sample subset."""
    results = {}
    cfg = ExperimentConfig(
        dataset=desk_subset_2000, system="gru", split=SplitSpec(seed=5),
        train=TrainConfig(max_epochs=100, patience=40, seed=5),
        model_seed=5, nn_dtype="float32")
    start = time.time()
    results["gru"] = run_experiment(cfg)
    results["gru_seconds"] = time.time() - start

    results["dtw1nn"] = run_experiment(ExperimentConfig(
        dataset=desk_subset_2000, system="dtw1nn", split=SplitSpec(seed=5)))

    results["custom_cnn"] = run_experiment(ExperimentConfig(
        dataset=desk_subset_2000, system="custom_cnn", split=SplitSpec(seed=5),
        train=TrainConfig(max_epochs=6, patience=6, batch_size=64, seed=5),
        model_seed=5, nn_dtype="float32"))
    return results


def test_criterion_4_desk_scale_classifier_bands(desk_scale_cells):
    with criterion(4, "desk-scale corpus reproduction"):
        gru = desk_scale_cells["gru"]
        dtw = desk_scale_cells["dtw1nn"]
        cnn = desk_scale_cells["custom_cnn"]
        detail = (f"gru acc {gru.metrics.accuracy:.4f} auc {gru.metrics.auc:.4f} "
                  f"({len(gru.history)} epochs, {desk_scale_cells['gru_seconds']:.0f}s); "
                  f"dtw acc {dtw.metrics.accuracy:.4f}; cnn acc {cnn.metrics.accuracy:.4f}")
        _record(f"  criterion 4 cells: {detail}")
        assert gru.metrics.accuracy >= 0.90
        assert gru.metrics.auc >= 0.94
        assert len(gru.history) <= 100
        assert desk_scale_cells["gru_seconds"] <= 30 * 60
        assert dtw.metrics.accuracy >= 0.78
        assert 0.60 <= cnn.metrics.accuracy <= 0.85
        assert gru.metrics.accuracy - cnn.metrics.accuracy >= 0.10


# -- criterion 5: split robustness --------------------------------------------


def test_criterion_5_split_robustness(desk_subset_2000):
    with criterion(5, "split robustness"):
        accs = []
        for frac in (0.10, 0.20, 0.40, 0.80):
            cfg = ExperimentConfig(
                dataset=desk_subset_2000, system="gru",
                split=sweep_split(frac, seed=5),
                train=TrainConfig(max_epochs=30, patience=10, seed=5),
                model_seed=5, nn_dtype="float32")
            r = run_experiment(cfg)
            accs.append(r.metrics.accuracy)
        _record("  criterion 5 accuracies: "
                + ", ".join(f"{a:.4f}" for a in accs))
        assert max(accs) - min(accs) <= 0.05


# -- criterion 6: metric identities -------------------------------------------


def test_criterion_6_metric_identities():
    with criterion(6, "metric identities"):
        rng = np.random.default_rng(6)
        for _ in range(1000):
            n = int(rng.integers(2, 60))
            truth = (["human"] * (n // 2 + 1)) + (["synthetic"] * (n - n // 2 + 1))
            if rng.random() < 0.5:
                scores = rng.choice(np.round(rng.random(6), 2), size=len(truth))
            else:
                scores = rng.normal(size=len(truth))
            assert abs(auc(scores, truth) - trapezoid_auc(scores, truth)) <= 1e-9
        for _ in range(500):
            tp, fp, fn, tn = (int(v) for v in rng.integers(0, 40, size=4))
            if tp + fp + fn + tn == 0:
                continue
            m = compute_metrics((tp, fp, fn, tn))
            if m.precision + m.recall > 0:
                assert abs(m.f1 - 2 * m.precision * m.recall
                           / (m.precision + m.recall)) <= 1e-12
            assert m.accuracy == (tp + tn) / (tp + fp + fn + tn)
        preds = ["human", "synthetic", "human", "human"]
        truth = ["human", "human", "synthetic", "human"]
        assert confusion(preds, truth) == (2, 1, 1, 0)
        with pytest.raises(SingleClass):
            auc([0.1], ["human"])


# -- criterion 7: pipeline determinism ----------------------------------------


def test_criterion_7_cli_reruns_are_byte_identical(tmp_path):
    from penlive.cli import main

    with criterion(7, "pipeline determinism"):
        fixture = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                               "data", "fixture_50.jsonl")
        outputs = {}
        fast = ["--set", "model.hidden=10", "--set", "train.max_epochs=3",
                "--set", "train.patience=3", "--set", "train.batch_size=16"]
        for run_id in ("a", "b"):
            d = tmp_path / run_id
            d.mkdir()
            syn, feats = d / "syn.jsonl", d / "feats.jsonl"
            model, hist = d / "model.json", d / "hist.csv"
            metrics, preds = d / "metrics.csv", d / "preds.csv"
            assert main(["synth", "--input", fixture, "--out", str(syn),
                         "--report", str(d / "rep.jsonl"), "--seed", "42",
                         "--jobs", "1"]) == 0
            merged = d / "all.jsonl"
            human = [ln for ln in open(fixture) if ln.strip()]
            synth = [ln for ln in open(syn) if ln.strip() and not ln.startswith('{"_meta"')]
            merged.write_text("".join(human + synth))
            assert main(["featurize", "--input", str(merged), "--out", str(feats),
                         "--jobs", "1"]) == 0
            assert main(["train", "--input", str(merged), "--out", str(model),
                         "--history", str(hist), "--jobs", "1"] + fast) == 0
            assert main(["evaluate", "--input", str(merged), "--model", str(model),
                         "--out", str(metrics), "--jobs", "1"] + fast) == 0
            assert main(["classify", "--model", str(model), "--input", str(merged),
                         "--out", str(preds), "--jobs", "1"]) == 0
            outputs[run_id] = {p.name: p.read_bytes()
                               for p in sorted(d.iterdir()) if p.is_file()}
        assert outputs["a"].keys() == outputs["b"].keys()
        for name in outputs["a"]:
            assert outputs["a"][name] == outputs["b"][name], f"{name} differs between runs"


# -- criterion 8: smoothness statistic ----------------------------------------


def test_criterion_8_counterparts_are_smoother(desk_corpus):
    with criterion(8, "smoothness statistic"):
        merged, reports = desk_corpus
        humans = {s.id: s for s in merged.samples if s.label == "human"}
        wins = total = 0
        for s in merged.samples:
            if s.label != "synthetic" or not s.id.endswith("-syn1"):
                continue
            src = humans.get(s.id[: -len("-syn1")])
            if src is None:
                continue
            total += 1
            syn_stat = mean_abs_second_difference(velocity_profile(canonicalize(s)))
            hum_stat = mean_abs_second_difference(velocity_profile(canonicalize(src)))
            wins += syn_stat < hum_stat
        _record(f"  criterion 8: {wins}/{total} pairs smoother")
        assert total >= 1000
        assert wins / total >= 0.80
