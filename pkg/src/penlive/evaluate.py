"""Dataset splitting, classification metrics, and experiment runners.

Human samples are the positive class everywhere. Primary metrics are
positive-class precision/recall/F1 plus accuracy and rank-based AUC;
class-weighted precision/recall/F1 are computed alongside and emitted
under *_weighted labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import cnn as cnn_mod
from .data import Dataset, StrokeLog, canonicalize
from .dtw import DtwConfig, nn_liveness_score
from .errors import DegenerateSplit, LengthMismatch, SingleClass
from .features import FeatureConfig, featurize
from .model import ImageClassifier
from .rnn import RnnSpec, build_rnn
from .train import TrainConfig, evaluate_split, train_loop

SYSTEMS = ("dtw1nn", "vanilla", "lstm", "gru", "bilstm", "bigru", "custom_cnn")

RNN_SYSTEMS = {
    "vanilla": ("vanilla", False),
    "lstm": ("lstm", False),
    "gru": ("gru", False),
    "bilstm": ("lstm", True),
    "bigru": ("gru", True),
}


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0
    stratify_by_label: bool = True

    def __post_init__(self):
        if any(f < 0 or f > 1 for f in self.fractions):
            raise ValueError(f"fractions must lie in [0, 1], got {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {self.fractions}")


def _allocate(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of n items over the fractions."""
    quotas = [n * f for f in fractions]
    counts = [int(math.floor(q)) for q in quotas]
    remainers = sorted(
        range(len(fractions)),
        key=lambda i: (-(quotas[i] - counts[i]), i),
    )
    for i in range(n - sum(counts)):
        counts[remainers[i % len(fractions)]] += 1
    return counts


def split_dataset(
    d: Dataset,
    spec: SplitSpec,
    require: Sequence[str] = (),
) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint, exhaustive (train, val, test) partition.

    Stratified splits allocate each label group proportionally with
    largest-remainder rounding. Deterministic per seed. Raises
    DegenerateSplit if a partition named in `require` ends up empty.
    """
    if len(d) == 0:
        raise DegenerateSplit("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    groups: list[list[StrokeLog]]
    if spec.stratify_by_label:
        groups = [
            [s for s in d.samples if s.label == "human"],
            [s for s in d.samples if s.label == "synthetic"],
        ]
        groups = [g for g in groups if g]
    else:
        groups = [list(d.samples)]
    parts: tuple[list, list, list] = ([], [], [])
    for g in groups:
        order = rng.permutation(len(g))
        counts = _allocate(len(g), spec.fractions)
        at = 0
        for p, c in enumerate(counts):
            parts[p].extend(g[i] for i in order[at : at + c])
            at += c
    names = ("train", "val", "test")
    for name, part in zip(names, parts):
        if name in require and not part:
            raise DegenerateSplit(f"required partition {name!r} is empty")
    return tuple(
        Dataset(samples=tuple(part), name=f"{d.name}/{name}")
        for name, part in zip(names, parts)
    )


def confusion(preds: Sequence[str], truth: Sequence[str]) -> tuple[int, int, int, int]:
    """(TP, FP, FN, TN) with human as the positive class."""
    if len(preds) != len(truth) or len(truth) == 0:
        raise LengthMismatch(f"{len(preds)} predictions vs {len(truth)} labels")
    tp = fp = fn = tn = 0
    for p, t in zip(preds, truth):
        if t == "human":
            if p == "human":
                tp += 1
            else:
                fn += 1
        else:
            if p == "human":
                fp += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def auc(scores, truth: Sequence[str]) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(equal).

    Computed from average ranks, so ties get half credit exactly.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.array([t == "human" for t in truth])
    n_pos = int(pos.sum())
    n_neg = int(len(pos) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both a positive and a negative sample")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    auc: Optional[float]
    counts: tuple[int, int, int, int]
    precision_weighted: float = 0.0
    recall_weighted: float = 0.0
    f1_weighted: float = 0.0
    zero_denominator: tuple[str, ...] = ()


def _safe_div(num: float, den: float, flag: str, flags: list) -> float:
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def compute_metrics(counts, scores=None, truth=None) -> MetricsReport:
    """MetricsReport from confusion counts plus optional scores for AUC.

    Zero-denominator metrics come back as 0.0 with the metric name in
    `zero_denominator`.
    """
    tp, fp, fn, tn = counts
    total = tp + fp + fn + tn
    flags: list[str] = []
    precision = _safe_div(tp, tp + fp, "precision", flags)
    recall = _safe_div(tp, tp + fn, "recall", flags)
    f1 = _safe_div(2.0 * precision * recall, precision + recall, "f1", flags)
    accuracy = _safe_div(tp + tn, total, "accuracy", flags)

    # class-weighted variants: negative-class metrics mirrored, weighted by support
    n_pos, n_neg = tp + fn, fp + tn
    prec_neg = _safe_div(tn, tn + fn, "precision_neg", flags)
    rec_neg = _safe_div(tn, tn + fp, "recall_neg", flags)
    f1_neg = _safe_div(2.0 * prec_neg * rec_neg, prec_neg + rec_neg, "f1_neg", flags)
    pw = _safe_div(n_pos * precision + n_neg * prec_neg, total, "precision_weighted", flags)
    rw = _safe_div(n_pos * recall + n_neg * rec_neg, total, "recall_weighted", flags)
    fw = _safe_div(n_pos * f1 + n_neg * f1_neg, total, "f1_weighted", flags)

    auc_val: Optional[float] = None
    if scores is not None and truth is not None:
        try:
            auc_val = auc(scores, truth)
        except SingleClass:
            flags.append("auc")
    return MetricsReport(
        precision=precision, recall=recall, f1=f1, accuracy=accuracy, auc=auc_val,
        counts=(tp, fp, fn, tn),
        precision_weighted=pw, recall_weighted=rw, f1_weighted=fw,
        zero_denominator=tuple(flags),
    )


# ---------------------------------------------------------------------------
# experiment runner


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Dataset
    system: str = "gru"
    split: SplitSpec = SplitSpec()
    features: FeatureConfig = FeatureConfig()
    train: TrainConfig = TrainConfig()
    dtw: DtwConfig = DtwConfig(early_abandon=True)
    image_size: int = 64
    model_seed: int = 0
    train_device: Optional[str] = None
    test_device: Optional[str] = None
    nn_dtype: str = "float64"

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ValueError(f"system must be one of {SYSTEMS}, got {self.system!r}")


@dataclass
class ExperimentResult:
    dataset: str
    system: str
    split_seed: int
    train_frac: float
    train_device: str
    test_device: str
    metrics: MetricsReport
    n_train: int
    n_val: int
    n_test: int
    model: object = None
    history: list = field(default_factory=list)
    predictions: list = field(default_factory=list)  # (id, score, label) per test sample


def _filter_device(samples, device: Optional[str]):
    if device is None:
        return list(samples)
    return [s for s in samples if s.device == device]


def _require_both_labels(samples, what: str):
    labels = {s.label for s in samples}
    if labels != {"human", "synthetic"}:
        raise SingleClass(f"{what} holds labels {sorted(labels)}; need both")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Split -> featurize/rasterize -> fit -> evaluate, one system.

    Device filters restrict training (train+val) and test partitions after
    the split, so the partitions stay id-disjoint by construction.
    """
    needs_val = cfg.system != "dtw1nn"
    require = ("train", "val", "test") if needs_val else ("train", "test")
    train_d, val_d, test_d = split_dataset(cfg.dataset, cfg.split, require=require)

    train_s = _filter_device(train_d.samples, cfg.train_device)
    val_s = _filter_device(val_d.samples, cfg.train_device)
    test_s = _filter_device(test_d.samples, cfg.test_device)
    for part, what in ((train_s, "train"), (test_s, "test")):
        if not part:
            raise DegenerateSplit(f"{what} partition empty after device filter")
        _require_both_labels(part, what)

    truth = [s.label for s in test_s]
    ids = [s.id for s in test_s]

    if cfg.system == "dtw1nn":
        refs = [featurize(canonicalize(s), cfg.features) for s in train_s]
        preds, scores = [], []
        for s in test_s:
            label, _, score = nn_liveness_score(
                featurize(canonicalize(s), cfg.features), refs, cfg.dtw)
            preds.append(label)
            scores.append(score)
        model = None
        history = []
    else:
        if not val_s:
            raise DegenerateSplit("val partition empty after device filter")
        if cfg.system == "custom_cnn":
            def rep(s):
                return cnn_mod.rasterize(canonicalize(s), cfg.image_size)
            model = ImageClassifier(image_size=cfg.image_size, seed=cfg.model_seed,
                                    feature_config={"image_size": cfg.image_size},
                                    train_config=cfg.train.as_dict(), dtype=cfg.nn_dtype)
        else:
            def rep(s):
                return featurize(canonicalize(s), cfg.features).values
            kind, bidir = RNN_SYSTEMS[cfg.system]
            model = build_rnn(
                RnnSpec(kind=kind, bidirectional=bidir, seed=cfg.model_seed),
                feature_config=cfg.features.as_dict(), dtype=cfg.nn_dtype)
            model.train_config = cfg.train.as_dict()
        xs_train = [rep(s) for s in train_s]
        xs_val = [rep(s) for s in val_s]
        y_train = np.array([1.0 if s.label == "human" else 0.0 for s in train_s])
        y_val = np.array([1.0 if s.label == "human" else 0.0 for s in val_s])
        model, history = train_loop(model, xs_train, y_train, xs_val, y_val, cfg.train)
        xs_test = [rep(s) for s in test_s]
        _, _, p = evaluate_split(model, xs_test, np.zeros(len(xs_test)), cfg.train.batch_size)
        scores = list(map(float, p))
        preds = ["human" if v >= 0.5 else "synthetic" for v in p]

    metrics = compute_metrics(confusion(preds, truth), scores, truth)
    return ExperimentResult(
        dataset=cfg.dataset.name,
        system=cfg.system,
        split_seed=cfg.split.seed,
        train_frac=cfg.split.fractions[0] + cfg.split.fractions[1],
        train_device=cfg.train_device or "any",
        test_device=cfg.test_device or "any",
        metrics=metrics,
        n_train=len(train_s),
        n_val=len(val_s) if needs_val else 0,
        n_test=len(test_s),
        model=model,
        history=history,
        predictions=list(zip(ids, scores, preds)),
    )


def sweep_split(fraction: float, seed: int = 0, val_share: float = 0.2) -> SplitSpec:
    """Robustness-sweep split: `fraction` of the data fits the model (a
    fifth of it held out for validation), the rest is test."""
    train = fraction * (1.0 - val_share)
    val = fraction * val_share
    return SplitSpec(fractions=(train, val, 1.0 - fraction), seed=seed)


def run_training_fraction_sweep(cfg: ExperimentConfig, fractions) -> list[ExperimentResult]:
    out = []
    for f in fractions:
        spec = sweep_split(f, seed=cfg.split.seed)
        out.append(run_experiment(replace(cfg, split=spec)))
    return out


def run_device_grid(cfg: ExperimentConfig, devices) -> list[ExperimentResult]:
    out = []
    for train_dev in devices:
        for test_dev in devices:
            out.append(replace(cfg, train_device=train_dev, test_device=test_dev))
    return [run_experiment(c) for c in out]


# ---------------------------------------------------------------------------
# reporting

CSV_COLUMNS = (
    "dataset,system,split_seed,train_frac,train_device,test_device,"
    "precision,recall,f1,accuracy,auc,n_train,n_val,n_test,"
    "precision_weighted,recall_weighted,f1_weighted"
)


def result_csv_row(r: ExperimentResult) -> str:
    m = r.metrics
    auc_s = f"{m.auc:.6f}" if m.auc is not None else ""
    return (
        f"{r.dataset},{r.system},{r.split_seed},{r.train_frac:.6g},"
        f"{r.train_device},{r.test_device},"
        f"{m.precision:.6f},{m.recall:.6f},{m.f1:.6f},{m.accuracy:.6f},{auc_s},"
        f"{r.n_train},{r.n_val},{r.n_test},"
        f"{m.precision_weighted:.6f},{m.recall_weighted:.6f},{m.f1_weighted:.6f}"
    )


def write_metrics_csv(rows: Sequence[ExperimentResult], sink, provenance: Optional[dict] = None) -> None:
    if provenance:
        for k in sorted(provenance):
            sink.write(f"# {k}={provenance[k]}\n")
    sink.write(CSV_COLUMNS + "\n")
    for r in rows:
        sink.write(result_csv_row(r) + "\n")


_TABLE_ORDER = {"custom_cnn": 0, "dtw1nn": 1, "vanilla": 2, "lstm": 3,
                "bilstm": 4, "gru": 5, "bigru": 6}


def render_table(rows: Sequence[dict]) -> str:
    """Fixed-width table of metric rows (dicts from a parsed metrics CSV),
    image systems first, then the 1NN baseline, then the sequence models."""
    header = f"{'System':<12} {'Dataset':<18} {'Precision':>9} {'Recall':>9} " \
             f"{'F-measure':>9} {'Accuracy':>9} {'AUC':>9}"
    rule = "-" * len(header)
    lines = [header, rule]
    ordered = sorted(rows, key=lambda r: (_TABLE_ORDER.get(r["system"], 99), r["dataset"]))
    for r in ordered:
        def pct(key):
            return f"{float(r[key]) * 100.0:9.2f}" if r.get(key) not in (None, "") else f"{'-':>9}"
        lines.append(
            f"{r['system']:<12} {r['dataset'][:18]:<18} {pct('precision')} "
            f"{pct('recall')} {pct('f1')} {pct('accuracy')} {pct('auc')}"
        )
    return "\n".join(lines) + "\n"
