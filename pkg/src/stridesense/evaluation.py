"""Prequential evaluation over scenarios A-D.

Every assessed sample goes through predict, score, learn, in that order.
Scenario A feeds engineered (or raw) samples in temporal order; B shuffles
eight contiguous blocks; C additionally stretches decimation to 1/100; D is
the unsupervised pipeline: online K-means assigns a cluster per sample, judge
tags (or, before any arrive, the best-mapping oracle) expand to full labels,
and a separate forest re-classifies on those expanded labels for
explainability.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .calibration import CalibrationConfig, calibrate_stream
from .errors import ConfigError, CoverageError
from .features import FeatureEngine, FeatureVector
from .labeling import ClusterLabelMap, JudgeTag, best_mapping, expand_tags
from .models import (
    AdaptiveRandomForest,
    ArfcConfig,
    GaussianNaiveBayes,
    HatcConfig,
    HoeffdingAdaptiveTree,
    KMeansConfig,
    OnlineKMeans,
)
from .models.base import argmax_proba
from .streams import Stream

PROBA_FLOOR = 1e-12
SCENARIOS = ("A", "B", "C", "D")
MODELS = ("gnb", "hatc", "arfc", "kmeans")


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    data_kind: str  # raw | engineered
    model: str  # gnb | hatc | arfc | kmeans (scenario D)
    stride: int
    shuffle_blocks: int = 8

    def __post_init__(self):
        problems = []
        if self.scenario not in SCENARIOS:
            problems.append(f"unknown scenario {self.scenario!r}")
        if self.data_kind not in ("raw", "engineered"):
            problems.append(f"unknown data kind {self.data_kind!r}")
        if self.model not in MODELS:
            problems.append(f"unknown model {self.model!r}")
        if self.scenario == "D" and (self.model != "kmeans" or self.data_kind != "engineered"):
            problems.append("scenario D runs the clustering pipeline: model kmeans, engineered data")
        if self.scenario != "D" and self.model == "kmeans":
            problems.append("kmeans is the scenario D model")
        if self.stride < 1:
            problems.append("stride must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))

    @staticmethod
    def default_stride(scenario: str, master_rate: float) -> int:
        if scenario == "C":
            return 100
        return 10 if master_rate <= 50.0 else 30


@dataclass
class PrequentialMetrics:
    accuracy: float
    precision_macro: float
    precision_per_class: list
    recall_macro: float
    recall_per_class: list
    crloss: float
    rmse: float
    mae: float
    preq_time_s: float
    per_sample_ms: float
    processed_samples: int
    events: int
    learn_calls: int
    feature_time_s: float
    label_symbols: list
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {
            "accuracy": self.accuracy,
            "precision_macro": self.precision_macro,
            "recall_macro": self.recall_macro,
            "crloss": self.crloss,
            "rmse": self.rmse,
            "mae": self.mae,
            "preq_time_s": self.preq_time_s,
            "per_sample_ms": self.per_sample_ms,
            "processed_samples": self.processed_samples,
            "events": self.events,
            "learn_calls": self.learn_calls,
            "feature_time_s": self.feature_time_s,
            "labels": list(self.label_symbols),
        }
        for i, sym in enumerate(self.label_symbols):
            d[f"precision_{sym}"] = self.precision_per_class[i]
            d[f"recall_{sym}"] = self.recall_per_class[i]
        d.update(self.extras)
        return d


def confusion_metrics(confusion: np.ndarray) -> tuple:
    """(accuracy, precision per class, recall per class) from counts[truth, pred]."""
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    m = confusion.shape[0]
    precision, recall = [], []
    for c in range(m):
        pred_c = confusion[:, c].sum()
        true_c = confusion[c, :].sum()
        precision.append(float(confusion[c, c] / pred_c) if pred_c else 0.0)
        recall.append(float(confusion[c, c] / true_c) if true_c else 0.0)
    return accuracy, precision, recall


def cross_entropy(log: Sequence[tuple]) -> float:
    """-(1/E) sum of log probability assigned to the true class.

    ``log`` rows are (truth_index, pred_index, probabilities). Probabilities
    are floored at 1e-12 before the logarithm.
    """
    if not log:
        return 0.0
    total = 0.0
    for truth, _, proba in log:
        total -= math.log(max(proba[truth], PROBA_FLOOR))
    return total / len(log)


def regression_metrics(log: Sequence[tuple]) -> tuple:
    """(rmse, mae) over class indices."""
    if not log:
        return 0.0, 0.0
    sq = sum((t - p) ** 2 for t, p, _ in log)
    ab = sum(abs(t - p) for t, p, _ in log)
    return math.sqrt(sq / len(log)), ab / len(log)


def build_model(name: str, labels: tuple, universe, seed: int,
                hatc: Optional[HatcConfig] = None, arfc: Optional[ArfcConfig] = None):
    if name == "gnb":
        return GaussianNaiveBayes(labels, universe)
    if name == "hatc":
        return HoeffdingAdaptiveTree(labels, universe, hatc or HatcConfig())
    if name == "arfc":
        cfg = arfc or ArfcConfig()
        return AdaptiveRandomForest(labels, universe, ArfcConfig(
            models=cfg.models, features=cfg.features, lam=cfg.lam,
            raw_lambda=cfg.raw_lambda, seed=seed, tree=cfg.tree))
    raise ConfigError(f"unknown model {name!r}")


def event_schedule(n_samples: int, spec: ScenarioSpec, seed: int) -> list:
    """Positions of assessed samples, in consumption order.

    Positions index the emitted-sample sequence (0-based). B and C permute
    eight contiguous blocks with the run seed before decimating, so exactly
    floor(n/stride) samples are assessed either way.
    """
    positions = np.arange(n_samples)
    if spec.scenario in ("B", "C"):
        blocks = np.array_split(positions, spec.shuffle_blocks)
        order = np.random.default_rng(seed).permutation(len(blocks))
        positions = np.concatenate([blocks[i] for i in order])
    return positions[spec.stride - 1 :: spec.stride].tolist()


@dataclass
class RunResult:
    metrics: PrequentialMetrics
    log_lines: list
    digest: str
    windows: Optional[dict]
    threshold: Optional[float]


def run_prequential(
    stream: Stream,
    spec: ScenarioSpec,
    seed: int,
    tags: Optional[Sequence[JudgeTag]] = None,
    judge_mode: str = "full",
    tick_slots: int = 500,
    calibration: CalibrationConfig = CalibrationConfig(),
    tuning_s: float = 60.0,
    hatc: Optional[HatcConfig] = None,
    arfc: Optional[ArfcConfig] = None,
    kmeans: Optional[KMeansConfig] = None,
    measure_time: bool = True,
) -> RunResult:
    descriptor = stream.descriptor
    labels = descriptor.labels
    master = descriptor.master_rate

    windows = None
    if spec.data_kind == "engineered":
        windows = calibrate_stream(stream, calibration).windows
    k = calibration.k_slots(master)
    engine = FeatureEngine(descriptor, windows, spec.data_kind, k, tuning_s=tuning_s)

    n_samples = len(stream.slots) - engine.emitting_from
    if n_samples < spec.stride:
        raise ConfigError(
            f"stream too short: {n_samples} assessed samples for stride {spec.stride}"
        )
    order = event_schedule(n_samples, spec, seed)
    event_slots = {engine.emitting_from + p for p in order}

    clock = time.perf_counter if measure_time else (lambda: 0.0)
    feature_t0 = clock()
    store: dict = {}
    for slot in stream.slots:
        fv = engine.process_slot(slot)
        if fv is not None and slot.n in event_slots:
            store[slot.n] = (fv, slot.ground_truth)
    feature_time = clock() - feature_t0

    if spec.scenario == "D":
        runner = _run_clustering(
            stream, spec, seed, engine, store, order, tags, judge_mode, tick_slots, arfc, kmeans, clock
        )
    else:
        runner = _run_supervised(stream, spec, seed, engine, store, order, hatc, arfc, clock)
    metrics, log_lines, digest = runner
    metrics.feature_time_s = feature_time
    return RunResult(
        metrics=metrics,
        log_lines=log_lines,
        digest=digest,
        windows=windows.as_dict() if windows else None,
        threshold=engine.threshold(),
    )


def _finalize(
    confusion, log, preq_time, feature_time, learn_calls, n_samples, labels, extras
) -> PrequentialMetrics:
    accuracy, precision, recall = confusion_metrics(confusion)
    rmse, mae = regression_metrics(log)
    return PrequentialMetrics(
        accuracy=accuracy,
        precision_macro=float(np.mean(precision)) if precision else 0.0,
        precision_per_class=precision,
        recall_macro=float(np.mean(recall)) if recall else 0.0,
        recall_per_class=recall,
        crloss=cross_entropy(log),
        rmse=rmse,
        mae=mae,
        preq_time_s=preq_time,
        per_sample_ms=1000.0 * preq_time / n_samples if n_samples else 0.0,
        processed_samples=n_samples,
        events=len(log),
        learn_calls=learn_calls,
        feature_time_s=feature_time,
        label_symbols=[lab.symbol for lab in labels],
        extras=extras,
    )


def _log_line(n, truth_sym, pred_sym, proba, flag=None) -> str:
    parts = [str(n), truth_sym, pred_sym] + [f"{p:.9f}" for p in proba]
    if flag:
        parts.append(flag)
    return ",".join(parts)


def _run_supervised(stream, spec, seed, engine, store, order, hatc, arfc, clock):
    labels = stream.descriptor.labels
    index = {lab.symbol: i for i, lab in enumerate(labels)}
    model = build_model(spec.model, labels, engine.universe, seed, hatc=hatc, arfc=arfc)
    m = len(labels)
    confusion = np.zeros((m, m), dtype=np.int64)
    log, log_lines = [], []
    preq_time, learns = 0.0, 0
    base = engine.emitting_from
    for position in order:
        n = base + position
        fv, truth = store[n]
        if truth is None:
            raise ConfigError(f"slot {n} lacks ground truth; supervised scenarios need labels")
        t0 = clock()
        proba_map = model.predict_proba_one(fv)
        pred = argmax_proba(proba_map)
        model.learn_one(fv, truth)
        preq_time += clock() - t0
        learns += 1
        ti, pi = index[truth.symbol], index[pred.symbol]
        confusion[ti, pi] += 1
        proba = [proba_map[lab] for lab in labels]
        log.append((ti, pi, proba))
        log_lines.append(_log_line(n, truth.symbol, pred.symbol, proba))
    metrics = _finalize(confusion, log, preq_time, 0.0, learns, len(store), labels, {})
    return metrics, log_lines, model.digest()


def _run_clustering(
    stream, spec, seed, engine, store, order, tags, judge_mode, tick_slots, arfc, kmeans, clock
):
    labels = stream.descriptor.labels
    m = len(labels)
    have_truth = all(truth is not None for _, truth in store.values())
    tags = sorted(tags, key=lambda t: t.slot) if tags else []
    if not tags and not have_truth:
        raise CoverageError("scenario D needs judge tags or ground truth for the mapping oracle")

    km_config = kmeans or KMeansConfig(n_clusters=m, seed=seed)
    if km_config.n_clusters != m:
        raise ConfigError(f"clustering needs {m} clusters for {m} classes")
    km = OnlineKMeans(engine.universe, km_config)
    explainer_cfg = arfc or ArfcConfig()
    explainer = AdaptiveRandomForest(labels, engine.universe, ArfcConfig(
        models=explainer_cfg.models, features=explainer_cfg.features, lam=explainer_cfg.lam,
        raw_lambda=explainer_cfg.raw_lambda, seed=seed, tree=explainer_cfg.tree))

    index = {lab.symbol: i for i, lab in enumerate(labels)}
    correct_only = judge_mode == "correct-only"
    cluster_truth = np.zeros((m, m), dtype=np.int64)  # cluster x class, oracle scoring
    confusion = np.zeros((m, m), dtype=np.int64)  # truth x mapped prediction
    assignments: dict = {}
    live_map: Optional[ClusterLabelMap] = None
    next_tick = None
    log, log_lines = [], []
    preq_time, learns = 0.0, 0
    agree, agree_total = 0, 0
    tag_cursor = 0
    seen_tags: list = []
    base = engine.emitting_from

    for position in order:
        n = base + position
        fv, truth = store[n]
        while tag_cursor < len(tags) and tags[tag_cursor].slot <= n:
            seen_tags.append(tags[tag_cursor])
            tag_cursor += 1
        if next_tick is None:
            next_tick = n + tick_slots
        elif n >= next_tick:
            live_map = _map_from_tags(assignments, seen_tags, m, labels, correct_only) or live_map
            next_tick = n + tick_slots

        t0 = clock()
        cluster = km.learn_predict_one(fv)
        preq_time += clock() - t0
        assignments[n] = cluster

        bootstrap = live_map is None
        if bootstrap:
            if have_truth and cluster_truth.sum() >= m:
                mapping, _ = best_mapping(cluster_truth)
            else:
                mapping = ClusterLabelMap(mapping=tuple(range(m)), provenance="best_mapping_oracle")
        else:
            mapping = live_map
        li = mapping.label_index(cluster)
        expanded = labels[li] if li >= 0 else None

        # Explainability forest: predict first, then learn on the expanded tag.
        t0 = clock()
        proba_map = explainer.predict_proba_one(fv)
        arfc_pred = argmax_proba(proba_map)
        if expanded is not None:
            explainer.learn_one(fv, expanded)
            learns += 1
        preq_time += clock() - t0
        if expanded is not None:
            agree_total += 1
            agree += arfc_pred == expanded

        proba = [proba_map[lab] for lab in labels]
        if truth is not None:
            ti = index[truth.symbol]
            cluster_truth[cluster, ti] += 1
            if expanded is not None:
                confusion[ti, index[expanded.symbol]] += 1
                log.append((ti, index[expanded.symbol], proba))
        pred_sym = expanded.symbol if expanded else "violation"
        truth_sym = truth.symbol if truth else "-"
        log_lines.append(_log_line(n, truth_sym, pred_sym, proba, flag="bootstrap" if bootstrap else "mapped"))

    extras = {
        "arfc_agreement": agree / agree_total if agree_total else 0.0,
        "map_provenance": live_map.provenance if live_map else "best_mapping_oracle",
        "tags_used": len(seen_tags),
    }
    if have_truth:
        final_map, mapped_accuracy = best_mapping(cluster_truth)
        extras["clustering_mapped_accuracy"] = mapped_accuracy
        # Headline metrics follow the paper's protocol: the best posteriori
        # cluster-to-class mapping scores the clustering output.
        mapped_confusion = np.zeros((m, m), dtype=np.int64)
        for cluster in range(m):
            for ti in range(m):
                mapped_confusion[ti, final_map.label_index(cluster)] += cluster_truth[cluster, ti]
        metrics = _finalize(mapped_confusion, log, preq_time, 0.0, learns, len(store), labels, extras)
    else:
        metrics = _finalize(confusion, log, preq_time, 0.0, learns, len(store), labels, extras)
    digest = km.digest() + ":" + explainer.digest()
    return metrics, log_lines, digest


def _map_from_tags(assignments, seen_tags, m, labels, correct_only):
    if not seen_tags or not assignments:
        return None
    try:
        cluster_map, _ = expand_tags(assignments, seen_tags, m, labels, correct_only=correct_only)
        return cluster_map
    except CoverageError:
        return None


# ---------------------------------------------------------------------------
# Report emission

REPORT_BASE_COLUMNS = ["data", "scenario", "model", "accuracy", "precision_macro"]


def report_columns(label_symbols: Sequence[str]) -> list:
    cols = list(REPORT_BASE_COLUMNS)
    cols += [f"precision_{s}" for s in label_symbols]
    cols.append("recall_macro")
    cols += [f"recall_{s}" for s in label_symbols]
    cols += ["crloss", "rmse", "mae", "preq_time_s"]
    return cols


def emit_report(rows: Sequence[tuple], zero_time: bool = False) -> tuple:
    """Render (csv_text, pretty_text) from (spec, [metrics...]) rows.

    Multiple metrics per row aggregate as mean (+-std in the pretty table),
    matching per-session averaging. Column order is fixed.
    """
    if rows:
        symbols = rows[0][1][0].label_symbols
    else:
        symbols = []
    cols = report_columns(symbols)
    csv_lines = [",".join(cols)]
    pretty_rows = [cols]
    for spec, metrics_list in rows:
        values, pretty = [spec.data_kind, spec.scenario, spec.model], None
        pretty = list(values)
        per_metric = {}
        for name in cols[3:]:
            samples = [m.as_dict()[name] for m in metrics_list]
            per_metric[name] = (float(np.mean(samples)), float(np.std(samples)))
        for name in cols[3:]:
            mean, std = per_metric[name]
            if name == "preq_time_s" and zero_time:
                mean, std = 0.0, 0.0
            values.append(f"{mean:.6f}")
            pretty.append(f"{mean:.4f}±{std:.4f}" if len(metrics_list) > 1 else f"{mean:.4f}")
        csv_lines.append(",".join(values))
        pretty_rows.append(pretty)

    widths = [max(len(str(r[i])) for r in pretty_rows) for i in range(len(cols))] if pretty_rows else []
    pretty_lines = []
    for r in pretty_rows:
        pretty_lines.append("  ".join(str(v).ljust(widths[i]) for i, v in enumerate(r)))
    if len(pretty_lines) > 1:
        pretty_lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(csv_lines) + "\n", "\n".join(pretty_lines) + "\n"
