"""Evaluation metrics for shared-space retrieval.

Covers top-k class accuracy against analytic chance levels, exhaustive
two-alternative (2-way) cosine accuracy, normalized conversion accuracy, and
a driver that evaluates the three retrieval experiments end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contrastive import l2_normalize
from .encoders import ModalityEncoder, encode_batch
from .errors import DimensionError
from .retrieval import (RankedHits, build_image_index, build_neural_index,
                        convert, top_k)


@dataclass(frozen=True)
class MetricReport:
    """One metric value in [0, 1] plus the protocol that produced it."""

    name: str
    value: float
    count: int
    protocol: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"metric value {self.value} outside [0, 1]")
        if self.count < 1:
            raise ValueError(f"metric count must be >= 1, got {self.count}")

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "count": self.count,
                "protocol": self.protocol}


def topk_class_accuracy(hits_per_query: Sequence[RankedHits],
                        query_classes: Sequence[str],
                        class_of: dict[str, str], k: int,
                        name: str = "topk_class_accuracy") -> MetricReport:
    """Fraction of queries whose top-k hits include >= 1 item of their class."""
    if len(hits_per_query) != len(query_classes):
        raise DimensionError("one class label per query is required")
    if len(hits_per_query) < 1:
        raise ValueError("need at least one query")
    correct = 0
    for hits, qclass in zip(hits_per_query, query_classes):
        top = hits[:k]
        for hit_id, _ in top:
            if hit_id not in class_of:
                raise KeyError(f"hit id {hit_id!r} has no class label")
        if any(class_of[hit_id] == qclass for hit_id, _ in top):
            correct += 1
    n = len(hits_per_query)
    return MetricReport(name=name, value=correct / n, count=n,
                        protocol={"k": k, "rule": "any-of-top-k shares query class"})


def two_way_accuracy(predicted: np.ndarray, ground_truth: np.ndarray,
                     distractors: np.ndarray,
                     name: str = "two_way_accuracy") -> MetricReport:
    """Exhaustive two-alternative cosine accuracy.

    For every query q and every distractor d != gt(q), the trial is correct
    iff cos(pred_q, gt_q) > cos(pred_q, d); ties count as incorrect. Each
    query's own ground-truth row is excluded from its distractor set by exact
    vector equality. Reports the mean over all (q, d) trials.
    """
    if predicted.ndim != 2 or predicted.shape != ground_truth.shape:
        raise DimensionError(
            f"predicted {predicted.shape} and ground truth {ground_truth.shape} must match")
    if distractors.ndim != 2 or distractors.shape[1] != predicted.shape[1]:
        raise DimensionError(f"distractor pool shape {distractors.shape} incompatible")
    if distractors.shape[0] < 1:
        raise ValueError("empty distractor pool")
    pred = l2_normalize(predicted)
    gt = l2_normalize(ground_truth)
    pool = l2_normalize(distractors)
    sim_gt = (pred * gt).sum(axis=1)
    sim_pool = pred @ pool.T
    own = (gt[:, None, :] == pool[None, :, :]).all(axis=2)
    wins = (sim_gt[:, None] > sim_pool) & ~own
    trials = int((~own).sum())
    if trials == 0:
        raise ValueError("empty distractor pool after excluding ground truths")
    return MetricReport(name=name, value=float(wins.sum()) / trials, count=trials,
                        protocol={"rule": "exhaustive pairs, strict inequality, ties fail"})


def chance_baseline(num_classes: int, k: int = 1) -> float:
    """Expected accuracy of uniform-random retrieval: k/num_classes, capped at 1."""
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return min(k / num_classes, 1.0)


def normalized_conversion_accuracy(conversion_two_way: float,
                                   target_decoding_two_way: float) -> float:
    """Conversion 2-way accuracy divided by the target modality's decoding
    2-way accuracy; may exceed 1 and is reported as-is."""
    if target_decoding_two_way <= 0:
        raise ZeroDivisionError(
            "target decoding accuracy must be positive to normalize against")
    return conversion_two_way / target_decoding_two_way


# ---------------------------------------------------------------------------
# experiment driver


@dataclass(frozen=True)
class EvalProtocol:
    k_values: tuple[int, ...] = (1, 5)
    split: str = "test"


def _retrieval_pool(dataset, split: str):
    ids, matrix = dataset.retrieval_stimuli(split)
    return ids, matrix


def _query_setup(encoder: ModalityEncoder, dataset, split: str):
    samples = dataset.split_samples(split)
    if not samples:
        raise ValueError(f"no samples in split {split!r}")
    z = encode_batch(encoder, samples)
    gt = np.stack([dataset.stimuli[s.stimulus_id].embedding for s in samples])
    return samples, z, gt


def evaluate_decoding(encoder: ModalityEncoder, dataset,
                      protocol: EvalProtocol = EvalProtocol()) -> list[MetricReport]:
    """Image retrieval from neural samples: top-k class accuracy (when class
    labels exist) plus 2-way accuracy of the projected embeddings."""
    mod = encoder.kind.name
    ids, pool = _retrieval_pool(dataset, protocol.split)
    index = build_image_index(ids, pool)
    samples, z, gt = _query_setup(encoder, dataset, protocol.split)
    reports = []

    class_of = dataset.class_labels()
    labeled = all(s.stimulus_id in class_of for s in samples) and all(
        i in class_of for i in ids)
    if labeled and class_of:
        max_k = max(protocol.k_values)
        hits = [top_k(index, z[i], max_k) for i in range(len(samples))]
        query_classes = [class_of[s.stimulus_id] for s in samples]
        num_classes = len(set(class_of.values()))
        for k in protocol.k_values:
            reports.append(topk_class_accuracy(
                hits, query_classes, class_of, k, name=f"decode/{mod}/top{k}"))
            reports.append(MetricReport(
                name=f"decode/{mod}/chance_top{k}",
                value=chance_baseline(num_classes, k), count=len(samples),
                protocol={"rule": "k / num_classes", "num_classes": num_classes}))
    reports.append(two_way_accuracy(z, gt, pool, name=f"decode/{mod}/2way"))
    for r in reports:
        r.protocol.setdefault("retrieval_size", index.size)
    return reports


def evaluate_encoding(encoder: ModalityEncoder, dataset,
                      protocol: EvalProtocol = EvalProtocol()) -> list[MetricReport]:
    """Neural retrieval from images, scored indirectly: 2-way accuracy between
    each query image embedding and the image embedding attached to the top-1
    retrieved neural sample."""
    mod = encoder.kind.name
    samples = dataset.split_samples(protocol.split)
    if not samples:
        raise ValueError(f"no samples in split {protocol.split!r}")
    neural_index = build_neural_index(encoder, samples)
    sample_by_id = {s.sample_id: s for s in samples}

    query_ids = sorted({s.stimulus_id for s in samples})
    gt = np.stack([dataset.stimuli[q].embedding for q in query_ids])
    predicted = []
    for q, q_embedding in zip(query_ids, gt):
        (hit_id, _), = top_k(neural_index, q_embedding, 1)
        retrieved_stimulus = sample_by_id[hit_id].stimulus_id
        predicted.append(dataset.stimuli[retrieved_stimulus].embedding)
    _, pool = _retrieval_pool(dataset, protocol.split)
    report = two_way_accuracy(np.stack(predicted), gt, pool, name=f"encode/{mod}/2way")
    report.protocol.setdefault("retrieval_size", neural_index.size)
    return [report]


def evaluate_conversion(source_encoder: ModalityEncoder, source_dataset,
                        target_encoder: ModalityEncoder, target_dataset,
                        protocol: EvalProtocol = EvalProtocol()) -> list[MetricReport]:
    """Cross-modality retrieval, scored by comparing the images tied to the
    source samples with those tied to the retrieved target samples."""
    src, tgt = source_encoder.kind.name, target_encoder.kind.name
    source_samples = source_dataset.split_samples(protocol.split)
    target_samples = target_dataset.split_samples(protocol.split)
    if not source_samples or not target_samples:
        raise ValueError(f"no samples in split {protocol.split!r}")
    target_index = build_neural_index(target_encoder, target_samples)
    target_by_id = {s.sample_id: s for s in target_samples}

    gt = np.stack([source_dataset.stimuli[s.stimulus_id].embedding for s in source_samples])
    predicted = []
    for s in source_samples:
        (hit_id, _), = convert(source_encoder, s, target_index, 1)
        retrieved_stimulus = target_by_id[hit_id].stimulus_id
        predicted.append(target_dataset.stimuli[retrieved_stimulus].embedding)
    _, pool = _retrieval_pool(source_dataset, protocol.split)
    report = two_way_accuracy(np.stack(predicted), gt, pool, name=f"convert/{src}->{tgt}/2way")
    report.protocol.setdefault("retrieval_size", target_index.size)
    return [report]


def evaluate_experiment(kind: str, encoders: dict[str, ModalityEncoder],
                        datasets: dict, protocol: EvalProtocol = EvalProtocol()) -> list[MetricReport]:
    """Run one experiment family over every modality (or ordered pair)."""
    if set(encoders) != set(datasets):
        raise ValueError("encoders and datasets must cover the same modalities")
    names = sorted(encoders)
    reports: list[MetricReport] = []
    if kind == "decode":
        for m in names:
            reports += evaluate_decoding(encoders[m], datasets[m], protocol)
    elif kind == "encode":
        for m in names:
            reports += evaluate_encoding(encoders[m], datasets[m], protocol)
    elif kind == "convert":
        if len(names) < 2:
            raise ValueError("conversion needs at least two modalities")
        for src in names:
            for tgt in names:
                if src != tgt:
                    reports += evaluate_conversion(encoders[src], datasets[src],
                                                   encoders[tgt], datasets[tgt], protocol)
    else:
        raise ValueError(f"unknown experiment kind {kind!r}")
    return reports


# ---------------------------------------------------------------------------
# human-readable tables


def render_decode_table(reports: Sequence[MetricReport]) -> str:
    """Aligned-column decoding summary: one row per modality."""
    by_mod: dict[str, dict[str, MetricReport]] = {}
    for r in reports:
        parts = r.name.split("/")
        if len(parts) == 3 and parts[0] == "decode":
            by_mod.setdefault(parts[1], {})[parts[2]] = r
    header = ["modality", "top1", "top5", "2way", "chance_top1", "chance_top5", "pool"]
    rows = [header]
    for mod in sorted(by_mod):
        got = by_mod[mod]
        def cell(key):
            r = got.get(key)
            return f"{r.value:.4f}" if r else "-"
        pool = next((str(r.protocol.get("retrieval_size", "-")) for r in got.values()), "-")
        rows.append([mod, cell("top1"), cell("top5"), cell("2way"),
                     cell("chance_top1"), cell("chance_top5"), pool])
    return _align(rows)


def render_conversion_table(rows_in: Sequence[dict]) -> str:
    """Aligned-column conversion summary: 2-way plus normalized value."""
    rows = [["conversion", "2way", "normalized"]]
    for row in rows_in:
        rows.append([f"{row['source']}->{row['target']}",
                     f"{row['two_way']:.4f}", f"{row['normalized']:.4f}"])
    return _align(rows)


def _align(rows: list[list[str]]) -> str:
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()
                     for r in rows) + "\n"
