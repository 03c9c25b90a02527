"""Exact cosine-similarity retrieval in the shared embedding space.

Three query directions share one top-k primitive: neural sample -> images
(decoding), image -> neural samples (encoding), and neural sample of one
modality -> neural samples of another (conversion). Indices are brute-force
and exact; candidate pools here are at most a few thousand entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .contrastive import l2_normalize
from .encoders import ModalityEncoder, encode, encode_batch
from .errors import DimensionError

RankedHits = list[tuple[str, float]]


@dataclass(frozen=True)
class RetrievalIndex:
    """Immutable candidate pool: unique ids over unit-norm embedding rows."""

    ids: tuple[str, ...]
    embeddings: np.ndarray
    kind: str                   # "image" or "neural"
    modality: str | None = None  # set for neural indices

    @property
    def size(self) -> int:
        return len(self.ids)


def build_index(ids: Sequence[str], embeddings: np.ndarray, kind: str = "image",
                modality: str | None = None) -> RetrievalIndex:
    """L2-normalize candidate rows and freeze them behind their ids."""
    ids = tuple(str(i) for i in ids)
    if len(ids) < 1:
        raise ValueError("an index needs at least one entry")
    if len(set(ids)) != len(ids):
        seen: set[str] = set()
        dups: set[str] = set()
        for i in ids:
            (dups if i in seen else seen).add(i)
        raise ValueError(f"duplicate ids in index: {sorted(dups)}")
    if embeddings.ndim != 2 or embeddings.shape[0] != len(ids):
        raise DimensionError(
            f"embeddings shape {embeddings.shape} does not give one row per id ({len(ids)})")
    return RetrievalIndex(ids=ids, embeddings=l2_normalize(embeddings),
                          kind=kind, modality=modality)


def top_k(index: RetrievalIndex, query: np.ndarray, k: int) -> RankedHits:
    """Exact top-k entries by cosine similarity to the query.

    The query is normalized internally. Ties break by ascending id; returns
    min(k, N) hits.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = np.asarray(query, dtype=float).reshape(-1)
    if q.shape[0] != index.embeddings.shape[1]:
        raise DimensionError(
            f"query length {q.shape[0]} != index dimension {index.embeddings.shape[1]}")
    q = l2_normalize(q[None])[0]
    scores = index.embeddings @ q
    order = np.lexsort((np.asarray(index.ids), -scores))
    return [(index.ids[i], float(scores[i])) for i in order[:min(k, index.size)]]


def build_image_index(stimulus_ids: Sequence[str], embeddings: np.ndarray) -> RetrievalIndex:
    return build_index(stimulus_ids, embeddings, kind="image")


def build_neural_index(encoder: ModalityEncoder, samples: Sequence) -> RetrievalIndex:
    """Project samples through the encoder and index them by sample id."""
    if not samples:
        raise ValueError("an index needs at least one entry")
    z = encode_batch(encoder, list(samples))
    return build_index([s.sample_id for s in samples], z, kind="neural",
                       modality=encoder.kind.name)


def decode(encoder: ModalityEncoder, sample, image_index: RetrievalIndex,
           k: int) -> RankedHits:
    """Retrieve the images whose embeddings best match one neural sample."""
    if image_index.kind != "image":
        raise ValueError(f"decode needs an image index, got kind {image_index.kind!r}")
    return top_k(image_index, encode(encoder, sample), k)


def encode_retrieve(image_embedding: np.ndarray, neural_index: RetrievalIndex,
                    k: int) -> RankedHits:
    """Retrieve the projected neural samples best matching an image embedding."""
    if neural_index.kind != "neural":
        raise ValueError(
            f"encode_retrieve needs a neural index, got kind {neural_index.kind!r}")
    return top_k(neural_index, image_embedding, k)


def convert(source_encoder: ModalityEncoder, source_sample,
            target_index: RetrievalIndex, k: int) -> RankedHits:
    """Retrieve target-modality samples semantically matching a source sample.

    Conversion is defined across modalities; a target index of the source's
    own modality is rejected (use decode/encode_retrieve for those paths).
    """
    if target_index.kind != "neural":
        raise ValueError(f"convert needs a neural index, got kind {target_index.kind!r}")
    if target_index.modality == source_encoder.kind.name:
        raise ValueError(
            f"conversion within modality {source_encoder.kind.name!r} is not defined")
    return top_k(target_index, encode(source_encoder, source_sample), k)


def hits_rows(query_id: str, hits: RankedHits) -> list[dict]:
    """Flatten one query's hits into (query_id, rank, hit_id, score) rows."""
    return [{"query_id": query_id, "rank": r + 1, "hit_id": hid, "score": score}
            for r, (hid, score) in enumerate(hits)]
