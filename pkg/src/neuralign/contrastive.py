"""Symmetric contrastive objective over cosine-similarity logits.

Matched (neural, image) embedding pairs sit on the diagonal of a batch
similarity matrix; the loss is the mean of the row-wise and column-wise
cross-entropies against those diagonal targets. Gradients are returned with
respect to the raw (pre-normalization) embeddings so encoders can consume
them directly.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, DimensionError
from .kernel import softmax_cross_entropy

DEGENERATE_NORM_EPS = 1e-12


def l2_normalize(rows: np.ndarray, eps: float = DEGENERATE_NORM_EPS) -> np.ndarray:
    """Scale each row to unit Euclidean norm.

    Raises DegenerateInputError on any row with norm <= eps; a vanishing
    embedding means the upstream encoder has collapsed.
    """
    if rows.ndim != 2:
        raise DimensionError(f"expected 2-D rows, got shape {rows.shape}")
    norms = np.linalg.norm(rows, axis=1)
    if rows.shape[0] and norms.min() <= eps:
        bad = int(norms.argmin())
        raise DegenerateInputError(
            f"row {bad} has norm {norms[bad]:.3e} <= {eps:.0e}; "
            "cannot normalize a (near-)zero embedding")
    return rows / norms[:, None]


def similarity_logits(z_i: np.ndarray, z_j: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Pairwise cosine similarities of unit rows, divided by the temperature."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if z_i.ndim != 2 or z_j.ndim != 2 or z_i.shape[1] != z_j.shape[1]:
        raise DimensionError(
            f"incompatible embedding shapes {z_i.shape} and {z_j.shape}")
    return (z_i @ z_j.T) / temperature


def make_targets(batch_size: int) -> np.ndarray:
    """Index targets [0, 1, ..., B-1]: row b matches column b."""
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    return np.arange(batch_size, dtype=np.intp)


def _normalize_with_norms(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    unit = l2_normalize(rows)
    return unit, np.linalg.norm(rows, axis=1)


def _normalize_backward(unit: np.ndarray, norms: np.ndarray, d_unit: np.ndarray) -> np.ndarray:
    # d_raw = (d_unit - <d_unit, unit> unit) / ||raw||, the tangential component.
    radial = (d_unit * unit).sum(axis=1, keepdims=True)
    return (d_unit - radial * unit) / norms[:, None]


def contrastive_loss(z_i_raw: np.ndarray, z_j_raw: np.ndarray,
                     temperature: float = 1.0) -> tuple[float, np.ndarray, np.ndarray]:
    """Symmetric cross-entropy over temperature-scaled cosine logits.

    Both inputs are L2-normalized internally. Returns (loss, d_z_i_raw,
    d_z_j_raw) with analytic gradients chained through the normalization.
    """
    if z_i_raw.shape != z_j_raw.shape:
        raise DimensionError(
            f"embedding batches differ in shape: {z_i_raw.shape} vs {z_j_raw.shape}")
    batch = z_i_raw.shape[0]
    targets = make_targets(batch)

    u, u_norms = _normalize_with_norms(z_i_raw)
    v, v_norms = _normalize_with_norms(z_j_raw)
    logits = similarity_logits(u, v, temperature)

    loss_rows, d_rows = softmax_cross_entropy(logits, targets)
    loss_cols, d_cols = softmax_cross_entropy(logits.T, targets)
    loss = 0.5 * (loss_rows + loss_cols)
    d_logits = 0.5 * (d_rows + d_cols.T)

    d_u = (d_logits @ v) / temperature
    d_v = (d_logits.T @ u) / temperature
    return loss, _normalize_backward(u, u_norms, d_u), _normalize_backward(v, v_norms, d_v)
