"""Shared test utilities: finite-difference oracles and small builders."""

import numpy as np

from neuralign.datastore import NeuralSample
from neuralign.encoders import ModalityKind


def central_difference(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar f at every coordinate of x."""
    x = x.astype(np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = f(x)
        flat[i] = keep - eps
        lo = f(x)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise relative error with a scale-aware floor.

    Entries far below the gradient's own infinity norm are compared at an
    absolute tolerance proportional to that norm; otherwise finite-difference
    round-off (~1e-10 absolute in f64) shows up as spurious relative error.
    """
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-12)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-2 * scale)
    return float(np.max(np.abs(a - b) / denom))


def grads_to_vector(grads: dict, order) -> np.ndarray:
    return np.concatenate([grads[name].reshape(-1) for name in order])


def fd_param_grads(loss_fn, params: dict, eps: float = 1e-6) -> dict:
    """Finite differences of loss_fn() w.r.t. every entry of every parameter.

    loss_fn reads the (mutated) params dict, so perturbations are done in place
    and restored.
    """
    out = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi = loss_fn()
            flat[i] = keep - eps
            lo = loss_fn()
            flat[i] = keep
            gflat[i] = (hi - lo) / (2.0 * eps)
        out[name] = g
    return out


def make_sample(modality: str, subject_id: str, features: np.ndarray,
                stimulus_id: str = "stim-00000", split: str = "train",
                sample_id: str | None = None) -> NeuralSample:
    return NeuralSample(
        sample_id=sample_id or f"{modality}-{subject_id}-{stimulus_id}",
        subject_id=subject_id, stimulus_id=stimulus_id, modality=modality,
        features=features, split=split)


def flat_kind(v: int) -> ModalityKind:
    return ModalityKind("fmri", (v,))


def seq_kind(c: int, t: int, name: str = "eeg") -> ModalityKind:
    return ModalityKind(name, (c, t))
