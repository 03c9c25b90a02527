"""Bit-exact persistence and dataset plumbing.

Covers the binary tensor container (magic ``NALN``, little-endian, one tensor
per file), JSON dataset manifests pairing neural samples with stimuli under a
split-by-stimulus discipline, encoder/optimizer checkpoints, and a synthetic
generator with recorded ground truth for construction-based verification.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import (EncoderConfig, ModalityEncoder, ModalityKind,
                       config_from_dict, config_to_dict, kind_from_dict,
                       kind_to_dict, param_shapes, validate_config)
from .errors import (BadMagicError, CheckpointError, ManifestError,
                     NonFinitePayloadError, TruncatedPayloadError,
                     VersionMismatchError)
from .training import AdamWState

MAGIC = b"NALN"
FORMAT_VERSION = 1
_DTYPE_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_TAG_OF_KIND = {"f4": 1, "f8": 2}


# ---------------------------------------------------------------------------
# tensor container files


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def write_tensor(path, tensor: np.ndarray) -> None:
    """Write one tensor to a container file (atomically, little-endian)."""
    arr = np.ascontiguousarray(tensor)
    if arr.dtype == np.float32:
        dtype = np.dtype("<f4")
    else:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        dtype = np.dtype("<f8")
    header = MAGIC
    header += struct.pack("<II", FORMAT_VERSION, _TAG_OF_KIND[dtype.str[1:]])
    header += struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    _atomic_write(Path(path), header + arr.astype(dtype, copy=False).tobytes())


def read_tensor(path) -> np.ndarray:
    """Read one container file back, validating magic, version and payload."""
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a tensor container (bad magic)")
    if len(blob) < 16:
        raise TruncatedPayloadError(f"{path}: header cut short")
    version, tag, rank = struct.unpack_from("<III", blob, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if tag not in _DTYPE_TAGS:
        raise VersionMismatchError(f"{path}: unknown dtype tag {tag}")
    offset = 16
    if len(blob) < offset + 8 * rank:
        raise TruncatedPayloadError(f"{path}: dimension list cut short")
    dims = struct.unpack_from(f"<{rank}Q", blob, offset)
    offset += 8 * rank
    dtype = _DTYPE_TAGS[tag]
    count = 1
    for d in dims:
        count *= d
    expected = count * dtype.itemsize
    payload = blob[offset:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload)} bytes, need {expected}")
    if len(payload) > expected:
        raise TruncatedPayloadError(
            f"{path}: {len(payload) - expected} trailing bytes after payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
    if not np.all(np.isfinite(arr)):
        raise NonFinitePayloadError(f"{path}: payload contains NaN or Inf")
    native = np.float32 if dtype.itemsize == 4 else np.float64
    return np.ascontiguousarray(arr, dtype=native)


# ---------------------------------------------------------------------------
# paired datasets


@dataclass(frozen=True)
class NeuralSample:
    """One recorded trial: who, what modality, which stimulus, which split."""

    sample_id: str
    subject_id: str
    stimulus_id: str
    modality: str
    features: np.ndarray
    split: str


@dataclass(frozen=True)
class StimulusRecord:
    """One image: its id, optional class label, and frozen embedding."""

    stimulus_id: str
    class_label: str | None
    embedding: np.ndarray


@dataclass
class PairedDataset:
    """In-memory pairing of neural samples with stimulus embeddings."""

    kind: ModalityKind
    embed_dim: int
    subjects: tuple[str, ...]
    samples: list[NeuralSample]
    stimuli: dict[str, StimulusRecord]

    def split_samples(self, split: str) -> list[NeuralSample]:
        return [s for s in self.samples if s.split == split]

    def train_samples(self) -> list[NeuralSample]:
        return self.split_samples("train")

    def test_samples(self) -> list[NeuralSample]:
        return self.split_samples("test")

    def class_labels(self) -> dict[str, str]:
        return {sid: rec.class_label for sid, rec in self.stimuli.items()
                if rec.class_label is not None}

    def retrieval_stimuli(self, split: str = "test") -> tuple[list[str], np.ndarray]:
        """Candidate pool for a split: its referenced stimuli plus any
        stimuli no sample references (extra distractors), id-sorted."""
        referenced = {s.stimulus_id for s in self.samples}
        in_split = {s.stimulus_id for s in self.split_samples(split)}
        ids = sorted(in_split | (set(self.stimuli) - referenced))
        if not ids:
            raise ValueError(f"no stimuli available for split {split!r}")
        return ids, np.stack([self.stimuli[i].embedding for i in ids])


def _split_overlap(samples: list[NeuralSample]) -> set[str]:
    train = {s.stimulus_id for s in samples if s.split == "train"}
    test = {s.stimulus_id for s in samples if s.split == "test"}
    return train & test


def validate_dataset(dataset: PairedDataset) -> list[str]:
    """Return every manifest-invariant violation (empty list when valid)."""
    problems: list[str] = []
    if not dataset.samples:
        problems.append("sample table is empty")
    seen: set[str] = set()
    for s in dataset.samples:
        if s.sample_id in seen:
            problems.append(f"duplicate sample id {s.sample_id!r}")
        seen.add(s.sample_id)
        if s.stimulus_id not in dataset.stimuli:
            problems.append(
                f"sample {s.sample_id!r} references missing stimulus {s.stimulus_id!r}")
        if s.subject_id not in dataset.subjects:
            problems.append(
                f"sample {s.sample_id!r} names unlisted subject {s.subject_id!r}")
        if s.split not in ("train", "test"):
            problems.append(f"sample {s.sample_id!r} has unknown split {s.split!r}")
    for sid in sorted(_split_overlap(dataset.samples)):
        problems.append(f"stimulus {sid!r} appears in both train and test splits")
    for sid, rec in dataset.stimuli.items():
        if rec.embedding.shape != (dataset.embed_dim,):
            problems.append(
                f"stimulus {sid!r} embedding shape {rec.embedding.shape} != "
                f"({dataset.embed_dim},)")
    return problems


def _load_stimulus_rows(doc, base: Path, problems: list[str]) -> dict[str, StimulusRecord]:
    stimuli: dict[str, StimulusRecord] = {}
    for row in doc.get("stimuli", []):
        sid = str(row["stimulus_id"])
        if sid in stimuli:
            problems.append(f"duplicate stimulus id {sid!r}")
            continue
        try:
            embedding = read_tensor(base / row["embedding"]).reshape(-1)
        except Exception as exc:
            problems.append(f"stimulus {sid!r}: {exc}")
            continue
        label = row.get("class_label")
        stimuli[sid] = StimulusRecord(sid, None if label is None else str(label), embedding)
    return stimuli


def load_stimulus_table(manifest_path) -> tuple[int, dict[str, StimulusRecord]]:
    """Load and validate just a manifest's stimulus table.

    Accepts stimulus-only manifests (frozen image-embedding pools, e.g. from
    an embedding exporter or extra retrieval distractors) as well as full
    dataset manifests. Returns (embed_dim, stimuli); raises ManifestError with
    every violation found.
    """
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    problems: list[str] = []
    embed_dim = int(doc["embed_dim"])
    stimuli = _load_stimulus_rows(doc, manifest_path.parent, problems)
    if not stimuli and not problems:
        problems.append("stimulus table is empty")
    for sid, rec in stimuli.items():
        if rec.embedding.shape != (embed_dim,):
            problems.append(
                f"stimulus {sid!r} embedding shape {rec.embedding.shape} != ({embed_dim},)")
        elif not np.linalg.norm(rec.embedding) > 0:
            problems.append(f"stimulus {sid!r} embedding has zero norm")
    if problems:
        raise ManifestError(problems)
    return embed_dim, stimuli


def load_dataset(manifest_path) -> PairedDataset:
    """Load a manifest plus its tensor files; raises ManifestError carrying
    every violation found, not just the first."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    problems: list[str] = []

    if doc.get("modality") is None:
        raise ManifestError(
            "manifest declares no modality (a stimulus-only table? "
            "use load_stimulus_table)")
    kind = kind_from_dict(doc["modality"])
    embed_dim = int(doc["embed_dim"])
    subjects = tuple(str(s) for s in doc.get("subjects", []))

    stimuli = _load_stimulus_rows(doc, base, problems)

    samples: list[NeuralSample] = []
    for row in doc.get("samples", []):
        sample_id = str(row["sample_id"])
        try:
            features = read_tensor(base / row["tensor"])
        except Exception as exc:
            problems.append(f"sample {sample_id!r}: {exc}")
            continue
        samples.append(NeuralSample(
            sample_id=sample_id, subject_id=str(row["subject_id"]),
            stimulus_id=str(row["stimulus_id"]), modality=kind.name,
            features=features, split=str(row["split"])))

    dataset = PairedDataset(kind=kind, embed_dim=embed_dim, subjects=subjects,
                            samples=samples, stimuli=stimuli)
    problems += validate_dataset(dataset)
    if problems:
        raise ManifestError(problems)
    return dataset


def save_dataset(dataset: PairedDataset, out_dir) -> Path:
    """Write manifest + tensor files under out_dir; returns the manifest path."""
    problems = validate_dataset(dataset)
    if problems:
        raise ManifestError(problems)
    out = Path(out_dir)
    (out / "tensors").mkdir(parents=True, exist_ok=True)
    (out / "stimuli").mkdir(parents=True, exist_ok=True)
    sample_rows = []
    for i, s in enumerate(dataset.samples):
        rel = f"tensors/t{i:06d}.naln"
        write_tensor(out / rel, s.features)
        sample_rows.append({"sample_id": s.sample_id, "subject_id": s.subject_id,
                            "tensor": rel, "stimulus_id": s.stimulus_id,
                            "split": s.split})
    stim_rows = []
    for j, sid in enumerate(sorted(dataset.stimuli)):
        rec = dataset.stimuli[sid]
        rel = f"stimuli/e{j:06d}.naln"
        write_tensor(out / rel, rec.embedding)
        stim_rows.append({"stimulus_id": sid, "class_label": rec.class_label,
                          "embedding": rel})
    doc = {
        "format_version": FORMAT_VERSION,
        "modality": kind_to_dict(dataset.kind),
        "embed_dim": dataset.embed_dim,
        "subjects": list(dataset.subjects),
        "samples": sample_rows,
        "stimuli": stim_rows,
    }
    manifest = out / "manifest.json"
    _atomic_write(manifest, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())
    return manifest


# ---------------------------------------------------------------------------
# synthetic data with known ground truth


@dataclass(frozen=True)
class SyntheticConfig:
    """Desk-scale generator: stimulus embeddings uniform on the unit sphere,
    per-subject maps from embedding space into native feature space, optional
    additive gaussian noise, split by stimulus."""

    modalities: tuple[ModalityKind, ...]
    num_stimuli: int = 100
    num_test_stimuli: int = 20
    num_subjects: int = 1
    embed_dim: int = 16
    noise_sigma: float = 0.0
    subject_map: str = "identity"     # "identity" | "affine"
    num_classes: int | None = None    # balanced round-robin labels when set
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "modalities", tuple(self.modalities))
        if self.num_stimuli < 1 or not (0 <= self.num_test_stimuli < self.num_stimuli):
            raise ValueError("need num_stimuli >= 1 and 0 <= num_test_stimuli < num_stimuli")
        if self.num_subjects < 1:
            raise ValueError("need at least one subject")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.subject_map not in ("identity", "affine"):
            raise ValueError(f"unknown subject map family {self.subject_map!r}")
        if self.num_classes is not None and self.num_classes < 1:
            raise ValueError("num_classes must be >= 1 when given")
        for kind in self.modalities:
            if self.subject_map == "identity" and int(np.prod(kind.native_shape)) != self.embed_dim:
                raise ValueError(
                    f"identity maps need prod({kind.native_shape}) == embed_dim "
                    f"{self.embed_dim} for modality {kind.name}")


@dataclass(frozen=True)
class SubjectMap:
    """Recorded ground-truth map from stimulus embedding to native features."""

    family: str
    weight: np.ndarray | None   # (prod(native), D) for affine maps
    offset: np.ndarray | None

    def apply(self, z: np.ndarray, native_shape: tuple[int, ...]) -> np.ndarray:
        if self.family == "identity":
            return z.reshape(native_shape)
        return (self.weight @ z + self.offset).reshape(native_shape)


@dataclass
class SyntheticBundle:
    datasets: dict[str, PairedDataset]
    subject_maps: dict[tuple[str, str], SubjectMap]
    config: SyntheticConfig


def generate_synthetic(config: SyntheticConfig) -> SyntheticBundle:
    """Deterministically generate paired datasets for every modality, all
    sharing one stimulus set, plus the ground-truth subject maps."""
    rng = np.random.default_rng(int(config.seed))
    s, d = config.num_stimuli, config.embed_dim

    z = rng.standard_normal((s, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    stim_ids = [f"stim-{i:05d}" for i in range(s)]
    split_of = {sid: ("test" if i >= s - config.num_test_stimuli else "train")
                for i, sid in enumerate(stim_ids)}

    stimuli: dict[str, StimulusRecord] = {}
    for i, sid in enumerate(stim_ids):
        label = (f"class-{i % config.num_classes:03d}"
                 if config.num_classes is not None else None)
        stimuli[sid] = StimulusRecord(sid, label, z[i].copy())

    subject_ids = [f"sub-{j:02d}" for j in range(config.num_subjects)]
    datasets: dict[str, PairedDataset] = {}
    subject_maps: dict[tuple[str, str], SubjectMap] = {}
    for kind in config.modalities:
        p = int(np.prod(kind.native_shape))
        samples: list[NeuralSample] = []
        for sid in subject_ids:
            if config.subject_map == "identity":
                smap = SubjectMap("identity", None, None)
            else:
                weight = rng.standard_normal((p, d)) / np.sqrt(d)
                offset = 0.1 * rng.standard_normal(p)
                smap = SubjectMap("affine", weight, offset)
            subject_maps[(kind.name, sid)] = smap
            for i, stim_id in enumerate(stim_ids):
                features = smap.apply(z[i], kind.native_shape)
                if config.noise_sigma > 0:
                    features = features + config.noise_sigma * rng.standard_normal(kind.native_shape)
                samples.append(NeuralSample(
                    sample_id=f"{kind.name}-{sid}-{stim_id}", subject_id=sid,
                    stimulus_id=stim_id, modality=kind.name,
                    features=np.ascontiguousarray(features), split=split_of[stim_id]))
        datasets[kind.name] = PairedDataset(
            kind=kind, embed_dim=d, subjects=tuple(subject_ids),
            samples=samples, stimuli=dict(stimuli))
    return SyntheticBundle(datasets=datasets, subject_maps=subject_maps, config=config)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(encoder: ModalityEncoder, optimizer_state: AdamWState | None,
                    path) -> Path:
    """Write an encoder (and optionally its optimizer state) as a directory of
    tensor containers plus an architecture manifest."""
    out = Path(path)
    (out / "params").mkdir(parents=True, exist_ok=True)
    names = list(encoder.params)
    for i, name in enumerate(names):
        write_tensor(out / "params" / f"p{i:04d}.naln", encoder.params[name])
    doc = {
        "format_version": FORMAT_VERSION,
        "modality": kind_to_dict(encoder.kind),
        "config": config_to_dict(encoder.config),
        "subjects": list(encoder.subjects),
        "params": names,
        "optimizer": None,
    }
    if optimizer_state is not None:
        (out / "opt").mkdir(parents=True, exist_ok=True)
        for i, name in enumerate(names):
            write_tensor(out / "opt" / f"m{i:04d}.naln", optimizer_state.m[name])
            write_tensor(out / "opt" / f"v{i:04d}.naln", optimizer_state.v[name])
        doc["optimizer"] = {"step": optimizer_state.step}
    _atomic_write(out / "architecture.json",
                  (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())
    return out


def load_checkpoint(path) -> tuple[ModalityEncoder, AdamWState | None]:
    """Re-create an encoder from a checkpoint directory, verifying that the
    stored tensors match the declared architecture exactly."""
    root = Path(path)
    arch_path = root / "architecture.json"
    if not arch_path.exists():
        raise CheckpointError(f"{root}: no architecture.json")
    doc = json.loads(arch_path.read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{root}: unsupported checkpoint version")
    kind = kind_from_dict(doc["modality"])
    config: EncoderConfig = config_from_dict(doc["config"])
    subjects = tuple(str(s) for s in doc["subjects"])
    try:
        validate_config(kind, config)
    except Exception as exc:
        raise CheckpointError(f"{root}: invalid architecture: {exc}") from exc

    expected = param_shapes(kind, config, subjects)
    names = [str(n) for n in doc["params"]]
    if names != list(expected):
        raise CheckpointError(f"{root}: parameter list does not match architecture")
    params: dict[str, np.ndarray] = {}
    for i, name in enumerate(names):
        arr = read_tensor(root / "params" / f"p{i:04d}.naln")
        if arr.shape != expected[name]:
            raise CheckpointError(
                f"{root}: parameter {name!r} has shape {arr.shape}, "
                f"architecture expects {expected[name]}")
        params[name] = arr
    encoder = ModalityEncoder(kind, config, subjects, params)

    state = None
    if doc.get("optimizer") is not None:
        state = AdamWState(step=int(doc["optimizer"]["step"]))
        for i, name in enumerate(names):
            m = read_tensor(root / "opt" / f"m{i:04d}.naln")
            v = read_tensor(root / "opt" / f"v{i:04d}.naln")
            if m.shape != expected[name] or v.shape != expected[name]:
                raise CheckpointError(f"{root}: optimizer state shape mismatch for {name!r}")
            state.m[name] = m
            state.v[name] = v
    return encoder, state
