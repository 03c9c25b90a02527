"""Command-line pipeline: synthesize data, train encoders, run the three
retrieval experiments, and evaluate them.

Exit codes: 0 success, 2 validation error (bad arguments, missing or invalid
inputs), 3 runtime/numeric error. Every command writes a run manifest echoing
its resolved configuration next to its outputs; given identical inputs and
seed, output files are byte-identical across invocations.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

from . import datastore, metrics, retrieval, training
from .encoders import ModalityKind, default_config, init_encoder, small_config
from .errors import (CheckpointError, ConfigError, DegenerateInputError,
                     DimensionError, ManifestError, TensorFormatError)

OUTPUT_DIR_ENV = "NEURALIGN_OUT"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_VALIDATION_ERRORS = (ManifestError, CheckpointError, TensorFormatError,
                      ConfigError, FileNotFoundError, NotADirectoryError,
                      IsADirectoryError, PermissionError, KeyError)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUTPUT_DIR_ENV)
    if not out:
        raise ConfigError(f"no output directory: pass --out or set {OUTPUT_DIR_ENV}")
    return Path(out)


def _run_manifest(out: Path, command: str, resolved: dict) -> None:
    _write_json(out / f"run_{command}.json", {"command": command, "resolved": resolved})


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _hits_csv(rows: list[dict]) -> str:
    lines = ["query_id,rank,hit_id,score"]
    lines += [f"{r['query_id']},{r['rank']},{r['hit_id']},{r['score']!r}" for r in rows]
    return "\n".join(lines) + "\n"


def _print_hits(rows: list[dict], limit: int = 20) -> None:
    print(f"{'query_id':<28}  {'rank':>4}  {'hit_id':<28}  score")
    for r in rows[:limit]:
        print(f"{r['query_id']:<28}  {r['rank']:>4}  {r['hit_id']:<28}  {r['score']:.6f}")
    if len(rows) > limit:
        print(f"... ({len(rows)} rows total, full listing in the report files)")


def _parse_modalities(spec: str) -> list[ModalityKind]:
    kinds = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, shape = part.partition("=")
        if not shape:
            raise ConfigError(
                f"modality spec {part!r} must look like fmri=16 or eeg=4x4")
        dims = tuple(int(d) for d in shape.lower().split("x"))
        kinds.append(ModalityKind(name.strip(), dims))
    if not kinds:
        raise ConfigError("no modalities given")
    return kinds


def _train_config(args) -> training.TrainConfig:
    return training.TrainConfig(
        learning_rate=args.lr, weight_decay=args.weight_decay,
        batch_size=args.batch_size, epochs=args.epochs,
        temperature=args.temperature, seed=args.seed)


def _load_pairs(pairs: list[str], what: str) -> dict[str, Path]:
    out: dict[str, Path] = {}
    for pair in pairs or []:
        name, _, path = pair.partition("=")
        if not path:
            raise ConfigError(f"--{what} expects MODALITY=PATH, got {pair!r}")
        out[name.strip()] = _require_file(path.strip(), what)
    if not out:
        raise ConfigError(f"at least one --{what} is required")
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    out = _out_dir(args)
    kinds = _parse_modalities(args.modalities)
    config = datastore.SyntheticConfig(
        modalities=tuple(kinds), num_stimuli=args.num_stimuli,
        num_test_stimuli=args.num_test, num_subjects=args.subjects,
        embed_dim=args.embed_dim, noise_sigma=args.noise,
        subject_map=args.map, num_classes=args.classes, seed=args.seed)
    bundle = datastore.generate_synthetic(config)
    manifests = {}
    for name, dataset in bundle.datasets.items():
        manifests[name] = str(datastore.save_dataset(dataset, out / name))
    _run_manifest(out, "synth", {
        "modalities": [f"{k.name}={'x'.join(map(str, k.native_shape))}" for k in kinds],
        "num_stimuli": args.num_stimuli, "num_test": args.num_test,
        "subjects": args.subjects, "embed_dim": args.embed_dim,
        "noise": args.noise, "map": args.map, "classes": args.classes,
        "seed": args.seed, "manifests": manifests})
    for name, path in sorted(manifests.items()):
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    manifest = _require_file(args.manifest, "manifest")
    dataset = datastore.load_dataset(manifest)
    config = _train_config(args)
    if args.arch == "default":
        arch = default_config(dataset.kind, embed_dim=dataset.embed_dim)
    else:
        arch = small_config(dataset.kind, embed_dim=dataset.embed_dim,
                            hidden=args.hidden, channels=args.channels)
    encoder = init_encoder(dataset.kind, dataset.subjects, arch, seed=config.seed)
    encoder, state, curve = training.fit(encoder, dataset, config)

    out = _out_dir(args)
    datastore.save_checkpoint(encoder, state, out / "checkpoint")
    _write_text(out / "loss_curve.csv", training.loss_curve_csv(curve))
    _run_manifest(out, "train", {
        "manifest": str(manifest), "arch": args.arch,
        "hidden": args.hidden, "channels": args.channels,
        "learning_rate": config.learning_rate, "weight_decay": config.weight_decay,
        "batch_size": config.batch_size, "epochs": config.epochs,
        "temperature": config.temperature, "seed": config.seed})
    last = curve[-1] if curve else float("nan")
    print(f"trained {dataset.kind.name} encoder for {config.epochs} epochs; "
          f"final mean loss {last:.6f}")
    print(f"checkpoint: {out / 'checkpoint'}")
    return EXIT_OK


def cmd_decode(args) -> int:
    manifest = _require_file(args.manifest, "manifest")
    _require_file(args.checkpoint, "checkpoint")
    dataset = datastore.load_dataset(manifest)
    encoder, _ = datastore.load_checkpoint(args.checkpoint)
    samples = dataset.split_samples(args.split)
    if not samples:
        raise ManifestError(f"no samples in split {args.split!r}")
    ids, pool = dataset.retrieval_stimuli(args.split)
    index = retrieval.build_image_index(ids, pool)
    rows: list[dict] = []
    for s in samples:
        rows += retrieval.hits_rows(s.sample_id, retrieval.decode(encoder, s, index, args.k))

    out = _out_dir(args)
    _write_json(out / "decode_hits.json", rows)
    _write_text(out / "decode_hits.csv", _hits_csv(rows))
    _run_manifest(out, "decode", {"manifest": str(manifest),
                                  "checkpoint": str(args.checkpoint),
                                  "k": args.k, "split": args.split,
                                  "retrieval_size": index.size})
    _print_hits(rows)
    return EXIT_OK


def cmd_encode(args) -> int:
    manifest = _require_file(args.manifest, "manifest")
    _require_file(args.checkpoint, "checkpoint")
    if (args.stimulus_id is None) == (args.embedding is None):
        raise ConfigError("pass exactly one of --stimulus-id or --embedding")
    dataset = datastore.load_dataset(manifest)
    encoder, _ = datastore.load_checkpoint(args.checkpoint)
    samples = dataset.split_samples(args.split)
    if not samples:
        raise ManifestError(f"no samples in split {args.split!r}")
    if args.stimulus_id is not None:
        record = dataset.stimuli.get(args.stimulus_id)
        if record is None:
            raise ManifestError(f"stimulus {args.stimulus_id!r} not in manifest")
        query, query_id = record.embedding, args.stimulus_id
    else:
        query = datastore.read_tensor(_require_file(args.embedding, "embedding")).reshape(-1)
        query_id = Path(args.embedding).stem
    index = retrieval.build_neural_index(encoder, samples)
    rows = retrieval.hits_rows(query_id, retrieval.encode_retrieve(query, index, args.k))

    out = _out_dir(args)
    _write_json(out / "encode_hits.json", rows)
    _write_text(out / "encode_hits.csv", _hits_csv(rows))
    _run_manifest(out, "encode", {"manifest": str(manifest),
                                  "checkpoint": str(args.checkpoint),
                                  "query": query_id, "k": args.k,
                                  "split": args.split, "index_size": index.size})
    _print_hits(rows)
    return EXIT_OK


def cmd_convert(args) -> int:
    src_manifest = _require_file(args.source_manifest, "source manifest")
    tgt_manifest = _require_file(args.target_manifest, "target manifest")
    _require_file(args.source_checkpoint, "source checkpoint")
    _require_file(args.target_checkpoint, "target checkpoint")
    src_dataset = datastore.load_dataset(src_manifest)
    tgt_dataset = datastore.load_dataset(tgt_manifest)
    src_encoder, _ = datastore.load_checkpoint(args.source_checkpoint)
    tgt_encoder, _ = datastore.load_checkpoint(args.target_checkpoint)
    src_samples = src_dataset.split_samples(args.split)
    tgt_samples = tgt_dataset.split_samples(args.split)
    if not src_samples or not tgt_samples:
        raise ManifestError(f"no samples in split {args.split!r}")
    index = retrieval.build_neural_index(tgt_encoder, tgt_samples)
    rows: list[dict] = []
    for s in src_samples:
        rows += retrieval.hits_rows(
            s.sample_id, retrieval.convert(src_encoder, s, index, args.k))

    out = _out_dir(args)
    _write_json(out / "convert_hits.json", rows)
    _write_text(out / "convert_hits.csv", _hits_csv(rows))
    _run_manifest(out, "convert", {
        "source_manifest": str(src_manifest), "target_manifest": str(tgt_manifest),
        "source_checkpoint": str(args.source_checkpoint),
        "target_checkpoint": str(args.target_checkpoint),
        "k": args.k, "split": args.split,
        "source": src_encoder.kind.name, "target": tgt_encoder.kind.name})
    _print_hits(rows)
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest_paths = _load_pairs(args.manifest, "manifest")
    checkpoint_paths = _load_pairs(args.checkpoint, "checkpoint")
    if set(manifest_paths) != set(checkpoint_paths):
        raise ConfigError("manifests and checkpoints must name the same modalities")
    datasets = {m: datastore.load_dataset(p) for m, p in manifest_paths.items()}
    encoders = {}
    for m, p in checkpoint_paths.items():
        encoder, _ = datastore.load_checkpoint(p)
        if encoder.kind.name != datasets[m].kind.name:
            raise ConfigError(
                f"checkpoint for {m!r} holds a {encoder.kind.name!r} encoder")
        encoders[m] = encoder
    k_values = tuple(int(k) for k in args.k.split(","))
    protocol = metrics.EvalProtocol(k_values=k_values, split=args.split)

    decode_reports = metrics.evaluate_experiment("decode", encoders, datasets, protocol)
    encode_reports = metrics.evaluate_experiment("encode", encoders, datasets, protocol)
    conversion_rows: list[dict] = []
    if len(encoders) >= 2:
        convert_reports = metrics.evaluate_experiment("convert", encoders, datasets, protocol)
        decode_2way = {r.name.split("/")[1]: r.value for r in decode_reports
                       if r.name.endswith("/2way")}
        for r in convert_reports:
            src, tgt = r.name.split("/")[1].split("->")
            conversion_rows.append({
                "source": src, "target": tgt, "two_way": r.value,
                "target_decode_two_way": decode_2way[tgt],
                "normalized": metrics.normalized_conversion_accuracy(
                    r.value, decode_2way[tgt]),
                "count": r.count})

    out = _out_dir(args)
    _write_json(out / "eval_decode.json", [r.to_dict() for r in decode_reports])
    _write_json(out / "eval_encode.json", [r.to_dict() for r in encode_reports])
    if conversion_rows:
        _write_json(out / "eval_convert.json", conversion_rows)
    _run_manifest(out, "eval", {
        "manifests": {m: str(p) for m, p in manifest_paths.items()},
        "checkpoints": {m: str(p) for m, p in checkpoint_paths.items()},
        "k": list(k_values), "split": args.split})

    print("decoding:")
    print(metrics.render_decode_table(decode_reports), end="")
    print("\nencoding:")
    for r in encode_reports:
        print(f"  {r.name}: {r.value:.4f}  (n={r.count})")
    if conversion_rows:
        print("\nconversion:")
        print(metrics.render_conversion_table(conversion_rows), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuralign",
        description="Train neural-to-image alignment encoders and run "
                    "decoding / encoding / conversion retrieval experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_out(p):
        p.add_argument("--out", default=None,
                       help=f"output directory (default: ${OUTPUT_DIR_ENV})")

    p = sub.add_parser("synth", help="generate a synthetic paired dataset")
    p.add_argument("--modalities", default="fmri=16,eeg=4x4",
                   help="comma list of NAME=SHAPE, e.g. fmri=16,eeg=4x4")
    p.add_argument("--num-stimuli", type=int, default=100)
    p.add_argument("--num-test", type=int, default=20)
    p.add_argument("--subjects", type=int, default=1)
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--map", choices=("identity", "affine"), default="identity")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    add_out(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one modality encoder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--arch", choices=("default", "small"), default="default")
    p.add_argument("--hidden", type=int, default=64, help="small-arch MLP width")
    p.add_argument("--channels", type=int, default=16, help="small-arch conv channels")
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--weight-decay", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    add_out(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="retrieve images for neural samples")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--split", default="test")
    add_out(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("encode", help="retrieve neural samples for an image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--stimulus-id", default=None)
    p.add_argument("--embedding", default=None,
                   help="tensor container holding a query embedding")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--split", default="test")
    add_out(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("convert", help="retrieve samples of another modality")
    p.add_argument("--source-checkpoint", required=True)
    p.add_argument("--source-manifest", required=True)
    p.add_argument("--target-checkpoint", required=True)
    p.add_argument("--target-manifest", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--split", default="test")
    add_out(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("eval", help="evaluate decode/encode/convert experiments")
    p.add_argument("--checkpoint", action="append", metavar="MODALITY=DIR")
    p.add_argument("--manifest", action="append", metavar="MODALITY=PATH")
    p.add_argument("--k", default="1,5")
    p.add_argument("--split", default="test")
    add_out(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DimensionError, DegenerateInputError, ZeroDivisionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception:
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
