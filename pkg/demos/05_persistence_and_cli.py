#!/usr/bin/env python3
# Persistence: the binary tensor container round-trips bit-exactly, datasets
# live behind JSON manifests, and checkpoints restore encoders byte-for-byte.
# The same pipeline is scriptable through the command-line interface.

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from neuralign import (ModalityKind, SyntheticConfig, TrainConfig, encode,
                       fit, generate_synthetic, init_encoder, load_checkpoint,
                       load_dataset, read_tensor, save_checkpoint,
                       save_dataset, small_config, write_tensor)
from neuralign.training import init_adamw_state

root = Path(tempfile.mkdtemp(prefix="neuralign-demo-"))
print("working under", root)

# ---- tensor container ----------------------------------------------------
t = np.random.default_rng(3).normal(size=(4, 7))
write_tensor(root / "t.naln", t)
back = read_tensor(root / "t.naln")
print("container round trip bit-exact:", back.tobytes() == t.tobytes())

# ---- dataset manifests ----------------------------------------------------
config = SyntheticConfig(modalities=(ModalityKind("fmri", (8,)),),
                         num_stimuli=40, num_test_stimuli=8, num_subjects=2,
                         embed_dim=8, seed=3)
dataset = generate_synthetic(config).datasets["fmri"]
manifest = save_dataset(dataset, root / "data")
reloaded = load_dataset(manifest)
print(f"manifest {manifest.name}: {len(reloaded.samples)} samples, "
      f"{len(reloaded.stimuli)} stimuli reloaded")

# ---- checkpoints -----------------------------------------------------------
encoder = init_encoder(dataset.kind, dataset.subjects,
                       small_config(dataset.kind, 8, hidden=16), seed=3)
_, state, _ = fit(encoder, dataset, TrainConfig(epochs=3, batch_size=8, seed=3))
save_checkpoint(encoder, state, root / "checkpoint")
restored, restored_state = load_checkpoint(root / "checkpoint")
sample = dataset.samples[0]
print("checkpoint restores outputs bit-exactly:",
      np.array_equal(encode(encoder, sample), encode(restored, sample)),
      f"(optimizer step {restored_state.step})")

# ---- the same flow through the CLI ----------------------------------------
def cli(*args):
    cmd = [sys.executable, "-m", "neuralign", *map(str, args)]
    print("$", " ".join(cmd[2:]))
    subprocess.run(cmd, check=True, stdout=subprocess.DEVNULL)

cli("synth", "--out", root / "cli" / "data", "--modalities", "fmri=8",
    "--embed-dim", 8, "--num-stimuli", 40, "--num-test", 8, "--seed", 3)
cli("train", "--manifest", root / "cli" / "data" / "fmri" / "manifest.json",
    "--arch", "small", "--hidden", 16, "--batch-size", 8, "--epochs", 200,
    "--seed", 3, "--out", root / "cli" / "run")
cli("eval", "--checkpoint", f"fmri={root / 'cli' / 'run' / 'checkpoint'}",
    "--manifest", f"fmri={root / 'cli' / 'data' / 'fmri' / 'manifest.json'}",
    "--out", root / "cli" / "eval")

reports = json.loads((root / "cli" / "eval" / "eval_decode.json").read_text())
for r in reports:
    print(f"  {r['name']}: {r['value']:.4f}")
