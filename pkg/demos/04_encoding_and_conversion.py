#!/usr/bin/env python3
# The other two retrieval directions. The encoding experiment starts from an
# image embedding and retrieves the neural samples whose projections sit
# closest. Conversion starts from one modality's sample and retrieves samples
# of another modality through the shared space.

from neuralign import (ModalityKind, SyntheticConfig, TrainConfig, fit,
                       generate_synthetic, init_encoder, small_config)
from neuralign.metrics import EvalProtocol, evaluate_experiment, normalized_conversion_accuracy
from neuralign.retrieval import build_neural_index, convert, encode_retrieve

config = SyntheticConfig(
    modalities=(ModalityKind("fmri", (16,)), ModalityKind("eeg", (4, 4))),
    num_stimuli=250, num_test_stimuli=50, num_subjects=2,
    embed_dim=16, noise_sigma=0.0, subject_map="identity", seed=11)
bundle = generate_synthetic(config)

encoders = {}
epochs = {"fmri": 120, "eeg": 500}
for name, dataset in bundle.datasets.items():
    enc = init_encoder(dataset.kind, dataset.subjects,
                       small_config(dataset.kind, 16), seed=11)
    fit(enc, dataset, TrainConfig(batch_size=128, epochs=epochs[name], seed=11))
    encoders[name] = enc
    print(f"trained {name} encoder")

# ---- encoding: image -> neural samples ----------------------------------
fmri = bundle.datasets["fmri"]
neural_index = build_neural_index(encoders["fmri"], fmri.test_samples())
query = fmri.test_samples()[0]
query_embedding = fmri.stimuli[query.stimulus_id].embedding
print(f"\nimage {query.stimulus_id} -> nearest fmri samples:")
for hit_id, score in encode_retrieve(query_embedding, neural_index, 3):
    print(f"  {hit_id}  cos={score:.4f}")

# ---- conversion: fmri sample -> eeg samples ------------------------------
eeg = bundle.datasets["eeg"]
eeg_index = build_neural_index(encoders["eeg"], eeg.test_samples())
eeg_by_id = {s.sample_id: s for s in eeg.test_samples()}
matched = 0
for sample in fmri.test_samples():
    (hit_id, _), = convert(encoders["fmri"], sample, eeg_index, 1)
    matched += eeg_by_id[hit_id].stimulus_id == sample.stimulus_id
print(f"\nfmri -> eeg conversion: {matched}/{len(fmri.test_samples())} "
      "rank-1 hits share the source stimulus")

# ---- scored the way the decoding experiments are ------------------------
protocol = EvalProtocol(k_values=(1,), split="test")
decode_2way = {r.name.split("/")[1]: r.value
               for r in evaluate_experiment("decode", encoders, bundle.datasets, protocol)
               if r.name.endswith("/2way")}
print("\nconversion 2-way accuracies (normalized by target decoding):")
for report in evaluate_experiment("convert", encoders, bundle.datasets, protocol):
    pair = report.name.split("/")[1]
    target = pair.split("->")[1]
    norm = normalized_conversion_accuracy(report.value, decode_2way[target])
    print(f"  {pair}: {report.value:.4f}  normalized {norm:.4f}")
