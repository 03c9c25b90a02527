import filecmp
import json
import subprocess
import sys
from pathlib import Path

import pytest

PKG = [sys.executable, "-m", "neuralign"]


def run(*argv, cwd=None, env=None):
    return subprocess.run(PKG + [str(a) for a in argv], capture_output=True,
                          text=True, cwd=cwd, env=env)


def synth(out, **kw):
    args = ["synth", "--out", out,
            "--modalities", kw.get("modalities", "fmri=8,eeg=2x4"),
            "--embed-dim", 8, "--num-stimuli", 60, "--num-test", 12,
            "--subjects", 2, "--seed", 5]
    r = run(*args)
    assert r.returncode == 0, r.stderr
    return Path(out)


def train(manifest, out, epochs, channels=8):
    r = run("train", "--manifest", manifest, "--arch", "small",
            "--hidden", 32, "--channels", channels, "--batch-size", 16,
            "--epochs", epochs, "--seed", 5, "--out", out)
    assert r.returncode == 0, r.stderr
    return Path(out)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = synth(root / "data")
    train(data / "fmri" / "manifest.json", root / "run_fmri", epochs=120)
    train(data / "eeg" / "manifest.json", root / "run_eeg", epochs=700)
    return root


def test_synth_writes_manifests_and_run_manifest(tmp_path):
    out = synth(tmp_path / "d")
    assert (out / "fmri" / "manifest.json").exists()
    assert (out / "eeg" / "manifest.json").exists()
    doc = json.loads((out / "run_synth.json").read_text())
    assert doc["command"] == "synth"
    assert doc["resolved"]["seed"] == 5


def test_train_then_eval_reaches_perfect_decode(pipeline):
    r = run("eval",
            "--checkpoint", f"fmri={pipeline}/run_fmri/checkpoint",
            "--manifest", f"fmri={pipeline}/data/fmri/manifest.json",
            "--out", pipeline / "eval_fmri")
    assert r.returncode == 0, r.stderr
    reports = json.loads((pipeline / "eval_fmri" / "eval_decode.json").read_text())
    two_way = [x for x in reports if x["name"] == "decode/fmri/2way"]
    assert two_way and two_way[0]["value"] == 1.0
    assert "decoding:" in r.stdout


def test_decode_hits_match_own_stimuli(pipeline):
    r = run("decode", "--checkpoint", pipeline / "run_fmri" / "checkpoint",
            "--manifest", pipeline / "data" / "fmri" / "manifest.json",
            "--k", 1, "--out", pipeline / "dec")
    assert r.returncode == 0, r.stderr
    rows = json.loads((pipeline / "dec" / "decode_hits.json").read_text())
    rank1 = [x for x in rows if x["rank"] == 1]
    assert rank1 and all(x["query_id"].endswith(x["hit_id"]) for x in rank1)
    csv = (pipeline / "dec" / "decode_hits.csv").read_text().splitlines()
    assert csv[0] == "query_id,rank,hit_id,score"
    assert len(csv) == len(rows) + 1


def test_encode_command_by_stimulus_id(pipeline):
    manifest = pipeline / "data" / "fmri" / "manifest.json"
    doc = json.loads(manifest.read_text())
    test_stimuli = {s["stimulus_id"] for s in doc["samples"] if s["split"] == "test"}
    target = sorted(test_stimuli)[0]
    r = run("encode", "--checkpoint", pipeline / "run_fmri" / "checkpoint",
            "--manifest", manifest, "--stimulus-id", target,
            "--k", 1, "--out", pipeline / "enc")
    assert r.returncode == 0, r.stderr
    rows = json.loads((pipeline / "enc" / "encode_hits.json").read_text())
    assert rows[0]["hit_id"].endswith(target)


def test_convert_command_between_modalities(pipeline):
    r = run("convert",
            "--source-checkpoint", pipeline / "run_fmri" / "checkpoint",
            "--source-manifest", pipeline / "data" / "fmri" / "manifest.json",
            "--target-checkpoint", pipeline / "run_eeg" / "checkpoint",
            "--target-manifest", pipeline / "data" / "eeg" / "manifest.json",
            "--k", 1, "--out", pipeline / "conv")
    assert r.returncode == 0, r.stderr
    rows = json.loads((pipeline / "conv" / "convert_hits.json").read_text())
    rank1 = [x for x in rows if x["rank"] == 1]
    # noiseless identity data: the retrieved eeg sample shares the stimulus
    matches = sum(x["hit_id"].split("stim-")[1] == x["query_id"].split("stim-")[1]
                  for x in rank1)
    assert matches == len(rank1)


def test_eval_with_two_modalities_writes_conversion_report(pipeline):
    r = run("eval",
            "--checkpoint", f"fmri={pipeline}/run_fmri/checkpoint",
            "--checkpoint", f"eeg={pipeline}/run_eeg/checkpoint",
            "--manifest", f"fmri={pipeline}/data/fmri/manifest.json",
            "--manifest", f"eeg={pipeline}/data/eeg/manifest.json",
            "--out", pipeline / "eval_all")
    assert r.returncode == 0, r.stderr
    conv = json.loads((pipeline / "eval_all" / "eval_convert.json").read_text())
    pairs = {(c["source"], c["target"]) for c in conv}
    assert pairs == {("fmri", "eeg"), ("eeg", "fmri")}
    assert all(c["normalized"] == 1.0 for c in conv)
    assert "conversion:" in r.stdout


def test_missing_manifest_exits_2_without_outputs(tmp_path):
    out = tmp_path / "never"
    r = run("train", "--manifest", tmp_path / "nope.json", "--out", out)
    assert r.returncode == 2
    assert "error:" in r.stderr
    assert not out.exists()


def test_invalid_manifest_exits_2(tmp_path):
    out = synth(tmp_path / "d", modalities="fmri=8")
    manifest = out / "fmri" / "manifest.json"
    doc = json.loads(manifest.read_text())
    doc["samples"][0]["stimulus_id"] = "stim-missing"
    manifest.write_text(json.dumps(doc))
    r = run("train", "--manifest", manifest, "--out", tmp_path / "never")
    assert r.returncode == 2
    assert not (tmp_path / "never").exists()


def test_bad_arguments_exit_2():
    assert run("train").returncode == 2
    assert run("frobnicate").returncode == 2


def test_runtime_error_exits_3(pipeline):
    # valid files, but the checkpoint's modality cannot encode eeg samples
    r = run("decode", "--checkpoint", pipeline / "run_fmri" / "checkpoint",
            "--manifest", pipeline / "data" / "eeg" / "manifest.json",
            "--k", 1, "--out", pipeline / "bad")
    assert r.returncode == 3
    assert "error:" in r.stderr


def test_identical_invocations_are_byte_identical(tmp_path):
    data = synth(tmp_path / "data", modalities="fmri=8")
    manifest = data / "fmri" / "manifest.json"
    for out in ("a", "b"):
        train(manifest, tmp_path / out, epochs=5)
        r = run("eval", "--checkpoint", f"fmri={tmp_path / out}/checkpoint",
                "--manifest", f"fmri={manifest}", "--out", tmp_path / out / "eval")
        assert r.returncode == 0, r.stderr

    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "loss_curve.csv").read_bytes() == (b / "loss_curve.csv").read_bytes()
    match, mismatch, errors = filecmp.cmpfiles(
        a / "checkpoint", b / "checkpoint",
        [p.relative_to(a / "checkpoint").as_posix()
         for p in sorted((a / "checkpoint").rglob("*")) if p.is_file()],
        shallow=False)
    assert not mismatch and not errors
    for name in ("eval_decode.json", "eval_encode.json"):
        assert (a / "eval" / name).read_bytes() == (b / "eval" / name).read_bytes()


def test_out_dir_env_var(tmp_path):
    import os
    env = dict(os.environ, NEURALIGN_OUT=str(tmp_path / "envout"))
    r = run("synth", "--modalities", "fmri=8", "--embed-dim", 8,
            "--num-stimuli", 10, "--num-test", 2, "--seed", 1, env=env)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "envout" / "fmri" / "manifest.json").exists()
