"""End-to-end tests of the command-line workflow."""

import json
import os

import numpy as np
import pytest

from pse.audio_io import read_wav
from pse.cli import main

SIM_OVERRIDES = [
    "--override", "simulate.n_speakers=3",
    "--override", "simulate.utterances_per_speaker=2",
    "--override", "simulate.utterance_seconds=2.5",
    "--override", "simulate.enrollment_clips=2",
    "--override", "simulate.enrollment_clip_seconds=1.5",
    "--override", "simulate.n_noises=2",
    "--override", "simulate.noise_seconds=3.0",
    "--override", "simulate.train_samples=4",
    "--override", "simulate.valid_samples=2",
    "--override", "simulate.test_mixtures_per_scenario=2",
    "--override", "simulate.segment_seconds=1.5",
    "--override", "simulate.max_reflection_order=2",
]

TINY_MODEL_OVERRIDES = [
    "--override", "model.kind=pdccrn",
    "--override",
    'model.config={"encoder_filters":[4,8],"kernel":[5,2],"stride":[2,1],'
    '"lstm_hidden":32,"dvector_dim":128,"num_bins":256}',
    "--override", "train.max_steps=4",
    "--override", "train.validation_interval=2",
    "--override", "train.batch_size=2",
    "--override", "train.segment_seconds=1.5",
]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """simulate -> enroll -> train, shared by the command tests below."""
    root = tmp_path_factory.mktemp("cli")
    sim = root / "sim"
    assert main(["simulate", "--out", str(sim), "--seed", "7", *SIM_OVERRIDES]) == 0
    outputs = json.load(open(sim / "simulate_outputs.json"))

    enroll = root / "enroll"
    assert main(["enroll", "--out", str(enroll),
                 "--enrollment", outputs["enrollment"]]) == 0

    run = root / "run"
    assert main(["train", "--out", str(run),
                 "--train-manifest", outputs["train_manifest"],
                 "--valid-manifest", outputs["valid_manifest"],
                 "--enrollment", outputs["enrollment"],
                 "--seed", "7", *TINY_MODEL_OVERRIDES]) == 0
    return {"root": root, "sim": sim, "outputs": outputs,
            "checkpoint": str(run / "best.ckpt"),
            "dvectors": str(enroll / "dvectors.json")}


class TestSimulate:
    def test_outputs_exist(self, pipeline):
        outputs = pipeline["outputs"]
        for key in ("train_manifest", "valid_manifest", "ts1", "ts2", "ts3", "enrollment"):
            assert os.path.exists(outputs[key]), key
        assert os.path.exists(pipeline["sim"] / "resolved_config.json")

    def test_deterministic_manifests(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["simulate", "--out", str(out), "--seed", "7",
                         *SIM_OVERRIDES]) == 0
        for name in ("train.jsonl", "valid.jsonl"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        assert ((a / "test_sets" / "ts1.jsonl").read_bytes()
                == (b / "test_sets" / "ts1.jsonl").read_bytes())


class TestEnhance:
    def test_identity_mask_roundtrips_input(self, pipeline, tmp_path):
        outputs = pipeline["outputs"]
        record = json.loads(open(outputs["ts2"]).readline())
        wav_path = os.path.join(os.path.dirname(outputs["ts2"]), record["mixture_path"])
        out_wav = tmp_path / "identity.wav"
        assert main(["enhance", "--out", str(tmp_path),
                     "--checkpoint", pipeline["checkpoint"],
                     "--input", wav_path,
                     "--speaker", record["target_speaker_id"],
                     "--dvectors", pipeline["dvectors"],
                     "--output", str(out_wav), "--identity-mask"]) == 0
        original = read_wav(wav_path)
        roundtrip = read_wav(out_wav)
        n = len(original) - 512  # synthesis stops short of the last hop
        err = original.samples[:n] - roundtrip.samples[:n]
        snr = 10 * np.log10(np.sum(original.samples[:n] ** 2) / max(np.sum(err**2), 1e-20))
        assert snr > 40  # identity path, PCM16 quantization floor

    def test_enhance_with_enrollment_manifest(self, pipeline, tmp_path):
        outputs = pipeline["outputs"]
        record = json.loads(open(outputs["ts3"]).readline())
        wav_path = os.path.join(os.path.dirname(outputs["ts3"]), record["mixture_path"])
        assert main(["enhance", "--out", str(tmp_path),
                     "--checkpoint", pipeline["checkpoint"],
                     "--input", wav_path,
                     "--speaker", record["target_speaker_id"],
                     "--enrollment", outputs["enrollment"],
                     "--output", str(tmp_path / "enhanced.wav")]) == 0
        out = read_wav(tmp_path / "enhanced.wav")
        assert len(out) == len(read_wav(wav_path))

    def test_unknown_speaker_is_config_error(self, pipeline, tmp_path):
        outputs = pipeline["outputs"]
        record = json.loads(open(outputs["ts3"]).readline())
        wav_path = os.path.join(os.path.dirname(outputs["ts3"]), record["mixture_path"])
        rc = main(["enhance", "--out", str(tmp_path),
                   "--checkpoint", pipeline["checkpoint"],
                   "--input", wav_path, "--speaker", "ghost",
                   "--enrollment", outputs["enrollment"]])
        assert rc == 2


class TestEvaluateAndReport:
    def test_evaluate_writes_report(self, pipeline, tmp_path):
        outputs = pipeline["outputs"]
        out = tmp_path / "eval"
        assert main(["evaluate", "--out", str(out),
                     "--checkpoint", pipeline["checkpoint"],
                     "--enrollment", outputs["enrollment"],
                     "--ts1", outputs["ts1"], "--ts2", outputs["ts2"],
                     "--ts3", outputs["ts3"],
                     "--system-name", "tiny"]) == 0
        report = json.load(open(out / "report.json"))
        systems = {r["system"] for r in report["rows"]}
        assert systems == {"no_enhancement", "tiny"}
        assert os.path.exists(out / "records.jsonl")

    def test_report_merges_tables(self, pipeline, tmp_path):
        outputs = pipeline["outputs"]
        eval_dir = tmp_path / "eval"
        assert main(["evaluate", "--out", str(eval_dir),
                     "--checkpoint", pipeline["checkpoint"],
                     "--enrollment", outputs["enrollment"],
                     "--ts3", outputs["ts3"], "--system-name", "tiny"]) == 0
        out = tmp_path / "summary"
        assert main(["report", "--out", str(out),
                     "--inputs", str(eval_dir / "report.json")]) == 0
        table = open(out / "comparison.txt").read()
        assert "tiny" in table and "no_enhancement" in table

    def test_evaluate_without_scenarios_is_config_error(self, pipeline, tmp_path):
        rc = main(["evaluate", "--out", str(tmp_path),
                   "--checkpoint", pipeline["checkpoint"],
                   "--enrollment", pipeline["outputs"]["enrollment"]])
        assert rc == 2


class TestErrorReporting:
    def test_bad_config_exit_code(self, tmp_path, capsys):
        rc = main(["simulate", "--out", str(tmp_path),
                   "--override", "simulate.bogus=1"])
        assert rc == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["type"] == "config"

    def test_runtime_failure_exit_code(self, tmp_path, capsys):
        rc = main(["train", "--out", str(tmp_path),
                   "--train-manifest", "/nonexistent.jsonl",
                   "--valid-manifest", "/nonexistent.jsonl"])
        assert rc == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert "error" in err
