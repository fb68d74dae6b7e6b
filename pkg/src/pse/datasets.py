"""Desk-scale corpus fabrication and dataset manifests.

A corpus is a directory of synthetic speaker utterances (train/test pools
plus held-out enrollment clips) and noise files, with disjoint noise and
room-seed pools per split. Datasets are JSON-lines manifests whose entries
point at simulated mixture/reference WAV pairs; the whole generation chain
is a pure function of the corpus definition and a seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .audio_io import read_wav, write_wav
from .room import MixtureSpec, RoomSpec, synthesize_mixture
from .synth import make_speaker, noise_waveform, speaker_utterance

SPLITS = ("train", "valid", "test")
SCENARIOS = ("TS1", "TS2", "TS3")


@dataclass(frozen=True)
class CorpusConfig:
    n_speakers: int = 6
    utterances_per_speaker: int = 4      # per split pool
    utterance_seconds: float = 6.0
    enrollment_clips: int = 3
    enrollment_clip_seconds: float = 4.0
    n_noises: int = 4                    # per split pool
    noise_seconds: float = 8.0

    def __post_init__(self):
        if self.n_speakers < 2:
            raise ValueError("need at least two speakers (target + interferer)")


def _derived_seed(*parts) -> np.random.SeedSequence:
    return np.random.SeedSequence(list(parts))


def make_corpus(out_dir: str | os.PathLike, cfg: CorpusConfig = CorpusConfig(),
                seed: int = 0) -> dict:
    """Generate speaker/noise WAV pools and write ``corpus.json``.

    Enrollment clips are reserved per speaker and never entered into any
    mixture pool. Noise files and room seeds are split disjointly across
    train/valid/test.
    """
    out_dir = os.fspath(out_dir)
    audio_dir = os.path.join(out_dir, "corpus")
    os.makedirs(audio_dir, exist_ok=True)

    speakers = {}
    for i in range(cfg.n_speakers):
        sid = f"spk{i:02d}"
        voice_seed = int(_derived_seed(seed, 1, i).generate_state(1)[0])
        voice = make_speaker(sid, voice_seed)
        entry = {"voice_seed": voice_seed, "enroll": [], "pools": {s: [] for s in SPLITS}}
        for k in range(cfg.enrollment_clips):
            w = speaker_utterance(voice, cfg.enrollment_clip_seconds, seed=90_000 + k)
            rel = os.path.join("corpus", f"{sid}_enroll{k}.wav")
            write_wav(os.path.join(out_dir, rel), w)
            entry["enroll"].append(rel)
        for split_idx, split in enumerate(SPLITS):
            for k in range(cfg.utterances_per_speaker):
                w = speaker_utterance(voice, cfg.utterance_seconds,
                                      seed=1000 * (split_idx + 1) + k)
                rel = os.path.join("corpus", f"{sid}_{split}{k}.wav")
                write_wav(os.path.join(out_dir, rel), w)
                entry["pools"][split].append(rel)
        speakers[sid] = entry

    noises = {s: [] for s in SPLITS}
    for split_idx, split in enumerate(SPLITS):
        for k in range(cfg.n_noises):
            noise_seed = int(_derived_seed(seed, 2, split_idx, k).generate_state(1)[0])
            w = noise_waveform(noise_seed, cfg.noise_seconds)
            rel = os.path.join("corpus", f"noise_{split}{k}.wav")
            write_wav(os.path.join(out_dir, rel), w)
            noises[split].append({"id": f"noise_{split}{k}", "path": rel})

    room_seed_base = {s: int(_derived_seed(seed, 3, i).generate_state(1)[0])
                      for i, s in enumerate(SPLITS)}
    corpus = {
        "root": out_dir,
        "seed": seed,
        "speakers": speakers,
        "noises": noises,
        "room_seed_base": room_seed_base,
    }
    with open(os.path.join(out_dir, "corpus.json"), "w") as fh:
        json.dump(corpus, fh, indent=1, sort_keys=True)
    return corpus


def load_corpus(out_dir: str | os.PathLike) -> dict:
    with open(os.path.join(os.fspath(out_dir), "corpus.json")) as fh:
        corpus = json.load(fh)
    corpus["root"] = os.fspath(out_dir)
    return corpus


def _sample_room(rng: np.random.Generator,
                 length_range=(3.0, 8.0), width_range=(3.0, 8.0),
                 height_range=(2.5, 4.0), absorption_range=(0.3, 0.8),
                 max_reflection_order: int = 6) -> RoomSpec:
    dims = (rng.uniform(*length_range), rng.uniform(*width_range), rng.uniform(*height_range))
    absorption = rng.uniform(*absorption_range)
    return RoomSpec(dims, absorption, max_reflection_order)


def _check_pool_disjoint(corpus: dict, split: str):
    mine = {n["id"] for n in corpus["noises"][split]}
    for other in SPLITS:
        if other == split:
            continue
        overlap = mine & {n["id"] for n in corpus["noises"][other]}
        if overlap:
            raise ValueError(f"noise pools overlap between {split} and {other}: {overlap}")


def build_dataset(corpus: dict, split: str, n_samples: int,
                  out_dir: str | os.PathLike, seed: int = 0,
                  ts1_fraction: float = 0.6, segment_seconds: float = 10.0,
                  snr_db_range=(0.0, 20.0), sir_db_range=(0.0, 10.0),
                  max_reflection_order: int = 6) -> str:
    """Simulate ``n_samples`` mixtures for a split and write a manifest.

    Exactly ``round(ts1_fraction * n_samples)`` samples include an
    interfering speaker; the remainder are target + noise only. Returns the
    manifest path.
    """
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    _check_pool_disjoint(corpus, split)
    out_dir = os.fspath(out_dir)
    wav_dir = os.path.join(out_dir, f"{split}_wavs")
    os.makedirs(wav_dir, exist_ok=True)

    root = corpus["root"]
    speaker_ids = sorted(corpus["speakers"])
    noises = corpus["noises"][split]
    n_ts1 = int(round(ts1_fraction * n_samples))

    manifest_path = os.path.join(out_dir, f"{split}.jsonl")
    with open(manifest_path, "w") as fh:
        for index in range(n_samples):
            ss = _derived_seed(seed, corpus["room_seed_base"][split], index)
            rng = np.random.default_rng(ss)
            scenario = "TS1" if index < n_ts1 else "TS2"
            target_id = speaker_ids[rng.integers(len(speaker_ids))]
            pool = corpus["speakers"][target_id]["pools"][split]
            target = read_wav(os.path.join(root, pool[rng.integers(len(pool))]))
            interferer = None
            interferer_id = None
            if scenario == "TS1":
                others = [s for s in speaker_ids if s != target_id]
                interferer_id = others[rng.integers(len(others))]
                ipool = corpus["speakers"][interferer_id]["pools"][split]
                interferer = read_wav(os.path.join(root, ipool[rng.integers(len(ipool))]))
            noise_entry = noises[rng.integers(len(noises))]
            noise = read_wav(os.path.join(root, noise_entry["path"]))

            room = _sample_room(rng, max_reflection_order=max_reflection_order)
            spec = MixtureSpec(
                scenario=scenario,
                target_speaker_id=target_id,
                interferer_id=interferer_id,
                noise_id=noise_entry["id"],
                snr_db_range=tuple(snr_db_range),
                sir_db_range=tuple(sir_db_range),
                segment_seconds=segment_seconds,
                seed=int(rng.integers(2**31)),
            )
            sample = synthesize_mixture(spec, room, target, interferer, noise)

            sample_id = f"{split}_{index:05d}"
            mixture_rel = os.path.join(f"{split}_wavs", f"{sample_id}_mix.wav")
            reference_rel = os.path.join(f"{split}_wavs", f"{sample_id}_ref.wav")
            write_wav(os.path.join(out_dir, mixture_rel), sample.mixture)
            write_wav(os.path.join(out_dir, reference_rel), sample.target_reverberant)
            record = {
                "sample_id": sample_id,
                "mixture_path": mixture_rel,
                "reference_path": reference_rel,
                **sample.metadata,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return manifest_path


def build_test_sets(corpus: dict, out_dir: str | os.PathLike,
                    mixtures_per_scenario: int = 12, seed: int = 0,
                    segment_seconds: float = 10.0,
                    snr_db_range=(0.0, 20.0), sir_db_range=(0.0, 10.0),
                    max_reflection_order: int = 6) -> dict:
    """Build TS1/TS2/TS3 manifests plus the enrollment manifest.

    Test mixtures draw only from the held-out test pools; enrollment clips
    were reserved at corpus creation and appear in no mixture.
    """
    _check_pool_disjoint(corpus, "test")
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    root = corpus["root"]
    speaker_ids = sorted(corpus["speakers"])

    enrollment_path = os.path.join(out_dir, "enrollment.jsonl")
    with open(enrollment_path, "w") as fh:
        for sid in speaker_ids:
            wavs = [os.path.join(root, p) for p in corpus["speakers"][sid]["enroll"]]
            if not wavs:
                raise ValueError(f"speaker {sid} has no enrollment audio")
            fh.write(json.dumps({"speaker_id": sid, "wavs": wavs}, sort_keys=True) + "\n")

    noises = corpus["noises"]["test"]
    manifests = {"enrollment": enrollment_path}
    for scen_idx, scenario in enumerate(SCENARIOS):
        wav_dir = os.path.join(out_dir, f"{scenario.lower()}_wavs")
        os.makedirs(wav_dir, exist_ok=True)
        manifest_path = os.path.join(out_dir, f"{scenario.lower()}.jsonl")
        with open(manifest_path, "w") as fh:
            for index in range(mixtures_per_scenario):
                ss = _derived_seed(seed, corpus["room_seed_base"]["test"], scen_idx, index)
                rng = np.random.default_rng(ss)
                target_id = speaker_ids[index % len(speaker_ids)]
                pool = corpus["speakers"][target_id]["pools"]["test"]
                target = read_wav(os.path.join(root, pool[rng.integers(len(pool))]))
                interferer = interferer_id = None
                noise = noise_id = None
                if scenario == "TS1":
                    others = [s for s in speaker_ids if s != target_id]
                    interferer_id = others[rng.integers(len(others))]
                    ipool = corpus["speakers"][interferer_id]["pools"]["test"]
                    interferer = read_wav(os.path.join(root, ipool[rng.integers(len(ipool))]))
                if scenario in ("TS1", "TS2"):
                    entry = noises[rng.integers(len(noises))]
                    noise, noise_id = read_wav(os.path.join(root, entry["path"])), entry["id"]

                room = _sample_room(rng, max_reflection_order=max_reflection_order)
                spec = MixtureSpec(
                    scenario=scenario,
                    target_speaker_id=target_id,
                    interferer_id=interferer_id,
                    noise_id=noise_id,
                    snr_db_range=tuple(snr_db_range),
                    sir_db_range=tuple(sir_db_range),
                    segment_seconds=segment_seconds,
                    seed=int(rng.integers(2**31)),
                )
                sample = synthesize_mixture(spec, room, target, interferer, noise)
                sample_id = f"{scenario.lower()}_{index:05d}"
                mixture_rel = os.path.join(f"{scenario.lower()}_wavs", f"{sample_id}_mix.wav")
                reference_rel = os.path.join(f"{scenario.lower()}_wavs", f"{sample_id}_ref.wav")
                write_wav(os.path.join(out_dir, mixture_rel), sample.mixture)
                write_wav(os.path.join(out_dir, reference_rel), sample.target_reverberant)
                record = {
                    "sample_id": sample_id,
                    "mixture_path": mixture_rel,
                    "reference_path": reference_rel,
                    **sample.metadata,
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        manifests[scenario] = manifest_path
    return manifests


def read_manifest(path: str | os.PathLike) -> list[dict]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records:
        raise ValueError(f"manifest {path} is empty")
    return records


def concatenate_longform(manifest_path: str | os.PathLike,
                         out_dir: str | os.PathLike) -> str:
    """Concatenate each speaker's mixtures into one long file per speaker.

    Emulates long-duration evaluation under changing acoustic conditions.
    Returns the path of the long-form manifest.
    """
    records = read_manifest(manifest_path)
    base = os.path.dirname(os.fspath(manifest_path))
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    by_speaker: dict[str, list[dict]] = {}
    for r in records:
        by_speaker.setdefault(r["target_speaker_id"], []).append(r)

    longform_path = os.path.join(out_dir, "longform.jsonl")
    from .dsp import Waveform

    with open(longform_path, "w") as fh:
        for sid in sorted(by_speaker):
            entries = by_speaker[sid]
            mix = np.concatenate(
                [read_wav(os.path.join(base, r["mixture_path"])).samples for r in entries])
            ref = np.concatenate(
                [read_wav(os.path.join(base, r["reference_path"])).samples for r in entries])
            mix_rel = f"longform_{sid}_mix.wav"
            ref_rel = f"longform_{sid}_ref.wav"
            write_wav(os.path.join(out_dir, mix_rel), Waveform(mix))
            write_wav(os.path.join(out_dir, ref_rel), Waveform(ref))
            fh.write(json.dumps({
                "speaker_id": sid,
                "mixture_path": mix_rel,
                "reference_path": ref_rel,
                "seconds": len(mix) / 16000,
                "segments": [r["sample_id"] for r in entries],
            }, sort_keys=True) + "\n")
    return longform_path
