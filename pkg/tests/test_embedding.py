"""Tests for the speaker embedding provider and its manifest plumbing."""

import json

import numpy as np
import pytest

from pse.dsp import Waveform
from pse.embedding import (
    DVector,
    MelStatsProvider,
    extract_dvector,
    extract_dvector_from_noisy,
    load_dvector_cache,
    mel_filterbank,
    read_enrollment_manifest,
    save_dvector_cache,
)
from pse.synth import make_speaker, noise_waveform, speaker_utterance

PROVIDER = MelStatsProvider()

SPEAKER_LOW = make_speaker("low", seed=11, band_hz=(200, 1800))
SPEAKER_HIGH = make_speaker("high", seed=22, band_hz=(2400, 5600))


def band_energy_fraction(w: Waveform, low_hz: float, high_hz: float) -> float:
    """Oracle: fraction of spectral energy inside [low_hz, high_hz]."""
    spectrum = np.abs(np.fft.rfft(w.samples)) ** 2
    freqs = np.fft.rfftfreq(len(w), 1 / w.sample_rate_hz)
    sel = (freqs >= low_hz) & (freqs <= high_hz)
    return spectrum[sel].sum() / spectrum.sum()


class TestDVector:
    def test_requires_unit_norm(self):
        with pytest.raises(ValueError, match="unit norm"):
            DVector(np.ones(4))

    def test_cosine(self):
        a = DVector(np.array([1.0, 0.0]))
        b = DVector(np.array([0.0, 1.0]))
        assert a.cosine(b) == 0.0
        assert a.cosine(a) == pytest.approx(1.0)


class TestMelStatsProvider:
    def test_deterministic(self):
        utt = speaker_utterance(SPEAKER_LOW, 2.0, seed=0)
        a = extract_dvector(PROVIDER, [utt])
        b = extract_dvector(PROVIDER, [Waveform(utt.samples.copy())])
        np.testing.assert_array_equal(a.values, b.values)

    def test_unit_norm(self):
        utt = speaker_utterance(SPEAKER_HIGH, 1.5, seed=1)
        dv = extract_dvector(PROVIDER, [utt])
        assert np.linalg.norm(dv.values) == pytest.approx(1.0, abs=1e-9)
        assert dv.dimension == 128

    def test_scale_invariance(self):
        utt = speaker_utterance(SPEAKER_LOW, 2.0, seed=2)
        dv1 = extract_dvector(PROVIDER, [utt])
        dv2 = extract_dvector(PROVIDER, [Waveform(0.25 * utt.samples)])
        np.testing.assert_allclose(dv1.values, dv2.values, atol=1e-5)

    def test_disjoint_band_speakers_separate(self):
        # oracle first: the synthetic speakers really occupy disjoint bands
        low_utts = [speaker_utterance(SPEAKER_LOW, 2.0, seed=s) for s in (0, 1)]
        high_utts = [speaker_utterance(SPEAKER_HIGH, 2.0, seed=s) for s in (0, 1)]
        for u in low_utts:
            assert band_energy_fraction(u, 150, 1900) > 0.95
        for u in high_utts:
            assert band_energy_fraction(u, 2300, 5700) > 0.95
        dv_low = [extract_dvector(PROVIDER, [u]) for u in low_utts]
        dv_high = [extract_dvector(PROVIDER, [u]) for u in high_utts]
        same = min(dv_low[0].cosine(dv_low[1]), dv_high[0].cosine(dv_high[1]))
        cross = max(a.cosine(b) for a in dv_low for b in dv_high)
        assert same > cross

    def test_multi_utterance_is_normalized_mean(self):
        utts = [speaker_utterance(SPEAKER_LOW, 1.5, seed=s) for s in (3, 4)]
        dv = extract_dvector(PROVIDER, utts)
        singles = [extract_dvector(PROVIDER, [u]).values for u in utts]
        mean = np.mean(singles, axis=0)
        np.testing.assert_allclose(dv.values, mean / np.linalg.norm(mean), atol=1e-12)

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            extract_dvector(PROVIDER, [])

    def test_silent_input_rejected(self):
        with pytest.raises(ValueError, match="silent"):
            extract_dvector(PROVIDER, [Waveform(np.zeros(32000))])

    def test_too_short_rejected(self):
        with pytest.raises(ValueError, match="short"):
            extract_dvector(PROVIDER, [Waveform(np.ones(1600) * 0.1)])


class TestNoisyExtraction:
    def test_clean_equals_singleton_path(self):
        utt = speaker_utterance(SPEAKER_HIGH, 2.0, seed=5)
        a = extract_dvector_from_noisy(PROVIDER, utt)
        b = extract_dvector(PROVIDER, [utt])
        np.testing.assert_array_equal(a.values, b.values)

    def test_noisy_stays_close_to_clean_at_10db(self):
        utt = speaker_utterance(SPEAKER_LOW, 3.0, seed=6)
        noise = noise_waveform(seed=99, seconds=3.0)
        sig_rms = np.sqrt(np.mean(utt.samples**2))
        noise_rms = np.sqrt(np.mean(noise.samples**2))
        scaled = noise.samples[: len(utt)] * (sig_rms / noise_rms) * 10 ** (-10 / 20)
        noisy = Waveform(utt.samples + scaled)
        dv_clean = extract_dvector_from_noisy(PROVIDER, utt)
        dv_noisy = extract_dvector_from_noisy(PROVIDER, noisy)
        assert dv_clean.cosine(dv_noisy) > 0.5

    def test_silent_rejected(self):
        with pytest.raises(ValueError, match="silent"):
            extract_dvector_from_noisy(PROVIDER, Waveform(np.zeros(32000)))


class TestMelFilterbank:
    def test_shape_and_coverage(self):
        fb = mel_filterbank(64, 257, 16000)
        assert fb.shape == (64, 257)
        assert np.all(fb >= 0)
        # every band has support; interior bins covered by some filter
        assert np.all(fb.sum(axis=1) > 0)
        assert np.all(fb[:, 5:-5].sum(axis=0) > 0)


class TestManifestAndCache:
    def test_roundtrip(self, tmp_path):
        manifest = tmp_path / "enroll.jsonl"
        with open(manifest, "w") as fh:
            fh.write(json.dumps({"speaker_id": "spk0", "wavs": ["a.wav", "b.wav"]}) + "\n")
            fh.write(json.dumps({"speaker_id": "spk1", "wavs": ["/abs/c.wav"]}) + "\n")
        speakers = read_enrollment_manifest(manifest)
        assert set(speakers) == {"spk0", "spk1"}
        assert speakers["spk0"][0] == str(tmp_path / "a.wav")
        assert speakers["spk1"] == ["/abs/c.wav"]

    def test_duplicate_speaker_rejected(self, tmp_path):
        manifest = tmp_path / "enroll.jsonl"
        rec = json.dumps({"speaker_id": "x", "wavs": ["a.wav"]})
        manifest.write_text(rec + "\n" + rec + "\n")
        with pytest.raises(ValueError, match="duplicate"):
            read_enrollment_manifest(manifest)

    def test_cache_roundtrip(self, tmp_path):
        utt = speaker_utterance(SPEAKER_LOW, 1.5, seed=8)
        dv = extract_dvector(PROVIDER, [utt], source_id="spk0")
        path = tmp_path / "dvectors.json"
        save_dvector_cache(path, {"spk0": dv}, PROVIDER)
        loaded = load_dvector_cache(path)
        np.testing.assert_allclose(loaded["spk0"].values, dv.values, atol=1e-12)

    def test_cache_version_checked(self, tmp_path):
        path = tmp_path / "dvectors.json"
        path.write_text(json.dumps({"format_version": 99, "dimension": 2, "vectors": {}}))
        with pytest.raises(ValueError, match="version"):
            load_dvector_cache(path)
