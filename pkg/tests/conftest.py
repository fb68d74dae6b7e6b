"""Shared fixtures: one tiny simulated corpus reused by the slower tests."""

import pytest

from pse.datasets import CorpusConfig, build_dataset, build_test_sets, make_corpus

# minimal architectures for fast training-loop tests (not the small preset)
TINY_PDCATTUNET = {
    "encoder_filters": [4, 8], "decoder_filters": [8, 4],
    "bottleneck_hidden": 32, "num_heads": 4, "num_bottleneck_blocks": 1,
    "pool_factor": 2, "dvector_dim": 128, "num_bins": 256,
    "kernel": [5, 2], "bottleneck_kernel": 3,
}
TINY_PDCCRN = {
    "encoder_filters": [4, 8], "kernel": [5, 2], "stride": [2, 1],
    "lstm_hidden": 32, "dvector_dim": 128, "num_bins": 256,
}


@pytest.fixture(scope="session")
def desk_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    corpus = make_corpus(root, CorpusConfig(
        n_speakers=3, utterances_per_speaker=2, utterance_seconds=2.5,
        enrollment_clips=2, enrollment_clip_seconds=1.5,
        n_noises=2, noise_seconds=3.0), seed=42)
    common = dict(segment_seconds=1.5, max_reflection_order=2)
    train_manifest = build_dataset(corpus, "train", 6, root, seed=1, **common)
    valid_manifest = build_dataset(corpus, "valid", 2, root, seed=2, **common)
    manifests = build_test_sets(corpus, root / "test_sets", mixtures_per_scenario=2,
                                seed=3, **common)
    return {
        "root": root,
        "corpus": corpus,
        "train": train_manifest,
        "valid": valid_manifest,
        "ts": {k: v for k, v in manifests.items() if k.startswith("TS")},
        "enrollment": manifests["enrollment"],
    }
