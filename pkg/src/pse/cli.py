"""Command-line workflow: simulate -> enroll -> train -> enhance -> evaluate
-> report.

Every command resolves its configuration (defaults < --config file <
--override flags), writes the resolved snapshot into the output directory,
and exits 0 on success, 2 on configuration errors, or 1 on runtime
failures. Errors emit a one-line JSON record on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ConfigError, load_config, stft_config_from, train_config_from, write_snapshot

DATA_ROOT_ENV = "PSE_DATA_ROOT"


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--override", action="append", default=[],
                        metavar="KEY.PATH=VALUE", help="config override (repeatable)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--preset", choices=("paper", "small"), help="model preset")
    parser.add_argument("--out", required=True, help="output directory")


def _resolve_out(args) -> str:
    root = os.environ.get(DATA_ROOT_ENV)
    if root and not os.path.isabs(args.out):
        return os.path.join(root, args.out)
    return args.out


def cmd_simulate(args) -> int:
    from .datasets import CorpusConfig, build_dataset, build_test_sets, concatenate_longform, make_corpus

    cfg = load_config(args.config, args.override, args.seed, args.preset)
    out = _resolve_out(args)
    os.makedirs(out, exist_ok=True)
    write_snapshot(cfg, out)
    sim = cfg["simulate"]
    corpus = make_corpus(out, CorpusConfig(
        n_speakers=sim["n_speakers"],
        utterances_per_speaker=sim["utterances_per_speaker"],
        utterance_seconds=sim["utterance_seconds"],
        enrollment_clips=sim["enrollment_clips"],
        enrollment_clip_seconds=sim["enrollment_clip_seconds"],
        n_noises=sim["n_noises"],
        noise_seconds=sim["noise_seconds"],
    ), seed=cfg["seed"])
    common = dict(segment_seconds=sim["segment_seconds"],
                  snr_db_range=tuple(sim["snr_db_range"]),
                  sir_db_range=tuple(sim["sir_db_range"]),
                  max_reflection_order=sim["max_reflection_order"])
    train_manifest = build_dataset(corpus, "train", sim["train_samples"], out,
                                   seed=cfg["seed"], ts1_fraction=sim["ts1_fraction"],
                                   **common)
    valid_manifest = build_dataset(corpus, "valid", sim["valid_samples"], out,
                                   seed=cfg["seed"] + 1, ts1_fraction=sim["ts1_fraction"],
                                   **common)
    test_dir = os.path.join(out, "test_sets")
    manifests = build_test_sets(corpus, test_dir, sim["test_mixtures_per_scenario"],
                                seed=cfg["seed"] + 2, **common)
    if sim["longform"]:
        manifests["longform"] = concatenate_longform(
            manifests["TS2"], os.path.join(test_dir, "longform"))
    summary = {"train_manifest": train_manifest, "valid_manifest": valid_manifest,
               **{k.lower() if k.startswith("TS") else k: v for k, v in manifests.items()}}
    with open(os.path.join(out, "simulate_outputs.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def cmd_enroll(args) -> int:
    from .audio_io import read_wav
    from .embedding import (MelStatsProvider, extract_dvector,
                            read_enrollment_manifest, save_dvector_cache)

    cfg = load_config(args.config, args.override, args.seed, args.preset)
    out = _resolve_out(args)
    os.makedirs(out, exist_ok=True)
    write_snapshot(cfg, out)
    emb = cfg["embedding"]
    provider = MelStatsProvider(dimension=emb["dimension"], num_bands=emb["num_bands"],
                                seed=emb["seed"])
    speakers = read_enrollment_manifest(args.enrollment)
    vectors = {sid: extract_dvector(provider, [read_wav(p) for p in paths], sid)
               for sid, paths in speakers.items()}
    cache_path = os.path.join(out, "dvectors.json")
    save_dvector_cache(cache_path, vectors, provider)
    print(json.dumps({"dvectors": cache_path, "speakers": sorted(vectors)}))
    return 0


def cmd_train(args) -> int:
    from .training import train

    cfg = load_config(args.config, args.override, args.seed, args.preset)
    out = _resolve_out(args)
    os.makedirs(out, exist_ok=True)
    write_snapshot(cfg, out)
    result = train(train_config_from(cfg), args.train_manifest, args.valid_manifest,
                   out, enrollment_manifest=args.enrollment,
                   stft_cfg=stft_config_from(cfg))
    summary = {"checkpoint": result.checkpoint_path, "log": result.log_path,
               "best_step": result.best_step, "best_valid_loss": result.best_valid_loss}
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_enhance(args) -> int:
    import numpy as np

    from .audio_io import read_wav, write_wav
    from .embedding import MelStatsProvider, extract_dvector, load_dvector_cache, read_enrollment_manifest
    from .models import enhance, model_from_checkpoint

    cfg = load_config(args.config, args.override, args.seed, args.preset)
    out = _resolve_out(args)
    os.makedirs(out, exist_ok=True)
    write_snapshot(cfg, out)
    model, stft_cfg, _ = model_from_checkpoint(args.checkpoint)

    if args.dvectors:
        dvec = load_dvector_cache(args.dvectors)[args.speaker]
    else:
        if not args.enrollment:
            raise ConfigError("enhance needs --dvectors or --enrollment")
        emb = cfg["embedding"]
        provider = MelStatsProvider(dimension=emb["dimension"],
                                    num_bands=emb["num_bands"], seed=emb["seed"])
        speakers = read_enrollment_manifest(args.enrollment)
        if args.speaker not in speakers:
            raise ConfigError(f"speaker {args.speaker!r} not in enrollment manifest")
        dvec = extract_dvector(provider, [read_wav(p) for p in speakers[args.speaker]],
                               args.speaker)

    noisy = read_wav(args.input)
    out_wav = enhance(model, noisy, dvec, stft_cfg, identity_mask=args.identity_mask)
    out_path = args.output or os.path.join(out, "enhanced.wav")
    write_wav(out_path, out_wav)
    print(json.dumps({"output": out_path, "seconds": out_wav.duration_s}))
    return 0


def cmd_evaluate(args) -> int:
    from .training import evaluate

    cfg = load_config(args.config, args.override, args.seed, args.preset)
    out = _resolve_out(args)
    os.makedirs(out, exist_ok=True)
    write_snapshot(cfg, out)
    manifests = {}
    for scenario, path in (("TS1", args.ts1), ("TS2", args.ts2), ("TS3", args.ts3)):
        if path:
            manifests[scenario] = path
    if not manifests:
        raise ConfigError("evaluate needs at least one of --ts1/--ts2/--ts3")
    report = evaluate(args.checkpoint, manifests, args.enrollment, out,
                      system_name=args.system_name)
    print(open(os.path.join(out, "report.txt")).read())
    return 0


def cmd_report(args) -> int:
    from .training import EvalReport, render_table

    out = _resolve_out(args)
    os.makedirs(out, exist_ok=True)
    rows = []
    for path in args.inputs:
        with open(path) as fh:
            payload = json.load(fh)
        rows.extend(payload["rows"])
    table = render_table(EvalReport(rows=rows))
    out_path = os.path.join(out, "comparison.txt")
    with open(out_path, "w") as fh:
        fh.write(table)
    print(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pse",
        description="Personalized speech enhancement workflow: "
                    "simulate, enroll, train, enhance, evaluate, report.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate corpus, datasets, and test sets")
    _add_common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("enroll", help="cache speaker d-vectors from enrollment audio")
    _add_common(p)
    p.add_argument("--enrollment", required=True, help="enrollment manifest (jsonl)")
    p.set_defaults(fn=cmd_enroll)

    p = sub.add_parser("train", help="train a model")
    _add_common(p)
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--valid-manifest", required=True)
    p.add_argument("--enrollment", help="enrollment manifest for d-vectors")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("enhance", help="enhance one WAV for an enrolled speaker")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="noisy input WAV")
    p.add_argument("--speaker", required=True, help="target speaker id")
    p.add_argument("--enrollment", help="enrollment manifest")
    p.add_argument("--dvectors", help="cached d-vector file from `pse enroll`")
    p.add_argument("--output", help="output WAV path")
    p.add_argument("--identity-mask", action="store_true",
                   help="debug: bypass the model with a unit mask")
    p.set_defaults(fn=cmd_enhance)

    p = sub.add_parser("evaluate", help="run a checkpoint over the test scenarios")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--enrollment", required=True)
    p.add_argument("--ts1")
    p.add_argument("--ts2")
    p.add_argument("--ts3")
    p.add_argument("--system-name", help="row label in the report")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", help="merge evaluation reports into one table")
    _add_common(p)
    p.add_argument("--inputs", nargs="+", required=True, help="report.json files")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(json.dumps({"error": str(e), "type": "config"}), file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure: report and signal
        print(json.dumps({"error": str(e), "type": e.__class__.__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
