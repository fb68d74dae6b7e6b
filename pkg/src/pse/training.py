"""Training loop with validation-based checkpoint selection, plus the
scenario-stratified evaluation harness.

Training is fully seeded: model init, batch sampling, and segment cropping
all derive from the config seed, so identical configs reproduce identical
parameters. Validation runs at a fixed interval (and at the last step); the
checkpoint with the lowest validation loss is the one retained.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .audio_io import read_wav
from .datasets import read_manifest
from .dsp import StftConfig, Waveform, stft
from .embedding import (
    DVector,
    EmbeddingProvider,
    MelStatsProvider,
    extract_dvector,
    extract_dvector_from_noisy,
    read_enrollment_manifest,
)
from .losses import LossParams, ToyConvBackend, combined_loss
from .metrics import MetricParams, si_sdr, tsos_frames, tsos_report
from .models import build_model, enhance, model_from_checkpoint, preset_config, save_checkpoint

DEFAULT_ALPHA = {"plcpa": 0.5, "plcpa_asym": 0.9}


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, breakdown: dict):
        super().__init__(f"non-finite loss at step {step}: {breakdown}")
        self.step = step
        self.breakdown = breakdown


@dataclass
class TrainConfig:
    model_kind: str = "pdcattunet"
    preset: str = "small"
    model_config: dict | None = None     # overrides the preset when given
    loss: str = "plcpa"                  # plcpa | plcpa_asym
    alpha: float | None = None           # defaults to 0.5 / 0.9 per loss kind
    beta: float = 1.0
    p: float = 0.3
    mt_enabled: bool = False
    mt_lambda: float = 1.0
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    grad_clip: float = 5.0
    batch_size: int = 4
    segment_seconds: float = 10.0
    max_steps: int = 500
    validation_interval: int = 100
    seed: int = 0
    dvector_source: str | None = None    # enrollment | noisy; None = auto

    def resolved_alpha(self) -> float:
        return DEFAULT_ALPHA[self.loss] if self.alpha is None else self.alpha

    def loss_params(self) -> LossParams:
        return LossParams(p=self.p, alpha=self.resolved_alpha(), beta=self.beta,
                          lambda_mt=self.mt_lambda)

    def resolved_dvector_source(self) -> str:
        if self.dvector_source is not None:
            return self.dvector_source
        # without enrollment audio for the auxiliary-task data, speaker
        # vectors come from the noisy utterances themselves
        return "noisy" if self.mt_enabled else "enrollment"

    def resolved_model_config(self):
        if self.model_config is not None:
            from .models import config_from_dict

            return config_from_dict(self.model_kind, dict(self.model_config))
        return preset_config(self.model_kind, self.preset)


@dataclass
class TrainResult:
    checkpoint_path: str
    log_path: str
    best_step: int
    best_valid_loss: float
    first_train_loss: float
    last_train_loss: float


def _speaker_dvectors(enrollment_manifest, provider: EmbeddingProvider) -> dict[str, DVector]:
    speakers = read_enrollment_manifest(enrollment_manifest)
    return {
        sid: extract_dvector(provider, [read_wav(p) for p in paths], source_id=sid)
        for sid, paths in speakers.items()
    }


def _load_samples(manifest_path, stft_cfg: StftConfig, provider: EmbeddingProvider,
                  dvector_source: str, enrollment_manifest=None):
    records = read_manifest(manifest_path)
    base = os.path.dirname(os.fspath(manifest_path))
    dvectors = None
    if dvector_source == "enrollment":
        if enrollment_manifest is None:
            raise ValueError("enrollment-based d-vectors need an enrollment manifest")
        dvectors = _speaker_dvectors(enrollment_manifest, provider)
    samples = []
    for r in records:
        mixture = read_wav(os.path.join(base, r["mixture_path"]))
        reference = read_wav(os.path.join(base, r["reference_path"]))
        if dvector_source == "enrollment":
            dv = dvectors[r["target_speaker_id"]]
        else:
            dv = extract_dvector_from_noisy(provider, mixture, r["target_speaker_id"])
        samples.append({
            "id": r["sample_id"],
            "noisy": torch.from_numpy(stft(mixture, stft_cfg).values.astype(np.complex64)),
            "ref": torch.from_numpy(stft(reference, stft_cfg).values.astype(np.complex64)),
            "dvec": torch.from_numpy(dv.values.astype(np.float32)),
        })
    return samples


def _batch(samples, indices, segment_frames, rng):
    noisy, ref, dvec = [], [], []
    for i in indices:
        s = samples[i]
        t = s["noisy"].shape[0]
        if t > segment_frames:
            start = int(rng.integers(t - segment_frames + 1))
            sl = slice(start, start + segment_frames)
        else:
            sl = slice(0, t)
        noisy.append(s["noisy"][sl])
        ref.append(s["ref"][sl])
        dvec.append(s["dvec"])
    return torch.stack(noisy), torch.stack(ref), torch.stack(dvec)


def _validation_loss(model, samples, params, loss_kind, backend) -> float:
    model.eval()
    totals = []
    with torch.no_grad():
        for s in samples:
            mask = model(s["noisy"].unsqueeze(0), s["dvec"].unsqueeze(0))
            est = s["noisy"].unsqueeze(0) * mask
            bd = combined_loss(s["ref"].unsqueeze(0), est, params, loss_kind, backend)
            totals.append(float(bd.total))
    model.train()
    return float(np.mean(totals))


def train(cfg: TrainConfig, train_manifest, valid_manifest, out_dir,
          enrollment_manifest=None, stft_cfg: StftConfig = StftConfig(),
          provider: EmbeddingProvider | None = None) -> TrainResult:
    """Train a model and retain the checkpoint with the best validation loss."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7EA1]))

    model_cfg = cfg.resolved_model_config()
    if model_cfg.num_bins != stft_cfg.num_bins:
        raise ValueError(
            f"model expects {model_cfg.num_bins} bins but the STFT yields {stft_cfg.num_bins}")
    model = build_model(cfg.model_kind, model_cfg)
    model.train()
    if cfg.optimizer != "adam":
        raise ValueError(f"unsupported optimizer {cfg.optimizer!r}")
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    provider = provider or MelStatsProvider(dimension=model_cfg.dvector_dim)
    source = cfg.resolved_dvector_source()
    train_samples = _load_samples(train_manifest, stft_cfg, provider, source,
                                  enrollment_manifest)
    valid_samples = _load_samples(valid_manifest, stft_cfg, provider, source,
                                  enrollment_manifest)

    params = cfg.loss_params()
    backend = ToyConvBackend(num_bins=model_cfg.num_bins) if cfg.mt_enabled else None
    frame_rate = stft_cfg.frame_rate_hz(16000)
    segment_frames = max(1, int(cfg.segment_seconds * frame_rate))
    segment_frames = min(segment_frames, min(s["noisy"].shape[0] for s in train_samples))

    checkpoint_path = os.path.join(out_dir, "best.ckpt")
    log_path = os.path.join(out_dir, "train_log.jsonl")
    best_valid = float("inf")
    best_step = -1
    first_loss = last_loss = float("nan")

    def save_best(step, valid_loss):
        save_checkpoint(checkpoint_path, cfg.model_kind, model_cfg.to_dict(),
                        model.state_dict(), stft_cfg,
                        extra={"step": step, "valid_loss": valid_loss,
                               "loss": cfg.loss, "seed": cfg.seed})

    with open(log_path, "w") as log:
        for step in range(1, cfg.max_steps + 1):
            indices = rng.integers(len(train_samples), size=cfg.batch_size)
            noisy, ref, dvec = _batch(train_samples, indices, segment_frames, rng)
            mask = model(noisy, dvec)
            est = noisy * mask
            bd = combined_loss(ref, est, params, cfg.loss, backend)
            entry = {"step": step, **bd.to_dict()}
            if not np.isfinite(entry["total"]):
                raise TrainingDivergedError(step, entry)
            opt.zero_grad()
            bd.total.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            log.write(json.dumps(entry, sort_keys=True) + "\n")
            if step == 1:
                first_loss = entry["total"]
            last_loss = entry["total"]

            if step % cfg.validation_interval == 0 or step == cfg.max_steps:
                valid_loss = _validation_loss(model, valid_samples, params, cfg.loss, backend)
                log.write(json.dumps({"step": step, "valid_loss": valid_loss},
                                     sort_keys=True) + "\n")
                if valid_loss < best_valid:
                    best_valid = valid_loss
                    best_step = step
                    save_best(step, valid_loss)

    return TrainResult(checkpoint_path, log_path, best_step, best_valid,
                       first_loss, last_loss)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

EXTERNAL_METRIC_SLOTS = ("stoi", "dnsmos", "wer", "del")


@dataclass
class EvalReport:
    rows: list
    records_path: str | None = None

    def to_dict(self) -> dict:
        return {"rows": self.rows}

    def row(self, scenario: str, system: str) -> dict:
        for r in self.rows:
            if r["scenario"] == scenario and r["system"] == system:
                return r
        raise KeyError(f"no row for {scenario}/{system}")


def evaluate(checkpoint_or_model, manifests: dict, enrollment_manifest,
             out_dir, stft_cfg: StftConfig | None = None,
             provider: EmbeddingProvider | None = None,
             metric_params: MetricParams = MetricParams(),
             extra_metrics: dict | None = None,
             include_passthrough: bool = True,
             system_name: str | None = None) -> EvalReport:
    """Run a checkpoint over scenario manifests and aggregate the metrics.

    ``manifests`` maps scenario names (TS1/TS2/TS3) to manifest paths.
    ``extra_metrics`` maps metric names to callables ``(reference: Waveform,
    estimate: Waveform) -> float`` — the hook point for external scorers.
    A passthrough ("no_enhancement") system is always reported alongside the
    model unless disabled.
    """
    if isinstance(checkpoint_or_model, (str, os.PathLike)):
        model, ckpt_stft, _ = model_from_checkpoint(checkpoint_or_model)
        stft_cfg = stft_cfg or ckpt_stft
    else:
        model = checkpoint_or_model
        if model is not None:
            model.eval()
        stft_cfg = stft_cfg or StftConfig()
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    extra_metrics = extra_metrics or {}

    dvec_dim = model.cfg.dvector_dim if model is not None else 128
    provider = provider or MelStatsProvider(dimension=dvec_dim)
    dvectors = _speaker_dvectors(enrollment_manifest, provider)

    records = []
    for scenario in sorted(manifests):
        manifest_path = manifests[scenario]
        base = os.path.dirname(os.fspath(manifest_path))
        for r in read_manifest(manifest_path):
            speaker = r["target_speaker_id"]
            if speaker not in dvectors:
                raise ValueError(f"no enrollment audio for speaker {speaker!r}")
            mixture = read_wav(os.path.join(base, r["mixture_path"]))
            reference = read_wav(os.path.join(base, r["reference_path"]))
            ref_spec = stft(reference, stft_cfg)

            systems = {}
            if include_passthrough:
                systems["no_enhancement"] = mixture
            if model is not None:
                systems[system_name or model.__class__.__name__.lower()] = enhance(
                    model, mixture, dvectors[speaker], stft_cfg)

            for system, output in systems.items():
                flags = tsos_frames(ref_spec, stft(output, stft_cfg), metric_params)
                rep = tsos_report(flags, metric_params)
                record = {
                    "utterance_id": r["sample_id"],
                    "scenario": scenario,
                    "system": system,
                    "tsos_percent": rep.percent_os_frames,
                    "tsos_total_s": rep.total_os_duration_s,
                    "tsos_max_s": rep.max_os_duration_s,
                    "si_sdr_db": si_sdr(reference, output),
                }
                for name, fn in extra_metrics.items():
                    record[name] = float(fn(reference, output))
                records.append(record)

    records_path = os.path.join(out_dir, "records.jsonl")
    with open(records_path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    rows = []
    keys = ["tsos_percent", "tsos_total_s", "tsos_max_s", "si_sdr_db"] + list(extra_metrics)
    for scenario in sorted(manifests):
        for system in sorted({r["system"] for r in records}):
            group = [r for r in records
                     if r["scenario"] == scenario and r["system"] == system]
            if not group:
                continue
            row = {"scenario": scenario, "system": system, "count": len(group)}
            for k in keys:
                row[k] = float(np.mean([g[k] for g in group]))
            for slot in EXTERNAL_METRIC_SLOTS:
                row.setdefault(slot, None)
            rows.append(row)

    report = EvalReport(rows=rows, records_path=records_path)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(render_table(report))
    return report


def render_table(report: EvalReport) -> str:
    """Plain-text table with one column group per scenario."""
    scenarios = sorted({r["scenario"] for r in report.rows})
    systems = sorted({r["system"] for r in report.rows})
    header = f"{'system':<24}"
    for s in scenarios:
        header += f"| {s}: SI-SDR  TSOS%  "
    lines = [header, "-" * len(header)]
    for system in systems:
        line = f"{system:<24}"
        for scenario in scenarios:
            try:
                row = report.row(scenario, system)
                line += f"|    {row['si_sdr_db']:7.2f} {row['tsos_percent']:6.2f}  "
            except KeyError:
                line += "|        --     --  "
        lines.append(line)
    return "\n".join(lines) + "\n"


ABLATION_VARIANTS = {
    "plcpa": {"loss": "plcpa", "mt_enabled": False},
    "plcpa_asym": {"loss": "plcpa_asym", "mt_enabled": False},
    "plcpa_mt": {"loss": "plcpa", "mt_enabled": True},
    "plcpa_asym_mt": {"loss": "plcpa_asym", "mt_enabled": True},
}


def ablation_matrix(base_cfg: TrainConfig, train_manifest, valid_manifest,
                    out_dir, enrollment_manifest=None,
                    test_manifests: dict | None = None,
                    stft_cfg: StftConfig = StftConfig()) -> dict:
    """Train the four loss configurations and, optionally, evaluate each.

    Variants share every hyperparameter except the loss block. Returns
    {variant: {"config", "result", "report"}}.
    """
    out_dir = os.fspath(out_dir)
    results = {}
    for name, overrides in ABLATION_VARIANTS.items():
        cfg = replace(base_cfg, alpha=None, **overrides)
        variant_dir = os.path.join(out_dir, name)
        result = train(cfg, train_manifest, valid_manifest, variant_dir,
                       enrollment_manifest, stft_cfg)
        report = None
        if test_manifests:
            report = evaluate(result.checkpoint_path, test_manifests,
                              enrollment_manifest, os.path.join(variant_dir, "eval"),
                              system_name=name)
        results[name] = {"config": cfg, "result": result, "report": report}

    if test_manifests:
        lines = [f"{'variant':<16} " + " ".join(f"{s}:TSOS%" for s in sorted(test_manifests))]
        for name, payload in results.items():
            report = payload["report"]
            cells = []
            for scenario in sorted(test_manifests):
                row = report.row(scenario, name)
                cells.append(f"{row['tsos_percent']:9.2f}")
            lines.append(f"{name:<16} " + " ".join(cells))
        with open(os.path.join(out_dir, "ablation.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return results
