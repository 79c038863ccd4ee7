"""
Adversarial training loop and style-encoder pretraining.

Each step updates the discriminator once and then the generator (content encoder, pitch
shift, style encoder and decoder) once. Self-reconstruction and conversion branches are
computed in the same generator pass.
"""

from __future__ import annotations

import json
import random
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import console
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, RunConfig, TrainConfig
from .data import TripletBatch, TripletSampler
from .errors import ConfigError, EmptyInputError, NumericError
from .losses import (
    GeneratorLossReport,
    adversarial_loss,
    content_consistency_loss,
    generator_adversarial_loss,
    id_loss,
    norm_consistency_loss,
    reconstruction_loss,
    style_consistency_loss,
    style_diversification_loss,
    total_generator_objective,
)
from .networks import SubbandGAN
from .perf_timing import TimingRecorder

TRAIN_LOG_NAME = "train_log.ndjson"


def set_seed(seed: int, deterministic: bool = False) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)


@contextmanager
def evaluation(module: nn.Module) -> Iterator[nn.Module]:
    """Switch to eval mode (dropout off) for the duration of the block."""
    was_training = module.training
    module.eval()
    try:
        with torch.no_grad():
            yield module
    finally:
        module.train(was_training)


@dataclass
class TrainingState:
    models: SubbandGAN
    optimizers: dict[str, torch.optim.Optimizer]
    step: int = 0
    epoch: int = 0


def build_optimizers(models: SubbandGAN, cfg: TrainConfig) -> dict[str, torch.optim.Optimizer]:
    def adamw(parameters: list[nn.Parameter]) -> torch.optim.Optimizer:
        return torch.optim.AdamW(parameters, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)

    return {
        "generator": adamw(models.generator_parameters()),
        "discriminator": adamw(list(models.discriminator.parameters())),
    }


def create_training_state(model_cfg: ModelConfig, cfg: TrainConfig) -> TrainingState:
    models = SubbandGAN(model_cfg).to(cfg.device)
    models.train()
    return TrainingState(models=models, optimizers=build_optimizers(models, cfg))


@dataclass
class StepResult:
    report: GeneratorLossReport
    d_loss: float

    def to_record(self) -> dict[str, float]:
        return {**self.report.to_dict(), "d_loss": self.d_loss}


def discriminator_step(state: TrainingState, batch: TripletBatch, cfg: TrainConfig) -> float:
    """One update of the discriminator on -w_adv * L_adv with the generator frozen."""
    models = state.models
    with torch.no_grad():
        content = models.content_code(batch.x_s)
        fake = models.decode(content, models.encode_style(batch.x_t1).style)
    real_logit = models.discriminate(batch.x_s, batch.y_s)
    fake_logit = models.discriminate(fake, batch.y_t)
    d_loss = -cfg.weights.adv * adversarial_loss(real_logit, fake_logit)
    if not bool(torch.isfinite(d_loss)):
        raise NumericError("d_loss", f"discriminator loss is not finite ({float(d_loss)})")
    optimizer = state.optimizers["discriminator"]
    optimizer.zero_grad(set_to_none=True)
    d_loss.backward()
    optimizer.step()
    return float(d_loss.detach())


def generator_step(state: TrainingState, batch: TripletBatch, cfg: TrainConfig) -> GeneratorLossReport:
    """One generator update on the weighted sum of every generator loss."""
    models = state.models
    models.discriminator.requires_grad_(False)
    try:
        content = models.content_code(batch.x_s)
        source = models.encode_style(batch.x_s)
        first = models.encode_style(batch.x_t1)
        second = models.encode_style(batch.x_t2)

        g_self = models.decode(content, source.style)
        g1 = models.decode(content, first.style)
        g2 = models.decode(content, second.style)

        converted = models.encode_style(g1)
        fake_id, trg_id = id_loss(
            converted.class_logits,
            source.class_logits,
            first.class_logits,
            second.class_logits,
            batch.y_s,
            batch.y_t,
        )
        report = total_generator_objective(
            {
                "adv": generator_adversarial_loss(models.discriminate(g1, batch.y_t), cfg.non_saturating),
                "fake_id": fake_id,
                "trg_id": trg_id,
                "style": style_consistency_loss(first.style, converted.style),
                "content": content_consistency_loss(content, models.content_code(g1)),
                "ds": style_diversification_loss(g1, g2),
                "norm": norm_consistency_loss(batch.x_s, g1),
                "rec": reconstruction_loss(batch.x_s, g_self),
            },
            cfg.weights,
        )
        optimizer = state.optimizers["generator"]
        optimizer.zero_grad(set_to_none=True)
        report.total.backward()
        optimizer.step()
    finally:
        models.discriminator.requires_grad_(True)
    return report


def train_step(state: TrainingState, batch: TripletBatch, cfg: TrainConfig) -> StepResult:
    d_loss = discriminator_step(state, batch, cfg)
    report = generator_step(state, batch, cfg)
    return StepResult(report=report, d_loss=d_loss)


@dataclass
class TrainingLog:
    """Newline-delimited JSON, one record per logged step."""

    path: Path

    def append(self, record: dict[str, Any]) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, ensure_ascii=True, sort_keys=True) + "\n")

    def read(self) -> list[dict[str, Any]]:
        if not self.path.exists():
            return []
        lines = self.path.read_text(encoding="utf-8").splitlines()
        return [json.loads(line) for line in lines if line.strip()]


def steps_per_epoch(cfg: TrainConfig, utterances: int) -> int:
    return cfg.steps_per_epoch or max(1, utterances // cfg.batch_size)


def checkpoint_path(run_dir: Path, step: int | None = None) -> Path:
    return run_dir / "checkpoints" / ("final" if step is None else f"step-{step:07d}")


def train(
    state: TrainingState,
    sampler: TripletSampler,
    run_cfg: RunConfig,
    run_dir: str | Path,
) -> TrainingState:
    """
    Run epochs until train.epochs, writing the NDJSON log, periodic checkpoints and a
    final checkpoint. A resumed state continues from its stored epoch and step.
    """
    cfg = run_cfg.train
    run_dir = Path(run_dir)
    log = TrainingLog(run_dir / TRAIN_LOG_NAME)
    per_epoch = steps_per_epoch(cfg, len(sampler.manifest))
    lr = state.optimizers["generator"].param_groups[0]["lr"]

    def save(step: int | None) -> Path:
        return save_checkpoint(
            checkpoint_path(run_dir, step),
            state.models,
            step=state.step,
            speakers=sampler.speakers,
            mel_cfg=run_cfg.mel,
            optimizers=state.optimizers,
            extra={"epoch": state.epoch, "rng_state": sampler.rng.bit_generator.state},
        )

    for epoch in range(state.epoch, cfg.epochs):
        timings = TimingRecorder("train_epoch")
        for _ in range(per_epoch):
            started = time.perf_counter()
            with timings.measure("sample_batch"):
                batch = sampler.sample_batch(cfg.batch_size).to(cfg.device)
            with timings.measure("train_step"):
                result = train_step(state, batch, cfg)
            state.step += 1
            record = {
                "step": state.step,
                "epoch": epoch,
                **result.to_record(),
                "lr": lr,
                "wall_ms": round((time.perf_counter() - started) * 1000.0, 3),
            }
            log.append(record)
            if state.step % cfg.log_every == 0:
                console.info(
                    "trainer",
                    f"step {state.step} epoch {epoch} total={record['total']:.4f} "
                    f"rec={record['rec']:.4f} d_loss={record['d_loss']:.4f}",
                )
            if state.step % cfg.checkpoint_every == 0:
                with timings.measure("checkpoint"):
                    save(state.step)
        state.epoch = epoch + 1
        timings.log(epoch=epoch, steps=per_epoch)
    final = save(None)
    console.info("trainer", f"saved final checkpoint {final}")
    return state


def resume_training_state(path: str | Path, model_cfg: ModelConfig, cfg: TrainConfig, sampler: TripletSampler) -> TrainingState:
    state = create_training_state(model_cfg, cfg)
    checkpoint = load_checkpoint(path, models=state.models, optimizers=state.optimizers, device=cfg.device)
    state.step = checkpoint.step
    state.epoch = int(checkpoint.extra.get("epoch", 0))
    rng_state = checkpoint.extra.get("rng_state")
    if rng_state:
        sampler.rng.bit_generator.state = rng_state
    return state


def classification_accuracy(
    models: SubbandGAN,
    mels: torch.Tensor,
    labels: torch.Tensor,
    batch_size: int = 16,
) -> float:
    if len(labels) == 0:
        raise EmptyInputError("cannot measure accuracy on an empty set")
    correct = 0
    with evaluation(models):
        for start in range(0, len(labels), batch_size):
            logits = models.encode_style(mels[start:start + batch_size]).class_logits
            correct += int((logits.argmax(dim=1) == labels[start:start + batch_size]).sum())
    return correct / len(labels)


@dataclass
class PretrainResult:
    checkpoint: Path
    epoch_losses: list[float] = field(default_factory=list)
    step: int = 0


def pretrain_style_encoder(
    models: SubbandGAN,
    sampler: TripletSampler,
    run_cfg: RunConfig,
    out_path: str | Path,
    *,
    epochs: int | None = None,
    resume_from: str | Path | None = None,
) -> PretrainResult:
    """Train the style encoder alone as a speaker classifier and checkpoint it."""
    cfg = run_cfg.train
    if len(sampler.speakers) < 2:
        raise ConfigError("style pretraining needs at least two speakers")
    total_epochs = cfg.pretrain_epochs if epochs is None else epochs
    optimizer = torch.optim.AdamW(
        models.style_encoder.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    start_epoch, step = 0, 0
    if resume_from is not None:
        checkpoint = load_checkpoint(resume_from, models=models, optimizers={"style": optimizer}, device=cfg.device)
        start_epoch, step = int(checkpoint.extra.get("epoch", 0)), checkpoint.step
        rng_state = checkpoint.extra.get("rng_state")
        if rng_state:
            sampler.rng.bit_generator.state = rng_state

    models.train()
    per_epoch = steps_per_epoch(cfg, len(sampler.manifest))
    losses: list[float] = []
    for epoch in range(start_epoch, total_epochs):
        running = 0.0
        for _ in range(per_epoch):
            mels, labels = sampler.sample_labelled_batch(cfg.batch_size)
            logits = models.encode_style(mels.to(cfg.device)).class_logits
            loss = F.cross_entropy(logits, labels.to(cfg.device))
            if not bool(torch.isfinite(loss)):
                raise NumericError("pretrain_id", f"classification loss is not finite ({float(loss)})")
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            running += float(loss.detach())
            step += 1
        losses.append(running / per_epoch)
        console.info("pretrain", f"epoch {epoch + 1}/{total_epochs} loss={losses[-1]:.4f}")

    saved = save_checkpoint(
        out_path,
        models,
        step=step,
        speakers=sampler.speakers,
        mel_cfg=run_cfg.mel,
        optimizers={"style": optimizer},
        parts=("style_encoder",),
        extra={"epoch": max(total_epochs, start_epoch), "stage": "pretrain", "rng_state": sampler.rng.bit_generator.state},
    )
    return PretrainResult(checkpoint=saved, epoch_losses=losses, step=step)
