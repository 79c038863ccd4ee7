"""
Command-line entrypoint: preprocess, pretrain-style, train, convert, reconstruct,
evaluate and invert.

Every command creates a run directory `<runs>/<timestamp>-seed<seed>` holding run.json
and its outputs; failures also leave a failure.log there.

Exit codes: 0 success, 1 unexpected error, 2 configuration error, 3 data error, 4 numeric
failure, 5 storage error. argparse usage errors (unknown flags, missing arguments) count as
configuration errors and exit with 2. They happen before a run directory exists, so they
leave no failure.log.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from . import console
from .audio import write_wav
from .checkpoint import load_checkpoint
from .config import RunConfig, cache_dir, load_run_config, runs_dir
from .conversion_service import (
    ConversionArtifact,
    Converter,
    evaluate_checkpoint,
    invert_cached_mel,
    preprocess_corpus,
)
from .data import MelStore, TripletSampler, stack_mels
from .errors import ConfigError, exit_code_for
from .evaluator import SpeakerClassifier
from .failure_log import write_failure_log
from .features import MelNormalizer, MelSpectrogram, fit_width
from .manifest import SPLITS, DatasetManifest, load_manifest
from .networks import SubbandGAN
from .trainer import (
    classification_accuracy,
    create_training_state,
    pretrain_style_encoder,
    resume_training_state,
    set_seed,
    train,
)
from .vocoder import load_vocoder

RUN_METADATA_NAME = "run.json"


@dataclass
class RunContext:
    args: argparse.Namespace
    config: RunConfig
    seed: int
    run_dir: Path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgan-vc", description="Subband GAN voice conversion toolkit.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file with mel/augment/model/train/data sections")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="repeatable config override")
    common.add_argument("--seed", type=int, help="overrides train.seed")
    common.add_argument("--deterministic", action="store_true", help="frame-0 crops, no augmentation, deterministic kernels")
    common.add_argument("--run-dir", type=Path, help="explicit run directory (default: timestamped under SGVC_RUNS_DIR)")

    vocoder = argparse.ArgumentParser(add_help=False)
    vocoder.add_argument("--vocoder", default="griffin-lim", help="'griffin-lim' or a 'module:factory' plugin")
    vocoder.add_argument("--iterations", type=int, default=60, help="Griffin-Lim iterations")

    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    preprocess = commands.add_parser("preprocess", parents=[common], help="cache mels and write the manifest")
    preprocess.add_argument("--corpus", type=Path, required=True, help="<speaker>/<utt>.wav folder or manifest CSV")
    preprocess.add_argument("--cache-dir", type=Path, help="defaults to SGVC_CACHE_DIR")

    pretrain = commands.add_parser("pretrain-style", parents=[common], help="pretrain the style encoder as a classifier")
    pretrain.add_argument("--manifest", type=Path)
    pretrain.add_argument("--epochs", type=int)
    pretrain.add_argument("--resume", type=Path, help="style checkpoint to continue from")

    train_cmd = commands.add_parser("train", parents=[common], help="adversarial training")
    train_cmd.add_argument("--manifest", type=Path)
    train_cmd.add_argument("--style-checkpoint", type=Path, help="initialize the style encoder from pretraining")
    train_cmd.add_argument("--resume", type=Path, help="full checkpoint to continue from")

    convert = commands.add_parser("convert", parents=[common, vocoder], help="convert one utterance")
    convert.add_argument("--checkpoint", type=Path, required=True)
    convert.add_argument("--source", type=Path, required=True)
    target = convert.add_mutually_exclusive_group(required=True)
    target.add_argument("--target-wav", type=Path, help="single reference utterance (zero-shot)")
    target.add_argument("--target-speaker", help="speaker id; style = mean over enrolled utterances")
    convert.add_argument("--manifest", type=Path, help="enrollment manifest for --target-speaker")
    convert.add_argument("--output", type=Path)

    reconstruct = commands.add_parser("reconstruct", parents=[common, vocoder], help="self-reconstruct one utterance")
    reconstruct.add_argument("--checkpoint", type=Path, required=True)
    reconstruct.add_argument("--source", type=Path, required=True)
    reconstruct.add_argument("--output", type=Path)

    evaluate = commands.add_parser("evaluate", parents=[common, vocoder], help="F0 difference and CLS report")
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    evaluate.add_argument("--manifest", type=Path)
    evaluate.add_argument("--classifier", type=Path, help="speaker classifier checkpoint for CLS")
    evaluate.add_argument("--pairs", type=int, default=20)
    evaluate.add_argument("--splits", nargs="+", default=["test"], choices=SPLITS)

    invert = commands.add_parser("invert", parents=[common, vocoder], help="vocode a cached mel blob")
    invert.add_argument("--mel", type=Path, required=True)
    invert.add_argument("--output", type=Path)
    return parser


def _default_manifest(path: Path | None) -> Path:
    return path if path is not None else cache_dir() / "manifest.csv"


def _make_run_dir(explicit: Path | None, seed: int) -> Path:
    if explicit is not None:
        explicit.mkdir(parents=True, exist_ok=True)
        return explicit
    stamp = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S")
    base = runs_dir() / f"{stamp}-seed{seed}"
    candidate, counter = base, 1
    while candidate.exists():
        candidate = base.with_name(f"{base.name}-{counter}")
        counter += 1
    candidate.mkdir(parents=True)
    return candidate


def _vocoder(ctx: RunContext):
    options = {"iterations": ctx.args.iterations, "seed": ctx.seed} if ctx.args.vocoder == "griffin-lim" else {}
    return load_vocoder(ctx.args.vocoder, **options)


def _report(artifacts: list[ConversionArtifact]) -> None:
    for artifact in artifacts:
        console.info("cli", f"wrote {artifact.source_name} -> {artifact.output_path}")


def _run_preprocess(ctx: RunContext) -> None:
    cache_root = ctx.args.cache_dir or cache_dir()
    _, manifest_path = preprocess_corpus(ctx.args.corpus, cache_root, ctx.config.mel, ctx.config.data, seed=ctx.seed)
    _report([ConversionArtifact(ctx.args.corpus.name, manifest_path.name, manifest_path)])


def _sampler(ctx: RunContext, manifest: DatasetManifest, speakers: list[str] | None = None) -> TripletSampler:
    return TripletSampler(
        manifest,
        ctx.config.mel,
        ctx.config.augment,
        np.random.default_rng(ctx.seed),
        speakers=speakers,
        deterministic=ctx.config.train.deterministic,
    )


def _labelled_mels(manifest: DatasetManifest, config: RunConfig, speakers: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
    """Frame-0 crops of every utterance; held-out splits may hold a single clip per speaker."""
    store = MelStore(manifest, config.mel)
    normalizer = MelNormalizer.from_config(config.mel)
    mels = [
        MelSpectrogram(normalizer.normalize(fit_width(store[i], config.mel.target_width, pad_value=config.mel.pad_value).values))
        for i in range(len(manifest))
    ]
    labels = [manifest.label_of(manifest.frame.at[i, "speaker_id"], speakers) for i in range(len(manifest))]
    return stack_mels(mels), torch.tensor(labels, dtype=torch.long)


def _run_pretrain(ctx: RunContext) -> None:
    manifest_path = _default_manifest(ctx.args.manifest)
    manifest = load_manifest(manifest_path)
    speakers = manifest.speakers
    config = ctx.config.with_speakers(len(speakers))
    sampler = _sampler(ctx, manifest)
    models = SubbandGAN(config.model).to(config.train.device)
    out_path = ctx.run_dir / "style_pretrain"
    result = pretrain_style_encoder(models, sampler, config, out_path, epochs=ctx.args.epochs, resume_from=ctx.args.resume)
    held_out = DatasetManifest.from_csv(manifest_path).subset("test")
    if len(held_out):
        mels, labels = _labelled_mels(held_out, config, speakers)
        accuracy = classification_accuracy(models, mels.to(config.train.device), labels.to(config.train.device))
        console.info("pretrain", f"held-out accuracy {accuracy:.3f} on {len(labels)} utterances")
    _report([ConversionArtifact(manifest_path.name, result.checkpoint.name, result.checkpoint)])


def _run_train(ctx: RunContext) -> None:
    manifest = load_manifest(_default_manifest(ctx.args.manifest))
    config = ctx.config.with_speakers(len(manifest.speakers))
    sampler = _sampler(ctx, manifest)
    if ctx.args.resume is not None:
        state = resume_training_state(ctx.args.resume, config.model, config.train, sampler)
    else:
        state = create_training_state(config.model, config.train)
        if ctx.args.style_checkpoint is not None:
            load_checkpoint(ctx.args.style_checkpoint, models=state.models, device=config.train.device)
    state = train(state, sampler, config, ctx.run_dir)
    final = ctx.run_dir / "checkpoints" / "final"
    _report([ConversionArtifact(f"step {state.step}", final.name, final)])


def _converter(ctx: RunContext) -> Converter:
    checkpoint = load_checkpoint(ctx.args.checkpoint, device=ctx.config.train.device)
    return Converter(checkpoint, _vocoder(ctx), device=ctx.config.train.device)


def _run_convert(ctx: RunContext) -> None:
    converter = _converter(ctx)
    source = converter.load(ctx.args.source)
    if ctx.args.target_wav is not None:
        style = converter.style_from_wav(converter.load(ctx.args.target_wav))
        target_name = ctx.args.target_wav.stem
    else:
        manifest = DatasetManifest.from_csv(_default_manifest(ctx.args.manifest))
        style = converter.style_from_speaker(ctx.args.target_speaker, manifest)
        target_name = ctx.args.target_speaker
    output = ctx.args.output or ctx.run_dir / f"{ctx.args.source.stem}-to-{target_name}.wav"
    write_wav(converter.convert(source, style), output)
    _report([ConversionArtifact(ctx.args.source.name, output.name, output)])


def _run_reconstruct(ctx: RunContext) -> None:
    converter = _converter(ctx)
    output = ctx.args.output or ctx.run_dir / f"{ctx.args.source.stem}-reconstructed.wav"
    write_wav(converter.reconstruct(converter.load(ctx.args.source)), output)
    _report([ConversionArtifact(ctx.args.source.name, output.name, output)])


def _run_evaluate(ctx: RunContext) -> None:
    converter = _converter(ctx)
    manifest = DatasetManifest.from_csv(_default_manifest(ctx.args.manifest))
    classifier = SpeakerClassifier.from_checkpoint(ctx.args.classifier, ctx.config.train.device) if ctx.args.classifier else None
    report, paths = evaluate_checkpoint(
        converter,
        manifest,
        ctx.run_dir / "evaluation",
        pairs=ctx.args.pairs,
        seed=ctx.seed,
        classifier=classifier,
        splits=tuple(ctx.args.splits),
    )
    console.info("evaluate", json.dumps(report.summary(), sort_keys=True))
    _report([ConversionArtifact("evaluation", path.name, path) for path in paths.values()])


def _run_invert(ctx: RunContext) -> None:
    wave = invert_cached_mel(ctx.args.mel, ctx.config.mel, _vocoder(ctx))
    output = ctx.args.output or ctx.run_dir / f"{ctx.args.mel.stem}-inverted.wav"
    write_wav(wave, output)
    _report([ConversionArtifact(ctx.args.mel.name, output.name, output)])


COMMANDS: dict[str, Callable[[RunContext], None]] = {
    "preprocess": _run_preprocess,
    "pretrain-style": _run_pretrain,
    "train": _run_train,
    "convert": _run_convert,
    "reconstruct": _run_reconstruct,
    "evaluate": _run_evaluate,
    "invert": _run_invert,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    run_dir: Path | None = None
    seed: int | None = args.seed
    try:
        overrides = list(args.override)
        if args.seed is not None:
            overrides.append(f"train.seed={args.seed}")
        if args.deterministic:
            overrides.append("train.deterministic=true")
        config = load_run_config(args.config, overrides)
        seed = config.train.seed
        set_seed(seed, config.train.deterministic)
        run_dir = _make_run_dir(args.run_dir, seed)
        (run_dir / RUN_METADATA_NAME).write_text(
            json.dumps(
                {
                    "command": args.command,
                    "argv": sys.argv[1:] if argv is None else list(argv),
                    "seed": seed,
                    "started_at_utc": started_at,
                    "config": config.to_dict(),
                },
                indent=2,
                sort_keys=True,
                default=str,
            ),
            encoding="utf-8",
        )
        COMMANDS[args.command](RunContext(args=args, config=config, seed=seed, run_dir=run_dir))
        return 0
    except Exception as exc:
        code = exit_code_for(exc)
        console.error("cli", f"{type(exc).__name__}: {exc}")
        if run_dir is not None:
            log_path = write_failure_log(
                run_dir=run_dir,
                command=args.command,
                seed=seed,
                exception=exc,
                started_at=started_at,
                context={"argv": sys.argv[1:] if argv is None else list(argv)},
            )
            console.error("cli", f"failure details in {log_path}")
        elif not isinstance(exc, ConfigError):
            console.console.print_exception()
        return code


if __name__ == "__main__":
    sys.exit(main())
