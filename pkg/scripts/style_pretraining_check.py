#!/usr/bin/env python3
"""
Pretrain the style encoder on synthetic timbre classes and report held-out accuracy.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from src.config import DataConfig, load_run_config
from src.conversion_service import preprocess_corpus
from src.data import TripletSampler
from src.manifest import load_manifest
from src.networks import SubbandGAN
from src.synthetic import write_synthetic_corpus
from src.trainer import classification_accuracy, pretrain_style_encoder, set_seed


def check(speakers: int, utterances: int, held_out: int, epochs: int, seed: int, identical: bool, device: str) -> dict[str, object]:
    workdir = Path(tempfile.mkdtemp(prefix="sgvc-pretrain-"))
    try:
        config = load_run_config(
            None,
            [
                "model.style_backbone=resnet18",
                "train.batch_size=8",
                f"train.seed={seed}",
                f"train.device={device}",
            ],
        )
        corpus = write_synthetic_corpus(
            workdir / "corpus", speakers=speakers, utterances=utterances, duration_s=2.8, seed=seed, identical=identical
        )
        _, manifest_path = preprocess_corpus(
            corpus, workdir / "cache", config.mel, DataConfig(test_per_speaker=held_out, workers=2), seed=seed
        )
        train_set = load_manifest(manifest_path)
        test_set = load_manifest(manifest_path, splits=("test",), require_pairs=False)
        config = config.with_speakers(len(train_set.speakers))
        set_seed(seed)
        models = SubbandGAN(config.model).to(device)
        sampler = TripletSampler(train_set, config.mel, config.augment, np.random.default_rng(seed))
        result = pretrain_style_encoder(models, sampler, config, workdir / "style", epochs=epochs)
        evaluator = TripletSampler(
            test_set, config.mel, config.augment, np.random.default_rng(seed), speakers=sampler.speakers, deterministic=True
        )
        mels, labels = evaluator.labelled_set()
        accuracy = classification_accuracy(models, mels.to(device), labels.to(device))
    finally:
        shutil.rmtree(workdir, ignore_errors=True)

    return {
        "speakers": speakers,
        "utterances_per_speaker": utterances,
        "held_out_per_speaker": held_out,
        "identical_speakers": identical,
        "epochs": epochs,
        "seed": seed,
        "epoch_losses": [round(loss, 6) for loss in result.epoch_losses],
        "held_out_accuracy": round(accuracy, 6),
        "chance": round(1.0 / speakers, 6),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description="Style encoder pretraining accuracy check.")
    parser.add_argument("--speakers", type=int, default=4)
    parser.add_argument("--utterances", type=int, default=50)
    parser.add_argument("--held-out", type=int, default=10)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--identical", action="store_true", help="indistinguishable speakers; expect chance accuracy")
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args()

    result = check(args.speakers, args.utterances, args.held_out, args.epochs, args.seed, args.identical, args.device)
    print(json.dumps(result, ensure_ascii=True, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
