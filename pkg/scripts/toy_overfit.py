#!/usr/bin/env python3
"""
Overfit a small model on a synthetic two-speaker corpus and summarize the loss curve.
"""

from __future__ import annotations

import argparse
import json
import math
import shutil
import statistics
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from src.config import DataConfig, load_run_config
from src.conversion_service import preprocess_corpus
from src.data import TripletSampler
from src.manifest import load_manifest
from src.synthetic import write_synthetic_corpus
from src.trainer import create_training_state, set_seed, train_step

SMALL_MODEL = [
    "model.style_backbone=resnet18",
    "model.base_channels=32",
    "model.content_channels=64",
    "model.style_dim=64",
    "train.batch_size=4",
]


def overfit(steps: int, speakers: int, utterances: int, seed: int, window: int, device: str) -> dict[str, object]:
    """Train for `steps` steps and compare the moving average of L_rec at both ends."""
    workdir = Path(tempfile.mkdtemp(prefix="sgvc-overfit-"))
    try:
        config = load_run_config(None, SMALL_MODEL + [f"train.seed={seed}", f"train.device={device}"])
        corpus = write_synthetic_corpus(workdir / "corpus", speakers=speakers, utterances=utterances, duration_s=2.8, seed=seed)
        _, manifest_path = preprocess_corpus(corpus, workdir / "cache", config.mel, DataConfig(workers=2), seed=seed)
        manifest = load_manifest(manifest_path)
        config = config.with_speakers(len(manifest.speakers))
        set_seed(seed)
        sampler = TripletSampler(manifest, config.mel, config.augment, np.random.default_rng(seed))
        state = create_training_state(config.model, config.train)

        rec: list[float] = []
        non_finite = 0
        started_at = time.perf_counter()
        for _ in range(steps):
            batch = sampler.sample_batch(config.train.batch_size).to(device)
            record = train_step(state, batch, config.train).to_record()
            non_finite += int(not all(math.isfinite(value) for value in record.values()))
            rec.append(record["rec"])
        elapsed = time.perf_counter() - started_at
    finally:
        shutil.rmtree(workdir, ignore_errors=True)

    initial = statistics.mean(rec[:window])
    final = statistics.mean(rec[-window:])
    return {
        "steps": steps,
        "speakers": speakers,
        "utterances_per_speaker": utterances,
        "seed": seed,
        "initial_rec": round(initial, 6),
        "final_rec": round(final, 6),
        "ratio": round(final / initial, 6) if initial else None,
        "passed": final < 0.5 * initial and non_finite == 0,
        "non_finite_steps": non_finite,
        "seconds": round(elapsed, 3),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description="Toy overfit check for the training loop.")
    parser.add_argument("--steps", type=int, default=500)
    parser.add_argument("--speakers", type=int, default=2)
    parser.add_argument("--utterances", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--window", type=int, default=10)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args()

    result = overfit(args.steps, args.speakers, args.utterances, args.seed, args.window, args.device)
    print(json.dumps(result, ensure_ascii=True, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
