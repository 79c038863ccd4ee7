"""
Reusable workflows behind the CLI: corpus preprocessing, conversion, reconstruction,
mel inversion and batch evaluation.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import torch

from . import console
from .audio import Waveform, load_and_resample, write_wav
from .checkpoint import Checkpoint
from .config import DataConfig, MelConfig
from .errors import EmptyInputError, LabelError, LengthError, ManifestError
from .evaluator import (
    ConversionRecord,
    EvaluationReport,
    SpeakerClassifier,
    classify_records,
    conversion_type_accuracy,
    export_external_manifest,
    f0_report,
    sample_conversion_pairs,
    write_report,
)
from .features import MelNormalizer, MelSpectrogram, fit_width, mel_spectrogram
from .manifest import DatasetManifest
from .mel_cache import MEL_SUFFIX, read_mel_cache, write_mel_cache
from .perf_timing import TimingRecorder
from .trainer import evaluation
from .vocoder import Vocoder

AUDIO_SUFFIXES = (".wav",)
SPEAKER_TABLE_NAME = "speakers.csv"


@dataclass
class ConversionArtifact:
    """Describes one generated file so callers can report it consistently."""
    source_name: str
    output_name: str
    output_path: Path


@dataclass
class _Prepared:
    index: int
    duration_s: float
    mel_path: str
    skipped: str = ""


def preprocess_corpus(
    source: str | Path,
    cache_root: str | Path,
    mel_cfg: MelConfig,
    data_cfg: DataConfig,
    *,
    seed: int = 0,
) -> tuple[DatasetManifest, Path]:
    """
    Build `<cache_root>/manifest.csv` and cache one mel blob per utterance.

    `source` is either a folder laid out as `<speaker>/<utterance>.wav` (an optional
    `speakers.csv` supplies genders) or an existing manifest CSV whose split column is
    kept. Clips shorter than data.min_duration_s or than one FFT frame are dropped.
    """
    source = Path(source)
    cache_root = Path(cache_root)
    cache_root.mkdir(parents=True, exist_ok=True)
    timings = TimingRecorder("preprocess_corpus")

    with timings.measure("scan_sources"):
        if source.is_file():
            listed = DatasetManifest.from_csv(source)
            frame = listed.frame.copy()
            frame["path"] = [str(listed.audio_path(i).resolve()) for i in range(len(frame))]
            keep_splits = True
        else:
            frame = _scan_speaker_folders(source)
            keep_splits = False

    def prepare(index: int) -> _Prepared:
        row = frame.loc[index]
        try:
            wave = load_and_resample(row["path"], mel_cfg.sample_rate)
            if wave.duration_s < data_cfg.min_duration_s:
                return _Prepared(index, wave.duration_s, "", f"shorter than {data_cfg.min_duration_s}s")
            mel = mel_spectrogram(wave, mel_cfg)
        except (LengthError, EmptyInputError) as exc:
            return _Prepared(index, 0.0, "", str(exc))
        mel_path = cache_root / "mels" / row["speaker_id"] / f"{row['utterance_id']}{MEL_SUFFIX}"
        write_mel_cache(mel, mel_path)
        return _Prepared(index, wave.duration_s, mel_path.relative_to(cache_root).as_posix())

    with timings.measure("compute_mels"):
        with ThreadPoolExecutor(max_workers=data_cfg.workers) as pool:
            prepared = list(pool.map(prepare, frame.index))

    for item in prepared:
        if item.skipped:
            console.warn("preprocess", f"skipping {frame.at[item.index, 'path']}: {item.skipped}")
    kept = [item for item in prepared if not item.skipped]
    if not kept:
        raise EmptyInputError(f"no usable utterances found under {source}")

    with timings.measure("assign_splits"):
        frame = frame.loc[[item.index for item in kept]].copy()
        frame["mel_path"] = [item.mel_path for item in kept]
        frame["path"] = [_relative_to(Path(p), cache_root) for p in frame["path"]]
        if not keep_splits:
            frame["split"] = assign_splits(frame, data_cfg, np.random.default_rng(seed))
        manifest = DatasetManifest(frame, root=cache_root)
        manifest_path = manifest.to_csv(cache_root / "manifest.csv")

    timings.log(utterances=len(manifest), skipped=len(prepared) - len(kept), speakers=len(manifest.speakers))
    console.info("preprocess", f"cached {len(manifest)} utterances of {len(manifest.speakers)} speakers")
    return manifest, manifest_path


def _scan_speaker_folders(root: Path) -> pd.DataFrame:
    if not root.is_dir():
        raise FileNotFoundError(f"corpus folder {root} does not exist")
    genders: dict[str, str] = {}
    table = root / SPEAKER_TABLE_NAME
    if table.is_file():
        speakers = pd.read_csv(table, dtype=str, keep_default_na=False)
        if {"speaker_id", "gender"} <= set(speakers.columns):
            genders = dict(zip(speakers["speaker_id"], speakers["gender"]))
    rows: list[dict[str, str]] = []
    used_ids: set[str] = set()
    for speaker_dir in sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith(".")):
        for audio_path in sorted(speaker_dir.iterdir()):
            if audio_path.suffix.lower() not in AUDIO_SUFFIXES or audio_path.name.startswith("."):
                continue
            utterance_id = _dedupe_name(f"{speaker_dir.name}_{audio_path.stem}", used_ids)
            used_ids.add(utterance_id)
            rows.append(
                {
                    "utterance_id": utterance_id,
                    "speaker_id": speaker_dir.name,
                    "path": str(audio_path.resolve()),
                    "split": "train",
                    "gender": genders.get(speaker_dir.name, ""),
                }
            )
    if not rows:
        raise ManifestError(f"no .wav files found under {root}/<speaker>/")
    return pd.DataFrame(rows)


def assign_splits(frame: pd.DataFrame, data_cfg: DataConfig, rng: np.random.Generator) -> list[str]:
    """Unseen speakers go to 'unseen'; each other speaker lends test_per_speaker clips to 'test'."""
    splits = pd.Series("train", index=frame.index)
    unseen = set(data_cfg.unseen_speakers)
    for speaker, group in frame.groupby("speaker_id", sort=True):
        if speaker in unseen:
            splits[group.index] = "unseen"
            continue
        # At least two training clips stay behind for triplet sampling.
        count = min(data_cfg.test_per_speaker, max(0, len(group) - 2))
        if count:
            splits[rng.choice(group.index, size=count, replace=False)] = "test"
    return list(splits)


def _relative_to(path: Path, base: Path) -> str:
    try:
        return Path(os.path.relpath(path.resolve(), base.resolve())).as_posix()
    except ValueError:
        return str(path.resolve())


class Converter:
    """Runs trained networks on waveforms: style extraction, conversion and reconstruction."""

    def __init__(self, checkpoint: Checkpoint, vocoder: Vocoder, device: str = "cpu") -> None:
        self.models = checkpoint.models.to(device)
        self.speakers = checkpoint.speakers
        self.mel_cfg = checkpoint.mel_cfg
        self.vocoder = vocoder
        self.device = device
        self.normalizer = MelNormalizer.from_config(self.mel_cfg)

    def mel_batch(self, wave: Waveform) -> torch.Tensor:
        mel = fit_width(mel_spectrogram(wave, self.mel_cfg), self.mel_cfg.target_width, pad_value=self.mel_cfg.pad_value)
        return torch.from_numpy(self.normalizer.normalize(mel.values))[None, None].to(self.device)

    def load(self, path: str | Path) -> Waveform:
        return load_and_resample(path, self.mel_cfg.sample_rate)

    def style_from_wav(self, wave: Waveform) -> torch.Tensor:
        with evaluation(self.models):
            return self.models.encode_style(self.mel_batch(wave)).style

    def style_from_speaker(self, speaker_id: str, manifest: DatasetManifest) -> torch.Tensor:
        """Mean style code over every enrolled utterance of a speaker."""
        if speaker_id not in self.speakers:
            raise LabelError(f"speaker {speaker_id!r} is not in the checkpoint's speaker table")
        rows = manifest.utterances_by_speaker().get(speaker_id, [])
        if not rows:
            raise EmptyInputError(f"manifest has no utterances for speaker {speaker_id!r}")
        styles = [self.style_from_wav(self.load(manifest.audio_path(index))) for index in rows]
        return torch.stack(styles).mean(dim=0)

    def convert_mel(self, source: Waveform, style: torch.Tensor) -> MelSpectrogram:
        with evaluation(self.models):
            generated = self.models.generate(self.mel_batch(source), style)
        return MelSpectrogram(self.normalizer.denormalize(generated[0, 0].cpu().numpy()))

    def convert(self, source: Waveform, style: torch.Tensor) -> Waveform:
        return self.vocoder(self.convert_mel(source, style), self.mel_cfg)

    def reconstruct(self, source: Waveform) -> Waveform:
        """Self-reconstruction: the source's own content and style."""
        return self.convert(source, self.style_from_wav(source))


def invert_cached_mel(mel_path: str | Path, mel_cfg: MelConfig, vocoder: Vocoder) -> Waveform:
    return vocoder(read_mel_cache(mel_path), mel_cfg)


def evaluate_checkpoint(
    converter: Converter,
    manifest: DatasetManifest,
    out_dir: str | Path,
    *,
    pairs: int,
    seed: int,
    classifier: SpeakerClassifier | None = None,
    splits: tuple[str, ...] = ("test",),
) -> tuple[EvaluationReport, dict[str, Path]]:
    """Convert random source/target pairs, then score F0 difference and (optionally) CLS."""
    out_dir = Path(out_dir)
    timings = TimingRecorder("evaluate_checkpoint")
    rng = np.random.default_rng(seed)
    with timings.measure("sample_pairs"):
        sampled = sample_conversion_pairs(manifest, rng, pairs, splits=splits)
    if not sampled:
        raise EmptyInputError("could not sample any source/target pair with references")

    records: list[ConversionRecord] = []
    used_names: set[str] = set()
    with timings.measure("convert_pairs"):
        for source_index, target, references in sampled:
            reference_paths = tuple(manifest.audio_path(i) for i in references)
            style = converter.style_from_wav(converter.load(reference_paths[0]))
            wave = converter.convert(converter.load(manifest.audio_path(source_index)), style)
            source_id = manifest.frame.at[source_index, "utterance_id"]
            name = _dedupe_name(f"{source_id}-to-{target}.wav", used_names)
            used_names.add(name)
            records.append(
                ConversionRecord(
                    source_id=source_id,
                    target_speaker=target,
                    converted_wave_path=write_wav(wave, out_dir / "converted" / name),
                    target_reference_paths=reference_paths,
                    source_speaker=manifest.frame.at[source_index, "speaker_id"],
                )
            )

    genders = manifest.genders()
    report = EvaluationReport(f0=f0_report(records, converter.mel_cfg), genders=genders, record_count=len(records))
    if classifier is not None:
        with timings.measure("classify"):
            hits = classify_records(records, classifier)
        report.cls = sum(hits) / len(hits)
        report.cls_by_type = conversion_type_accuracy(records, hits, genders)

    with timings.measure("write_report"):
        paths = write_report(report, out_dir)
        paths["external_manifest"] = export_external_manifest(records, out_dir / "external_manifest.csv")
    timings.log(records=len(records), invalid=report.f0.invalid_records)
    return report, paths


def _dedupe_name(name: str, existing_names: set[str]) -> str:
    """Keep generated names unique when different inputs would produce the same one."""
    candidate = name
    stem = Path(name).stem
    suffix = Path(name).suffix
    counter = 1
    while candidate in existing_names:
        candidate = f"{stem}-{counter}{suffix}"
        counter += 1
    return candidate
