"""
Objective metrics for converted speech: F0 difference and speaker classification
accuracy, plus manifest export for external scoring tools.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import torch
from openpyxl import load_workbook
from openpyxl.styles import Font, PatternFill
from openpyxl.utils import get_column_letter
from tabulate import tabulate

from .audio import Waveform, load_and_resample
from .checkpoint import load_checkpoint
from .config import MelConfig
from .errors import EmptyInputError, SchemaError
from .features import MelNormalizer, fit_width, mel_spectrogram
from .manifest import DatasetManifest
from .networks import SubbandGAN
from .pitch import estimate_f0
from .trainer import evaluation

EXTERNAL_COLUMNS = ("utterance_path", "source_id", "target_speaker", "reference_paths", "transcript")
REFERENCE_SEPARATOR = "|"


@dataclass
class ConversionRecord:
    source_id: str
    target_speaker: str
    converted_wave_path: Path
    target_reference_paths: tuple[Path, ...]
    source_speaker: str = ""
    transcript: str = ""

    def __post_init__(self) -> None:
        self.converted_wave_path = Path(self.converted_wave_path)
        self.target_reference_paths = tuple(Path(p) for p in self.target_reference_paths)


@dataclass
class F0Report:
    per_speaker_f0diff: dict[str, float]
    m_f0_diff: float | None
    per_record: list[float | None] = field(default_factory=list)
    invalid_records: int = 0


def compute_f0_diff(converted: Waveform, target_refs: Sequence[Waveform], frame: MelConfig) -> float | None:
    """
    |mean voiced F0 of the conversion - mean voiced F0 pooled over the references|.

    Returns None when either side has no voiced frame, which marks the record invalid.
    """
    if len(converted) == 0:
        raise EmptyInputError("converted waveform is empty")
    if not target_refs:
        raise EmptyInputError("at least one target reference is required")
    converted_f0 = estimate_f0(converted, frame).mean_voiced_f0()
    pooled = np.concatenate([estimate_f0(ref, frame).voiced_f0 for ref in target_refs])
    if converted_f0 is None or len(pooled) == 0:
        return None
    return abs(converted_f0 - float(pooled.mean()))


def m_f0_diff(values: Sequence[float]) -> float:
    if not values:
        raise EmptyInputError("no valid F0 differences to average")
    return sum(values) / len(values)


def f0_report(records: Sequence[ConversionRecord], frame: MelConfig) -> F0Report:
    if not records:
        raise EmptyInputError("no conversion records to evaluate")
    per_record: list[float | None] = []
    by_speaker: dict[str, list[float]] = {}
    for record in records:
        converted = load_and_resample(record.converted_wave_path, frame.sample_rate)
        refs = [load_and_resample(path, frame.sample_rate) for path in record.target_reference_paths]
        value = compute_f0_diff(converted, refs, frame)
        per_record.append(value)
        if value is not None:
            by_speaker.setdefault(record.target_speaker, []).append(value)
    valid = [value for value in per_record if value is not None]
    return F0Report(
        per_speaker_f0diff={speaker: m_f0_diff(values) for speaker, values in sorted(by_speaker.items())},
        m_f0_diff=m_f0_diff(valid) if valid else None,
        per_record=per_record,
        invalid_records=len(per_record) - len(valid),
    )


@dataclass
class SpeakerClassifier:
    """Style-encoder classifier with its speaker table and mel front end."""

    models: SubbandGAN
    speakers: list[str]
    mel_cfg: MelConfig

    @classmethod
    def from_checkpoint(cls, path: str | Path, device: str = "cpu") -> SpeakerClassifier:
        checkpoint = load_checkpoint(path, device=device)
        if "style_encoder" not in checkpoint.parts:
            raise SchemaError(f"{path} does not contain a style encoder")
        return cls(models=checkpoint.models, speakers=checkpoint.speakers, mel_cfg=checkpoint.mel_cfg)

    def predict(self, waves: Sequence[Waveform], batch_size: int = 16) -> list[int]:
        normalizer = MelNormalizer.from_config(self.mel_cfg)
        mels = [
            normalizer.normalize(
                fit_width(mel_spectrogram(wave, self.mel_cfg), self.mel_cfg.target_width, pad_value=self.mel_cfg.pad_value).values
            )
            for wave in waves
        ]
        predictions: list[int] = []
        device = next(self.models.parameters()).device
        with evaluation(self.models):
            for start in range(0, len(mels), batch_size):
                batch = torch.from_numpy(np.stack(mels[start:start + batch_size])).unsqueeze(1).to(device)
                predictions.extend(self.models.encode_style(batch).class_logits.argmax(dim=1).tolist())
        return predictions


def classify_records(records: Sequence[ConversionRecord], classifier: SpeakerClassifier) -> list[bool]:
    if not records:
        raise EmptyInputError("no conversion records to classify")
    unknown = sorted({r.target_speaker for r in records} - set(classifier.speakers))
    if unknown:
        raise SchemaError(f"speakers: classifier table does not contain target speaker(s) {unknown}")
    waves = [load_and_resample(r.converted_wave_path, classifier.mel_cfg.sample_rate) for r in records]
    predictions = classifier.predict(waves)
    return [classifier.speakers[p] == r.target_speaker for p, r in zip(predictions, records)]


def compute_cls(records: Sequence[ConversionRecord], classifier: SpeakerClassifier) -> float:
    """Fraction of conversions the classifier assigns to their target speaker."""
    hits = classify_records(records, classifier)
    return sum(hits) / len(hits)


def conversion_type_accuracy(
    records: Sequence[ConversionRecord],
    hits: Sequence[bool],
    genders: dict[str, str],
) -> dict[str, float]:
    """CLS per conversion direction such as F2M, for records whose two genders are known."""
    buckets: dict[str, list[bool]] = {}
    for record, hit in zip(records, hits):
        source, target = genders.get(record.source_speaker, ""), genders.get(record.target_speaker, "")
        if source and target:
            buckets.setdefault(f"{source}2{target}", []).append(hit)
    return {kind: sum(values) / len(values) for kind, values in sorted(buckets.items())}


def export_external_manifest(records: Sequence[ConversionRecord], out_path: str | Path) -> Path:
    """CSV for external pMOS/ASR tools with every path relative to the CSV's folder."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    base = out_path.parent.resolve()

    def relative(path: Path) -> str:
        return Path(os.path.relpath(Path(path).resolve(), base)).as_posix()

    rows = [
        {
            "utterance_path": relative(r.converted_wave_path),
            "source_id": r.source_id,
            "target_speaker": r.target_speaker,
            "reference_paths": REFERENCE_SEPARATOR.join(relative(p) for p in r.target_reference_paths),
            "transcript": r.transcript,
        }
        for r in records
    ]
    pd.DataFrame(rows, columns=list(EXTERNAL_COLUMNS)).to_csv(out_path, index=False)
    return out_path


def read_external_manifest(path: str | Path) -> list[ConversionRecord]:
    path = Path(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    base = path.parent
    return [
        ConversionRecord(
            source_id=row.source_id,
            target_speaker=row.target_speaker,
            converted_wave_path=base / row.utterance_path,
            target_reference_paths=tuple(base / p for p in row.reference_paths.split(REFERENCE_SEPARATOR) if p),
            transcript=row.transcript,
        )
        for row in frame.itertuples(index=False)
    ]


def sample_conversion_pairs(
    manifest: DatasetManifest,
    rng: np.random.Generator,
    count: int,
    *,
    splits: tuple[str, ...] = ("test",),
) -> list[tuple[int, str, list[int]]]:
    """
    Random (source row, target speaker, reference rows) triples for batch evaluation.

    Sources come from `splits`; references are the target speaker's rows in the same
    splits, excluding the source row itself.
    """
    pool = manifest.frame[manifest.frame["split"].isin(splits)]
    if pool.empty:
        raise EmptyInputError(f"manifest has no utterances in split(s) {list(splits)}")
    speakers = sorted(pool["speaker_id"].unique())
    pairs = []
    for _ in range(count):
        source = int(rng.choice(pool.index))
        source_speaker = manifest.frame.at[source, "speaker_id"]
        candidates = [s for s in speakers if s != source_speaker] or speakers
        target = candidates[int(rng.integers(0, len(candidates)))]
        references = [int(i) for i in pool.index[pool["speaker_id"] == target] if i != source]
        if references:
            pairs.append((source, target, references))
    return pairs


@dataclass
class EvaluationReport:
    f0: F0Report
    cls: float | None = None
    cls_by_type: dict[str, float] = field(default_factory=dict)
    genders: dict[str, str] = field(default_factory=dict)
    record_count: int = 0

    def speaker_table(self) -> pd.DataFrame:
        rows = [
            {"ID": speaker, "Gender": self.genders.get(speaker, ""), "F0_diff": round(value, 4)}
            for speaker, value in self.f0.per_speaker_f0diff.items()
        ]
        return pd.DataFrame(rows, columns=["ID", "Gender", "F0_diff"])

    def summary(self) -> dict[str, object]:
        return {
            "records": self.record_count,
            "invalid_records": self.f0.invalid_records,
            "mF0_diff": self.f0.m_f0_diff,
            "CLS": self.cls,
            "CLS_by_type": self.cls_by_type,
        }


def write_report(report: EvaluationReport, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json, a plain-text table and an xlsx workbook; return their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = report.speaker_table()
    summary = report.summary()

    json_path = out_dir / "report.json"
    json_path.write_text(
        json.dumps(
            {"summary": summary, "per_speaker": table.to_dict(orient="records"), "f0": asdict(report.f0)},
            indent=2,
            sort_keys=True,
        ),
        encoding="utf-8",
    )

    text_path = out_dir / "report.txt"
    summary_rows = [(key, "" if value is None else value) for key, value in summary.items() if key != "CLS_by_type"]
    summary_rows += [(f"CLS {kind}", value) for kind, value in report.cls_by_type.items()]
    text_path.write_text(
        tabulate(table, headers="keys", tablefmt="github", showindex=False, floatfmt=".4f")
        + "\n\n"
        + tabulate(summary_rows, headers=["metric", "value"], tablefmt="github")
        + "\n",
        encoding="utf-8",
    )

    xlsx_path = out_dir / "report.xlsx"
    with pd.ExcelWriter(xlsx_path, engine="openpyxl") as writer:
        table.to_excel(writer, sheet_name="per_speaker", index=False)
        pd.DataFrame(summary_rows, columns=["metric", "value"]).to_excel(writer, sheet_name="summary", index=False)
    _format_workbook(xlsx_path)
    return {"json": json_path, "text": text_path, "xlsx": xlsx_path}


def _format_workbook(path: Path) -> None:
    workbook = load_workbook(path)
    header_fill = PatternFill(start_color="DDEBF7", end_color="DDEBF7", fill_type="solid")
    for sheet in workbook.worksheets:
        for cell in sheet[1]:
            cell.font = Font(bold=True)
            cell.fill = header_fill
        for index, column in enumerate(sheet.iter_cols(), start=1):
            width = max(len(str(cell.value)) if cell.value is not None else 0 for cell in column)
            sheet.column_dimensions[get_column_letter(index)].width = min(max(10, width + 2), 60)
        sheet.freeze_panes = "A2"
    workbook.save(path)
