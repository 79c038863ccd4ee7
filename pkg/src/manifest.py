"""
Dataset manifest: one CSV row per utterance.

Required columns are utterance_id, speaker_id, path and split. Optional columns are
mel_path (cached log-mel blob) and gender. Relative paths resolve against the folder
that holds the manifest file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from .errors import LabelError, ManifestError

REQUIRED_COLUMNS = ("utterance_id", "speaker_id", "path", "split")
OPTIONAL_COLUMNS = ("mel_path", "gender")
SPLITS = ("train", "test", "unseen")


@dataclass
class DatasetManifest:
    frame: pd.DataFrame
    root: Path = field(default_factory=Path)

    def __post_init__(self) -> None:
        missing = [column for column in REQUIRED_COLUMNS if column not in self.frame.columns]
        if missing:
            raise ManifestError(f"manifest is missing column(s): {', '.join(missing)}")
        frame = self.frame.copy()
        for column in REQUIRED_COLUMNS + tuple(c for c in OPTIONAL_COLUMNS if c in frame.columns):
            frame[column] = frame[column].fillna("").astype(str).str.strip()
        empty = frame[list(REQUIRED_COLUMNS)].eq("").any(axis=1)
        if empty.any():
            raise ManifestError(f"manifest row(s) {list(frame.index[empty])} have empty required fields")
        duplicated = frame["utterance_id"].duplicated()
        if duplicated.any():
            raise ManifestError(f"duplicate utterance_id(s): {sorted(frame.loc[duplicated, 'utterance_id'])}")
        unknown_splits = sorted(set(frame["split"]) - set(SPLITS))
        if unknown_splits:
            raise ManifestError(f"unknown split value(s) {unknown_splits}; expected one of {list(SPLITS)}")
        self.frame = frame.reset_index(drop=True)
        self.root = Path(self.root)

    @classmethod
    def from_csv(cls, path: str | Path) -> DatasetManifest:
        path = Path(path)
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
            raise ManifestError(f"cannot parse manifest {path}: {exc}") from exc
        return cls(frame, root=path.parent)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False)
        return path

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def speakers(self) -> list[str]:
        """Speaker table: sorted unique speaker ids, the label of a speaker is its index."""
        return sorted(self.frame["speaker_id"].unique())

    @property
    def has_gender(self) -> bool:
        return "gender" in self.frame.columns and bool(self.frame["gender"].ne("").any())

    def subset(self, *splits: str) -> DatasetManifest:
        return DatasetManifest(self.frame[self.frame["split"].isin(splits)], root=self.root)

    def label_of(self, speaker_id: str, speakers: list[str] | None = None) -> int:
        table = speakers if speakers is not None else self.speakers
        try:
            return table.index(speaker_id)
        except ValueError:
            raise LabelError(f"speaker {speaker_id!r} is not in the speaker table") from None

    def resolve(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.root / path

    def audio_path(self, index: int) -> Path:
        return self.resolve(self.frame.at[index, "path"])

    def mel_path(self, index: int) -> Path | None:
        if "mel_path" not in self.frame.columns or not self.frame.at[index, "mel_path"]:
            return None
        return self.resolve(self.frame.at[index, "mel_path"])

    def genders(self) -> dict[str, str]:
        if not self.has_gender:
            return {}
        rows = self.frame[self.frame["gender"].ne("")]
        return dict(rows.groupby("speaker_id")["gender"].first())

    def utterances_by_speaker(self) -> dict[str, list[int]]:
        return {speaker: list(group.index) for speaker, group in self.frame.groupby("speaker_id", sort=True)}

    def require_pairs(self) -> DatasetManifest:
        """Reject manifests where a speaker cannot provide two distinct target utterances."""
        if self.frame.empty:
            raise ManifestError("manifest has no utterances")
        counts = self.frame.groupby("speaker_id").size()
        short = sorted(counts.index[counts < 2])
        if short:
            raise ManifestError(f"speaker(s) {short} have fewer than 2 utterances")
        return self


def load_manifest(path: str | Path, *, splits: tuple[str, ...] = ("train",), require_pairs: bool = True) -> DatasetManifest:
    manifest = DatasetManifest.from_csv(path).subset(*splits)
    return manifest.require_pairs() if require_pairs else manifest
