from __future__ import annotations

from pathlib import Path

import pandas as pd
import pytest

from src.errors import LabelError, ManifestError
from src.manifest import DatasetManifest, load_manifest


def _frame(rows: list[tuple[str, str, str]]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"utterance_id": u, "speaker_id": s, "path": f"{s}/{u}.wav", "split": split} for u, s, split in rows]
    )


def test_speaker_table_is_sorted_and_labels_index_it() -> None:
    manifest = DatasetManifest(_frame([("a", "p2", "train"), ("b", "p1", "train"), ("c", "p3", "test")]))

    assert manifest.speakers == ["p1", "p2", "p3"]
    assert manifest.label_of("p2") == 1
    assert manifest.label_of("p2", ["p2", "p9"]) == 0


def test_unknown_speaker_is_a_label_error() -> None:
    manifest = DatasetManifest(_frame([("a", "p1", "train")]))

    with pytest.raises(LabelError):
        manifest.label_of("p7")


def test_missing_columns_are_rejected() -> None:
    with pytest.raises(ManifestError, match="split"):
        DatasetManifest(pd.DataFrame({"utterance_id": ["a"], "speaker_id": ["p1"], "path": ["x.wav"]}))


def test_duplicate_utterance_ids_are_rejected() -> None:
    with pytest.raises(ManifestError, match="duplicate"):
        DatasetManifest(_frame([("a", "p1", "train"), ("a", "p2", "train")]))


def test_unknown_split_is_rejected() -> None:
    with pytest.raises(ManifestError, match="split"):
        DatasetManifest(_frame([("a", "p1", "validation")]))


def test_empty_required_field_is_rejected() -> None:
    frame = _frame([("a", "p1", "train")])
    frame.loc[0, "path"] = " "

    with pytest.raises(ManifestError, match="empty"):
        DatasetManifest(frame)


def test_require_pairs_rejects_single_utterance_speakers() -> None:
    manifest = DatasetManifest(_frame([("a", "p1", "train"), ("b", "p1", "train"), ("c", "p2", "train")]))

    with pytest.raises(ManifestError, match="p2"):
        manifest.require_pairs()


def test_csv_round_trip_resolves_paths_against_its_folder(tmp_path: Path) -> None:
    frame = _frame([("a", "p1", "train"), ("b", "p1", "test")])
    frame["gender"] = ["F", "F"]
    path = DatasetManifest(frame).to_csv(tmp_path / "data" / "manifest.csv")

    manifest = DatasetManifest.from_csv(path)

    assert manifest.audio_path(0) == tmp_path / "data" / "p1" / "a.wav"
    assert manifest.mel_path(0) is None
    assert manifest.genders() == {"p1": "F"}


def test_load_manifest_keeps_only_requested_splits(tmp_path: Path) -> None:
    rows = [("a", "p1", "train"), ("b", "p1", "train"), ("c", "p1", "test"), ("d", "p2", "unseen")]
    path = DatasetManifest(_frame(rows)).to_csv(tmp_path / "manifest.csv")

    train = load_manifest(path)
    held_out = load_manifest(path, splits=("test", "unseen"), require_pairs=False)

    assert list(train.frame["utterance_id"]) == ["a", "b"]
    assert list(held_out.frame["utterance_id"]) == ["c", "d"]
    assert list(held_out.frame.index) == [0, 1]


def test_utterances_are_grouped_by_speaker() -> None:
    manifest = DatasetManifest(_frame([("a", "p1", "train"), ("b", "p2", "train"), ("c", "p1", "train")]))

    assert manifest.utterances_by_speaker() == {"p1": [0, 2], "p2": [1]}
