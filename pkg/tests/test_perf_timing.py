from __future__ import annotations

import json

import pytest

from src.perf_timing import TimingRecorder, perf_timing_enabled


@pytest.mark.parametrize(
    ("name", "value", "expected"),
    [
        ("SGVC_PERF_TIMING", "1", True),
        ("SGVC_PERF_TIMING", "on", True),
        ("SGVC_PERF_TIMING", "0", False),
        ("PERF_TIMING_ENABLED", "true", True),
    ],
)
def test_timing_is_enabled_from_the_environment(monkeypatch: pytest.MonkeyPatch, name: str, value: str, expected: bool) -> None:
    monkeypatch.delenv("SGVC_PERF_TIMING", raising=False)
    monkeypatch.delenv("PERF_TIMING_ENABLED", raising=False)
    monkeypatch.setenv(name, value)

    assert perf_timing_enabled() is expected


def test_disabled_recorder_prints_nothing(capsys: pytest.CaptureFixture[str]) -> None:
    recorder = TimingRecorder("quiet", enabled=False)
    with recorder.measure("stage"):
        pass

    recorder.log(items=1)

    assert capsys.readouterr().out == ""
    assert recorder.stage_totals() == {}


def test_repeated_stages_are_grouped_into_one_perf_line(capsys: pytest.CaptureFixture[str]) -> None:
    recorder = TimingRecorder("train", enabled=True)
    for _ in range(3):
        with recorder.measure("d_step"):
            pass
    with recorder.measure("g_step"):
        pass

    recorder.log(steps=3)

    line = capsys.readouterr().out.strip()
    assert line.startswith("[PERF] ")
    payload = json.loads(line.removeprefix("[PERF] "))
    assert payload["label"] == "train"
    assert payload["context"] == {"steps": 3}
    assert {stage["name"]: stage["count"] for stage in payload["stages"]} == {"d_step": 3, "g_step": 1}
    assert set(recorder.stage_totals()) == {"d_step", "g_step"}
