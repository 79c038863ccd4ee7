"""
Human-readable failure reports written next to a run's artifacts.
"""

from __future__ import annotations

import io
import json
import traceback
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from rich.console import Console
from rich.traceback import Traceback

from .errors import NumericError, exit_code_for

FAILURE_LOG_NAME = "failure.log"


def write_failure_log(
    *,
    run_dir: Path,
    command: str,
    seed: int | None,
    exception: BaseException,
    started_at: str = "",
    context: dict[str, Any] | None = None,
) -> Path:
    run_dir.mkdir(parents=True, exist_ok=True)
    log_path = run_dir / FAILURE_LOG_NAME
    recorder = Console(record=True, width=120, file=io.StringIO())
    recorder.print(
        Traceback.from_exception(
            type(exception),
            exception,
            exception.__traceback__,
            show_locals=True,
            max_frames=50,
        )
    )
    detailed_traceback = recorder.export_text()
    standard_traceback = "".join(traceback.format_exception(type(exception), exception, exception.__traceback__))
    lines = [
        f"command: {command}",
        f"seed: {seed if seed is not None else ''}",
        f"started_at_utc: {started_at}",
        f"failed_at_utc: {datetime.now(timezone.utc).isoformat(timespec='seconds')}",
        f"exit_code: {exit_code_for(exception)}",
        f"error_type: {type(exception).__name__}",
        f"error_message: {exception}",
    ]
    if isinstance(exception, NumericError):
        lines += [f"component: {exception.component}", "last_report:", json.dumps(exception.report, indent=2, sort_keys=True)]
    lines += [
        "",
        "standard_traceback:",
        standard_traceback.rstrip(),
        "",
        "rich_traceback:",
        detailed_traceback.rstrip(),
    ]
    if context:
        lines += ["", "context:", json.dumps(context, ensure_ascii=True, indent=2, sort_keys=True, default=str)]
    log_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return log_path
