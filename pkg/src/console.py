"""
Shared rich console for human-readable progress lines on stderr.
"""

from __future__ import annotations

from rich.console import Console

console = Console(stderr=True, highlight=False)


def log(level: str, source: str, message: str) -> None:
    # markup=False keeps the bracketed prefix literal.
    console.print(f"[{level} {source}] {message}", markup=False)


def info(source: str, message: str) -> None:
    log("INFO", source, message)


def warn(source: str, message: str) -> None:
    log("WARN", source, message)


def error(source: str, message: str) -> None:
    log("ERROR", source, message)
