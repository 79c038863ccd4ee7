#!/usr/bin/env python3
"""
Compare two checkpoint directories tensor by tensor for reproducibility checks.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from src.checkpoint import read_metadata
from src.mel_cache import ARCHIVE_SUFFIX, read_tensor_archive


def compare_checkpoints(left_path: Path, right_path: Path, diff_limit: int) -> dict[str, object]:
    """Report archives and tensors that are not bit-identical, plus metadata mismatches."""
    left_meta = read_metadata(left_path)
    right_meta = read_metadata(right_path)
    left_files = sorted(p.name for p in left_path.glob(f"*{ARCHIVE_SUFFIX}"))
    right_files = sorted(p.name for p in right_path.glob(f"*{ARCHIVE_SUFFIX}"))

    diffs: list[dict[str, object]] = []
    compared = 0
    for name in sorted(set(left_files) & set(right_files)):
        left = read_tensor_archive(left_path / name)
        right = read_tensor_archive(right_path / name)
        for key in sorted(set(left) | set(right)):
            if key not in left or key not in right:
                diffs.append({"archive": name, "tensor": key, "reason": "missing on one side"})
            elif left[key].shape != right[key].shape:
                diffs.append({"archive": name, "tensor": key, "reason": f"shape {left[key].shape} != {right[key].shape}"})
            elif left[key].tobytes() != right[key].tobytes():
                diffs.append(
                    {
                        "archive": name,
                        "tensor": key,
                        "reason": "values differ",
                        "max_abs_diff": float(np.max(np.abs(left[key] - right[key]))),
                    }
                )
            compared += 1
            # Stop after diff_limit mismatches so the output stays readable.
            if len(diffs) >= diff_limit:
                break
        if len(diffs) >= diff_limit:
            break

    return {
        "left": str(left_path),
        "right": str(right_path),
        "same_archives": left_files == right_files,
        "same_step": left_meta.get("step") == right_meta.get("step"),
        "same_model_config": left_meta.get("model") == right_meta.get("model"),
        "same_speakers": left_meta.get("speakers") == right_meta.get("speakers"),
        "tensors_compared": compared,
        "identical": not diffs and left_files == right_files,
        "diffs": diffs,
    }


def main() -> None:
    parser = argparse.ArgumentParser(description="Compare two checkpoint directories bitwise.")
    parser.add_argument("left", type=Path)
    parser.add_argument("right", type=Path)
    parser.add_argument("--diff-limit", type=int, default=20)
    args = parser.parse_args()

    result = compare_checkpoints(args.left, args.right, diff_limit=args.diff_limit)
    print(json.dumps(result, ensure_ascii=True, indent=2, sort_keys=True))
    raise SystemExit(0 if result["identical"] else 1)


if __name__ == "__main__":
    main()
