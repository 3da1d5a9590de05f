"""
Deterministic CSV and summary writers.

Every CSV starts with one comment line carrying the resolved scenario as
sorted JSON, then a header row. Numbers use 12 significant digits and LF
line endings so that identical inputs give byte-identical files.
"""
import json
import logging
import sys
from pathlib import Path
from typing import Any, Mapping, Optional, TextIO, Union

import pandas as pd

from scripts.core.config import csv_float_format

logger = logging.getLogger(__name__)

CONFIG_PREFIX = "# config: "


def config_comment(resolved: Mapping[str, Any]) -> str:
    """One-line JSON comment with sorted keys."""
    return CONFIG_PREFIX + json.dumps(dict(resolved), sort_keys=True, separators=(",", ":"))


def parse_config_comment(line: str) -> dict[str, Any]:
    """Inverse of config_comment."""
    if not line.startswith(CONFIG_PREFIX):
        raise ValueError("line is not a config comment")
    return json.loads(line[len(CONFIG_PREFIX) :])


def render_csv(frame: pd.DataFrame, resolved: Optional[Mapping[str, Any]] = None) -> str:
    body = frame.to_csv(index=False, float_format=csv_float_format(), lineterminator="\n")
    if resolved is None:
        return body
    return config_comment(resolved) + "\n" + body


def render_summary(summary: Mapping[str, Any]) -> str:
    """KEY=VALUE lines in insertion order."""
    lines = []
    for key, value in summary.items():
        if isinstance(value, float):
            value = csv_float_format() % value
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def _emit(text: str, out: Optional[Union[str, Path]], stream: TextIO) -> None:
    if out is None:
        stream.write(text)
        stream.flush()
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    logger.info(f"Wrote {path}")


def write_csv(
    frame: pd.DataFrame,
    resolved: Optional[Mapping[str, Any]],
    out: Optional[Union[str, Path]] = None,
) -> None:
    """Write a CSV to out, or to stdout when out is None."""
    _emit(render_csv(frame, resolved), out, sys.stdout)


def write_summary(
    summary: Mapping[str, Any],
    out: Optional[Union[str, Path]] = None,
    stream: Optional[TextIO] = None,
) -> None:
    """Write a summary to out, or to stream (stdout by default)."""
    _emit(render_summary(summary), out, stream or sys.stdout)
