"""Experiment report schema: one JSON object or a flattened CSV.

A report carries the full invoked config (seed included), a ``results``
array of row dicts, and named pass/fail ``checks`` with their measured
values.  Rendering is byte deterministic for a fixed config and seed:
insertion-ordered keys, repr-based floats, no timestamps.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from dataclasses import dataclass, field


@dataclass
class Report:
    command: str
    config: dict
    version: str
    results: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    def add_check(self, name: str, passed: bool, measured, expected=None, tolerance=None) -> None:
        entry = {"name": name, "passed": bool(passed), "measured": measured}
        if expected is not None:
            entry["expected"] = expected
        if tolerance is not None:
            entry["tolerance"] = tolerance
        self.checks.append(entry)

    def all_passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_json(self) -> str:
        payload = {
            "command": self.command,
            "version": self.version,
            "config": self.config,
            "results": self.results,
            "checks": self.checks,
        }
        return json.dumps(payload, indent=2, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.results:
            writer = csv.DictWriter(buf, fieldnames=list(self.results[0].keys()), lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.results)
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        raise ValueError(f"unknown output format {fmt!r}")

    def write(self, fmt: str, path: str | None) -> None:
        text = self.render(fmt)
        if path is None or path == "-":
            sys.stdout.write(text)
        else:
            with open(path, "w", encoding="ascii", newline="") as fh:
                fh.write(text)


def clean_float(x) -> float:
    """Round-trippable plain float for embedding into reports."""
    return float(x)
