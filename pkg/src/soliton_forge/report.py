"""Verification report records."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable

STATUSES = ("pass", "fail", "report-only")


@dataclass(frozen=True)
class ReportEntry:
    name: str
    status: str
    measured: Any
    tolerance: Any
    anchor: str

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if not self.anchor:
            raise ValueError("every entry needs an anchor")


@dataclass
class VerificationReport:
    entries: list = field(default_factory=list)

    def add(self, entry: ReportEntry) -> ReportEntry:
        self.entries.append(entry)
        return entry

    def extend(self, entries: Iterable[ReportEntry]) -> None:
        for e in entries:
            self.add(e)

    def __getitem__(self, name: str) -> ReportEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(e.name == name for e in self.entries)

    @property
    def passed(self) -> bool:
        return all(e.status != "fail" for e in self.entries)

    @property
    def failures(self) -> list:
        return [e.name for e in self.entries if e.status == "fail"]

    def to_json(self) -> str:
        return json.dumps([asdict(e) for e in self.entries], indent=2, default=_jsonable, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        return cls([ReportEntry(**d) for d in json.loads(text)])


def _jsonable(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def clean(value):
    """Replace non-finite floats (which JSON cannot carry) by strings, recursively."""
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    return value
