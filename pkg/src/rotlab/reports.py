"""
Tabular run reports: a time (or parameter) series, scalar results and verdicts.

Verdicts are recomputed from the stored series by a function registered per
report ``kind``, so a report loaded back from disk can be re-judged without
rerunning anything.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

_VERDICTS = {}


def verdict_rule(kind):
    """Register ``fn(report) -> dict[str, bool]`` as the verdict rule for ``kind``."""

    def deco(fn):
        _VERDICTS[kind] = fn
        return fn

    return deco


def _encode(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
    if isinstance(v, dict):
        return {k: _encode(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_encode(x) for x in v]
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _decode(v):
    if v in ("nan", "inf", "-inf"):
        return float(v)
    if isinstance(v, dict):
        return {k: _decode(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_decode(x) for x in v]
    return v


@dataclass
class RunReport:
    kind: str
    columns: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    scalars: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add_row(self, **values):
        if not self.columns:
            self.columns = list(values)
        missing = set(self.columns) ^ set(values)
        if missing:
            raise KeyError(f"row keys differ from columns: {sorted(missing)}")
        self.rows.append([float(values[c]) for c in self.columns])

    def column(self, name) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def judge(self) -> dict:
        """Recompute verdicts from the stored series and scalars."""
        rule = _VERDICTS.get(self.kind)
        self.verdicts = {} if rule is None else {k: bool(v) for k, v in rule(self).items()}
        return self.verdicts

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([repr(float(x)) for x in r])
        return buf.getvalue()

    def summary(self) -> dict:
        return _encode({
            "kind": self.kind,
            "columns": list(self.columns),
            "scalars": self.scalars,
            "verdicts": self.verdicts,
            "passed": self.passed,
            "meta": self.meta,
        })

    def json_text(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_text(cls, csv_text: str, json_text: str) -> "RunReport":
        doc = _decode(json.loads(json_text))
        rows = list(csv.reader(io.StringIO(csv_text)))
        columns = rows[0] if rows else list(doc.get("columns", []))
        data = [[float(x) for x in r] for r in rows[1:]]
        return cls(kind=doc["kind"], columns=columns, rows=data, scalars=doc.get("scalars", {}),
                   verdicts=doc.get("verdicts", {}), meta=doc.get("meta", {}))
