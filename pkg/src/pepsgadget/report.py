"""Check records and deterministic JSON output."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

_COMPARE = {
    "<": lambda v, t: v < t,
    "<=": lambda v, t: v <= t,
    ">": lambda v, t: v > t,
    ">=": lambda v, t: v >= t,
    "==": lambda v, t: v == t,
}


@dataclass
class Check:
    name: str
    value: Any
    threshold: Any
    comparator: str = "<"
    passed: bool = False
    detail: str = ""

    @classmethod
    def make(cls, name: str, value, threshold, comparator: str = "<", detail: str = "") -> "Check":
        ok = False
        if value is not None and not (isinstance(value, float) and math.isnan(value)):
            ok = bool(_COMPARE[comparator](value, threshold))
        return cls(name, value, threshold, comparator, ok, detail)

    @classmethod
    def flag(cls, name: str, ok: bool, detail: str = "") -> "Check":
        return cls(name, bool(ok), True, "==", bool(ok), detail)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {fmt(self.value)} {self.comparator} {fmt(self.threshold)}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class Report:
    title: str
    checks: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def add(self, name: str, value, threshold, comparator: str = "<", detail: str = "") -> Check:
        c = Check.make(name, value, threshold, comparator, detail)
        self.checks.append(c)
        return c

    def flag(self, name: str, ok: bool, detail: str = "") -> Check:
        c = Check.flag(name, ok, detail)
        self.checks.append(c)
        return c

    def extend(self, other: "Report", prefix: str = "") -> None:
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.value, c.threshold, c.comparator, c.passed, c.detail))
        if other.data:
            self.data[prefix.rstrip(".") or other.title] = other.data

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "value": c.value, "threshold": c.threshold, "comparator": c.comparator, "pass": c.passed, "detail": c.detail}
                for c in self.checks
            ],
            "data": self.data,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def summary(self) -> str:
        return "\n".join(c.line() for c in self.checks)


def fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".6g")
    return str(x)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return json.dumps(str(obj))
        text = format(obj, ".17g")
        if "e" not in text and "." not in text and "n" not in text:
            text += ".0"
        return text
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    return json.dumps(str(obj))


def dumps(obj, indent: int = 2) -> str:
    """Sorted-key JSON with floats at 17 significant digits."""
    return _encode(_plain(obj), indent, 0) + "\n"


def loglog_slope(xs, ys) -> tuple[float, float]:
    """Least-squares slope of log y against log x and the R^2 of the fit."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    if x.size < 2 or not np.all(np.isfinite(y)):
        return float("nan"), float("nan")
    a, b = np.polyfit(x, y, 1)
    fit = a * x + b
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - fit) ** 2)) / ss if ss > 0 else 1.0
    return float(a), r2
