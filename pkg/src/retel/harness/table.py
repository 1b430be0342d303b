"""Long-format result tables and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

HEADER = ("experiment", "n", "s", "l", "tau", "method", "metric", "value", "se")


def round6(v) -> float | None:
    if v is None:
        return None
    v = float(v)
    return float(f"{v:.6g}") if math.isfinite(v) else v


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return f"{v:.6g}"


@dataclass(frozen=True)
class Row:
    experiment: str
    n: int | None
    s: float | None
    l: float | None
    tau: float | None
    method: str
    metric: str
    value: float
    se: float | None = None

    def key(self):
        # NaN-aware identity for comparisons
        return tuple(("nan",) if isinstance(x, float) and math.isnan(x) else x for x in self.__dict__.values())


def qualify(metric: str, **coords) -> str:
    """``metric[k1=v1;k2=v2]``; extra coordinates live inside the metric name."""
    if not coords:
        return metric
    inner = ";".join(f"{k}={_fmt(v) if isinstance(v, float) else v}" for k, v in coords.items())
    return f"{metric}[{inner}]"


class ResultTable:
    def __init__(self, experiment: str, rows=None):
        self.experiment = experiment
        self.rows: list[Row] = list(rows or [])

    def add(self, metric, value, se=None, *, n=None, s=None, l=None, tau=None, method=""):
        self.rows.append(
            Row(
                self.experiment,
                None if n is None else int(n),
                round6(s),
                round6(l),
                round6(tau),
                str(method),
                metric,
                round6(value),
                round6(se),
            )
        )

    def extend(self, other: "ResultTable"):
        self.rows.extend(other.rows)

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        return isinstance(other, ResultTable) and [r.key() for r in self.rows] == [r.key() for r in other.rows]

    def select(self, metric=None, method=None, **coords):
        out = []
        for r in self.rows:
            if metric is not None and r.metric != metric:
                continue
            if method is not None and r.method != str(method):
                continue
            if any(getattr(r, k) != (v if k == "n" else round6(v)) for k, v in coords.items()):
                continue
            out.append(r)
        return out

    def value(self, metric, method=None, **coords) -> float:
        rows = self.select(metric, method, **coords)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {metric!r} {method!r} {coords}")
        return rows[0].value

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for r in self.rows:
            w.writerow([r.experiment, _fmt(r.n), _fmt(r.s), _fmt(r.l), _fmt(r.tau), r.method, r.metric, _fmt(r.value), _fmt(r.se)])
        return buf.getvalue()

    def write(self, path):
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        rd = csv.reader(io.StringIO(text))
        head = next(rd, None)
        if tuple(head or ()) != HEADER:
            raise ValueError(f"unexpected header {head}")
        rows = []
        for rec in rd:
            if len(rec) != len(HEADER):
                raise ValueError(f"row has {len(rec)} fields")
            e, n, s, l, tau, m, metric, v, se = rec
            opt = lambda t: None if t == "" else float(t)  # noqa: E731
            rows.append(Row(e, None if n == "" else int(n), opt(s), opt(l), opt(tau), m, metric, float(v), opt(se)))
        exp = rows[0].experiment if rows else ""
        return cls(exp, rows)

    @classmethod
    def read(cls, path) -> "ResultTable":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))
