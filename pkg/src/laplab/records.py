"""Tabular sweep records shared by the resolvent module and the suites."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SweepRecord"]


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


@dataclass
class SweepRecord:
    """Rows of (lam, eps, sign, psi, metric, value) plus verdicts and states.

    ``states`` optionally holds solution vectors keyed by (eps, psi_label)
    for downstream extrapolation; they are excluded from serialization.
    """

    meta: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    states: dict = field(default_factory=dict)
    truncation_limited: bool = False

    def add(self, lam: float, eps: float, sign: int, psi_label: str,
            metric: str, value) -> None:
        self.rows.append({
            "lam": float(lam), "eps": float(eps), "sign": int(sign),
            "psi": str(psi_label), "metric": str(metric),
            "value": _jsonable(value),
        })

    def values(self, metric: str, **match) -> list:
        out = []
        for row in self.rows:
            if row["metric"] != metric:
                continue
            if any(row.get(k) != v for k, v in match.items()):
                continue
            out.append(row)
        return out

    def series(self, metric: str, **match):
        """(eps array, value array) for one metric, sorted by decreasing eps."""
        rows = self.values(metric, **match)
        rows.sort(key=lambda r: -r["eps"])
        eps = np.array([r["eps"] for r in rows])
        vals = np.array([r["value"] for r in rows])
        return eps, vals

    def to_json(self) -> str:
        return json.dumps(
            {"schema_version": 1,
             "meta": {k: _jsonable(v) for k, v in sorted(self.meta.items())},
             "truncation_limited": self.truncation_limited,
             "verdicts": {k: _jsonable(v) for k, v in sorted(self.verdicts.items())},
             "rows": self.rows},
            sort_keys=True, indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["lam", "eps", "sign", "psi",
                                                 "metric", "value"])
        writer.writeheader()
        for row in self.rows:
            flat = dict(row)
            if isinstance(flat["value"], dict):
                flat["value"] = complex(flat["value"]["re"], flat["value"]["im"])
            writer.writerow(flat)
        return buf.getvalue()

    def write(self, json_path=None, csv_path=None) -> None:
        if json_path is not None:
            with open(json_path, "w", encoding="utf-8") as fh:
                fh.write(self.to_json())
        if csv_path is not None:
            with open(csv_path, "w", encoding="utf-8") as fh:
                fh.write(self.to_csv())
