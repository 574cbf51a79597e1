"""Apply rejection policies to p-value datasets and cross-tabulate discoveries."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

__all__ = ["Dataset", "DiscoveryReport", "read_dataset", "apply_policies"]


@dataclass
class Dataset:
    """Rows of per-outcome p-values plus parse diagnostics."""

    ids: list
    pvalues: np.ndarray  # (n, k)
    kind: str  # "p" or "z" (as supplied; z-scores arrive converted)
    skipped: list = field(default_factory=list)  # (line_number, reason)

    @property
    def k(self) -> int:
        return self.pvalues.shape[1]


def read_dataset(path) -> Dataset:
    """Read a CSV of per-outcome p-values or z-scores.

    The header is either ``id,p1,...,pK`` or ``id,z1,...,zK``; z-scores
    convert to one-sided p-values via the normal CDF (callers supply the
    one-sided orientation).  Malformed rows are skipped and reported with
    their line numbers; a header that matches neither shape is fatal.
    """
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty dataset file") from None
    header = [h.strip().lower() for h in header]
    if len(header) < 2 or header[0] != "id":
        raise ValueError("header must be id,p1,...,pK or id,z1,...,zK")
    k = len(header) - 1
    if header[1:] == [f"p{i}" for i in range(1, k + 1)]:
        kind = "p"
    elif header[1:] == [f"z{i}" for i in range(1, k + 1)]:
        kind = "z"
    else:
        raise ValueError(f"unrecognized column names {header[1:]}")

    ids, rows, skipped = [], [], []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != k + 1:
            skipped.append((line_no, f"expected {k + 1} fields, got {len(row)}"))
            continue
        try:
            vals = np.array([float(c) for c in row[1:]])
        except ValueError:
            skipped.append((line_no, "non-numeric entry"))
            continue
        if kind == "p" and (np.any(vals < 0) or np.any(vals > 1) or np.any(np.isnan(vals))):
            skipped.append((line_no, "p-value outside [0, 1]"))
            continue
        if kind == "z" and np.any(np.isnan(vals)):
            skipped.append((line_no, "NaN z-score"))
            continue
        ids.append(row[0].strip())
        rows.append(vals)
    if not rows:
        raise ValueError("no valid data rows")
    P = np.vstack(rows)
    if kind == "z":
        P = ndtr(P)
    return Dataset(ids=ids, pvalues=P, kind=kind, skipped=skipped)


@dataclass
class DiscoveryReport:
    """Per-row rejections for several procedures, with summary and cross-tabs."""

    ids: list
    procedures: list
    counts: dict  # name -> (n,) rejection counts
    rejected: dict  # name -> list of sorted index tuples (0-based)
    skipped: list
    k: int

    def summary(self) -> dict:
        out = {}
        for name in self.procedures:
            c = self.counts[name]
            out[name] = {
                "average_discoveries": float(np.mean(c)),
                "fraction_any_discovery": float(np.mean(c > 0)),
            }
        return out

    def crosstab(self, name_a: str, name_b: str) -> np.ndarray:
        """(k+1) x (k+1) table of joint discovery counts (rows: a, cols: b)."""
        table = np.zeros((self.k + 1, self.k + 1), dtype=int)
        for ca, cb in zip(self.counts[name_a], self.counts[name_b]):
            table[ca, cb] += 1
        return table

    def to_dict(self) -> dict:
        pairs = [(a, b) for i, a in enumerate(self.procedures) for b in self.procedures[i + 1:]]
        return {
            "format": 1,
            "n_rows": len(self.ids),
            "k": self.k,
            "procedures": list(self.procedures),
            "summary": self.summary(),
            "crosstabs": {
                f"{a}|{b}": self.crosstab(a, b).tolist() for a, b in pairs
            },
            "skipped_rows": [{"line": ln, "reason": r} for ln, r in self.skipped],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def rows_csv(self) -> str:
        """Per-row CSV: id, then per-procedure count and rejected indices (1-based)."""
        buf = io.StringIO()
        cols = ["id"]
        for name in self.procedures:
            cols += [f"{name}_count", f"{name}_rejected"]
        buf.write(",".join(cols) + "\n")
        for i, rid in enumerate(self.ids):
            cells = [rid]
            for name in self.procedures:
                idx = self.rejected[name][i]
                cells.append(str(int(self.counts[name][i])))
                cells.append(";".join(str(j + 1) for j in idx))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def apply_policies(dataset: Dataset, policies: dict) -> DiscoveryReport:
    """Apply named fitted policies to every dataset row.

    Parameters
    ----------
    dataset : Dataset
    policies : dict
        Mapping of procedure name to fitted policy; all must share the
        dataset's number of hypotheses.
    """
    names = list(policies)
    counts, rejected = {}, {}
    for name, pol in policies.items():
        if pol.k != dataset.k:
            raise ValueError(f"policy {name!r} expects k={pol.k}, dataset has k={dataset.k}")
        mask = pol.predict(dataset.pvalues)
        counts[name] = mask.sum(axis=1).astype(int)
        rejected[name] = [tuple(np.flatnonzero(row)) for row in mask]
    return DiscoveryReport(
        ids=list(dataset.ids),
        procedures=names,
        counts=counts,
        rejected=rejected,
        skipped=list(dataset.skipped),
        k=dataset.k,
    )
