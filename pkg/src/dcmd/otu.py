"""OTU count tables: parsing, validation, filtering, resolutions.

Tables are delimited text (comma or tab, auto-detected from the first line)
with samples as rows and OTUs as columns. The first column holds sample ids;
an optional label column may be named at load time.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyResultError, TableFormatError, ValidationError


@dataclass(frozen=True)
class OtuTable:
    """Integer count matrix indexed (sample, OTU) with per-sample totals."""

    counts: np.ndarray
    sample_ids: tuple[str, ...]
    otu_ids: tuple[str, ...]
    labels: tuple[str, ...] | None = None
    totals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise ValidationError("counts must be a 2-D matrix")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(counts == np.floor(counts)):
                raise ValidationError("counts must be integers")
            counts = counts.astype(np.int64)
        if counts.min(initial=0) < 0:
            raise ValidationError("counts must be nonnegative")
        if counts.shape != (len(self.sample_ids), len(self.otu_ids)):
            raise ValidationError(
                f"counts shape {counts.shape} does not match "
                f"{len(self.sample_ids)} samples x {len(self.otu_ids)} OTUs"
            )
        if self.labels is not None and len(self.labels) != len(self.sample_ids):
            raise ValidationError("labels length must match sample count")
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ValidationError("duplicate sample ids")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "totals", counts.sum(axis=1))

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    @property
    def n_otus(self) -> int:
        return len(self.otu_ids)

    def take_samples(self, indices) -> "OtuTable":
        indices = np.asarray(indices, dtype=int)
        return replace(
            self,
            counts=self.counts[indices],
            sample_ids=tuple(self.sample_ids[i] for i in indices),
            labels=None if self.labels is None else tuple(self.labels[i] for i in indices),
        )

    def take_otus(self, indices) -> "OtuTable":
        indices = np.asarray(indices, dtype=int)
        return replace(
            self,
            counts=self.counts[:, indices],
            otu_ids=tuple(self.otu_ids[i] for i in indices),
        )

    def label_array(self) -> np.ndarray:
        if self.labels is None:
            raise ValidationError("table has no labels")
        return np.asarray(self.labels, dtype=object)


def _sniff_delimiter(line: str) -> str:
    return "\t" if line.count("\t") >= line.count(",") and "\t" in line else ","


def load_table(source, label_column: str | None = None, delimiter: str | None = None) -> OtuTable:
    """Parse a delimited count table into an OtuTable.

    `source` is a path or an open text stream. Raises TableFormatError with
    the offending row/column named for ragged rows, non-integer or negative
    counts, and duplicate sample ids.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise TableFormatError("empty input")
    if delimiter is None:
        delimiter = _sniff_delimiter(lines[0])
    rows = list(csv.reader(io.StringIO(text), delimiter=delimiter))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    header = rows[0]
    if len(header) < 2:
        raise TableFormatError("header must name a sample-id column and at least one OTU")
    column_names = [h.strip() for h in header[1:]]
    label_idx = None
    if label_column is not None:
        if label_column not in column_names:
            raise TableFormatError(f"label column {label_column!r} not found in header")
        label_idx = column_names.index(label_column)
    otu_ids = [c for i, c in enumerate(column_names) if i != label_idx]
    if not otu_ids:
        raise TableFormatError("no OTU columns after removing the label column")
    if len(rows) == 1:
        raise EmptyResultError("table has a header but no sample rows")

    sample_ids: list[str] = []
    labels: list[str] = []
    counts = np.zeros((len(rows) - 1, len(otu_ids)), dtype=np.int64)
    seen: set[str] = set()
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise TableFormatError(
                f"row {r}: expected {len(header)} fields, found {len(row)}"
            )
        sid = row[0].strip()
        if sid in seen:
            raise TableFormatError(f"row {r}: duplicate sample id {sid!r}")
        seen.add(sid)
        sample_ids.append(sid)
        j = 0
        for i, cell in enumerate(row[1:]):
            if i == label_idx:
                labels.append(cell.strip())
                continue
            cell = cell.strip()
            try:
                value = int(cell)
            except ValueError:
                raise TableFormatError(
                    f"row {r}, column {column_names[i]!r}: non-integer count {cell!r}"
                ) from None
            if value < 0:
                raise TableFormatError(
                    f"row {r}, column {column_names[i]!r}: negative count {value}"
                )
            counts[r - 2, j] = value
            j += 1
    return OtuTable(
        counts=counts,
        sample_ids=tuple(sample_ids),
        otu_ids=tuple(otu_ids),
        labels=tuple(labels) if label_idx is not None else None,
    )


def save_table(table: OtuTable, path, delimiter: str = ",", label_column: str = "label") -> None:
    """Write a table in the same delimited layout load_table reads."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        header = ["sample_id", *table.otu_ids]
        if table.labels is not None:
            header.append(label_column)
        writer.writerow(header)
        for i, sid in enumerate(table.sample_ids):
            row = [sid, *map(int, table.counts[i])]
            if table.labels is not None:
                row.append(table.labels[i])
            writer.writerow(row)


def filter_table(table: OtuTable, min_reads: int = 0, min_mean_rel_abundance: float = 0.0) -> OtuTable:
    """Drop low-read samples, then low-abundance OTUs.

    Samples with total reads below `min_reads` go first; OTUs whose mean
    relative abundance over the remaining samples is below
    `min_mean_rel_abundance` go second. Totals are recomputed from the
    surviving OTUs.
    """
    if min_reads < 0 or min_mean_rel_abundance < 0:
        raise ValidationError("filter thresholds must be nonnegative")
    keep_samples = np.flatnonzero(table.totals >= min_reads)
    if keep_samples.size == 0:
        raise EmptyResultError(f"no samples with at least {min_reads} reads")
    out = table.take_samples(keep_samples)
    if min_mean_rel_abundance > 0:
        totals = out.totals.astype(float)
        if np.any(totals == 0):
            # all-zero samples survive only when min_reads == 0; they carry no
            # abundance information
            totals = np.where(totals == 0, 1.0, totals)
        mean_rel = (out.counts / totals[:, None]).mean(axis=0)
        keep_otus = np.flatnonzero(mean_rel >= min_mean_rel_abundance)
        if keep_otus.size == 0:
            raise EmptyResultError(
                f"no OTUs with mean relative abundance >= {min_mean_rel_abundance}"
            )
        out = out.take_otus(keep_otus)
    return out


def compute_resolutions(table: OtuTable) -> np.ndarray:
    """Per-sample resolutions t_i = N_i / mean(N); averages to one exactly."""
    if table.n_samples == 0:
        raise ValidationError("empty table")
    totals = table.totals.astype(float)
    zero = np.flatnonzero(totals == 0)
    if zero.size:
        raise ValidationError(
            f"sample {table.sample_ids[zero[0]]!r} has zero total reads"
        )
    return totals / totals.mean()


def relative_abundance(table: OtuTable) -> np.ndarray:
    """Row-normalized counts n_ij / N_i; rows sum to one."""
    totals = table.totals.astype(float)
    zero = np.flatnonzero(totals == 0)
    if zero.size:
        raise ValidationError(
            f"sample {table.sample_ids[zero[0]]!r} has zero total reads"
        )
    return table.counts / totals[:, None]
