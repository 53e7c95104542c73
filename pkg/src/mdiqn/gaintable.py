"""Columnar gain-table files: one row per measured user pair.

Format (CSV, ``#`` lines are comments)::

    label,pair,loss_db,NS_zz,NSE_zz,NS_yy,NS_xo+ox,...,N_zz,...,ref_s11,...

* ``label`` -- unique row identifier (required); ``pair`` -- user pair, e.g. ``AB``;
  ``loss_db`` -- total pair loss.
* ``NS_<lr>`` -- Psi-minus events for intensities ``(l, r)``; ``NSE_<lr>`` -- error
  events among them. ``NS_<lr>+<rl>`` holds the sum of the mirrored pair, which is
  split as evenly as possible between ``(l, r)`` and ``(r, l)``; the analysis only
  uses such pairs pooled.
* ``N_<lr>`` -- pulse pairs sent; when absent it is reconstructed as
  ``N p_l p_r`` from the protocol.
* Any other column (``run``, ``ref_*``) is kept as metadata.

Empty ``NSE`` cells mean "error count not recorded".
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .model import SAME_BASIS_PAIRS, Counts, DataError, GainTally, IntensityProtocol, default_protocol

_COUNT_COL = re.compile(r"^(NS|NSE|N)_([zyxo])([zyxo])(?:\+([zyxo])([zyxo]))?$")
BUNDLED_TABLE = "measured_30db.csv"


@dataclass(frozen=True)
class GainRecord:
    label: str
    tally: GainTally
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def pair(self) -> str:
        return self.metadata.get("pair", self.label)

    @property
    def loss_db(self) -> float:
        return float(self.metadata["loss_db"])


def bundled_table_path() -> Path:
    return Path(str(resources.files("mdiqn") / "data" / BUNDLED_TABLE))


def _parse_int(text: str, where: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: not a number: {text!r}") from None
    if value != int(value):
        raise DataError(f"{where}: count must be an integer, got {text!r}")
    if value < 0:
        raise DataError(f"{where}: negative count {text!r}")
    return int(value)


def _split(total: int) -> tuple[int, int]:
    return (total + 1) // 2, total // 2


def parse_gain_table(
    text: str, protocol: IntensityProtocol | None = None, source: str = "<gain table>"
) -> list[GainRecord]:
    protocol = protocol or default_protocol()
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines())
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DataError(f"{source}: no header row")
    reader = csv.reader([ln for _, ln in lines])
    header = [h.strip() for h in next(reader)]
    if "label" not in header:
        raise DataError(f"{source}:{lines[0][0]}: header lacks a 'label' column")
    if len(set(header)) != len(header):
        raise DataError(f"{source}:{lines[0][0]}: duplicate column names")

    count_cols = {}
    for col in header:
        m = _COUNT_COL.match(col)
        if m:
            kind, l, r, l2, r2 = m.groups()
            if l2 is not None and (l2, r2) != (r, l):
                raise DataError(f"{source}: column {col!r} does not pool a mirrored pair")
            if kind == "N" and l2 is not None:
                raise DataError(f"{source}: sent counts cannot be pooled ({col!r})")
            if (l, r) not in SAME_BASIS_PAIRS:
                raise DataError(f"{source}: column {col!r} is not a same-basis combination")
            count_cols[col] = (kind, (l, r), l2 is not None)

    records: list[GainRecord] = []
    seen = set()
    for (lineno, _), row in zip(lines[1:], reader):
        where = f"{source}:{lineno}"
        if len(row) != len(header):
            raise DataError(f"{where}: expected {len(header)} fields, found {len(row)}")
        cells = dict(zip(header, (c.strip() for c in row)))
        label = cells["label"]
        if not label:
            raise DataError(f"{where}: empty label")
        if label in seen:
            raise DataError(f"{where}: duplicate label {label!r}")
        seen.add(label)

        success: dict[tuple[str, str], int] = {}
        error: dict[tuple[str, str], int] = {}
        sent: dict[tuple[str, str], int] = {}
        for col, (kind, (l, r), pooled) in count_cols.items():
            cell = cells[col]
            if cell == "":
                if kind == "NS":
                    raise DataError(f"{where}: missing value in column {col!r}")
                continue
            value = _parse_int(cell, f"{where}, column {col!r}")
            target = {"NS": success, "NSE": error, "N": sent}[kind]
            keys = [(l, r), (r, l)] if pooled else [(l, r)]
            if any(k in target for k in keys):
                raise DataError(f"{where}: {kind} given twice for {(l, r)}")
            if pooled:
                a, b = _split(value)
                target[(l, r)], target[(r, l)] = a, b
            else:
                target[(l, r)] = value

        entries = {}
        for key, s in success.items():
            n = sent.get(key, protocol.sent(*key))
            e = error.get(key)
            if e is not None and e > s:
                raise DataError(f"{where}: error count {e} exceeds success count {s} for {key}")
            if s > n:
                raise DataError(f"{where}: success count {s} exceeds sent {n} for {key}")
            entries[key] = Counts(n, s, e)
        stray = set(error) - set(success)
        if stray:
            raise DataError(f"{where}: error counts without success counts for {sorted(stray)}")
        meta = {k: v for k, v in cells.items() if k not in count_cols}
        records.append(GainRecord(label, GainTally(entries), meta))
    return records


def ingest_gain_table(path, protocol: IntensityProtocol | None = None) -> list[GainRecord]:
    """Read a gain-table file; ``"bundled"`` selects the shipped 30 dB dataset."""
    p = bundled_table_path() if str(path) == "bundled" else Path(path)
    return parse_gain_table(p.read_text(), protocol, source=str(p))


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def format_gain_table(records: Iterable[GainRecord], comments: Iterable[str] = ()) -> str:
    """Serialise records with explicit per-entry counts; parsing it back is lossless."""
    records = list(records)
    meta_cols: list[str] = []
    for rec in records:
        for k in rec.metadata:
            if k not in meta_cols and k != "label":
                meta_cols.append(k)
    keys = [k for k in SAME_BASIS_PAIRS if any(k in rec.tally for rec in records)]
    count_cols = []
    for l, r in keys:
        count_cols += [f"N_{l}{r}", f"NS_{l}{r}", f"NSE_{l}{r}"]
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", *meta_cols, *count_cols])
    for rec in records:
        row = [rec.label, *(rec.metadata.get(k, "") for k in meta_cols)]
        for key in keys:
            c = rec.tally.entries.get(key)
            if c is None:
                row += ["0", "0", "0"]
            else:
                row += [c.sent, c.success, "" if c.error is None else c.error]
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_gain_table(path, records: Iterable[GainRecord], comments: Iterable[str] = ()) -> None:
    Path(path).write_text(format_gain_table(records, comments))
