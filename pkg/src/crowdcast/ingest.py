"""CSV ingestion for campaign dumps.

Rows are parsed into immutable :class:`CampaignRecord` objects. Malformed rows
never raise; they are collected in an :class:`IngestReport` with a reason code.
Money is held as integer cents.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from pathlib import Path
from typing import IO, Iterable, Sequence

from .engine import Aggregator, Engine, partition

LOGICAL_COLUMNS = (
    "id",
    "name",
    "main_category",
    "category",
    "launched",
    "deadline",
    "state",
    "backers",
    "currency",
    "country",
    "goal",
    "usd_goal_real",
    "pledged",
    "usd_pledged",
    "usd_pledged_real",
)

# physical spellings seen in public dumps
_ALIASES = {"usd pledged": "usd_pledged", "usd_pledged": "usd_pledged"}

LAUNCHED_FORMAT = "%Y-%m-%d %H:%M:%S"
DEADLINE_FORMAT = "%Y-%m-%d"
SENTINEL_LAUNCH = datetime(1970, 1, 1, 1, 0, 0)

_CURRENCY_RE = re.compile(r"^[A-Z]{3}$")
_COUNTRY_RE = re.compile(r"^[A-Z]{2}$")
_CENT = Decimal("0.01")


class State(str, enum.Enum):
    FAILED = "Failed"
    SUCCESSFUL = "Successful"
    CANCELED = "Canceled"
    LIVE = "Live"
    SUSPENDED = "Suspended"

    @classmethod
    def parse(cls, text: str) -> "State":
        key = text.strip().lower()
        for s in cls:
            if s.value.lower() == key:
                return s
        raise ValueError(text)


class IngestError(Exception):
    pass


class MissingColumn(IngestError):
    def __init__(self, name):
        super().__init__(f"missing required column {name!r}")
        self.name = name


class DuplicateColumn(IngestError):
    def __init__(self, name):
        super().__init__(f"column {name!r} appears more than once")
        self.name = name


class FatalFormat(IngestError):
    pass


@dataclass(frozen=True)
class CampaignRecord:
    id: int
    name: str
    main_category: str
    category: str
    launched: datetime
    deadline: date
    state: State
    backers: int
    currency: str
    country: str
    goal: int
    usd_goal_real: int
    pledged: int
    usd_pledged: int | None
    usd_pledged_real: int

    @property
    def deadline_instant(self) -> datetime:
        return datetime(self.deadline.year, self.deadline.month, self.deadline.day)


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str
    raw: str

    def to_json(self) -> str:
        return json.dumps({"line": self.line, "reason": self.reason, "raw": self.raw})


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_accepted: int = 0
    rejections: list[Rejection] = field(default_factory=list)

    def merge(self, other: "IngestReport") -> "IngestReport":
        return IngestReport(
            self.rows_read + other.rows_read,
            self.rows_accepted + other.rows_accepted,
            sorted(self.rejections + other.rejections, key=lambda r: (r.line, r.reason, r.raw)),
        )

    def reason_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rejections:
            out[r.reason] = out.get(r.reason, 0) + 1
        return dict(sorted(out.items()))

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.rejections:
                fh.write(r.to_json() + "\n")

    def summary(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_accepted": self.rows_accepted,
            "rows_rejected": len(self.rejections),
            "reasons": self.reason_counts(),
        }


ColumnMapping = dict  # logical name -> physical column position


def validate_schema(header_row: Sequence[str]) -> ColumnMapping:
    """Map physical header positions to the 15 logical column names."""
    if not header_row:
        raise FatalFormat("empty header row")
    mapping: ColumnMapping = {}
    for pos, raw in enumerate(header_row):
        key = raw.strip().lstrip("﻿").lower()
        key = _ALIASES.get(key, key)
        if key not in LOGICAL_COLUMNS:
            continue
        if key in mapping:
            raise DuplicateColumn(key)
        mapping[key] = pos
    for name in LOGICAL_COLUMNS:
        if name not in mapping:
            raise MissingColumn(name)
    return mapping


class _Reject(Exception):
    def __init__(self, reason):
        self.reason = reason


def parse_money(text: str) -> int:
    """Decimal text to integer cents (half-even beyond two fractional digits)."""
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise ValueError(text) from None
    if not value.is_finite():
        raise ValueError(text)
    return int(value.quantize(_CENT, rounding=ROUND_HALF_EVEN) * 100)


def format_money(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    q, r = divmod(abs(cents), 100)
    return f"{sign}{q}.{r:02d}"


def _money(text, optional=False):
    if optional and text.strip() == "":
        return None
    try:
        cents = parse_money(text)
    except ValueError:
        raise _Reject("UnparseableMoney") from None
    if cents < 0:
        raise _Reject("NegativeValue")
    return cents


def _to_record(fields: list[str], mapping: ColumnMapping, width: int) -> CampaignRecord:
    if len(fields) != width:
        raise _Reject("FieldCount")
    g = {name: fields[pos] for name, pos in mapping.items()}
    try:
        rid = int(g["id"].strip())
    except ValueError:
        raise _Reject("UnparseableId") from None
    currency = g["currency"].strip()
    if not _CURRENCY_RE.match(currency):
        raise _Reject("UnparseableCurrency")
    country = g["country"].strip()
    if not _COUNTRY_RE.match(country):
        raise _Reject("UnparseableCountry")
    try:
        state = State.parse(g["state"])
    except ValueError:
        raise _Reject("UnknownState") from None
    try:
        launched = datetime.strptime(g["launched"].strip(), LAUNCHED_FORMAT)
    except ValueError:
        raise _Reject("UnparseableTimestamp") from None
    if launched == SENTINEL_LAUNCH:
        raise _Reject("SentinelDate")
    try:
        deadline = datetime.strptime(g["deadline"].strip(), DEADLINE_FORMAT).date()
    except ValueError:
        raise _Reject("UnparseableDate") from None
    if launched >= datetime(deadline.year, deadline.month, deadline.day):
        raise _Reject("DeadlineNotAfterLaunch")
    try:
        backers = int(g["backers"].strip())
    except ValueError:
        raise _Reject("UnparseableInteger") from None
    if backers < 0:
        raise _Reject("NegativeValue")
    return CampaignRecord(
        id=rid,
        name=g["name"],
        main_category=g["main_category"].strip(),
        category=g["category"].strip(),
        launched=launched,
        deadline=deadline,
        state=state,
        backers=backers,
        currency=currency,
        country=country,
        goal=_money(g["goal"]),
        usd_goal_real=_money(g["usd_goal_real"]),
        pledged=_money(g["pledged"]),
        usd_pledged=_money(g["usd_pledged"], optional=True),
        usd_pledged_real=_money(g["usd_pledged_real"]),
    )


def _raw_line(fields: list[str]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow(fields)
    return buf.getvalue()


def parse_rows(rows: Iterable[tuple[int, list[str]]], mapping: ColumnMapping, width: int):
    """Convert ``(line_number, fields)`` pairs; returns ``(records, report)``."""
    records: list[CampaignRecord] = []
    report = IngestReport()
    for line, fields in rows:
        report.rows_read += 1
        try:
            records.append(_to_record(fields, mapping, width))
        except _Reject as rej:
            report.rejections.append(Rejection(line, rej.reason, _raw_line(fields)))
    report.rows_accepted = len(records)
    return records, report


def _open_text(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8-sig", errors="replace"), newline="")
    if isinstance(source, (str, Path)):
        return open(source, encoding="utf-8-sig", errors="replace", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8-sig", errors="replace", newline="")


def read_rows(source):
    """Yield the header and then ``(start_line, fields)`` for each data row."""
    fh = _open_text(source)
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise FatalFormat("input has no header row") from None
    except csv.Error as exc:
        raise FatalFormat(str(exc)) from None
    rows = []
    prev = reader.line_num
    while True:
        try:
            fields = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            raise FatalFormat(f"line {prev + 1}: {exc}") from None
        start, prev = prev + 1, reader.line_num
        if not fields:
            continue
        rows.append((start, fields))
    if fh is not source and hasattr(fh, "close") and isinstance(source, (str, Path)):
        fh.close()
    return header, rows


def parse_dataset(csv_source, mapping: ColumnMapping | None = None, *, partitions: int = 1,
                  engine: Engine | None = None):
    """Parse a campaign CSV into records plus an ingest report.

    Row splitting is sequential (quoted fields may hold newlines); field
    conversion runs per partition and results are concatenated in file order.
    """
    header, rows = read_rows(csv_source)
    if mapping is None:
        try:
            mapping = validate_schema(header)
        except IngestError as exc:
            raise FatalFormat(str(exc)) from exc
    width = len(header)
    engine = engine or Engine()
    agg = Aggregator(
        zero=lambda: ([], IngestReport()),
        merge=lambda a, b: (a[0] + b[0], a[1].merge(b[1])),
        lift_block=lambda block: parse_rows(block, mapping, width),
    )
    return engine.aggregate(partition(rows, partitions), agg)


def record_to_row(rec: CampaignRecord, include_usd_pledged: bool = True) -> list[str]:
    row = {
        "id": str(rec.id),
        "name": rec.name,
        "main_category": rec.main_category,
        "category": rec.category,
        "launched": rec.launched.strftime(LAUNCHED_FORMAT),
        "deadline": rec.deadline.strftime(DEADLINE_FORMAT),
        "state": rec.state.value.lower(),
        "backers": str(rec.backers),
        "currency": rec.currency,
        "country": rec.country,
        "goal": format_money(rec.goal),
        "usd_goal_real": format_money(rec.usd_goal_real),
        "pledged": format_money(rec.pledged),
        "usd_pledged": "" if rec.usd_pledged is None else format_money(rec.usd_pledged),
        "usd_pledged_real": format_money(rec.usd_pledged_real),
    }
    cols = LOGICAL_COLUMNS if include_usd_pledged else tuple(c for c in LOGICAL_COLUMNS if c != "usd_pledged")
    return [row[c] for c in cols]


def write_records(records: Iterable[CampaignRecord], dest, include_usd_pledged: bool = True) -> None:
    """Write records as CSV with canonical headers; ``dest`` is a path or text stream."""
    own = isinstance(dest, (str, Path))
    fh = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        w = csv.writer(fh)
        cols = LOGICAL_COLUMNS if include_usd_pledged else [c for c in LOGICAL_COLUMNS if c != "usd_pledged"]
        w.writerow(cols)
        for rec in records:
            w.writerow(record_to_row(rec, include_usd_pledged))
    finally:
        if own:
            fh.close()


def read_cleaned(source):
    """Parse a CSV written without ``usd_pledged`` (the cleaned-dataset layout)."""
    header, rows = read_rows(source)
    names = [h.strip().lower() for h in header]
    if "usd_pledged" in names or "usd pledged" in names:
        return parse_dataset_rows(header, rows)
    mapping = {}
    for name in LOGICAL_COLUMNS:
        if name == "usd_pledged":
            continue
        if name not in names:
            raise FatalFormat(f"missing required column {name!r}")
        mapping[name] = names.index(name)
    padded = [(line, fields + [""]) for line, fields in rows]
    mapping["usd_pledged"] = len(header)
    return parse_rows(padded, mapping, len(header) + 1)


def parse_dataset_rows(header, rows):
    mapping = validate_schema(header)
    return parse_rows(rows, mapping, len(header))
