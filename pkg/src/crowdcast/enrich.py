"""GDP per capita and HDI enrichment by (country, year)."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date, datetime
from importlib import resources
from pathlib import Path

COUNTRY_ALIAS = {
    "US": "USA", "GB": "GBR", "CA": "CAN", "AU": "AUS", "NO": "NOR", "IT": "ITA",
    "DE": "DEU", "IE": "IRL", "MX": "MEX", "ES": "ESP", "SE": "SWE", "FR": "FRA",
    "NL": "NLD", "NZ": "NZL", "CH": "CHE", "AT": "AUT", "DK": "DNK", "BE": "BEL",
    "HK": "HKG", "LU": "LUX", "SG": "SGP", "JP": "JPN",
}
YEARS = range(2009, 2019)

LAUNCH_YEAR = "launch-year"
WEIGHTED = "weighted"


class EnrichError(Exception):
    pass


class BadRow(EnrichError):
    pass


class MissingAlias(EnrichError):
    pass


class MissingYear(EnrichError):
    pass


class SpanTooLong(EnrichError):
    pass


@dataclass(frozen=True)
class EconTable:
    entries: dict  # (iso3, year) -> (gdp, hdi)
    country_alias: dict = field(default_factory=lambda: dict(COUNTRY_ALIAS))
    missing: tuple = ()

    def iso3(self, country: str) -> str:
        try:
            return self.country_alias[country]
        except KeyError:
            raise MissingAlias(country) from None


def load_econ_table(csv_source=None, aliases: dict | None = None) -> EconTable:
    """Read ``country_iso3,year,gdp_per_capita_usd,hdi`` rows.

    With no source the bundled reference table is used (per-country means,
    constant over 2009-2018).
    """
    if csv_source is None:
        text = resources.files("crowdcast").joinpath("data/econ_reference.csv").read_text()
        fh = io.StringIO(text)
    elif isinstance(csv_source, (str, Path)):
        fh = open(csv_source, newline="", encoding="utf-8")
    elif isinstance(csv_source, (bytes, bytearray)):
        fh = io.StringIO(bytes(csv_source).decode("utf-8"))
    else:
        fh = csv_source
    aliases = dict(COUNTRY_ALIAS if aliases is None else aliases)
    entries = {}
    with fh:
        reader = csv.DictReader(fh)
        need = {"country_iso3", "year", "gdp_per_capita_usd", "hdi"}
        if not reader.fieldnames or not need <= set(reader.fieldnames):
            raise BadRow(f"econ table header must contain {sorted(need)}")
        for row in reader:
            line = reader.line_num
            try:
                key = (row["country_iso3"].strip(), int(row["year"]))
                gdp = float(row["gdp_per_capita_usd"])
                hdi = float(row["hdi"])
            except (TypeError, ValueError):
                raise BadRow(f"line {line}: non-numeric value") from None
            if not gdp > 0 or not 0 < hdi <= 1:
                raise BadRow(f"line {line}: gdp must be > 0 and hdi in (0, 1]")
            if key in entries:
                raise BadRow(f"line {line}: duplicate entry {key}")
            entries[key] = (gdp, hdi)
    missing = tuple(
        (iso, y) for iso in sorted(set(aliases.values())) for y in YEARS if (iso, y) not in entries
    )
    return EconTable(entries, aliases, missing)


def lookup_index(table: EconTable, country: str, year: int) -> tuple[float, float]:
    iso = table.iso3(country)
    try:
        return table.entries[(iso, year)]
    except KeyError:
        raise MissingYear(f"{iso} {year}") from None


def weighted_index(days_in_first: int, duration: int, first: float, second: float) -> float:
    """Day-weighted combination of two consecutive yearly index values."""
    if duration <= 0 or not 0 <= days_in_first <= duration:
        raise ValueError("need 0 <= days_in_first <= duration and duration > 0")
    if days_in_first == duration:
        return first
    return (days_in_first * first + (duration - days_in_first) * second) / duration


def days_in_launch_year(launched: date, deadline: date) -> tuple[int, int]:
    """``(days active in the launch year, total duration)`` in whole days."""
    if isinstance(launched, datetime):
        launched = launched.date()
    dd = (deadline - launched).days
    if deadline.year == launched.year:
        return dd, dd
    if deadline.year > launched.year + 1:
        raise SpanTooLong(f"{launched} -> {deadline}")
    gg = (date(launched.year, 12, 31) - launched).days + 1
    return min(gg, dd), dd


def enrich_record(table: EconTable, rec, mode: str = LAUNCH_YEAR) -> tuple[float, float, bool]:
    """Return ``(gdp, hdi, span_flag)`` for a record.

    ``span_flag`` marks campaigns crossing more than one year boundary in
    weighted mode; they fall back to launch-year values.
    """
    year = rec.launched.year
    gdp, hdi = lookup_index(table, rec.country, year)
    if mode == LAUNCH_YEAR:
        return gdp, hdi, False
    if mode != WEIGHTED:
        raise ValueError(f"unknown enrichment mode {mode!r}")
    try:
        gg, dd = days_in_launch_year(rec.launched.date(), rec.deadline)
    except SpanTooLong:
        return gdp, hdi, True
    if gg == dd:
        return gdp, hdi, False
    gdp2, hdi2 = lookup_index(table, rec.country, year + 1)
    return weighted_index(gg, dd, gdp, gdp2), weighted_index(gg, dd, hdi, hdi2), False


def enrich(records, table: EconTable, mode: str = LAUNCH_YEAR):
    """Macro indices for every record plus the number of span-flagged records."""
    out = []
    flagged = 0
    for rec in records:
        gdp, hdi, flag = enrich_record(table, rec, mode)
        flagged += flag
        out.append((gdp, hdi))
    return out, flagged
