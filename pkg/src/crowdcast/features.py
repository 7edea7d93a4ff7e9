"""Engineered campaign features and the fitted one-hot feature schema."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from datetime import date, datetime
from typing import Sequence

import numpy as np

from .engine import Aggregator, Engine, partition

KEYWORDS = ("new", "first", "world", "help", "project", "canceled", "suspended")

CONTINENTS = {
    "Europe": ("GB", "DE", "FR", "IT", "ES", "NL", "SE", "DK", "NO", "IE", "CH", "BE", "AT", "LU"),
    "America": ("US", "CA", "MX"),
    "AsiaOceania": ("AU", "NZ", "SG", "HK", "JP"),
}
_CONTINENT_OF = {c: k for k, codes in CONTINENTS.items() for c in codes}

PAPER = "paper"
EX_ANTE = "ex-ante"
PROFILES = (PAPER, EX_ANTE)

CONTINUOUS = (
    "goal", "usd_goal_real", "backers", "pledged", "usd_pledged_real",
    "pledged_per_backer", "usd_pledged_real_per_backer",
    "name_length", "name_word_count", "name_capital_count", "name_alnum_count", "name_digit_count",
    "duration_days", "launched_year", "launched_hour", "deadline_year", "gdp", "hdi",
)
BINARY = tuple(f"has_{k}" for k in KEYWORDS)
CATEGORICAL = (
    "main_category", "category", "currency", "country", "continent",
    "launched_day_of_week", "launched_month", "launched_trimester",
    "deadline_day_of_week", "deadline_month", "deadline_trimester",
)
# only known once the campaign is over
EX_POST = ("backers", "pledged", "usd_pledged_real", "pledged_per_backer", "usd_pledged_real_per_backer")

OTHER = "__other__"
_TOKEN_SPLIT = re.compile(r"[\W_]+")


class FeatureError(Exception):
    pass


class NonPositiveDuration(FeatureError):
    pass


class UnknownCountry(FeatureError):
    pass


@dataclass(frozen=True)
class TemporalFeatures:
    launched_year: int
    launched_month: int
    launched_day_of_week: int
    launched_hour: int
    launched_trimester: int
    deadline_year: int
    deadline_month: int
    deadline_day_of_week: int
    deadline_trimester: int
    duration_days: int


@dataclass(frozen=True)
class NameFeatures:
    length: int
    word_count: int
    capital_count: int
    alnum_count: int
    digit_count: int
    has_new: bool
    has_first: bool
    has_world: bool
    has_help: bool
    has_project: bool
    has_canceled: bool
    has_suspended: bool


@dataclass(frozen=True)
class RatioFeatures:
    pledged_per_backer: float
    usd_pledged_real_per_backer: float


def trimester(month: int) -> int:
    return (month + 2) // 3


def extract_temporal(launched: datetime, deadline: date) -> TemporalFeatures:
    duration = (deadline - launched.date()).days
    if duration <= 0:
        raise NonPositiveDuration(f"{launched} -> {deadline}")
    return TemporalFeatures(
        launched_year=launched.year,
        launched_month=launched.month,
        launched_day_of_week=launched.isoweekday(),
        launched_hour=launched.hour,
        launched_trimester=trimester(launched.month),
        deadline_year=deadline.year,
        deadline_month=deadline.month,
        deadline_day_of_week=deadline.isoweekday(),
        deadline_trimester=trimester(deadline.month),
        duration_days=duration,
    )


def name_tokens(name: str) -> set[str]:
    return {t for t in _TOKEN_SPLIT.split(name.lower()) if t}


def extract_name(name: str) -> NameFeatures:
    tokens = name_tokens(name)
    flags = {f"has_{k}": k in tokens for k in KEYWORDS}
    return NameFeatures(
        length=len(name),
        word_count=len(name.split()),
        capital_count=sum(ch.isupper() for ch in name),
        alnum_count=sum(ch.isalnum() for ch in name),
        digit_count=sum(ch.isdigit() for ch in name),
        **flags,
    )


def extract_ratios(backers: int, pledged: float, usd_pledged_real: float) -> RatioFeatures:
    if backers <= 0:
        return RatioFeatures(0.0, 0.0)
    return RatioFeatures(pledged / backers, usd_pledged_real / backers)


def map_continent(country: str) -> str:
    try:
        return _CONTINENT_OF[country]
    except KeyError:
        raise UnknownCountry(country) from None


def raw_features(rec, econ: tuple[float, float]) -> dict:
    """Every engineered value for one record, keyed by feature name."""
    t = extract_temporal(rec.launched, rec.deadline)
    n = extract_name(rec.name)
    r = extract_ratios(rec.backers, rec.pledged / 100, rec.usd_pledged_real / 100)
    out = {
        "goal": rec.goal / 100,
        "usd_goal_real": rec.usd_goal_real / 100,
        "backers": float(rec.backers),
        "pledged": rec.pledged / 100,
        "usd_pledged_real": rec.usd_pledged_real / 100,
        "pledged_per_backer": r.pledged_per_backer,
        "usd_pledged_real_per_backer": r.usd_pledged_real_per_backer,
        "name_length": n.length,
        "name_word_count": n.word_count,
        "name_capital_count": n.capital_count,
        "name_alnum_count": n.alnum_count,
        "name_digit_count": n.digit_count,
        "duration_days": t.duration_days,
        "launched_year": t.launched_year,
        "launched_hour": t.launched_hour,
        "deadline_year": t.deadline_year,
        "gdp": econ[0],
        "hdi": econ[1],
        "main_category": rec.main_category,
        "category": rec.category,
        "currency": rec.currency,
        "country": rec.country,
        "continent": map_continent(rec.country),
    }
    for k in KEYWORDS:
        out[f"has_{k}"] = getattr(n, f"has_{k}")
    for k in ("launched_day_of_week", "launched_month", "launched_trimester",
              "deadline_day_of_week", "deadline_month", "deadline_trimester"):
        out[k] = getattr(t, k)
    return out


def _count_levels(rows) -> dict:
    counts: dict = {f: {} for f in CATEGORICAL}
    for row in rows:
        for f in CATEGORICAL:
            v = str(row[f])
            counts[f][v] = counts[f].get(v, 0) + 1
    return counts


def _merge_levels(a: dict, b: dict) -> dict:
    out = {f: dict(a.get(f, {})) for f in CATEGORICAL}
    for f, cnt in b.items():
        for v, c in cnt.items():
            out[f][v] = out[f].get(v, 0) + c
    return out


def _level_key(v: str):
    return (0, int(v), v) if v.lstrip("-").isdigit() else (1, 0, v)


@dataclass
class FeatureSchema:
    """Ordered dimension layout shared by training, evaluation and prediction."""

    profile: str
    continuous: list[str]
    binary: list[str]
    levels: dict  # categorical field -> ordered kept levels (may include OTHER)
    rare: dict = field(default_factory=dict)  # field -> values folded into OTHER
    min_category_count: int = 50

    @classmethod
    def fit(cls, rows: Sequence[dict], profile: str = PAPER, min_category_count: int = 50,
            *, partitions: int = 1, engine: Engine | None = None) -> "FeatureSchema":
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}")
        engine = engine or Engine()
        agg = Aggregator(zero=dict, merge=_merge_levels, lift_block=_count_levels)
        counts = engine.aggregate(partition(list(rows), partitions), agg)
        levels, rare = {}, {}
        for f in CATEGORICAL:
            cnt = counts.get(f, {})
            if f == "category":
                kept = sorted((v for v, c in cnt.items() if c >= min_category_count), key=_level_key)
                folded = sorted(v for v, c in cnt.items() if c < min_category_count)
                if folded:
                    kept.append(OTHER)
                rare[f] = folded
            else:
                kept = sorted(cnt, key=_level_key)
            levels[f] = kept
        cont = [c for c in CONTINUOUS if profile == PAPER or c not in EX_POST]
        return cls(profile, cont, list(BINARY), levels, rare, min_category_count)

    @property
    def feature_names(self) -> list[str]:
        names = list(self.continuous) + list(self.binary)
        for f in CATEGORICAL:
            names.extend(f"{f}={v}" for v in self.levels[f])
        return names

    @property
    def n_dims(self) -> int:
        return len(self.continuous) + len(self.binary) + sum(len(v) for v in self.levels.values())

    def continuous_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_dims, dtype=bool)
        mask[: len(self.continuous)] = True
        return mask

    def _encode(self, f: str, value) -> int | None:
        v = str(value)
        if f == "category" and v in self._rare_set:
            v = OTHER
        try:
            return self._index[f][v]
        except KeyError:
            return None

    def __post_init__(self):
        self._index = {f: {v: i for i, v in enumerate(lv)} for f, lv in self.levels.items()}
        self._rare_set = set(self.rare.get("category", ()))

    def transform(self, rows: Sequence[dict]) -> np.ndarray:
        """Rows of raw features to a dense ``(n, n_dims)`` matrix.

        Categorical values not seen during fitting produce an all-zero block.
        """
        n = len(rows)
        X = np.zeros((n, self.n_dims), dtype=np.float64)
        col = 0
        for name in self.continuous:
            X[:, col] = [row[name] for row in rows]
            col += 1
        for name in self.binary:
            X[:, col] = [1.0 if row[name] else 0.0 for row in rows]
            col += 1
        for f in CATEGORICAL:
            width = len(self.levels[f])
            for i, row in enumerate(rows):
                j = self._encode(f, row[f])
                if j is not None:
                    X[i, col + j] = 1.0
            col += width
        if not np.isfinite(X).all():
            raise FeatureError("non-finite feature value")
        return X

    def to_dict(self) -> dict:
        return {
            "profile": self.profile,
            "continuous": self.continuous,
            "binary": self.binary,
            "levels": self.levels,
            "rare": self.rare,
            "min_category_count": self.min_category_count,
            "feature_names": self.feature_names,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(d["profile"], list(d["continuous"]), list(d["binary"]),
                   {k: list(v) for k, v in d["levels"].items()},
                   {k: list(v) for k, v in d.get("rare", {}).items()},
                   d.get("min_category_count", 50))

    def schema_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: str
    weight: float
    feature_names: tuple


def assemble(record, temporal: TemporalFeatures, name_f: NameFeatures, ratios: RatioFeatures,
             continent: str, econ: tuple[float, float], schema: FeatureSchema,
             label: str = "", weight: float = 1.0) -> FeatureVector:
    """Compose precomputed parts of one record into a :class:`FeatureVector`."""
    row = {
        "goal": record.goal / 100,
        "usd_goal_real": record.usd_goal_real / 100,
        "backers": float(record.backers),
        "pledged": record.pledged / 100,
        "usd_pledged_real": record.usd_pledged_real / 100,
        "pledged_per_backer": ratios.pledged_per_backer,
        "usd_pledged_real_per_backer": ratios.usd_pledged_real_per_backer,
        "name_length": name_f.length,
        "name_word_count": name_f.word_count,
        "name_capital_count": name_f.capital_count,
        "name_alnum_count": name_f.alnum_count,
        "name_digit_count": name_f.digit_count,
        "gdp": econ[0],
        "hdi": econ[1],
        "main_category": record.main_category,
        "category": record.category,
        "currency": record.currency,
        "country": record.country,
        "continent": continent,
    }
    row.update(asdict(temporal))
    row.update({k: v for k, v in asdict(name_f).items() if k.startswith("has_")})
    values = schema.transform([row])[0]
    return FeatureVector(values, label, float(weight), tuple(schema.feature_names))
