"""Seeded synthetic campaign dumps in the public Kaggle column layout."""
from __future__ import annotations

import csv
import io
from datetime import datetime, timedelta

import numpy as np

DUMP_HEADER = ["ID", "name", "category", "main_category", "currency", "deadline", "goal", "launched",
               "pledged", "state", "backers", "country", "usd pledged", "usd_pledged_real", "usd_goal_real"]

COUNTRIES = {
    # code: (share, currency, usd per unit)
    "US": (0.78, "USD", 1.0), "GB": (0.089, "GBP", 1.35), "CA": (0.039, "CAD", 0.78),
    "AU": (0.021, "AUD", 0.76), "DE": (0.011, "EUR", 1.15), "FR": (0.008, "EUR", 1.15),
    "IT": (0.008, "EUR", 1.15), "NL": (0.0076, "EUR", 1.15), "ES": (0.006, "EUR", 1.15),
    "SE": (0.0047, "SEK", 0.12), "MX": (0.0046, "MXN", 0.053), "NZ": (0.0038, "NZD", 0.71),
    "DK": (0.003, "DKK", 0.155), "IE": (0.002, "EUR", 1.15), "CH": (0.002, "CHF", 1.03),
    "NO": (0.0019, "NOK", 0.12), "HK": (0.0016, "HKD", 0.128), "BE": (0.0016, "EUR", 1.15),
    "AT": (0.0015, "EUR", 1.15), "SG": (0.0015, "SGD", 0.74), "LU": (0.0002, "EUR", 1.15),
    "JP": (0.0011, "JPY", 0.0089),
}

CATEGORIES = {
    "Film & Video": ["Documentary", "Shorts", "Narrative Film", "Film & Video"],
    "Music": ["Music", "Rock", "Indie Rock", "Country & Folk"],
    "Publishing": ["Fiction", "Nonfiction", "Children's Books", "Poetry"],
    "Games": ["Tabletop Games", "Video Games", "Playing Cards"],
    "Technology": ["Technology", "Apps", "Web", "Hardware"],
    "Design": ["Product Design", "Graphic Design"],
    "Art": ["Art", "Painting", "Illustration"],
    "Food": ["Food", "Restaurants"],
    "Fashion": ["Fashion", "Apparel"],
    "Theater": ["Theater", "Plays"],
    "Comics": ["Comics", "Comic Books"],
    "Photography": ["Photography", "Photobooks"],
    "Crafts": ["Crafts", "DIY"],
    "Journalism": ["Journalism"],
    "Dance": ["Dance", "Performances"],
}
# log-odds nudge of success per main category
_CAT_EFFECT = {"Film & Video": 0.0, "Music": 0.25, "Publishing": -0.1, "Games": 0.2, "Technology": -0.6,
               "Design": 0.1, "Art": 0.1, "Food": -0.4, "Fashion": -0.3, "Theater": 0.6, "Comics": 0.5,
               "Photography": -0.2, "Crafts": -0.5, "Journalism": -0.7, "Dance": 0.7}

_WORDS = ["the", "a", "my", "album", "book", "game", "film", "story", "light", "city", "dream", "art",
          "music", "house", "garden", "machine", "journey", "river", "studio", "tour", "kitchen", "comic",
          "board", "camera", "design", "smart", "wallet", "coffee", "dance", "theatre"]
_KEYWORDS = ["new", "first", "world", "help", "project", "canceled", "suspended"]

_YEAR_WEIGHTS = {2009: 0.004, 2010: 0.028, 2011: 0.069, 2012: 0.11, 2013: 0.118, 2014: 0.179,
                 2015: 0.18, 2016: 0.152, 2017: 0.139}


def _money(x: float) -> str:
    return f"{x:.2f}"


def _name(rng) -> str:
    k = int(rng.integers(1, 7))
    words = list(rng.choice(_WORDS, size=k))
    if rng.random() < 0.25:
        words.insert(int(rng.integers(0, k + 1)), str(rng.choice(_KEYWORDS)))
    if rng.random() < 0.08:
        words.append(str(int(rng.integers(1, 3000))))
    style = rng.random()
    if style < 0.55:
        words = [w.capitalize() for w in words]
    elif style < 0.6:
        words = [w.upper() for w in words]
    name = " ".join(words)
    if rng.random() < 0.1:
        name += str(rng.choice(["!", "?", " - Kickstarter", ": Part 2", "..."]))
    return name


def generate_rows(n: int, seed: int = 0, artifacts: bool = False) -> list[list[str]]:
    """``n`` campaign rows (no header) with realistic marginal shapes.

    With ``artifacts`` a few rows reproduce known dump defects: the ``N,0"``
    country, the 1970 launch sentinel and each kind of inconsistent state.
    """
    rng = np.random.default_rng(seed)
    codes = list(COUNTRIES)
    shares = np.array([COUNTRIES[c][0] for c in codes])
    shares /= shares.sum()
    mains = list(CATEGORIES)
    years = list(_YEAR_WEIGHTS)
    yw = np.array(list(_YEAR_WEIGHTS.values()))
    yw /= yw.sum()
    rows = []
    # strictly increasing ids with random gaps
    ids = 1000 + np.cumsum(rng.integers(1, 5000, size=n))
    for i in range(n):
        country = codes[int(rng.choice(len(codes), p=shares))]
        _, currency, fx = COUNTRIES[country]
        main = mains[int(rng.integers(len(mains)))]
        sub = CATEGORIES[main][int(rng.integers(len(CATEGORIES[main])))]
        year = years[int(rng.choice(len(years), p=yw))]
        launched = datetime(year, 1, 1) + timedelta(seconds=int(rng.integers(0, 365 * 86400)))
        duration = int(np.clip(rng.choice([30, 30, 30, 45, 60, 15, 20, 40]) + rng.integers(-3, 4), 1, 92))
        deadline = (launched + timedelta(days=duration)).date()
        goal_usd = float(np.exp(rng.normal(8.6, 1.3)))
        goal = max(1.0, round(goal_usd / fx))
        quality = (_CAT_EFFECT[main] - 0.35 * (np.log(goal_usd) - 8.6) + (0.25 if year <= 2013 else -0.1)
                   + rng.normal(0.0, 1.1))
        frac = float(np.exp(quality + rng.normal(-0.3, 0.9)))
        if rng.random() < 0.2:
            frac *= rng.uniform(0.0, 0.05)
        pledged = round(goal * frac, 2)
        if frac >= 1.0:
            pledged = max(pledged, goal)
            state = "successful"
        else:
            u = rng.random()
            state = "failed" if u < 0.83 else ("canceled" if u < 0.992 else "suspended")
            pledged = min(pledged, round(goal - 0.01, 2))
            if state == "canceled":
                pledged = round(pledged * rng.uniform(0.0, 0.6), 2)
        if year == 2017 and launched.month == 12 and rng.random() < 0.5:
            state = "live"
        avg_pledge = float(np.exp(rng.normal(4.1, 0.5))) / fx
        backers = int(round(pledged / avg_pledge)) if pledged > 0 else 0
        if pledged > 0 and backers == 0:
            backers = 1
        pledged_real = round(pledged * fx, 2)
        goal_real = round(goal * fx, 2)
        if currency == "USD":
            usd_pledged = pledged if rng.random() > 0.12 else round(pledged * rng.uniform(0.9, 1.0), 2)
        else:
            usd_pledged = round(pledged * fx * rng.uniform(0.95, 1.05), 2)
        rows.append([str(int(ids[i])), _name(rng), sub, main, currency, deadline.isoformat(), _money(goal),
                     launched.strftime("%Y-%m-%d %H:%M:%S"), _money(pledged), state, str(backers), country,
                     _money(usd_pledged), _money(pledged_real), _money(goal_real)])
    if artifacts and n >= 20:
        _inject_artifacts(rows, rng)
    return rows


def _inject_artifacts(rows, rng):
    picks = rng.choice(len(rows), size=9, replace=False)
    # N,0" country rows carry an undefined state and no usd pledged
    for j in picks[:2]:
        rows[j][11] = 'N,0"'
        rows[j][9] = "undefined"
        rows[j][12] = ""
    rows[picks[2]][7] = "1970-01-01 01:00:00"
    # successful but underfunded
    r = rows[picks[3]]
    r[9] = "successful"
    r[13] = _money(float(r[14]) - 1.0) if float(r[14]) > 1 else "0.00"
    r[10] = "3"
    # failed but overfunded
    for j in picks[4:6]:
        r = rows[j]
        r[9] = "failed"
        r[13] = _money(float(r[14]) + 25.0)
        r[10] = "5"
    # zero backers but funded
    r = rows[picks[6]]
    r[9] = "failed"
    r[10] = "0"
    r[13] = "10.00"
    r[8] = "10.00"
    if float(r[14]) <= 10.0:
        r[14] = "500.00"


def write_dump(dest, n: int, seed: int = 0, artifacts: bool = False) -> None:
    rows = generate_rows(n, seed, artifacts)
    own = not hasattr(dest, "write")
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        w = csv.writer(fh)
        w.writerow(DUMP_HEADER)
        w.writerows(rows)
    finally:
        if own:
            fh.close()


def dump_bytes(n: int, seed: int = 0, artifacts: bool = False) -> bytes:
    buf = io.StringIO(newline="")
    write_dump(buf, n, seed, artifacts)
    return buf.getvalue().encode("utf-8")
