from datetime import date, datetime

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdcast.features import (EX_ANTE, EX_POST, OTHER, PAPER, FeatureSchema, NonPositiveDuration, RatioFeatures,
                                UnknownCountry,
                                assemble, extract_name, extract_ratios, extract_temporal, map_continent, raw_features,
                                trimester)
from crowdcast.engine import Engine

from conftest import make_record


def test_temporal_example():
    t = extract_temporal(datetime(2015, 1, 1, 10, 30), date(2015, 2, 1))
    assert (t.launched_year, t.launched_month, t.launched_day_of_week, t.launched_hour) == (2015, 1, 4, 10)
    assert t.launched_trimester == 1 and t.duration_days == 31


def test_temporal_year_boundary():
    t = extract_temporal(datetime(2014, 12, 31, 23), date(2015, 1, 1))
    assert t.duration_days == 1 and t.launched_trimester == 4 and t.deadline_trimester == 1


def test_non_positive_duration():
    with pytest.raises(NonPositiveDuration):
        extract_temporal(datetime(2015, 1, 1, 10), date(2015, 1, 1))


def test_trimester():
    assert [trimester(m) for m in range(1, 13)] == [1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4]


def test_name_example():
    n = extract_name("New World Help 2024!")
    assert (n.length, n.word_count, n.capital_count, n.digit_count) == (20, 4, 3, 4)
    assert n.has_new and n.has_world and n.has_help and not n.has_first


def test_empty_name():
    n = extract_name("")
    assert (n.length, n.word_count, n.capital_count, n.alnum_count, n.digit_count) == (0, 0, 0, 0, 0)
    assert not any(getattr(n, f) for f in n.__dataclass_fields__ if f.startswith("has_"))


def test_keyword_is_token_not_substring():
    assert not extract_name("newton's cradle").has_new
    assert extract_name("my_first-project").has_first


def test_ratios():
    assert extract_ratios(10, 250.0, 250.0).usd_pledged_real_per_backer == 25.0
    assert extract_ratios(0, 0.0, 0.0) == RatioFeatures(0.0, 0.0)
    assert extract_ratios(3, 10.0, 10.0).pledged_per_backer == 10.0 / 3


@pytest.mark.parametrize("code,continent", [("IT", "Europe"), ("MX", "America"), ("SG", "AsiaOceania"),
                                            ("JP", "AsiaOceania"), ("US", "America")])
def test_continents(code, continent):
    assert map_continent(code) == continent


def test_unknown_country():
    with pytest.raises(UnknownCountry):
        map_continent("ZZ")


def rows_for(cats, **kw):
    return [raw_features(make_record(id=i, main_category=c, **kw), (1.0, 0.5)) for i, c in enumerate(cats)]


def test_one_hot_block():
    rows = rows_for(["Art", "Games", "Music"])
    schema = FeatureSchema.fit(rows, PAPER, min_category_count=1)
    X = schema.transform(rows)
    names = schema.feature_names
    block = [names.index(f"main_category={c}") for c in ("Art", "Games", "Music")]
    np.testing.assert_array_equal(X[1, block], [0, 1, 0])


def test_unseen_category_is_zero_block():
    schema = FeatureSchema.fit(rows_for(["Art", "Games"]), PAPER, min_category_count=1)
    X = schema.transform(rows_for(["Dance"]))
    assert X.shape == (1, schema.n_dims)
    block = [i for i, n in enumerate(schema.feature_names) if n.startswith("main_category=")]
    assert not X[0, block].any()


def test_ex_ante_has_no_ex_post_dims():
    schema = FeatureSchema.fit(rows_for(["Art"]), EX_ANTE, min_category_count=1)
    for name in schema.feature_names:
        assert name.split("=")[0] not in EX_POST
        assert not name.startswith("pledged") and name != "backers"
    full = FeatureSchema.fit(rows_for(["Art"]), PAPER, min_category_count=1)
    assert set(EX_POST) <= set(full.feature_names)


def test_rare_categories_fold():
    rows = [raw_features(make_record(id=i, category="Tabletop Games" if i < 5 else "Puzzles"), (1.0, 0.5))
            for i in range(6)]
    schema = FeatureSchema.fit(rows, PAPER, min_category_count=2)
    assert schema.levels["category"] == ["Tabletop Games", OTHER]
    X = schema.transform(rows)
    assert X[5, schema.feature_names.index(f"category={OTHER}")] == 1.0


def test_schema_roundtrip_and_partitions():
    rows = rows_for(["Art", "Games", "Music", "Art"] * 10)
    schema = FeatureSchema.fit(rows, PAPER, min_category_count=3)
    again = FeatureSchema.from_dict(schema.to_dict())
    assert again.schema_hash() == schema.schema_hash()
    np.testing.assert_array_equal(again.transform(rows), schema.transform(rows))
    with Engine(workers=2) as eng:
        assert FeatureSchema.fit(rows, PAPER, 3, partitions=7, engine=eng) == schema


def test_assemble_matches_transform():
    rec = make_record(name="First World Project")
    rows = [raw_features(rec, (40000.0, 0.9))]
    schema = FeatureSchema.fit(rows, PAPER, min_category_count=1)
    vec = assemble(rec, extract_temporal(rec.launched, rec.deadline), extract_name(rec.name),
                   extract_ratios(rec.backers, rec.pledged / 100, rec.usd_pledged_real / 100),
                   map_continent(rec.country), (40000.0, 0.9), schema, label="Successful")
    np.testing.assert_array_equal(vec.values, schema.transform(rows)[0])
    assert len(vec.feature_names) == len(vec.values)


@given(st.text(max_size=40))
def test_name_counts_bounded(name):
    n = extract_name(name)
    assert 0 <= n.digit_count <= n.alnum_count <= n.length == len(name)
    assert n.capital_count <= n.length
