"""Setup classification, observation building and filter accounting."""

import math
from datetime import date, datetime

import pytest
from hypothesis import given, settings, strategies as st

from gordd.dataset import (
    Candidate,
    FilterReason,
    Observation,
    SetupKind,
    build_candidate,
    build_observation,
    classify_setup,
    describe_by_handicap,
    filter_dataset,
    read_retained_csv,
    write_retained_csv,
)
from gordd.ratings import RatingSeries, load_rating_series
from gordd.sgf import RawGameRecord

DAY = date(2014, 1, 5)


def record(
    white_rank="1d",
    black_rank="1d",
    stones=0,
    komi=6.5,
    result="W+2.5",
    white_id="w",
    black_id="b",
):
    return RawGameRecord(
        black_id=black_id,
        white_id=white_id,
        black_rank_text=black_rank,
        white_rank_text=white_rank,
        handicap_stones=stones,
        komi=komi,
        result_text=result,
        start_time=datetime(DAY.year, DAY.month, DAY.day, 12, 0),
    )


def series(player, value):
    return RatingSeries(player, {DAY: value})


@pytest.mark.parametrize(
    "kwargs, kind, level",
    [
        (dict(white_rank="1d", black_rank="1d", stones=0, komi=6.5), SetupKind.EVEN, 0),
        (dict(white_rank="1d", black_rank="1d", stones=0, komi=7.5), SetupKind.EVEN, 0),
        (dict(white_rank="1d", black_rank="1k", stones=0, komi=0.5), SetupKind.SEN, 1),
        (dict(white_rank="3d", black_rank="1d", stones=2, komi=0.5), SetupKind.STONES, 2),
        (dict(white_rank="2k", black_rank="8k", stones=6, komi=0.5), SetupKind.STONES, 6),
    ],
)
def test_classify_standard_setups(kwargs, kind, level):
    setup = classify_setup(record(**kwargs))
    assert setup.kind is kind and setup.level == level and setup.standard


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(white_rank="1d", black_rank="1d", stones=0, komi=0.5),    # even needs full komi
        dict(white_rank="1d", black_rank="1d", stones=2, komi=6.5),    # stones in an even pairing
        dict(white_rank="1d", black_rank="1k", stones=0, komi=6.5),    # sen needs 0.5 komi
        dict(white_rank="1d", black_rank="1k", stones=1, komi=0.5),    # sen carries no stones
        dict(white_rank="3d", black_rank="1d", stones=3, komi=0.5),    # stone count != rank gap
        dict(white_rank="3d", black_rank="1d", stones=2, komi=6.5),    # stone game needs 0.5 komi
        dict(white_rank="1k", black_rank="1d", stones=0, komi=6.5),    # stronger black
        dict(white_rank="1k", black_rank="3d", stones=2, komi=0.5),    # negative gap with stones
        dict(white_rank="", black_rank="1d"),                          # missing rank text
        dict(white_rank="junk", black_rank="1d"),
    ],
)
def test_classify_non_standard(kwargs):
    setup = classify_setup(record(**kwargs))
    assert setup.kind is SetupKind.NON_STANDARD and setup.level is None


def test_classify_ignores_player_ids():
    a = classify_setup(record(white_id="alice", black_id="bob"))
    b = classify_setup(record(white_id="bob", black_id="alice"))
    assert a == b


def test_build_observation_consistent_even_game():
    rec = record(white_rank="1d", black_rank="1d", komi=6.5)
    obs = build_observation(
        rec, classify_setup(rec), series("w", 0.9), series("b", 0.4), "g1"
    )
    assert isinstance(obs, Observation)
    assert obs.z == pytest.approx(0.6)
    assert obs.consistent and obs.y == 1 and obs.level == 0


def test_build_observation_consistent_sen_game():
    rec = record(white_rank="1d", black_rank="1k", stones=0, komi=0.5)
    obs = build_observation(
        rec, classify_setup(rec), series("w", 0.7), series("b", -0.3), "g2"
    )
    assert obs.z == pytest.approx(1.3)
    assert obs.consistent and obs.level == 1


def test_build_observation_inconsistent_running_variable():
    rec = record(white_rank="5d", black_rank="3d", stones=2, komi=0.5)
    obs = build_observation(
        rec, classify_setup(rec), series("w", 4.8), series("b", 4.2), "g3"
    )
    assert obs.z == pytest.approx(0.8)
    assert not obs.consistent and obs.level == 2


def test_build_observation_boundary_is_consistent():
    rec = record(white_rank="1d", black_rank="1d")
    obs = build_observation(rec, classify_setup(rec), series("w", 1.0), series("b", 1.0), "g")
    assert obs.z == 0.0 and obs.consistent


def test_build_observation_missing_rating():
    rec = record()
    result = build_observation(rec, classify_setup(rec), series("w", 0.9), None, "g")
    assert result is FilterReason.MISSING_RATING
    off_day = RatingSeries("b", {date(2013, 12, 31): 0.4})
    result = build_observation(rec, classify_setup(rec), series("w", 0.9), off_day, "g")
    assert result is FilterReason.MISSING_RATING


def test_build_observation_unstable_rank():
    rec = record(white_rank="1d?", black_rank="1d")
    result = build_observation(rec, classify_setup(rec), series("w", 0.9), series("b", 0.4), "g")
    assert result is FilterReason.UNSTABLE_RATING


def test_build_observation_indecisive_outcome():
    rec = record(result="Draw")
    result = build_observation(rec, classify_setup(rec), series("w", 0.9), series("b", 0.4), "g")
    assert result is FilterReason.DRAWN_OR_UNKNOWN


def test_build_observation_requires_standard_setup():
    rec = record(komi=0.5)
    with pytest.raises(ValueError):
        build_observation(rec, classify_setup(rec), series("w", 0.9), series("b", 0.4), "g")


def test_unstable_classifies_as_standard_setup():
    # the '?' mark drops the game in the filter, not in classification
    setup = classify_setup(record(white_rank="1d?", black_rank="1d"))
    assert setup.kind is SetupKind.EVEN


STORE = {"w": series("w", 0.9), "b": series("b", 0.4)}


def test_candidate_attribution_order_missing_beats_non_standard():
    cand = build_candidate("g", record(komi=0.5, black_id="ghost"), STORE)
    assert cand.reason is FilterReason.MISSING_RATING


def test_candidate_attribution_order_unstable_beats_non_standard():
    rec = record(white_rank="1d?", black_rank="junk")
    cand = build_candidate("g", rec, STORE)
    assert cand.reason is FilterReason.UNSTABLE_RATING


def test_candidate_attribution_order_non_standard_beats_drawn():
    rec = record(komi=0.5, result="Draw")
    cand = build_candidate("g", rec, STORE)
    assert cand.reason is FilterReason.NON_STANDARD_SETUP


def test_candidate_attribution_order_drawn_beats_inconsistent():
    rec = record(white_rank="5d", black_rank="3d", stones=2, komi=0.5, result="Draw")
    store = {"w": series("w", 4.8), "b": series("b", 4.2)}
    cand = build_candidate("g", rec, store)
    assert cand.reason is FilterReason.DRAWN_OR_UNKNOWN


def test_candidate_keeps_good_games():
    cand = build_candidate("g", record(), STORE)
    assert cand.reason is None and cand.observation is not None


def test_candidate_exactly_one_of_reason_observation():
    with pytest.raises(ValueError):
        Candidate("g", None, None)


def _make_obs(z, level=0, y=1):
    return Observation("g", DAY, 1, 1, level, z, y, level <= z < level + 1)


def test_filter_arithmetic_identity():
    candidates = (
        [Candidate(f"m{i}", FilterReason.MISSING_RATING, None) for i in range(10)]
        + [Candidate(f"i{i}", None, _make_obs(1.5)) for i in range(5)]     # inconsistent
        + [Candidate(f"k{i}", None, _make_obs(0.5)) for i in range(85)]    # retained
    )
    retained, report = filter_dataset(candidates)
    assert len(retained) == 85
    assert report.input_total == 100
    assert report.counts["missing_rating"] == 10
    assert report.counts["inconsistent_running"] == 5
    assert report.reconciles()


def test_filter_all_standard_consistent():
    candidates = [Candidate(f"k{i}", None, _make_obs(0.2)) for i in range(7)]
    retained, report = filter_dataset(candidates)
    assert len(retained) == report.retained == report.input_total == 7


_reasons = st.sampled_from(list(FilterReason)[:-1])  # inconsistency comes via z
_candidates = st.one_of(
    st.builds(
        Candidate,
        game_id=st.just("g"),
        reason=_reasons,
        observation=st.none(),
    ),
    st.builds(
        lambda z: Candidate("g", None, _make_obs(z)),
        z=st.floats(min_value=-1, max_value=3, allow_nan=False),
    ),
)


@settings(max_examples=100, derandomize=True)
@given(candidates=st.lists(_candidates, max_size=60))
def test_filter_partition_property(candidates):
    retained, report = filter_dataset(candidates)
    assert report.reconciles()
    assert report.input_total == len(candidates)
    assert report.retained == len(retained)
    assert all(obs.consistent for obs in retained)
    assert all(math.floor(obs.z) == obs.level for obs in retained)


def test_describe_even_split():
    obs = [_make_obs(0.5, 0, y) for y in (1, 1, 0, 0)]
    cells = describe_by_handicap(obs)
    assert len(cells) == 1
    assert cells[0].fraction == 0.5 and cells[0].n == 4 and cells[0].group is None


def test_describe_single_win():
    cells = describe_by_handicap([_make_obs(0.5, 0, 1)])
    assert cells[0].fraction == 1.0 and cells[0].n == 1


def test_describe_empty():
    assert describe_by_handicap([]) == []


def test_describe_groups_by_white_rank():
    a = Observation("a", DAY, 2, 2, 0, 0.5, 1, True)
    b = Observation("b", DAY, 3, 3, 0, 0.4, 0, True)
    cells = describe_by_handicap([a, b], group_by_white_rank=True)
    assert [(c.group, c.level, c.n) for c in cells] == [(2, 0, 1), (3, 0, 1)]


def test_retained_csv_round_trip(tmp_path):
    obs = [
        Observation("g1", DAY, 1, 1, 0, 0.625, 1, True),
        Observation("g2", DAY, 3, 1, 2, 2.25, 0, True),
    ]
    path = tmp_path / "retained.csv"
    assert write_retained_csv(obs, path) == 2
    assert read_retained_csv(path) == obs
