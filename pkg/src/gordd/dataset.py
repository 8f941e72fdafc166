"""Game setup classification, rating joins, filtering and observation building.

A game enters the analysis only if both players have a continuous rating on
the game's date, both ranks are stable, the setup follows the standard
handicap rules, the outcome is decisive, and the running variable agrees
with the assigned handicap level. Each removal is attributed to exactly one
rule (first match, in that order) so the audit report partitions the input.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import RatingError
from .ratings import DiscreteRating, RatingSeries, parse_dan_kyu, rating_at
from .sgf import Outcome, RawGameRecord, Winner, parse_result

EVEN_KOMI = (6.5, 7.5)
HANDICAP_KOMI = 0.5


class SetupKind(Enum):
    EVEN = "even"
    SEN = "sen"
    STONES = "stones"
    NON_STANDARD = "non_standard"


@dataclass(frozen=True)
class SetupClass:
    """Standard setup classification; level is undefined for non-standard games."""

    kind: SetupKind
    level: int | None

    @property
    def standard(self) -> bool:
        return self.kind is not SetupKind.NON_STANDARD


NON_STANDARD = SetupClass(SetupKind.NON_STANDARD, None)


def classify_setup(record: RawGameRecord) -> SetupClass:
    """Classify a game against the standard handicap assignment rules.

    With rank difference D = white - black: even games need D = 0, no
    stones and full komi; sen needs D = 1, no stones and 0.5 komi; stone
    games need D >= 2 with exactly D stones and 0.5 komi. Anything else,
    including unparseable ranks or a stronger black player, is non-standard.
    """
    try:
        white = parse_dan_kyu(record.white_rank_text)
        black = parse_dan_kyu(record.black_rank_text)
    except RatingError:
        return NON_STANDARD
    diff = white.value - black.value
    stones = record.handicap_stones
    if diff == 0 and stones == 0 and record.komi in EVEN_KOMI:
        return SetupClass(SetupKind.EVEN, 0)
    if diff == 1 and stones == 0 and record.komi == HANDICAP_KOMI:
        return SetupClass(SetupKind.SEN, 1)
    if diff >= 2 and stones == diff and record.komi == HANDICAP_KOMI:
        return SetupClass(SetupKind.STONES, diff)
    return NON_STANDARD


class FilterReason(Enum):
    """Removal rules, in attribution order."""

    MISSING_RATING = "missing_rating"
    UNSTABLE_RATING = "unstable_rating"
    NON_STANDARD_SETUP = "non_standard_setup"
    DRAWN_OR_UNKNOWN = "drawn_or_unknown"
    INCONSISTENT_RUNNING = "inconsistent_running"


@dataclass(frozen=True)
class Observation:
    """One analysis row: running variable, handicap level and outcome."""

    game_id: str
    game_date: date
    white_rank: int
    black_rank: int
    level: int
    z: float
    y: int
    consistent: bool


def build_observation(
    record: RawGameRecord,
    setup: SetupClass,
    white_series: RatingSeries | None,
    black_series: RatingSeries | None,
    game_id: str = "",
) -> Observation | FilterReason:
    """Join a standard-setup game with its ratings, or say why it drops out.

    The running variable is the white rank minus the black player's
    continuous rating on the game date; it is consistent when it falls in
    [level, level + 1). Games with a missing rating, an unstable rank or an
    indecisive outcome come back as the corresponding FilterReason.
    """
    if not setup.standard:
        raise ValueError("build_observation requires a standard setup")
    day = record.start_time.date()
    white_rating = rating_at(white_series, day)
    black_rating = rating_at(black_series, day)
    if white_rating is None or black_rating is None:
        return FilterReason.MISSING_RATING
    white = parse_dan_kyu(record.white_rank_text)
    black = parse_dan_kyu(record.black_rank_text)
    if white.unstable or black.unstable:
        return FilterReason.UNSTABLE_RATING
    outcome = parse_result(record.result_text)
    if not outcome.decisive:
        return FilterReason.DRAWN_OR_UNKNOWN
    level = setup.level
    assert level is not None
    z = white.value - black_rating
    return Observation(
        game_id=game_id,
        game_date=day,
        white_rank=white.value,
        black_rank=black.value,
        level=level,
        z=z,
        y=int(outcome.winner is Winner.WHITE),
        consistent=level <= z < level + 1,
    )


@dataclass(frozen=True)
class Candidate:
    """A game annotated with its filter outcome.

    reason is the first matching removal rule, or None for a game that only
    still has to pass the consistency check carried by its observation.
    """

    game_id: str
    reason: FilterReason | None
    observation: Observation | None

    def __post_init__(self) -> None:
        if (self.reason is None) == (self.observation is None):
            raise ValueError("candidate needs exactly one of reason/observation")


def build_candidate(
    game_id: str,
    record: RawGameRecord,
    series_store: Mapping[str, RatingSeries],
) -> Candidate:
    """Evaluate every filter rule for one game, in attribution order."""
    day = record.start_time.date()
    white_series = series_store.get(record.white_id)
    black_series = series_store.get(record.black_id)
    if rating_at(white_series, day) is None or rating_at(black_series, day) is None:
        return Candidate(game_id, FilterReason.MISSING_RATING, None)
    ranks: list[DiscreteRating | None] = []
    for text in (record.white_rank_text, record.black_rank_text):
        try:
            ranks.append(parse_dan_kyu(text))
        except RatingError:
            ranks.append(None)
    if any(rank is not None and rank.unstable for rank in ranks):
        return Candidate(game_id, FilterReason.UNSTABLE_RATING, None)
    if any(rank is None for rank in ranks):
        return Candidate(game_id, FilterReason.NON_STANDARD_SETUP, None)
    setup = classify_setup(record)
    if not setup.standard:
        return Candidate(game_id, FilterReason.NON_STANDARD_SETUP, None)
    result = build_observation(record, setup, white_series, black_series, game_id)
    if isinstance(result, FilterReason):
        return Candidate(game_id, result, None)
    return Candidate(game_id, None, result)


@dataclass
class FilterReport:
    """Removal counts per rule plus the partition identity over the input."""

    input_total: int = 0
    retained: int = 0
    counts: dict[str, int] = field(
        default_factory=lambda: {reason.value: 0 for reason in FilterReason}
    )

    def reconciles(self) -> bool:
        return self.retained + sum(self.counts.values()) == self.input_total

    def to_json(self) -> str:
        payload = {
            "input_total": self.input_total,
            "retained": self.retained,
            "removed": dict(self.counts),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def filter_dataset(
    candidates: Iterable[Candidate],
) -> tuple[list[Observation], FilterReport]:
    """Split candidates into retained observations and attributed removals.

    Attribution is first-match in FilterReason order; the consistency rule
    applies last, to games that survived everything else. The returned
    report always satisfies retained + sum(removed) == input_total.
    """
    report = FilterReport()
    retained: list[Observation] = []
    for cand in candidates:
        report.input_total += 1
        if cand.reason is not None:
            report.counts[cand.reason.value] += 1
            continue
        obs = cand.observation
        assert obs is not None
        if not obs.consistent:
            report.counts[FilterReason.INCONSISTENT_RUNNING.value] += 1
            continue
        report.retained += 1
        retained.append(obs)
    assert report.reconciles()
    return retained, report


@dataclass(frozen=True)
class DescribeCell:
    """White win fraction within one (group, handicap level) cell."""

    group: int | None
    level: int
    fraction: float
    n: int


def describe_by_handicap(
    observations: Sequence[Observation], group_by_white_rank: bool = False
) -> list[DescribeCell]:
    """White win fraction by handicap level, optionally split by white rank.

    Cells without games are omitted; rows come back sorted by (group, level).
    """
    wins: dict[tuple[int | None, int], int] = {}
    totals: dict[tuple[int | None, int], int] = {}
    for obs in observations:
        key = (obs.white_rank if group_by_white_rank else None, obs.level)
        totals[key] = totals.get(key, 0) + 1
        wins[key] = wins.get(key, 0) + obs.y
    cells = [
        DescribeCell(group=key[0], level=key[1], fraction=wins[key] / totals[key], n=totals[key])
        for key in totals
    ]
    cells.sort(key=lambda c: (c.group if c.group is not None else 0, c.level))
    return cells


RETAINED_CSV_COLUMNS = ["game_id", "date", "d_W", "d_B", "H", "z", "y"]


def write_retained_csv(observations: Iterable[Observation], path: str | Path) -> int:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RETAINED_CSV_COLUMNS)
        count = 0
        for obs in observations:
            writer.writerow([
                obs.game_id, obs.game_date.isoformat(), obs.white_rank,
                obs.black_rank, obs.level, repr(obs.z), obs.y,
            ])
            count += 1
    return count


def read_retained_csv(path: str | Path) -> list[Observation]:
    out: list[Observation] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RETAINED_CSV_COLUMNS:
            raise RatingError(f"unexpected retained CSV header in {path}")
        for row in reader:
            out.append(Observation(
                game_id=row["game_id"],
                game_date=date.fromisoformat(row["date"]),
                white_rank=int(row["d_W"]),
                black_rank=int(row["d_B"]),
                level=int(row["H"]),
                z=float(row["z"]),
                y=int(row["y"]),
                consistent=True,
            ))
    return out


def write_describe_csv(cells: Iterable[DescribeCell], path: str | Path) -> int:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "H", "white_win_fraction", "n"])
        count = 0
        for cell in cells:
            group = "" if cell.group is None else cell.group
            writer.writerow([group, cell.level, repr(cell.fraction), cell.n])
            count += 1
    return count
