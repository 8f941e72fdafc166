"""Dan-kyu ranks, continuous rating histories, and rating chart recovery.

Ranks live on a unified integer scale: "Nd" maps to N and "Nk" maps to
1 - N, so 1k is 0, 1d is 1 and 30k is -29. A continuous rating r belongs
to the rank ceil(r); crossing an integer boundary changes the displayed
rank. Rating histories are recovered from rendered chart pixmaps by
locating the trace pixel in each plotted column and inverting the chart's
axis calibration.
"""

from __future__ import annotations

import csv
import math
import re
import warnings
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ChartError, RatingError, RatingWindowWarning

RANK_MIN = -29  # 30k
RANK_MAX = 9    # 9d
MAX_WINDOW_DAYS = 400  # charts never cover more history than this

BACKGROUND = 255  # light background pixel
TRACE = 0         # darkest pixel marking the rating trace


@dataclass(frozen=True)
class DiscreteRating:
    """A dan-kyu rank on the unified scale, with the unstable-rating flag."""

    value: int
    unstable: bool = False


_RANK_RE = re.compile(r"(\d+)([kd])(\?)?")


def parse_dan_kyu(text: str) -> DiscreteRating:
    """Parse rank text like "3k", "9d" or "2k?" to a DiscreteRating."""
    match = _RANK_RE.fullmatch(text.strip())
    if match is None:
        raise RatingError(f"unparseable rank text {text!r}")
    number = int(match.group(1))
    if number < 1:
        raise RatingError(f"rank number out of range in {text!r}")
    value = number if match.group(2) == "d" else 1 - number
    if not RANK_MIN <= value <= RANK_MAX:
        raise RatingError(f"rank number out of range in {text!r}")
    return DiscreteRating(value=value, unstable=match.group(3) is not None)


def format_dan_kyu(rating: DiscreteRating) -> str:
    """Inverse of parse_dan_kyu."""
    if not RANK_MIN <= rating.value <= RANK_MAX:
        raise RatingError(f"rank value {rating.value} out of range")
    text = f"{rating.value}d" if rating.value >= 1 else f"{1 - rating.value}k"
    return text + ("?" if rating.unstable else "")


def discrete_from_continuous(rating: float) -> int:
    """Rank shown for a continuous rating: the smallest integer >= rating."""
    return math.ceil(rating)


def _check_rating_range(value: float) -> None:
    if not RANK_MIN <= discrete_from_continuous(value) <= RANK_MAX:
        raise RatingError(f"continuous rating {value} outside the rank scale")


@dataclass
class RatingSeries:
    """Daily continuous rating history of one player.

    entries maps dates to ratings in ascending date order; lookups are
    exact-date only, mirroring how games are joined to daily charts.
    """

    player_id: str
    entries: dict[date, float] = field(default_factory=dict)

    @property
    def first_date(self) -> date:
        return next(iter(self.entries))

    @property
    def last_date(self) -> date:
        return next(reversed(self.entries))

    def window_days(self) -> int:
        if not self.entries:
            return 0
        return (self.last_date - self.first_date).days + 1


def rating_at(series: RatingSeries | None, day: date) -> float | None:
    """Exact-date lookup; None when the player has no rating that day."""
    if series is None:
        return None
    return series.entries.get(day)


def load_rating_series(
    rows: Iterable[tuple[str, date, float]]
) -> dict[str, RatingSeries]:
    """Build one RatingSeries per player from (player_id, date, rating) rows.

    Rows may arrive in any order. A (player, date) pair reported with two
    different ratings is an error; a window longer than charts cover only
    warns.
    """
    per_player: dict[str, dict[date, float]] = {}
    for player_id, day, value in rows:
        _check_rating_range(value)
        entries = per_player.setdefault(player_id, {})
        existing = entries.get(day)
        if existing is not None and existing != value:
            raise RatingError(
                f"conflicting ratings for {player_id} on {day}: "
                f"{existing} vs {value}"
            )
        entries[day] = value

    store: dict[str, RatingSeries] = {}
    for player_id, entries in per_player.items():
        ordered = dict(sorted(entries.items()))
        series = RatingSeries(player_id=player_id, entries=ordered)
        if series.window_days() > MAX_WINDOW_DAYS:
            warnings.warn(
                f"rating series for {player_id} spans {series.window_days()} days, "
                f"more than the {MAX_WINDOW_DAYS}-day chart window",
                RatingWindowWarning,
                stacklevel=2,
            )
        store[player_id] = series
    return store


def read_rating_rows(path: str | Path) -> Iterator[tuple[str, date, float]]:
    """Read rating rows from a ``player_id,date,rating`` CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["player_id", "date", "rating"]:
            raise RatingError(f"unexpected ratings CSV header in {path}")
        for row in reader:
            yield row[0], date.fromisoformat(row[1]), float(row[2])


def write_rating_rows(
    rows: Iterable[tuple[str, date, float]], path: str | Path
) -> int:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player_id", "date", "rating"])
        count = 0
        for player_id, day, value in rows:
            writer.writerow([player_id, day.isoformat(), repr(float(value))])
            count += 1
    return count


@dataclass(frozen=True)
class ChartCalibration:
    """Axis mapping of a rating chart.

    The plotted area starts ``margin`` pixels in from every edge. Each day
    occupies px_per_day consecutive columns starting at origin_date on the
    left; the bottom plotted row carries origin_rating and ratings grow
    upward at px_per_unit rows per rating unit.
    """

    origin_date: date
    origin_rating: float
    px_per_day: int = 1
    px_per_unit: int = 50
    margin: int = 2

    def __post_init__(self) -> None:
        if self.px_per_day < 1 or self.px_per_unit < 1:
            raise ChartError("px_per_day and px_per_unit must be >= 1")
        if self.margin < 0:
            raise ChartError("margin must be >= 0")

    @property
    def quantum(self) -> float:
        """Rating step represented by one vertical pixel."""
        return 1.0 / self.px_per_unit


@dataclass
class RatingChart:
    """A grayscale pixmap of a rating history plus its axis calibration."""

    pixels: np.ndarray  # uint8, shape (height, width)
    calibration: ChartCalibration

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def plotted_days(self) -> int:
        cal = self.calibration
        span = self.width - 2 * cal.margin
        if span <= 0 or span % cal.px_per_day:
            raise ChartError(
                f"chart width {self.width} does not fit whole days at "
                f"{cal.px_per_day} px/day with margin {cal.margin}"
            )
        return span // cal.px_per_day

    def bottom_row(self) -> int:
        return self.height - 1 - self.calibration.margin


def digitize_rating_chart(chart: RatingChart, player_id: str = "chart") -> RatingSeries:
    """Recover the rating series a chart was drawn from.

    Every plotted column must carry a unique darkest pixel; the columns of
    one day must agree on its row. Days whose whole column group is blank
    are treated as absent from the series, but a chart with no trace at all
    is an error.
    """
    cal = chart.calibration
    days = chart.plotted_days
    top, left = cal.margin, cal.margin
    region = chart.pixels[top : chart.height - cal.margin, left : left + days * cal.px_per_day]
    if region.size == 0:
        raise ChartError("chart has no plotted area")

    col_min = region.min(axis=0)
    col_row = region.argmin(axis=0)
    ambiguous = (region == col_min[None, :]).sum(axis=0) > 1
    blank = col_min >= BACKGROUND
    if blank.all():
        raise ChartError("chart has no trace")
    bad = ambiguous & ~blank
    if bad.any():
        col = int(np.nonzero(bad)[0][0])
        raise ChartError(f"ambiguous trace: two equally dark rows in column {col + left}")

    entries: dict[date, float] = {}
    bottom = chart.height - 1 - cal.margin - top  # relative to region
    for day_index in range(days):
        group = slice(day_index * cal.px_per_day, (day_index + 1) * cal.px_per_day)
        group_blank = blank[group]
        if group_blank.all():
            continue
        if group_blank.any():
            col = day_index * cal.px_per_day + int(np.nonzero(group_blank)[0][0])
            raise ChartError(f"no trace pixel in column {col + left}")
        rows = col_row[group]
        if (rows != rows[0]).any():
            raise ChartError(
                f"trace rows disagree within day {day_index} "
                f"(columns {day_index * cal.px_per_day + left}..)"
            )
        rating = cal.origin_rating + (bottom - int(rows[0])) * cal.quantum
        entries[cal.origin_date + timedelta(days=day_index)] = rating
    return RatingSeries(player_id=player_id, entries=entries)


def write_chart(chart: RatingChart, path: str | Path) -> None:
    """Write a chart as a plain (text) graymap plus a .cal sidecar header."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"P2\n{chart.width} {chart.height}\n255\n")
        for row in chart.pixels:
            fh.write(" ".join(str(int(v)) for v in row))
            fh.write("\n")
    cal = chart.calibration
    sidecar = path.with_suffix(".cal")
    sidecar.write_text(
        f"origin_date={cal.origin_date.isoformat()}\n"
        f"origin_rating={cal.origin_rating!r}\n"
        f"px_per_day={cal.px_per_day}\n"
        f"px_per_unit={cal.px_per_unit}\n"
        f"margin={cal.margin}\n"
    )


def read_chart(path: str | Path) -> RatingChart:
    """Read a chart written by write_chart (pixmap + .cal sidecar)."""
    path = Path(path)
    tokens = path.read_text().split()
    if not tokens or tokens[0] != "P2":
        raise ChartError(f"{path} is not a plain graymap (P2) file")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        values = np.array(tokens[4:], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise ChartError(f"malformed graymap header in {path}") from exc
    if maxval != 255 or values.size != width * height:
        raise ChartError(f"graymap payload of {path} does not match its header")
    if values.min() < 0 or values.max() > 255:
        raise ChartError(f"graymap sample out of range in {path}")
    pixels = values.astype(np.uint8).reshape(height, width)

    sidecar = path.with_suffix(".cal")
    if not sidecar.exists():
        raise ChartError(f"missing calibration sidecar {sidecar}")
    fields: dict[str, str] = {}
    for line in sidecar.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        cal = ChartCalibration(
            origin_date=date.fromisoformat(fields["origin_date"]),
            origin_rating=float(fields["origin_rating"]),
            px_per_day=int(fields["px_per_day"]),
            px_per_unit=int(fields["px_per_unit"]),
            margin=int(fields["margin"]),
        )
    except KeyError as exc:
        raise ChartError(f"calibration sidecar {sidecar} misses key {exc}") from None
    return RatingChart(pixels=pixels, calibration=cal)
