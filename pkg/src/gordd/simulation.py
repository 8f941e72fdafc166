"""Synthetic worlds with known handicap effects.

Players get latent skills on the unified rating scale; the platform rank is
the skill's ceiling. Matchmaking draws a rank gap (geometric decay, ratio
0.5, capped at 4) and then a uniform pair among all player pairs with that
gap, which keeps the mix of opponents continuous across every cutoff. The
higher-ranked player takes white (random colors at equal rank), setups
follow the standard komi/stone rules by construction, and white wins with
probability logistic(sensitivity * (s_W - s_B) - compensation granted to
black at that handicap level, relative to the even-game baseline).

The analyst-side rating series are the latent skills plus per-(player, day)
measurement noise, so the running variable built downstream is mismeasured
exactly the way chart-recovered ratings are, and the share of
rank-inconsistent games grows with the noise scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .dataset import Observation
from .errors import ChartError, SimulationError
from .ratings import (
    BACKGROUND,
    RANK_MAX,
    RANK_MIN,
    TRACE,
    ChartCalibration,
    DiscreteRating,
    RatingChart,
    RatingSeries,
    format_dan_kyu,
)
from .sgf import RawGameRecord

MAX_GAP = 4
GAP_DECAY = 0.5
WINDOW_START = date(2013, 1, 1)
EVEN_KOMI_MAIN, EVEN_KOMI_ALT = 6.5, 7.5
EVEN_KOMI_MAIN_SHARE = 0.9

# Noise scale that makes a given share of games rank-inconsistent, assuming
# skill spread well above one rank so fractional skill parts are uniform:
# share = 2 * sd / sqrt(2 pi).
def noise_sd_for_inconsistent_share(share: float) -> float:
    if not 0.0 <= share < 1.0:
        raise SimulationError("inconsistent share must be in [0, 1)")
    return share * math.sqrt(2.0 * math.pi) / 2.0


NOISE_SD_29 = noise_sd_for_inconsistent_share(0.029)


@dataclass(frozen=True)
class SimulationConfig:
    """Knobs of the synthetic world; defaults under-compensate handicaps."""

    n_players: int = 4000
    skill_mean: float = 0.0
    skill_sd: float = 3.0
    sensitivity: float = 1.2            # log-odds per skill unit
    compensations: tuple[float, ...] = (0.0, 0.6, 1.2, 1.8, 2.4)
    noise_sd: float = NOISE_SD_29
    n_games: int = 100_000
    n_days: int = 400
    seed: int = 20140513

    def __post_init__(self) -> None:
        if self.sensitivity <= 0:
            raise SimulationError("sensitivity must be positive")
        if len(self.compensations) != MAX_GAP + 1:
            raise SimulationError(
                f"compensations must cover levels 0..{MAX_GAP}"
            )
        if any(b < a for a, b in zip(self.compensations, self.compensations[1:])):
            raise SimulationError("compensations must be non-decreasing in level")
        if self.noise_sd < 0:
            raise SimulationError("noise_sd must be nonnegative")
        if not 1 <= self.n_days <= 400:
            raise SimulationError("n_days must be in 1..400")
        if self.n_games < 0:
            raise SimulationError("n_games must be nonnegative")

    def level_penalties(self) -> np.ndarray:
        """Log-odds taken from white at each level, relative to even games."""
        comp = np.asarray(self.compensations, dtype=float)
        return comp - comp[0]


def _expit(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _draw_skills(
    rng: np.random.Generator, mean: float, sd: float, size: int
) -> np.ndarray:
    """Normal skills, redrawn until every rank lands inside the dan-kyu scale."""
    skills = rng.normal(mean, sd, size)
    for _ in range(1000):
        bad = (skills <= RANK_MIN - 1) | (skills > RANK_MAX)
        count = int(bad.sum())
        if count == 0:
            return skills
        skills[bad] = rng.normal(mean, sd, count)
    raise SimulationError("skill distribution barely overlaps the rank scale")


@dataclass
class SimulatedWorld:
    """A generated player population and game log with known effects."""

    config: SimulationConfig
    skills: np.ndarray            # latent skill per player
    ranks: np.ndarray             # platform rank = ceil(skill)
    white: np.ndarray             # player index per game
    black: np.ndarray
    level: np.ndarray             # handicap level per game
    day: np.ndarray               # day offset per game
    second: np.ndarray            # start time of day, seconds
    komi: np.ndarray
    stones: np.ndarray
    white_wins: np.ndarray        # 0/1 per game
    white_rating_obs: np.ndarray  # analyst-side rating of white on game day
    black_rating_obs: np.ndarray
    z: np.ndarray                 # white rank - observed black rating
    consistent: np.ndarray        # bool per game
    rating_player: np.ndarray     # unique (player, day) rating table
    rating_day: np.ndarray
    rating_value: np.ndarray

    def player_id(self, index: int) -> str:
        return f"p{index:05d}"

    def n_games(self) -> int:
        return int(self.white.size)

    def game_date(self, game: int) -> date:
        return WINDOW_START + timedelta(days=int(self.day[game]))

    def game_records(self) -> Iterator[tuple[str, RawGameRecord]]:
        for j in range(self.n_games()):
            start = datetime.combine(self.game_date(j), time.min) + timedelta(
                seconds=int(self.second[j])
            )
            yield f"sim{j:07d}", RawGameRecord(
                black_id=self.player_id(int(self.black[j])),
                white_id=self.player_id(int(self.white[j])),
                black_rank_text=format_dan_kyu(DiscreteRating(int(self.ranks[self.black[j]]))),
                white_rank_text=format_dan_kyu(DiscreteRating(int(self.ranks[self.white[j]]))),
                handicap_stones=int(self.stones[j]),
                komi=float(self.komi[j]),
                result_text="W+Resign" if self.white_wins[j] else "B+Resign",
                start_time=start,
            )

    def rating_rows(self) -> Iterator[tuple[str, date, float]]:
        for player, day_off, value in zip(
            self.rating_player, self.rating_day, self.rating_value
        ):
            yield (
                self.player_id(int(player)),
                WINDOW_START + timedelta(days=int(day_off)),
                float(value),
            )

    def observations(self) -> list[Observation]:
        """All games as analysis rows (consistent and inconsistent alike)."""
        out = []
        for j in range(self.n_games()):
            out.append(Observation(
                game_id=f"sim{j:07d}",
                game_date=self.game_date(j),
                white_rank=int(self.ranks[self.white[j]]),
                black_rank=int(self.ranks[self.black[j]]),
                level=int(self.level[j]),
                z=float(self.z[j]),
                y=int(self.white_wins[j]),
                consistent=bool(self.consistent[j]),
            ))
        return out

    def analysis_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(z, y) of the rank-consistent games, ready for estimation."""
        keep = self.consistent
        return self.z[keep], self.white_wins[keep].astype(float)


def generate_world(config: SimulationConfig) -> SimulatedWorld:
    """Draw a full synthetic world. Deterministic in config.seed."""
    if config.n_players < 2:
        raise SimulationError("need at least 2 players")
    if config.skill_sd <= 0:
        raise SimulationError("skill sd must be positive")
    rng = np.random.default_rng(config.seed)
    n_games = config.n_games

    skills = _draw_skills(rng, config.skill_mean, config.skill_sd, config.n_players)
    ranks = np.ceil(skills).astype(np.int64)

    order = np.argsort(ranks, kind="stable")
    sorted_ranks = ranks[order]
    rank_lo, rank_hi = int(sorted_ranks[0]), int(sorted_ranks[-1])
    span = rank_hi - rank_lo + 1
    counts = np.zeros(span, dtype=np.int64)
    for r, c in zip(*np.unique(sorted_ranks, return_counts=True)):
        counts[int(r) - rank_lo] = c
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    # gap class sizes: ordered distinct pairs at gap 0, cross products beyond
    class_sizes = np.zeros(MAX_GAP + 1, dtype=float)
    class_sizes[0] = float((counts * (counts - 1)).sum())
    for g in range(1, MAX_GAP + 1):
        if span > g:
            class_sizes[g] = float((counts[:-g] * counts[g:]).sum())
    gap_weights = GAP_DECAY ** np.arange(MAX_GAP + 1) * (class_sizes > 0)
    if gap_weights.sum() == 0:
        raise SimulationError("no feasible pairings in the player population")
    gap_probs = gap_weights / gap_weights.sum()
    gaps = rng.choice(MAX_GAP + 1, size=n_games, p=gap_probs)

    white = np.zeros(n_games, dtype=np.int64)
    black = np.zeros(n_games, dtype=np.int64)
    komi = np.zeros(n_games)
    stones = np.zeros(n_games, dtype=np.int64)

    def pick_members(rank_index: np.ndarray, uniform: np.ndarray) -> np.ndarray:
        offsets = np.floor(uniform * counts[rank_index]).astype(np.int64)
        return order[starts[rank_index] + offsets]

    for g in range(MAX_GAP + 1):
        idx = np.nonzero(gaps == g)[0]
        if idx.size == 0:
            continue
        if g == 0:
            pair_w = counts * np.maximum(counts - 1, 0)
            lower = rng.choice(span, size=idx.size, p=pair_w / pair_w.sum())
            first_off = np.floor(rng.random(idx.size) * counts[lower]).astype(np.int64)
            second_off = np.floor(
                rng.random(idx.size) * (counts[lower] - 1)
            ).astype(np.int64)
            second_off += second_off >= first_off
            first = order[starts[lower] + first_off]
            second = order[starts[lower] + second_off]
            flip = rng.random(idx.size) < 0.5
            white[idx] = np.where(flip, first, second)
            black[idx] = np.where(flip, second, first)
            komi[idx] = np.where(
                rng.random(idx.size) < EVEN_KOMI_MAIN_SHARE,
                EVEN_KOMI_MAIN,
                EVEN_KOMI_ALT,
            )
        else:
            pair_w = np.zeros(span)
            pair_w[: span - g] = counts[: span - g] * counts[g:]
            lower = rng.choice(span, size=idx.size, p=pair_w / pair_w.sum())
            black[idx] = pick_members(lower, rng.random(idx.size))
            white[idx] = pick_members(lower + g, rng.random(idx.size))
            komi[idx] = 0.5
            if g >= 2:
                stones[idx] = g

    penalties = config.level_penalties()
    logit = config.sensitivity * (skills[white] - skills[black]) - penalties[gaps]
    white_wins = (rng.random(n_games) < _expit(logit)).astype(np.int64)

    day = rng.integers(0, config.n_days, size=n_games)
    second = rng.integers(0, 86_400, size=n_games)

    keys = np.concatenate([white, black]) * np.int64(config.n_days) + np.concatenate(
        [day, day]
    )
    uniq_keys, inverse = np.unique(keys, return_inverse=True)
    if config.noise_sd > 0:
        noise = rng.normal(0.0, config.noise_sd, uniq_keys.size)
    else:
        noise = np.zeros(uniq_keys.size)
    rating_player = uniq_keys // config.n_days
    rating_day = uniq_keys % config.n_days
    rating_value = np.clip(
        skills[rating_player] + noise, RANK_MIN - 1 + 1e-9, RANK_MAX
    )
    white_rating_obs = rating_value[inverse[:n_games]]
    black_rating_obs = rating_value[inverse[n_games:]]

    z = ranks[white] - black_rating_obs
    level = gaps.astype(np.int64)
    consistent = (z >= level) & (z < level + 1)

    return SimulatedWorld(
        config=config,
        skills=skills,
        ranks=ranks,
        white=white,
        black=black,
        level=level,
        day=day,
        second=second,
        komi=komi,
        stones=stones,
        white_wins=white_wins,
        white_rating_obs=white_rating_obs,
        black_rating_obs=black_rating_obs,
        z=z,
        consistent=consistent,
        rating_player=rating_player,
        rating_day=rating_day,
        rating_value=rating_value,
    )


ORACLE_DRAWS = 1_000_000


def true_effect(
    config: SimulationConfig,
    cutoff: int,
    n_draws: int = ORACLE_DRAWS,
    seed: int = 1,
) -> float:
    """Model-implied drop in white's win probability at a cutoff.

    Integrates the one-sided win-probability limits at z = cutoff over the
    matchmaking mix of white players by Monte Carlo: white skills are drawn
    from the population, the opposing black player sits exactly at the rank
    boundary, and each draw is weighted by the black skill density there.
    """
    if not 1 <= cutoff <= MAX_GAP:
        raise SimulationError(f"cutoff must be in 1..{MAX_GAP}")
    rng = np.random.default_rng(seed)
    if config.skill_sd > 0:
        s_white = _draw_skills(rng, config.skill_mean, config.skill_sd, n_draws)
        white_rank = np.ceil(s_white)
    else:
        s_white = np.full(n_draws, config.skill_mean)
        white_rank = np.ceil(s_white)
    boundary = white_rank - cutoff
    feasible = (boundary >= RANK_MIN) & (boundary + 1 <= RANK_MAX)
    if config.skill_sd > 0:
        weight = np.exp(
            -0.5 * ((boundary - config.skill_mean) / config.skill_sd) ** 2
        )
    else:
        weight = np.ones(n_draws)
    weight = weight * feasible
    if weight.sum() == 0:
        raise SimulationError("cutoff is infeasible for this population")

    penalties = config.level_penalties()
    gap = s_white - boundary
    base = config.sensitivity * gap
    drop = _expit(base - penalties[cutoff - 1]) - _expit(base - penalties[cutoff])
    return float((weight * drop).sum() / weight.sum())


def calibrate_compensations(
    targets: Sequence[float],
    config: SimulationConfig,
    n_draws: int = 400_000,
    seed: int = 7,
) -> tuple[float, ...]:
    """Compensation schedule whose true cutoff drops match the targets.

    Solves for each level's jump by bisection against the same Monte Carlo
    integral as true_effect, sequentially from cutoff 1 upward.
    """
    if len(targets) != MAX_GAP:
        raise SimulationError(f"need {MAX_GAP} target drops")
    rng = np.random.default_rng(seed)
    s_white = _draw_skills(rng, config.skill_mean, config.skill_sd, n_draws)
    white_rank = np.ceil(s_white)

    gamma = [0.0]
    for cutoff, target in enumerate(targets, start=1):
        boundary = white_rank - cutoff
        feasible = (boundary >= RANK_MIN) & (boundary + 1 <= RANK_MAX)
        weight = np.exp(
            -0.5 * ((boundary - config.skill_mean) / config.skill_sd) ** 2
        ) * feasible
        total = weight.sum()
        base = config.sensitivity * (s_white - boundary) - gamma[-1]
        p_below = _expit(base)

        def drop(jump: float) -> float:
            return float((weight * (p_below - _expit(base - jump))).sum() / total)

        lo, hi = 0.0, 12.0
        if drop(hi) < target:
            raise SimulationError(
                f"target drop {target} at cutoff {cutoff} is unattainable"
            )
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if drop(mid) < target:
                lo = mid
            else:
                hi = mid
        gamma.append(gamma[-1] + 0.5 * (lo + hi))
    return tuple(gamma)


def render_rating_chart(
    series: RatingSeries,
    calibration: ChartCalibration,
    height: int | None = None,
) -> RatingChart:
    """Draw a rating series as a chart pixmap: one dark trace row per day.

    The chart spans from the calibration origin date through the series'
    last date; days the series skips stay blank. Ratings that fall outside
    the drawable rows (below the origin rating, or above an explicit
    height) are an error.
    """
    if not series.entries:
        raise ChartError("cannot render an empty series")
    cal = calibration
    if series.first_date < cal.origin_date:
        raise ChartError("series starts before the chart origin date")
    days = (series.last_date - cal.origin_date).days + 1
    width = 2 * cal.margin + days * cal.px_per_day

    day_idx = np.array(
        [(d - cal.origin_date).days for d in series.entries], dtype=np.int64
    )
    values = np.fromiter(series.entries.values(), dtype=float, count=len(series.entries))
    row_offsets = np.rint((values - cal.origin_rating) * cal.px_per_unit).astype(np.int64)
    if (row_offsets < 0).any():
        raise ChartError("series value below the chart's origin rating")
    if height is None:
        height = 2 * cal.margin + int(row_offsets.max()) + 1
    bottom = height - 1 - cal.margin
    rows = bottom - row_offsets
    if (rows < cal.margin).any():
        raise ChartError("series value above the chart's top row")

    pixels = np.full((height, width), BACKGROUND, dtype=np.uint8)
    col_base = cal.margin + day_idx * cal.px_per_day
    for offset in range(cal.px_per_day):
        pixels[rows, col_base + offset] = TRACE
    return RatingChart(pixels=pixels, calibration=cal)


CONFIG_KEYS = {
    "n_players": int,
    "skill_mean": float,
    "skill_sd": float,
    "sensitivity": float,
    "noise_sd": float,
    "n_games": int,
    "n_days": int,
    "seed": int,
}


def write_config(config: SimulationConfig, path: str | Path) -> None:
    """Key-value text form of a configuration."""
    lines = [f"{key}={getattr(config, key)!r}" for key in CONFIG_KEYS]
    lines.append("compensations=" + ",".join(repr(c) for c in config.compensations))
    Path(path).write_text("\n".join(lines) + "\n")


def read_config(path: str | Path) -> SimulationConfig:
    fields: dict[str, object] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise SimulationError(f"{path}:{lineno}: expected key=value")
        if key == "compensations":
            fields[key] = tuple(float(v) for v in value.split(","))
        elif key in CONFIG_KEYS:
            fields[key] = CONFIG_KEYS[key](value)
        else:
            raise SimulationError(f"{path}:{lineno}: unknown key {key!r}")
    return SimulationConfig(**fields)  # type: ignore[arg-type]


# Drops injected at cutoffs 1..4 for the oracle-recovery configuration.
ORACLE_TARGET_DROPS = (0.28, 0.38, 0.25, 0.33)

# Compensation schedule calibrated against ORACLE_TARGET_DROPS; the tests
# re-derive it via calibrate_compensations.
ORACLE_COMPENSATIONS = (0.0, 1.17746, 2.893337, 4.145943, 6.584614)

ORACLE_SEED = 60309

ORACLE_CONFIG = SimulationConfig(
    n_players=4000,
    skill_mean=0.0,
    skill_sd=3.0,
    sensitivity=1.05,
    compensations=ORACLE_COMPENSATIONS,
    noise_sd=0.0,
    n_games=200_000,
    n_days=400,
    seed=ORACLE_SEED,
)

DEFAULT_CONFIG = SimulationConfig()
