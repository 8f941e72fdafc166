"""Synthetic world generation and its ground-truth effects."""

import math
from dataclasses import replace

import numpy as np
import pytest

from gordd.dataset import SetupKind, classify_setup, describe_by_handicap
from gordd.errors import ChartError, SimulationError
from gordd.ratings import ChartCalibration, RANK_MAX, RANK_MIN, RatingSeries
from gordd.simulation import (
    DEFAULT_CONFIG,
    MAX_GAP,
    ORACLE_COMPENSATIONS,
    ORACLE_CONFIG,
    ORACLE_TARGET_DROPS,
    SimulationConfig,
    calibrate_compensations,
    generate_world,
    noise_sd_for_inconsistent_share,
    read_config,
    render_rating_chart,
    true_effect,
    write_config,
)

SMALL = replace(DEFAULT_CONFIG, n_games=20_000, n_players=1500, seed=99)


@pytest.fixture(scope="module")
def small_world():
    return generate_world(SMALL)


class TestConfigValidation:
    def test_sensitivity_must_be_positive(self):
        with pytest.raises(SimulationError):
            SimulationConfig(sensitivity=0.0)

    def test_compensations_must_cover_all_levels(self):
        with pytest.raises(SimulationError):
            SimulationConfig(compensations=(0.0, 0.5, 1.0))

    def test_compensations_must_be_non_decreasing(self):
        with pytest.raises(SimulationError):
            SimulationConfig(compensations=(0.0, 0.5, 0.4, 0.8, 1.0))

    def test_noise_sd_nonnegative(self):
        with pytest.raises(SimulationError):
            SimulationConfig(noise_sd=-0.1)

    def test_window_capped_at_400_days(self):
        with pytest.raises(SimulationError):
            SimulationConfig(n_days=401)

    def test_generate_needs_two_players(self):
        with pytest.raises(SimulationError):
            generate_world(replace(SMALL, n_players=1))

    def test_generate_needs_positive_skill_spread(self):
        with pytest.raises(SimulationError):
            generate_world(replace(SMALL, skill_sd=0.0))

    def test_config_file_round_trip(self, tmp_path):
        path = tmp_path / "sim.cfg"
        write_config(ORACLE_CONFIG, path)
        assert read_config(path) == ORACLE_CONFIG

    def test_config_file_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text("volume=11\n")
        with pytest.raises(SimulationError, match="unknown key"):
            read_config(path)


class TestGenerateWorld:
    def test_same_seed_is_byte_identical(self):
        a = generate_world(SMALL)
        b = generate_world(SMALL)
        for field in (
            "skills", "ranks", "white", "black", "level", "day", "second",
            "komi", "stones", "white_wins", "z", "consistent", "rating_value",
        ):
            assert np.array_equal(getattr(a, field), getattr(b, field)), field

    def test_different_seed_differs(self):
        a = generate_world(SMALL)
        b = generate_world(replace(SMALL, seed=100))
        assert not np.array_equal(a.white_wins, b.white_wins)

    def test_every_game_respects_standard_setup_rules(self, small_world):
        w = small_world
        gaps = w.ranks[w.white] - w.ranks[w.black]
        assert (gaps == w.level).all()
        assert (gaps >= 0).all() and (gaps <= MAX_GAP).all()
        assert (w.stones[w.level >= 2] == w.level[w.level >= 2]).all()
        assert (w.komi[w.level >= 1] == 0.5).all()
        assert np.isin(w.komi[w.level == 0], (6.5, 7.5)).all()
        assert (w.stones[w.level <= 1] == 0).all()

    def test_records_classify_as_standard(self, small_world):
        for _, record in list(small_world.game_records())[:500]:
            setup = classify_setup(record)
            assert setup.kind is not SetupKind.NON_STANDARD

    def test_ranks_stay_on_scale(self, small_world):
        assert small_world.ranks.min() >= RANK_MIN
        assert small_world.ranks.max() <= RANK_MAX
        assert (small_world.ranks == np.ceil(small_world.skills)).all()

    def test_equal_skill_pair_is_fair(self):
        config = SimulationConfig(
            n_players=2, skill_sd=1e-9, noise_sd=0.0, n_games=100_000, seed=5
        )
        world = generate_world(config)
        assert (world.level == 0).all()
        assert world.white_wins.mean() == pytest.approx(0.5, abs=0.01)

    def test_zero_noise_means_zero_inconsistency(self):
        world = generate_world(replace(SMALL, noise_sd=0.0))
        assert world.consistent.all()

    def test_inconsistent_share_grows_with_noise(self):
        shares = []
        for sd in (0.0, 0.01, 0.03, 0.08, 0.2):
            world = generate_world(replace(SMALL, noise_sd=sd, n_games=40_000))
            shares.append(1.0 - world.consistent.mean())
        assert shares == sorted(shares)

    def test_injected_three_percent_noise(self):
        config = replace(
            DEFAULT_CONFIG,
            noise_sd=noise_sd_for_inconsistent_share(0.03),
            n_games=100_000,
            seed=17,
        )
        world = generate_world(config)
        share = 1.0 - world.consistent.mean()
        assert share == pytest.approx(0.03, abs=0.01)

    def test_win_frequency_matches_model_probability_in_cells(self, small_world):
        w = small_world
        penalties = w.config.level_penalties()
        for level in (0, 1, 2):
            for gap_lo, gap_hi in ((level - 0.25, level + 0.25), (level + 0.25, level + 0.75)):
                diff = w.skills[w.white] - w.skills[w.black]
                cell = (w.level == level) & (diff >= gap_lo) & (diff < gap_hi)
                n = int(cell.sum())
                if n < 200:
                    continue
                p_model = 1 / (1 + np.exp(-(w.config.sensitivity * diff[cell] - penalties[level])))
                expected = float(p_model.mean())
                se = math.sqrt(expected * (1 - expected) / n)
                assert abs(w.white_wins[cell].mean() - expected) <= 3 * se + 1e-9

    def test_under_compensation_shows_selection_bias_pattern(self, small_world):
        keep = [obs for obs in small_world.observations() if obs.consistent]
        cells = describe_by_handicap(keep)
        fractions = [cell.fraction for cell in cells]
        assert [cell.level for cell in cells] == [0, 1, 2, 3, 4]
        assert all(b > a for a, b in zip(fractions, fractions[1:]))


class TestTrueEffect:
    def test_no_extra_compensation_means_no_effect(self):
        config = replace(DEFAULT_CONFIG, compensations=(0.0, 0.6, 0.6, 0.9, 1.2))
        assert true_effect(config, 2, n_draws=10_000) == 0.0

    def test_point_mass_population_is_analytic(self):
        # all whites at skill 0 facing the boundary two ranks down: the
        # below-side probability is exactly 1/2 and the jump log 4 drops it
        # to exactly 1/5, an effect of exactly 0.30
        config = SimulationConfig(
            skill_mean=0.0,
            skill_sd=0.0,
            sensitivity=0.7,
            compensations=(0.0, 1.4, 1.4 + math.log(4.0), 2.9, 3.0),
            noise_sd=0.0,
        )
        assert true_effect(config, 2, n_draws=1000) == pytest.approx(0.30, abs=1e-12)

    def test_oracle_self_consistency(self):
        a = true_effect(ORACLE_CONFIG, 2, n_draws=400_000, seed=1)
        b = true_effect(ORACLE_CONFIG, 2, n_draws=400_000, seed=2)
        assert abs(a - b) < 0.005

    def test_oracle_config_matches_target_drops(self):
        for cutoff, target in enumerate(ORACLE_TARGET_DROPS, start=1):
            value = true_effect(ORACLE_CONFIG, cutoff, n_draws=500_000, seed=11)
            assert value == pytest.approx(target, abs=0.005)

    def test_rejects_foreign_cutoffs(self):
        with pytest.raises(SimulationError):
            true_effect(DEFAULT_CONFIG, 0)
        with pytest.raises(SimulationError):
            true_effect(DEFAULT_CONFIG, 5)

    def test_calibration_rederives_frozen_compensations(self):
        base = replace(ORACLE_CONFIG, compensations=(0.0,) * 5)
        gamma = calibrate_compensations(ORACLE_TARGET_DROPS, base, n_draws=200_000, seed=7)
        assert gamma == pytest.approx(ORACLE_COMPENSATIONS, abs=0.02)

    def test_calibration_rejects_unattainable_targets(self):
        with pytest.raises(SimulationError, match="unattainable"):
            calibrate_compensations(
                (0.28, 0.38, 0.25, 0.95), ORACLE_CONFIG, n_draws=50_000
            )


class TestRenderChart:
    def test_single_entry_renders_one_column_group(self):
        from datetime import date

        series = RatingSeries("p", {date(2014, 1, 1): 0.5})
        cal = ChartCalibration(date(2014, 1, 1), 0.0, px_per_day=3, px_per_unit=10)
        chart = render_rating_chart(series, cal)
        assert chart.width == 2 * cal.margin + 3
        trace_cols = np.nonzero((chart.pixels == 0).any(axis=0))[0]
        assert list(trace_cols) == [cal.margin, cal.margin + 1, cal.margin + 2]

    def test_400_day_series_is_400_px_wide_plus_margins(self):
        from datetime import date, timedelta

        start = date(2013, 1, 1)
        entries = {start + timedelta(days=i): 0.0 for i in range(400)}
        series = RatingSeries("p", entries)
        cal = ChartCalibration(start, -0.5, px_per_day=1, px_per_unit=10)
        chart = render_rating_chart(series, cal)
        assert chart.width == 400 + 2 * cal.margin

    def test_value_below_origin_is_an_error(self):
        from datetime import date

        series = RatingSeries("p", {date(2014, 1, 1): -1.0})
        cal = ChartCalibration(date(2014, 1, 1), 0.0)
        with pytest.raises(ChartError, match="below"):
            render_rating_chart(series, cal)

    def test_value_above_explicit_height_is_an_error(self):
        from datetime import date

        series = RatingSeries("p", {date(2014, 1, 1): 5.0})
        cal = ChartCalibration(date(2014, 1, 1), 0.0, px_per_unit=10)
        with pytest.raises(ChartError, match="above"):
            render_rating_chart(series, cal, height=20)
