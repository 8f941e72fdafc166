"""Batch command line front end.

Commands compose through files only: ingest SGF archives to a games CSV,
join and filter against a ratings CSV, then describe, fit per-segment
logistic curves, and estimate the handicap effect at each cutoff. simulate
produces the same file formats from a synthetic world so every downstream
command is source-agnostic. Each run writes a manifest with input hashes,
resolved options and the tool version, and identical inputs always produce
byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
import warnings
from dataclasses import asdict, replace
from pathlib import Path

import click
import numpy as np

from . import __version__, dataset, estimators, ratings, sgf, simulation
from .errors import GorddError

log = logging.getLogger("gordd")

OUT_DIR_OPTION = click.option(
    "--out-dir",
    envvar="GORDD_OUT_DIR",
    default=".",
    show_default=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for output artifacts (env: GORDD_OUT_DIR).",
)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _hash_tree(path: Path) -> str:
    """Stable content hash of a file, or of every file under a directory."""
    if path.is_file():
        return _sha256(path)
    digest = hashlib.sha256()
    for child in sorted(p for p in path.rglob("*") if p.is_file()):
        digest.update(child.relative_to(path).as_posix().encode())
        digest.update(_sha256(child).encode())
    return digest.hexdigest()


def _write_manifest(
    out_dir: Path,
    command: str,
    options: dict,
    inputs: dict[str, Path],
    outputs: list[str],
    seed: int | None = None,
) -> None:
    manifest = {
        "tool": "gordd",
        "version": __version__,
        "command": command,
        "options": options,
        "inputs": {name: _hash_tree(path) for name, path in inputs.items()},
        "outputs": sorted(outputs),
    }
    if seed is not None:
        manifest["seed"] = seed
    path = out_dir / f"{command}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _prepare_out_dir(out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


@click.group()
@click.version_option(version=__version__, prog_name="gordd")
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def cli(verbose: int) -> None:
    """Handicap effect estimation pipeline for go game archives."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _ingest_records(sgf_dir: Path) -> list[tuple[str, sgf.RawGameRecord]]:
    records = []
    for game_id, path in sgf.iter_sgf_dir(sgf_dir):
        try:
            records.append((game_id, sgf.read_sgf_file(path)))
        except GorddError as exc:
            raise GorddError(f"{path}: {exc}") from exc
    if not records:
        raise GorddError(f"no .sgf files found under {sgf_dir}")
    return records


@cli.command()
@click.option("--sgf-dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@OUT_DIR_OPTION
def ingest(sgf_dir: Path, out_dir: Path) -> None:
    """Parse an SGF directory tree into a games CSV."""
    out_dir = _prepare_out_dir(out_dir)
    records = _ingest_records(sgf_dir)
    count = sgf.write_game_records_csv(records, out_dir / "games.csv")
    log.info("ingested %d games", count)
    _write_manifest(
        out_dir, "ingest", {"sgf_dir": str(sgf_dir)},
        {"sgf_dir": sgf_dir}, ["games.csv"],
    )
    click.echo(f"ingested {count} games -> {out_dir / 'games.csv'}")


@cli.command("filter")
@click.option("--games", "games_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--sgf-dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--ratings", "ratings_csv", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@OUT_DIR_OPTION
def filter_cmd(games_csv: Path | None, sgf_dir: Path | None, ratings_csv: Path, out_dir: Path) -> None:
    """Join games with ratings, apply the removal rules, audit the counts."""
    if (games_csv is None) == (sgf_dir is None):
        raise click.UsageError("exactly one of --games or --sgf-dir is required")
    out_dir = _prepare_out_dir(out_dir)
    if games_csv is not None:
        records = sgf.read_game_records_csv(games_csv)
        inputs = {"games": games_csv, "ratings": ratings_csv}
    else:
        records = _ingest_records(sgf_dir)
        inputs = {"sgf_dir": sgf_dir, "ratings": ratings_csv}
    store = ratings.load_rating_series(ratings.read_rating_rows(ratings_csv))
    candidates = (
        dataset.build_candidate(game_id, record, store) for game_id, record in records
    )
    retained, report = dataset.filter_dataset(candidates)
    dataset.write_retained_csv(retained, out_dir / "retained.csv")
    (out_dir / "filter_report.json").write_text(report.to_json() + "\n")
    _write_manifest(
        out_dir, "filter", {k: str(v) for k, v in inputs.items()},
        inputs, ["retained.csv", "filter_report.json"],
    )
    click.echo(
        f"retained {report.retained}/{report.input_total} games -> "
        f"{out_dir / 'retained.csv'}"
    )


@cli.command()
@click.option("--retained", "retained_csv", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--by-white-rank", is_flag=True, help="Split cells by the white player's rank.")
@OUT_DIR_OPTION
def describe(retained_csv: Path, by_white_rank: bool, out_dir: Path) -> None:
    """White win fraction by handicap level."""
    out_dir = _prepare_out_dir(out_dir)
    observations = dataset.read_retained_csv(retained_csv)
    cells = dataset.describe_by_handicap(observations, group_by_white_rank=by_white_rank)
    dataset.write_describe_csv(cells, out_dir / "describe.csv")
    _write_manifest(
        out_dir, "describe",
        {"retained": str(retained_csv), "by_white_rank": by_white_rank},
        {"retained": retained_csv}, ["describe.csv"],
    )
    click.echo(f"{len(cells)} cells -> {out_dir / 'describe.csv'}")


@cli.command("fit-logistic")
@click.option("--retained", "retained_csv", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@OUT_DIR_OPTION
def fit_logistic(retained_csv: Path, out_dir: Path) -> None:
    """Quadratic logistic fit of the white win probability per segment."""
    out_dir = _prepare_out_dir(out_dir)
    observations = dataset.read_retained_csv(retained_csv)
    fits = []
    for level in sorted({obs.level for obs in observations}):
        seg = [obs for obs in observations if obs.level == level]
        z = np.array([obs.z for obs in seg])
        y = np.array([obs.y for obs in seg], dtype=float)
        try:
            fits.append(estimators.fit_logistic_poly2(z, y, level=level))
        except GorddError as exc:
            log.warning("segment %d skipped: %s", level, exc)
    if not fits:
        raise GorddError("no segment could be fitted")
    estimators.write_curves_csv(fits, out_dir / "curves.csv")
    payload = [
        {
            "level": fit.level,
            "coefficients": list(fit.beta),
            "covariance": [list(row) for row in fit.covariance],
            "n": fit.n,
            "converged": fit.converged,
            "deviance": fit.deviance,
        }
        for fit in fits
    ]
    (out_dir / "logistic_fits.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    _write_manifest(
        out_dir, "fit-logistic", {"retained": str(retained_csv)},
        {"retained": retained_csv}, ["curves.csv", "logistic_fits.json"],
    )
    click.echo(f"fitted {len(fits)} segments -> {out_dir / 'curves.csv'}")


def _parse_cutoffs(text: str) -> tuple[float, ...]:
    try:
        cutoffs = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise click.BadParameter(f"cannot parse cutoff list {text!r}")
    if not cutoffs:
        raise click.BadParameter("cutoff list is empty")
    return cutoffs


@cli.command("estimate-rdd")
@click.option("--retained", "retained_csv", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--cutoffs", default="1,2,3,4", show_default=True, help="Comma-separated cutoffs.")
@click.option("--bandwidth", type=float, default=None, help="Manual bandwidth override (> 0).")
@click.option("--classical-se", is_flag=True, help="Classical instead of HC1 standard errors.")
@OUT_DIR_OPTION
def estimate_rdd(
    retained_csv: Path, cutoffs: str, bandwidth: float | None,
    classical_se: bool, out_dir: Path,
) -> None:
    """Local linear handicap effect estimates at each cutoff."""
    cutoff_values = _parse_cutoffs(cutoffs)
    if bandwidth is not None and bandwidth <= 0:
        raise click.BadParameter("--bandwidth must be positive")
    out_dir = _prepare_out_dir(out_dir)
    observations = dataset.read_retained_csv(retained_csv)
    z = np.array([obs.z for obs in observations])
    y = np.array([obs.y for obs in observations], dtype=float)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        estimates = estimators.estimate_all_cutoffs(
            z, y, cutoffs=cutoff_values, robust=not classical_se, bandwidth=bandwidth
        )
    for warning in caught:
        log.warning("%s", warning.message)
    estimators.write_estimates_csv(estimates, out_dir / "estimates.csv")
    _write_manifest(
        out_dir, "estimate-rdd",
        {
            "retained": str(retained_csv),
            "cutoffs": list(cutoff_values),
            "bandwidth": bandwidth,
            "classical_se": classical_se,
        },
        {"retained": retained_csv}, ["estimates.csv"],
    )
    click.echo(f"{len(estimates)} estimates -> {out_dir / 'estimates.csv'}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--games", "n_games", type=int, default=None, help="Override the game count.")
@OUT_DIR_OPTION
def simulate(config_path: Path | None, seed: int | None, n_games: int | None, out_dir: Path) -> None:
    """Generate a synthetic world in the pipeline's own file formats."""
    out_dir = _prepare_out_dir(out_dir)
    config = (
        simulation.read_config(config_path)
        if config_path is not None
        else simulation.DEFAULT_CONFIG
    )
    if seed is not None:
        config = replace(config, seed=seed)
    if n_games is not None:
        config = replace(config, n_games=n_games)
    world = simulation.generate_world(config)
    sgf.write_game_records_csv(world.game_records(), out_dir / "games.csv")
    ratings.write_rating_rows(world.rating_rows(), out_dir / "ratings.csv")
    truth = {
        "cutoff_effects": {
            str(c): simulation.true_effect(config, c) for c in range(1, simulation.MAX_GAP + 1)
        },
        "config": asdict(config),
    }
    (out_dir / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    simulation.write_config(config, out_dir / "config.txt")
    inputs = {} if config_path is None else {"config": config_path}
    _write_manifest(
        out_dir, "simulate", asdict(config), inputs,
        ["games.csv", "ratings.csv", "truth.json", "config.txt"],
        seed=config.seed,
    )
    click.echo(f"simulated {config.n_games} games -> {out_dir / 'games.csv'}")


@cli.command()
@click.option("--chart", "chart_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@OUT_DIR_OPTION
def digitize(chart_path: Path, out_dir: Path) -> None:
    """Recover a rating series from a chart pixmap into a ratings CSV."""
    out_dir = _prepare_out_dir(out_dir)
    chart = ratings.read_chart(chart_path)
    series = ratings.digitize_rating_chart(chart, player_id=chart_path.stem)
    rows = ((series.player_id, day, value) for day, value in series.entries.items())
    count = ratings.write_rating_rows(rows, out_dir / "ratings.csv")
    _write_manifest(
        out_dir, "digitize", {"chart": str(chart_path)},
        {"chart": chart_path}, ["ratings.csv"],
    )
    click.echo(f"digitized {count} days -> {out_dir / 'ratings.csv'}")


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit codes (0 ok, 1 usage, 2 data)."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        return 1
    except GorddError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
