import functools
import logging
import os
from collections.abc import Callable
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import click
from dotenv import load_dotenv

from meter_profiles import get_version_title
from meter_profiles.backfill import BackfillError
from meter_profiles.backfill import BackfillResult
from meter_profiles.backfill import VALIDATED_MISSING_MONTHS
from meter_profiles.backfill import backfill
from meter_profiles.backfill import read_completed_csv
from meter_profiles.backfill import write_completed_csv
from meter_profiles.clustering import ClusterModel
from meter_profiles.clustering import InvalidKRangeError
from meter_profiles.clustering import NotEnoughProfilesError
from meter_profiles.clustering import SingleClusterError
from meter_profiles.clustering import assign_full
from meter_profiles.clustering import assign_partial
from meter_profiles.clustering import centroid_distances
from meter_profiles.clustering import choose_k
from meter_profiles.clustering import kmeans_fit
from meter_profiles.clustering import load_model
from meter_profiles.clustering import save_model
from meter_profiles.clustering import select_k
from meter_profiles.clustering import write_elbow_csv
from meter_profiles.cohort import annual_summary
from meter_profiles.cohort import duration_distribution
from meter_profiles.cohort import monthly_average
from meter_profiles.cohort import profile_summary
from meter_profiles.cohort import write_annual_csv
from meter_profiles.cohort import write_durations_csv
from meter_profiles.cohort import write_monthly_csv
from meter_profiles.cohort import write_profiles_csv
from meter_profiles.config import ConfigTypeError
from meter_profiles.config import ConfigValueError
from meter_profiles.config import DEFAULT_LOG_LEVEL
from meter_profiles.config import DOTENV_ENV_VAR
from meter_profiles.config import LOG_LEVEL_ENV_VAR
from meter_profiles.config import RunConfig
from meter_profiles.config import UnknownConfigOption
from meter_profiles.config import load_run_config
from meter_profiles.config import parse_k_range
from meter_profiles.evaluation import assignment_accuracy
from meter_profiles.evaluation import holdout_eval
from meter_profiles.evaluation import mean_assigned_smape
from meter_profiles.evaluation import write_holdout_csv
from meter_profiles.features import DegenerateProfileError
from meter_profiles.features import UserFeatures
from meter_profiles.features import build_user_features
from meter_profiles.features import read_features_csv
from meter_profiles.features import write_features_csv
from meter_profiles.ingest import HdfFormatError
from meter_profiles.ingest import RawReading
from meter_profiles.ingest import ReadingSeries
from meter_profiles.ingest import assess_months
from meter_profiles.ingest import group_by_meter
from meter_profiles.ingest import merge_series
from meter_profiles.ingest import parse_hdf
from meter_profiles.ingest import read_readings_csv
from meter_profiles.ingest import trim_window
from meter_profiles.ingest import write_quality_csv
from meter_profiles.ingest import write_readings_csv
from meter_profiles.tariff import Locality
from meter_profiles.tariff import NoTariffPlansError
from meter_profiles.tariff import TariffParseError
from meter_profiles.tariff import cheapest_by_kind
from meter_profiles.tariff import parse_tariffs
from meter_profiles.tariff import rank_plans
from meter_profiles.tariff import tou_saving
from meter_profiles.tariff import write_bill_report


logger = logging.getLogger(__name__)

# Exit code of any fatal input error.
EXIT_INPUT_ERROR = 2

READINGS_CSV = "readings.csv"
QUALITY_CSV = "month_quality.csv"
FEATURES_CSV = "features.csv"
MODEL_JSON = "model.json"
ELBOW_CSV = "elbow.csv"
ASSIGNMENTS_CSV = "assignments.csv"
COMPLETED_CSV = "completed.csv"
HOLDOUT_CSV = "holdout.csv"

_INPUT_ERRORS = (ValueError, RuntimeError, TypeError, KeyError, OSError)


def _fail(message: str) -> None:
    click.secho(f"ERROR {message}", fg="red", err=True)
    raise SystemExit(EXIT_INPUT_ERROR)


def _warn(message: str) -> None:
    click.secho(f"WARNING {message}", fg="yellow")


@contextmanager
def _fatal_errors(source: Path | str | None = None) -> Iterator[None]:
    """
    Turns input errors into a red message naming the offending file and exit code 2.
    """
    try:
        yield
    except _INPUT_ERRORS as e:
        if source is None:
            _fail(str(e))
        else:
            _fail(f"{source}: {e}")


def run_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """
    Adds the options shared by every subcommand and passes the resolved `RunConfig` as
    `config`.
    """
    options = [
        click.option(
            "--config",
            "config_path",
            type=click.Path(dir_okay=False, path_type=Path),
            help="YAML run configuration (default: $METER_PROFILES_CONFIG).",
        ),
        click.option(
            "--window-start",
            type=click.DateTime(formats=["%Y-%m-%d"]),
            help="First day of the 12-month analysis window.",
        ),
        click.option(
            "--locality",
            type=click.Choice([loc.value for loc in Locality], case_sensitive=False),
            help="Standing charge locality.",
        ),
        click.option("--k", "k", type=int, help="Number of profiles."),
        click.option("--k-range", help='Range of profile counts to explore, e.g. "2..8".'),
        click.option("--seed", type=int, help="Random seed of the clustering."),
        click.option(
            "--model", "model_path", type=click.Path(path_type=Path), help="Profile model JSON."
        ),
        click.option(
            "--tariffs", "tariff_path", type=click.Path(path_type=Path), help="Tariff plans CSV."
        ),
        click.option(
            "--out",
            "output_dir",
            type=click.Path(file_okay=False, path_type=Path),
            help="Directory of the outputs.",
        ),
    ]

    @functools.wraps(func)
    def wrapper(
        config_path: Path | None,
        window_start: Any,
        locality: str | None,
        k: int | None,
        k_range: str | None,
        seed: int | None,
        model_path: Path | None,
        tariff_path: Path | None,
        output_dir: Path | None,
        **kwargs: Any,
    ) -> Any:
        with _fatal_errors(config_path):
            config = load_run_config(config_path)
        overrides: dict[str, Any] = dict(
            window_start=window_start.date() if window_start is not None else None,
            locality=Locality(locality) if locality is not None else None,
            k=k,
            seed=seed,
            model_path=model_path,
            tariff_path=tariff_path,
            output_dir=output_dir,
        )
        if k_range is not None:
            try:
                overrides["k_range"] = parse_k_range(k_range)
            except ValueError as e:
                _fail(str(ConfigValueError("k_range", k_range, str(e))))
        try:
            config = config.with_overrides(**overrides)
        except (ConfigValueError, ConfigTypeError, UnknownConfigOption) as e:
            _fail(str(e))
        config.output_dir.mkdir(parents=True, exist_ok=True)
        return func(config=config, **kwargs)

    for option in reversed(options):
        wrapper = option(wrapper)
    return wrapper


def _input_path(given: Path | None, config: RunConfig, default_name: str) -> Path:
    path = given if given is not None else config.output_dir / default_name
    if not path.is_file():
        _fail(f"{path}: file not found")
    return path


def _model_path(config: RunConfig) -> Path:
    return config.model_path if config.model_path is not None else config.output_dir / MODEL_JSON


def _load_model(config: RunConfig) -> ClusterModel:
    path = _model_path(config)
    if not path.is_file():
        _fail(f"{path}: model not found (run `fit` first or pass --model)")
    with _fatal_errors(path):
        return load_model(path)


def _read_features(path: Path) -> list[UserFeatures]:
    with _fatal_errors(path):
        return read_features_csv(path)


@click.command()
@click.argument("files", nargs=-1, required=True, type=click.Path(dir_okay=False, path_type=Path))
@run_options
def ingest(files: tuple[Path, ...], config: RunConfig) -> None:
    """
    Read HDF exports, merge uploads of the same meter and check monthly data quality.
    """
    window = config.window
    parts: dict[str, list[list[RawReading]]] = {}
    for path in files:
        with _fatal_errors():
            text = path.read_text(encoding="utf-8")
            parsed = parse_hdf(text, source=str(path))
        for diagnostic in parsed.diagnostics:
            _warn(f"{path}: {diagnostic}")
        for mprn, readings in group_by_meter(parsed.readings).items():
            parts.setdefault(mprn, []).append(readings)

    series: list[ReadingSeries] = []
    qualities = {}
    for mprn, meter_parts in sorted(parts.items()):
        merged, diagnostics = merge_series(meter_parts, mprn=mprn)
        for diagnostic in diagnostics:
            _warn(f"{mprn}: {diagnostic}")
        trimmed = trim_window(merged, window)
        quality = assess_months(trimmed, window)
        excluded = sum(q.excluded for q in quality)
        click.secho(f"{mprn}: {len(trimmed.readings)} readings, {excluded} excluded months")
        series.append(trimmed)
        qualities[mprn] = quality

    write_readings_csv(series, config.output_dir / READINGS_CSV)
    write_quality_csv(qualities, window, config.output_dir / QUALITY_CSV)
    click.secho("OK", fg="green")


@click.command()
@click.argument("readings_csv", required=False, type=click.Path(path_type=Path))
@run_options
def features(readings_csv: Path | None, config: RunConfig) -> None:
    """
    Compute monthly day/night/peak usage and profile ratios of every meter.
    """
    path = _input_path(readings_csv, config, READINGS_CSV)
    with _fatal_errors(path):
        series = read_readings_csv(path)
    users = [build_user_features(s, config.window) for s in series.values()]
    for user in users:
        click.secho(f"{user.mprn}: {user.observed_months} observed months")
    write_features_csv(users, config.output_dir / FEATURES_CSV)
    click.secho("OK", fg="green")


@click.command()
@click.argument("features_csv", nargs=-1, type=click.Path(path_type=Path))
@run_options
def fit(features_csv: tuple[Path, ...], config: RunConfig) -> None:
    """
    Cluster the fully observed meters into consumption profiles.
    """
    paths = features_csv or (_input_path(None, config, FEATURES_CSV),)
    profiles = []
    for path in paths:
        for user in _read_features(path):
            if not user.is_full:
                logger.info(f"{user.mprn}: {user.observed_months} months, not used for fitting")
                continue
            try:
                profiles.append(user.profile())
            except DegenerateProfileError as e:
                _warn(f"{user.mprn}: {e}")
    click.secho(f"Fitting on {len(profiles)} fully observed meters")

    rows = None
    try:
        if config.k_range is None:
            model = kmeans_fit(profiles, config.k, seed=config.seed, restarts=config.restarts)
        else:
            rows = select_k(profiles, config.k_range, seed=config.seed, restarts=config.restarts)
            k = choose_k(rows)
            model = next(row.model for row in rows if row.k == k)
    except (NotEnoughProfilesError, InvalidKRangeError, SingleClusterError) as e:
        _fail(str(e))

    if rows is not None:
        write_elbow_csv(rows, model.k, config.output_dir / ELBOW_CSV)
        for row in rows:
            marker = " *" if row.k == model.k else ""
            click.secho(
                f"k={row.k}: inertia {row.inertia:.6f}, silhouette {row.silhouette:.4f}{marker}"
            )
    save_model(model, _model_path(config))
    click.secho(f"k={model.k}, members {list(model.member_counts)}")
    click.secho("OK", fg="green")


@click.command()
@click.argument("features_csv", required=False, type=click.Path(path_type=Path))
@run_options
def assign(features_csv: Path | None, config: RunConfig) -> None:
    """
    Match every meter to its nearest profile.
    """
    import pandas as pd

    model = _load_model(config)
    users = _read_features(_input_path(features_csv, config, FEATURES_CSV))
    rows = []
    for user in users:
        try:
            profile = user.profile()
        except DegenerateProfileError as e:
            _warn(f"{user.mprn}: {e}")
            continue
        if profile.is_full:
            cluster_id = assign_full(profile, model)
        else:
            cluster_id = assign_partial(profile, model, renormalize=config.renormalize)
        distances = centroid_distances(profile, model, renormalize=config.renormalize)
        rows.append(
            (user.mprn, user.observed_months, cluster_id + 1, *(float(d) for d in distances))
        )
        click.secho(f"{user.mprn}: profile {cluster_id + 1}")

    columns = ["mprn", "observed_months", "profile_id"] + [
        f"distance_{i + 1}" for i in range(model.k)
    ]
    pd.DataFrame(rows, columns=columns).to_csv(config.output_dir / ASSIGNMENTS_CSV, index=False)
    click.secho("OK", fg="green")


@click.command("backfill")
@click.argument("features_csv", required=False, type=click.Path(path_type=Path))
@run_options
def backfill_command(features_csv: Path | None, config: RunConfig) -> None:
    """
    Complete every meter's missing months from its nearest profile.
    """
    model = _load_model(config)
    users = _read_features(_input_path(features_csv, config, FEATURES_CSV))
    results: dict[str, BackfillResult] = {}
    for user in users:
        try:
            result = backfill(
                user.usages,
                model,
                scale_mode=config.scale_mode,
                renormalize=config.renormalize,
            )
        except (BackfillError, DegenerateProfileError) as e:
            _warn(f"{user.mprn}: cannot back-fill: {e}")
            continue
        if result.missing_months == 0:
            click.secho(f"{user.mprn}: no back-fill needed")
        else:
            click.secho(
                f"{user.mprn}: {result.missing_months} months imputed from profile "
                f"{result.cluster_id + 1}, {result.annual_kwh:.1f} kWh/year"
            )
        if result.missing_months > VALIDATED_MISSING_MONTHS:
            _warn(
                f"{user.mprn}: {result.missing_months} missing months, back-fill accuracy is "
                f"unvalidated beyond {VALIDATED_MISSING_MONTHS} months"
            )
        results[user.mprn] = result

    write_completed_csv(results, config.output_dir / COMPLETED_CSV)
    click.secho("OK", fg="green")


@click.command()
@click.argument("features_csv", required=False, type=click.Path(path_type=Path))
@run_options
def evaluate(features_csv: Path | None, config: RunConfig) -> None:
    """
    Score back-filling by removing the oldest months of fully observed meters.
    """
    model = _load_model(config)
    users = _read_features(_input_path(features_csv, config, FEATURES_CSV))
    matrices = []
    for user in users:
        if not user.is_full:
            continue
        with _fatal_errors():
            try:
                matrices.append(
                    holdout_eval(
                        user.usages,
                        model,
                        config.max_removed,
                        user=user.mprn,
                        scale_mode=config.scale_mode,
                        renormalize=config.renormalize,
                    )
                )
            except DegenerateProfileError as e:
                _warn(f"{user.mprn}: {e}")
    if not matrices:
        _fail("no fully observed meters to evaluate")

    write_holdout_csv(matrices, config.output_dir / HOLDOUT_CSV)
    for removed, value in mean_assigned_smape(matrices).items():
        click.secho(f"{removed} months removed: mean weighted SMAPE {value:.2f}%")
    click.secho(f"Assigned profile is the best one in {assignment_accuracy(matrices):.0%} of cases")
    click.secho("OK", fg="green")


@click.command()
@click.argument("completed_csv", required=False, type=click.Path(path_type=Path))
@run_options
def bill(completed_csv: Path | None, config: RunConfig) -> None:
    """
    Rank the annual bill of every tariff plan for each completed meter.
    """
    if config.tariff_path is None:
        _fail("no tariff file given (--tariffs)")
    tariff_path = _input_path(config.tariff_path, config, "")
    try:
        plans = parse_tariffs(tariff_path.read_text(encoding="utf-8"), source=str(tariff_path))
    except TariffParseError as e:
        _fail(str(e))
    if not plans:
        _fail(f"{tariff_path}: {NoTariffPlansError()}")

    path = _input_path(completed_csv, config, COMPLETED_CSV)
    with _fatal_errors(path):
        completed = read_completed_csv(path)
    for mprn, usages in completed.items():
        with _fatal_errors(path):
            estimates = rank_plans(usages, plans, config.locality)
        write_bill_report(estimates, config.output_dir / f"bills_{mprn}.csv")
        cheapest = estimates[0]
        click.secho(
            f"{mprn}: cheapest {cheapest.plan.supplier} {cheapest.plan.plan_name} "
            f"({cheapest.plan.kind.value}) {cheapest.total} EUR/year"
        )
        saving = tou_saving(estimates)
        if saving is not None:
            click.secho(f"{mprn}: Time-of-Use saving over Fixed {saving} EUR/year")
        for kind, estimate in cheapest_by_kind(estimates).items():
            logger.info(f"{mprn}: cheapest {kind.value} plan {estimate.plan.plan_name}")
    click.secho("OK", fg="green")


@click.command()
@click.argument("features_csv", required=False, type=click.Path(path_type=Path))
@run_options
def report(features_csv: Path | None, config: RunConfig) -> None:
    """
    Summarize the cohort: data durations, annual consumption, monthly averages and profiles.
    """
    users = _read_features(_input_path(features_csv, config, FEATURES_CSV))
    out = config.output_dir

    durations = duration_distribution([u.observed_months for u in users])
    write_durations_csv(durations, out / "report_durations.csv")
    for row in durations:
        click.secho(f"{row.label}: {row.count} users ({row.percent:.1f}%)")

    totals = [u.total_kwh for u in users if u.is_full]
    if totals:
        summary = annual_summary(totals)
        write_annual_csv(summary, out / "report_annual.csv")
        click.secho(
            f"Annual consumption: mean {summary.mean:.0f} kWh, median {summary.median:.0f} kWh, "
            f"{summary.above_typical} users above typical"
        )
    else:
        _warn("no fully observed meters, annual summary skipped")

    write_monthly_csv(monthly_average(users), config.window, out / "report_monthly.csv")

    if _model_path(config).is_file():
        summaries = profile_summary(_load_model(config))
        write_profiles_csv(summaries, out / "report_profiles.csv")
        for s in summaries:
            click.secho(f"Profile {s.profile_id}: {s.share_pct:.0f}% of meters, {s.label}")
    else:
        logger.info("no model, profile summary skipped")
    click.secho("OK", fg="green")


try:
    from ._version import version
except ImportError:
    version = "DEV"


@click.group(name="meter_profiles")
@click.version_option(version=version)
def meter_profiles() -> None:
    """
    Builds complete 12-month consumption records from smart-meter exports.
    """
    load_dotenv(dotenv_path=os.environ.get(DOTENV_ENV_VAR))
    logging.basicConfig(
        level=os.environ.get(LOG_LEVEL_ENV_VAR, DEFAULT_LOG_LEVEL).upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    logger.info(f"Initializing - {get_version_title()}")


meter_profiles.add_command(ingest)
meter_profiles.add_command(features)
meter_profiles.add_command(fit)
meter_profiles.add_command(assign)
meter_profiles.add_command(backfill_command)
meter_profiles.add_command(evaluate)
meter_profiles.add_command(bill)
meter_profiles.add_command(report)
