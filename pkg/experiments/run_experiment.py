"""
Run one experiment description and write its results.

Every run produces ``<basename>.csv`` (one row per radius, level or check),
``<basename>.json`` (the manifest: config echo, seed, chunk layout, package
versions, source hash, wall time, fits) and ``<basename>.log``.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass
from datetime import datetime
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from core.balls import acceptance_rate, gauge_quantile
from core.config import settings
from core.measures import GibbsModel, ModelKind, sample_gff
from core.spectral_field import FourierField, ModeTruncation, P_MAX
from core.streams import SampleLayout
from evaluation.estimators import (
    COLUMNS,
    ScanRow,
    ScanTable,
    cameron_martin_normalization,
    degeneracy_scan_3d,
    joint_limit_ratio,
    mechanism_bound_2d,
    om_limit_scan,
    om_ratio_direct,
    om_ratio_recentered,
    proof_bound_3d,
    second_order_ratio,
    third_order_ratio,
    wick_moment_estimate,
)
from evaluation.oracle import binomial_direct_check, gaussian_ball_prob_lowdim, wick_pair_moment
from experiments.config import ExperimentConfig, dump_config

ROOT = Path(__file__).resolve().parent.parent
SOURCE_PACKAGES = ("core", "evaluation", "experiments")
VERSIONED = ("numpy", "scipy", "pandas", "pydantic", "pydantic-settings", "loguru", "PyYAML", "tqdm", "typer-slim")
PILOT_STREAM = 1


@dataclass
class RunResult:
    config: ExperimentConfig
    tables: list[ScanTable]
    frame: pd.DataFrame
    results_path: Path
    manifest_path: Path

    @property
    def degenerate_count(self) -> int:
        return int(self.frame["degenerate"].astype(bool).sum()) if not self.frame.empty else 0


def source_hash() -> str:
    """sha256 over the package sources, in path order."""
    digest = hashlib.sha256()
    for package in SOURCE_PACKAGES:
        for path in sorted((ROOT / package).rglob("*.py")):
            digest.update(str(path.relative_to(ROOT)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def package_versions() -> dict:
    versions = {}
    for name in VERSIONED:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def _radius_unit(config: ExperimentConfig, layout: SampleLayout, threads: int) -> float:
    """1, or the unit that puts ``ball.acceptance`` of the pilot samples inside the smallest ball."""
    ball = config.ball
    if ball is None or ball.acceptance is None:
        return 1.0
    sampler = GibbsModel.gff(config.torus.build(), config.sampler_cutoff())
    seed = int(np.random.SeedSequence([layout.seed, PILOT_STREAM]).generate_state(1)[0])
    pilot = SampleLayout.build(ball.pilot_count, seed=seed, chunk_size=layout.chunk_size)
    radius = gauge_quantile(ball.build(), sampler, ball.acceptance, pilot.count, pilot, threads)
    unit = radius / min(ball.r_values)
    logger.info(f"Radius unit {unit:.4g}: {ball.acceptance:g} of {pilot.count} pilot samples inside r={radius:.4g}")
    return unit


def _radii(config: ExperimentConfig, unit: float) -> list[float]:
    return [unit * r for r in config.ball.r_values]


def _counterterm_scale(config: ExperimentConfig) -> float:
    return config.model.counterterm_scale if config.model else config.ball.counterterm_scale


def _om_limit(config: ExperimentConfig, layout: SampleLayout, threads: int, unit: float) -> list[ScanTable]:
    torus = config.torus.build()
    model = config.model.build(torus)
    z1, z2 = config.z1.build(torus), config.z2.build(torus)
    radii = _radii(config, unit)
    ball = config.ball.build(radii[0])
    tables = [om_limit_scan(model, z1, z2, ball, radii, layout.count, config.name, layout, threads)]
    if config.diagnostics and model.kind == ModelKind.PPHI2:
        tables.append(
            mechanism_bound_2d(model, z1, ball, radii, layout.count, f"{config.name}:mechanism", layout, threads)
        )
    return tables


def _second_order(config: ExperimentConfig, layout: SampleLayout, threads: int, unit: float) -> list[ScanTable]:
    torus = config.torus.build()
    model = config.model.build(torus)
    z1, z2 = config.z1.build(torus), config.z2.build(torus)
    radii = _radii(config, unit)
    return [
        second_order_ratio(model, z1, z2, config.ball.build(radii[0]), radii, layout.count, config.name, layout, threads)
    ]


def _degeneracy(config: ExperimentConfig, layout: SampleLayout, threads: int, unit: float) -> list[ScanTable]:
    torus = config.torus.build()
    z = config.z1.build(torus)
    ball = config.ball.build(_radii(config, unit)[0])
    N = config.sampler_cutoff()
    scale = _counterterm_scale(config)
    tables = [degeneracy_scan_3d(z, ball, ball.n_set, layout.count, scale, N, config.name, layout, threads)]
    if config.diagnostics:
        tables.append(
            proof_bound_3d(z, ball, ball.n_set, layout.count, scale, N, f"{config.name}:proof_bound", layout, threads)
        )
    return tables


def _joint_limit(config: ExperimentConfig, layout: SampleLayout, threads: int, unit: float) -> list[ScanTable]:
    torus = config.torus.build()
    z1, z2 = config.z1.build(torus), config.z2.build(torus)
    schedule = config.build_schedule(unit)
    return [
        joint_limit_ratio(
            z1, z2, schedule, config.ball.build(schedule.r_values[0]), layout.count,
            _counterterm_scale(config), config.sampler_cutoff(), config.name, layout, threads,
        )
    ]


def _third_order(config: ExperimentConfig, layout: SampleLayout, threads: int, unit: float) -> list[ScanTable]:
    torus = config.torus.build()
    z1, z2 = config.z1.build(torus), config.z2.build(torus)
    schedule = config.build_schedule(unit)
    return [
        third_order_ratio(
            z1, z2, schedule, config.ball.build(schedule.r_values[0]), layout.count,
            _counterterm_scale(config), config.sampler_cutoff(), config.name, layout, threads,
        )
    ]


def _wick_table(config: ExperimentConfig, experiment: str, layout: SampleLayout, threads: int) -> ScanTable:
    torus = config.torus.build()
    f = config.wick.test_field.build(torus)
    table = ScanTable(experiment)
    for p in config.wick.orders:
        oracle_values = []
        for n in config.wick.levels:
            oracle = wick_pair_moment(p, f, f, n)
            estimate = wick_moment_estimate(p, f, n, layout.count, layout, threads)
            oracle_values.append(oracle)
            log_oracle = math.log(oracle) if oracle > 0 else math.nan
            z_abs = abs(estimate.value - oracle) / estimate.stderr if estimate.stderr > 0 else math.nan
            table.rows.append(
                ScanRow(experiment, math.nan, n, estimate, log_oracle, {"p": p, "oracle": oracle, "z_abs": z_abs})
            )
            logger.info(f"[{experiment}] p={p} n={n}: MC {estimate.value:.6g} +/- {estimate.stderr:.2g}, oracle {oracle:.6g}")
        if len(oracle_values) >= 2:
            table.fit[f"p{p}_log_slope"] = float(np.polyfit(np.log(config.wick.levels), oracle_values, 1)[0])
        if len(oracle_values) >= 3:
            increments = np.diff(oracle_values)
            table.fit[f"p{p}_increment_ratio"] = float(increments[-1] / increments[-2])
    return table


def _wick_moment(config: ExperimentConfig, layout: SampleLayout, threads: int, unit: float) -> list[ScanTable]:
    return [_wick_table(config, config.name, layout, threads)]


def _oracle_suite(config: ExperimentConfig, layout: SampleLayout, threads: int, unit: float) -> list[ScanTable]:
    torus = config.torus.build()
    model = config.model.build(torus)
    z = config.z1.build(torus)
    origin = FourierField.zeros(torus, z.N)

    # 1. Ball probabilities against quadrature, direct and recentered ratios
    balls = ScanTable(f"{config.name}:ball")
    ratios = ScanTable(f"{config.name}:ratio")
    for r in _radii(config, unit):
        at_origin = config.ball.build(r)
        at_z = at_origin.centered_at(z)
        probabilities = {}
        for label, spec in (("0", at_origin), ("z", at_z)):
            probabilities[label] = gaussian_ball_prob_lowdim(model.trunc, torus, spec)
            rate = acceptance_rate(spec, model, layout.count, layout, threads)
            balls.rows.append(
                ScanRow(balls.experiment, r, model.N, rate, math.log(probabilities[label]),
                        {"center": label, "oracle": probabilities[label]})
            )
        log_predicted = math.log(probabilities["z"] / probabilities["0"])
        direct = om_ratio_direct(model, at_z, at_origin, layout.count, layout, threads)
        recentered = om_ratio_recentered(model, z, origin, at_origin, layout.count, layout, threads)
        ratios.rows.append(ScanRow(ratios.experiment, r, model.N, direct, log_predicted, {"estimator": "direct"}))
        ratios.rows.append(ScanRow(ratios.experiment, r, model.N, recentered, log_predicted, {"estimator": "recentered"}))
        logger.info(
            f"[{ratios.experiment}] r={r:g}: direct {direct.value:.4f}, recentered {recentered.value:.4f}, "
            f"quadrature {math.exp(log_predicted):.4f}"
        )

    # 2. Cameron-Martin normalization
    identities = ScanTable(f"{config.name}:identities")
    normalization = cameron_martin_normalization(z, model.N, layout.count, layout, threads)
    identities.rows.append(ScanRow(identities.experiment, math.nan, model.N, normalization, 0.0, {"check": "cm_normalization"}))

    # 3. Binomial identity on random fields
    rng = np.random.default_rng(layout.seed)
    worst = 0.0
    for p in range(P_MAX + 1):
        phi = sample_gff(ModeTruncation(4, torus.d), torus, rng)
        shift = 0.5 * sample_gff(ModeTruncation(3, torus.d), torus, rng)
        error = binomial_direct_check(phi, shift, 4, p)
        worst = max(worst, error)
        identities.rows.append(
            ScanRow(identities.experiment, math.nan, 4, None, math.nan, {"check": f"binomial p={p}", "relative_error": error})
        )
    identities.fit = {"max_binomial_error": worst}
    logger.info(f"[{identities.experiment}] largest binomial identity error {worst:.2e}")

    # 4. Wick moments
    return [balls, ratios, identities, _wick_table(config, f"{config.name}:wick", layout, threads)]


RUNNERS = {
    "om_limit": _om_limit,
    "second_order": _second_order,
    "degeneracy3d": _degeneracy,
    "wick_moment": _wick_moment,
    "joint_limit": _joint_limit,
    "third_order": _third_order,
    "oracle_suite": _oracle_suite,
}


def _frame(tables: list[ScanTable], unit: float) -> pd.DataFrame:
    frames = [table.to_frame() for table in tables if table.rows]
    if not frames:
        return pd.DataFrame(columns=COLUMNS)
    frame = pd.concat(frames, ignore_index=True, sort=False)
    if unit != 1.0:
        frame["r_nominal"] = frame["r"] / unit
    extras = [column for column in frame.columns if column not in COLUMNS]
    return frame[COLUMNS + extras]


def run(
    config: ExperimentConfig,
    seed: int | None = None,
    threads: int | None = None,
    out: str | Path | None = None,
) -> RunResult:
    """Execute the experiment and write CSV, manifest and log next to each other."""
    # 1. Sample layout, threads and output directory
    layout = SampleLayout.build(
        config.sampler.count,
        seed if seed is not None else config.sampler.seed,
        config.sampler.chunk_size,
    )
    threads = threads or config.sampler.threads or settings.PHILAB_THREADS
    config = config.model_copy(
        update={"sampler": config.sampler.model_copy(update={"seed": layout.seed, "threads": threads})}
    )
    directory = Path(out or config.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    sink = logger.add(directory / f"{config.basename}.log", level="DEBUG", mode="w")

    try:
        logger.info("=" * 80)
        logger.info(f"EXPERIMENT {config.name} ({config.experiment})")
        logger.info("=" * 80)
        logger.info(f"Torus: d={config.torus.d}, mass={config.torus.mass}")
        logger.info(f"Samples: {layout.count} in {layout.n_chunks} chunks of {layout.chunk_size}, seed {layout.seed}")
        logger.info(f"Threads: {threads}")
        logger.info("=" * 80)

        # 2. Radius unit and the estimators themselves
        started = time.perf_counter()
        unit = _radius_unit(config, layout, threads)
        tables = RUNNERS[config.experiment](config, layout, threads, unit)
        wall_time = time.perf_counter() - started

        # 3. Results table
        frame = _frame(tables, unit)
        results_path = directory / f"{config.basename}.csv"
        frame.to_csv(results_path, index=False, encoding="utf-8")

        # 4. Manifest
        degenerate = int(frame["degenerate"].astype(bool).sum()) if not frame.empty else 0
        manifest = {
            "name": config.name,
            "experiment": config.experiment,
            "timestamp": datetime.now().isoformat(),
            "config": dump_config(config),
            "seed": layout.seed,
            "threads": threads,
            "chunk_layout": {"count": layout.count, "chunk_size": layout.chunk_size, "chunks": layout.n_chunks},
            "radius_unit": unit,
            "settings": {
                "batches": settings.PHILAB_BATCHES,
                "min_effective": settings.PHILAB_MIN_EFFECTIVE,
                "besov_oversample": settings.PHILAB_BESOV_OVERSAMPLE,
                "partition": settings.PHILAB_PARTITION,
                "memory_mb": settings.PHILAB_MEMORY_MB,
            },
            "versions": package_versions(),
            "source_hash": source_hash(),
            "wall_time_s": wall_time,
            "degenerate_rows": degenerate,
            "fits": {table.experiment: table.fit for table in tables},
            "results_file": results_path.name,
        }
        manifest_path = directory / f"{config.basename}.json"
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, ensure_ascii=False, default=str)

        logger.info("\n" + "=" * 80)
        logger.info("SUMMARY")
        logger.info("=" * 80)
        logger.info(f"Rows: {len(frame)} ({degenerate} degenerate)")
        for table in tables:
            if table.fit:
                logger.info(f"  {table.experiment}: {table.fit}")
        logger.info(f"Wall time: {wall_time:.1f}s")
        logger.info(f"Results saved to: {results_path}")
        logger.info("=" * 80)
    except Exception as e:
        logger.error(f"Experiment {config.name} failed: {e}")
        raise
    finally:
        logger.remove(sink)

    return RunResult(config, tables, frame, results_path, manifest_path)
