"""
SweepRunner.py
==============

Coordinates parameter sweeps over the simulated systems and writes
plot-ready result tables.

Responsibilities
----------------
- Validate the sweep request (``SweepSpec``).
- Run ``trials`` independent replications of every system at every value
  of the swept parameter, in a process pool when more than one worker is
  requested.
- Merge the results in (value, system, replication) order regardless of the
  order in which workers finish.
- Write the output directory.

Output Files
------------
- ``runs.csv``: one row per (value, system, replication) with every scalar
  run metric, the seed and the config hash.
- ``aggregate.csv``: mean and standard deviation of every metric per
  (value, system).
- ``distance_histogram.csv``: mean goodput per BS-distance bin, per value
  and system.
- ``goodput_cdf.csv``: empirical CDF of per-user average goodput.
- ``trace.csv``: per-link records, curve breakpoints and dual iterations
  (trace level >= 1 only).
- ``manifest.json``: schema and package versions, config echo and hash,
  sweep spec and master seed. Contains no timestamps, so identical inputs
  give byte-identical files.

Seeding
-------
Replication r of every value and system uses the seed key (seed, r):
systems and sweep points are compared on the same topologies.
"""

import concurrent.futures
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

from src import __version__
from src.Analysis import goodput_cdf, goodput_histogram
from src.Replication import ReplicationResult, run_replication
from src.ScenarioConfig import ScenarioConfig, config_hash
from src.System import SystemKind

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.10g"

SweepParameter = Literal["q_act", "receive_snr_dB", "K", "sigma_e2"]


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    parameter: SweepParameter
    values: list[float] = Field(min_length=1)
    trials: int = Field(200, ge=1)
    systems: list[SystemKind] = Field(
        default_factory=lambda: [SystemKind.PROPOSED, SystemKind.NO_RS_EQUAL],
        min_length=1,
    )
    output_dir: Path = Path("results")
    workers: int = Field(1, ge=1)
    seed: Optional[int] = Field(None, ge=0)
    trace: int = Field(0, ge=0, le=2)
    show_progress: bool = False

    @field_validator("systems")
    @classmethod
    def _reject_reserved(cls, systems: list[SystemKind]) -> list[SystemKind]:
        if SystemKind.SSA in systems:
            raise ValueError(
                "baseline1 (subchannel-sharing baseline) is reserved and not "
                "implemented"
            )
        return list(dict.fromkeys(systems))


@dataclass(frozen=True)
class _Task:
    value_index: int
    value: float
    system_index: int
    kind: SystemKind
    replication: int

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.value_index, self.system_index, self.replication)


def _run_task(
    config: ScenarioConfig, kind: SystemKind, seed_key: tuple[int, int], trace: int
) -> ReplicationResult:
    return run_replication(config, kind, seed_key, trace)


class SweepRunner:
    def __init__(self, config: ScenarioConfig, spec: SweepSpec) -> None:
        self.config = config
        self.spec = spec
        self.seed = config.seed if spec.seed is None else spec.seed
        # Raises on invalid values before any replication starts
        self.configs = [config.with_value(spec.parameter, v) for v in spec.values]
        self.results: dict[tuple[int, int, int], ReplicationResult] = {}

    def tasks(self) -> list[_Task]:
        return [
            _Task(i, value, j, kind, r)
            for i, value in enumerate(self.spec.values)
            for j, kind in enumerate(self.spec.systems)
            for r in range(self.spec.trials)
        ]

    def run(self) -> None:
        tasks = self.tasks()
        logger.info(
            "Sweeping {} over {} values, systems {}, {} trials each ({} runs)",
            self.spec.parameter,
            len(self.spec.values),
            [k.value for k in self.spec.systems],
            self.spec.trials,
            len(tasks),
        )
        progress = tqdm(
            total=len(tasks),
            disable=not self.spec.show_progress,
            file=sys.stderr,
            desc="replications",
        )
        with progress:
            if self.spec.workers == 1:
                for task in tasks:
                    self.results[task.key] = _run_task(*self._arguments(task))
                    progress.update()
            else:
                with concurrent.futures.ProcessPoolExecutor(
                    max_workers=self.spec.workers
                ) as executor:
                    futures = {
                        executor.submit(_run_task, *self._arguments(t)): t
                        for t in tasks
                    }
                    for future in concurrent.futures.as_completed(futures):
                        task = futures[future]
                        self.results[task.key] = future.result()
                        progress.update()

    def _arguments(
        self, task: _Task
    ) -> tuple[ScenarioConfig, SystemKind, tuple[int, int], int]:
        return (
            self.configs[task.value_index],
            task.kind,
            (self.seed, task.replication),
            self.spec.trace,
        )

    def _ordered(self) -> list[tuple[_Task, ReplicationResult]]:
        return [(t, self.results[t.key]) for t in self.tasks() if t.key in self.results]

    # --- Tables ---

    def runs_table(self) -> pd.DataFrame:
        rows = []
        for task, result in self._ordered():
            rows.append(
                {
                    "parameter": self.spec.parameter,
                    "value": task.value,
                    "system": task.kind.value,
                    "replication": task.replication,
                    "seed": self.seed,
                    "config_hash": config_hash(self.configs[task.value_index]),
                    **result.metrics.scalar_row(),
                }
            )
        return pd.DataFrame(rows)

    def aggregate_table(self) -> pd.DataFrame:
        runs = self.runs_table()
        if runs.empty:
            return runs
        keys = ["parameter", "value", "system"]
        metrics = [
            c
            for c in runs.columns
            if c not in keys + ["replication", "seed", "config_hash"]
        ]
        grouped = runs.groupby(keys, sort=False)[metrics].agg(["mean", "std"])
        grouped.columns = [f"{metric}_{stat}" for metric, stat in grouped.columns]
        table = grouped.reset_index()
        table.insert(3, "trials", runs.groupby(keys, sort=False).size().to_numpy())
        hashes = runs.groupby(keys, sort=False)["config_hash"].first().to_numpy()
        table.insert(4, "config_hash", hashes)
        return table

    def trace_table(self) -> pd.DataFrame:
        rows = []
        for task, result in self._ordered():
            prefix = {
                "value": task.value,
                "system": task.kind.value,
                "replication": task.replication,
            }
            rows += [{**prefix, **row} for row in result.trace_rows]
        return pd.DataFrame(rows)

    def manifest(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "package_version": __version__,
            "seed": self.seed,
            "config_hash": config_hash(self.config),
            "config": self.config.model_dump(mode="json"),
            "sweep": self.spec.model_dump(
                mode="json", exclude={"show_progress", "output_dir", "workers"}
            ),
            "point_config_hashes": [config_hash(c) for c in self.configs],
        }

    def write_outputs(self, output_dir: Optional[Path] = None) -> Path:
        directory = Path(output_dir or self.spec.output_dir)
        directory.mkdir(parents=True, exist_ok=True)

        histogram, cdf = emit_distance_histogram(self)
        tables = {
            "runs.csv": self.runs_table(),
            "aggregate.csv": self.aggregate_table(),
            "distance_histogram.csv": histogram,
            "goodput_cdf.csv": cdf,
        }
        if self.spec.trace >= 1:
            tables["trace.csv"] = self.trace_table()
        for name, table in tables.items():
            table.to_csv(directory / name, index=False, float_format=FLOAT_FORMAT)
        with open(directory / "manifest.json", "w", encoding="utf-8") as f:
            json.dump(self.manifest(), f, indent=2, sort_keys=True)
            f.write("\n")

        logger.info("Wrote sweep results to {}", directory)
        return directory


def emit_distance_histogram(
    runner: SweepRunner,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """
    Distance histogram and goodput CDF of every (value, system).

    The users of all replications of a point are pooled: each bin reports
    their mean goodput and the average user count per replication.
    """
    bins = runner.config.histogram_bins
    histograms, cdfs = [], []
    groups: dict[tuple[int, int], list[ReplicationResult]] = {}
    tasks: dict[tuple[int, int], _Task] = {}
    for task, result in runner._ordered():
        point = (task.value_index, task.system_index)
        groups.setdefault(point, []).append(result)
        tasks.setdefault(point, task)

    for point, results in groups.items():
        task = tasks[point]
        config = runner.configs[task.value_index]
        distances = np.concatenate([r.distances for r in results])
        goodput = np.concatenate([r.metrics.mean_goodput for r in results])
        table = goodput_histogram(distances, goodput, bins, config.cell_radius_m)
        table["users"] = table["users"] / len(results)
        cdf = goodput_cdf(goodput)
        for frame in (table, cdf):
            frame.insert(0, "system", task.kind.value)
            frame.insert(0, "value", task.value)
        histograms.append(table)
        cdfs.append(cdf)

    if not histograms:
        return pd.DataFrame(), pd.DataFrame()
    return (
        pd.concat(histograms, ignore_index=True),
        pd.concat(cdfs, ignore_index=True),
    )
