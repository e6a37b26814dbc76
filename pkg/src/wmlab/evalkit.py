"""Metrics and artifact emission in bit-exact text formats.

Prediction heatmaps score the dynamics net against the environment's
ground-truth oracle on every free cell; retention is the rise of a region's
mean error between the end of that region's task and a later task end. All
emitted files are deterministic byte-for-byte given identical inputs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import (
    DOOR,
    GridWorldSpec,
    N_ACTIONS,
    encode_obs,
    grid_oracle_next,
    room_of,
)
from .worldmodel import WorldModel, predict_next

TAU_VIS = 1.0  # visualization scale for exp(-mse/tau) in cell units; display only


@dataclass
class HeatmapGrid:
    width: int
    height: int
    mse: np.ndarray  # (height, width), NaN on walls
    region_labels: np.ndarray  # (height, width) ints: WALL/ROOM1..4/DOOR

    def free_mask(self) -> np.ndarray:
        return ~np.isnan(self.mse)


def prediction_heatmap(model: WorldModel, env: GridWorldSpec) -> HeatmapGrid:
    """Per-cell mean squared next-state prediction error over the 4 actions.

    Errors are reported in grid-cell units: observations are normalized to
    [0, 1] for the networks, so the squared observation-space error is
    rescaled by (size-1)^2 per axis. One fully wrong one-cell move then
    costs 1.0 rather than 1/676, which keeps the metric readable and puts
    retention thresholds on the scale of cells, the domain's natural unit.

    ``model`` is a WorldModel, or a callable (states, actions) -> next
    states for oracle-wrapped stubs.
    """
    size = env.size
    mse = np.full((size, size), np.nan)
    labels = np.zeros((size, size), dtype=np.int64)
    free = list(env.free_cells())
    for x, y in free:
        labels[y, x] = room_of((x, y), size)

    predictor = model if callable(model) else (lambda s, a: predict_next(model, s, a))
    states = np.stack([encode_obs(c, size) for c in free])
    eye = np.eye(N_ACTIONS, dtype=np.float32)
    errors = np.zeros(len(free))
    for a in range(N_ACTIONS):
        actions = np.tile(eye[a], (len(free), 1))
        preds = predictor(states, actions)
        truth = np.stack([grid_oracle_next(env, s, eye[a]) for s in states])
        errors += ((preds - truth) ** 2).sum(axis=-1)
    errors *= (size - 1) ** 2 / N_ACTIONS
    for (x, y), e in zip(free, errors):
        mse[y, x] = e
    return HeatmapGrid(size, size, mse, labels)


def region_mean_mse(grid: HeatmapGrid, region: int) -> float:
    """Mean error over one region's free cells."""
    mask = (grid.region_labels == region) & grid.free_mask()
    if not mask.any():
        raise ValueError(f"region {region} has no free cells in this heatmap")
    return float(grid.mse[mask].mean())


def retention_series(heatmaps: list[HeatmapGrid], region: int) -> list[float]:
    """The region's mean error at each task end, in task order."""
    return [region_mean_mse(g, region) for g in heatmaps]


def forgetting(heatmaps: list[HeatmapGrid], region: int, trained_at: int, measured_at: int) -> float:
    """Error rise on a region between the end of its own task and a later
    task end. Zero by construction when measured at the training task."""
    series = retention_series(heatmaps, region)
    return series[measured_at] - series[trained_at]


# ----------------------------------------------------------------- export


def export_heatmap_pgm(grid: HeatmapGrid, path: str | Path, tau_vis: float = TAU_VIS):
    """ASCII PGM (P2, maxval 255): pixel = rint(255 * exp(-mse/tau)), walls 0.

    A companion CSV (same stem) carries the raw per-cell error, which is the
    metric of record; the PGM is visualization only.
    """
    path = Path(path)
    lines = ["P2", f"{grid.width} {grid.height}", "255"]
    for y in range(grid.height):
        row = []
        for x in range(grid.width):
            v = grid.mse[y, x]
            if np.isnan(v):
                row.append("0")
            else:
                row.append(str(int(np.rint(255.0 * np.exp(-v / tau_vis)))))
        lines.append(" ".join(row))
    path.write_text("\n".join(lines) + "\n")

    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "region", "mse"])
        for y in range(grid.height):
            for x in range(grid.width):
                v = grid.mse[y, x]
                w.writerow([x, y, int(grid.region_labels[y, x]), "" if np.isnan(v) else repr(float(v))])


def export_visitation_pgm(counts: np.ndarray, path: str | Path):
    """Visit-count grid in the same PGM/CSV pair as prediction heatmaps:
    pixel = rint(255 * count / max_count), zero where never visited."""
    path = Path(path)
    h, w = counts.shape
    peak = max(int(counts.max()), 1)
    lines = ["P2", f"{w} {h}", "255"]
    for y in range(h):
        lines.append(" ".join(str(int(np.rint(255.0 * counts[y, x] / peak))) for x in range(w)))
    path.write_text("\n".join(lines) + "\n")
    with open(path.with_suffix(".csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "visits"])
        for y in range(h):
            for x in range(w):
                writer.writerow([x, y, int(counts[y, x])])
    return path


# -------------------------------------------------------------- run record


@dataclass
class RunRecord:
    """Append-only log of per-episode returns, losses, and eval metrics."""

    rows: list = field(default_factory=list)

    def add(self, global_step, env_steps, task_id, metric_name, value, seed, method):
        self.rows.append((
            int(global_step), int(env_steps), int(task_id),
            str(metric_name), float(value), int(seed), str(method),
        ))

    def metric(self, name: str):
        return [r for r in self.rows if r[3] == name]

    def values(self, name: str):
        return [r[4] for r in self.rows if r[3] == name]

    def __len__(self):
        return len(self.rows)


RUN_CSV_HEADER = ["global_step", "env_steps", "task_id", "metric_name", "value", "seed", "method"]


def emit_run_csv(record: RunRecord, path: str | Path):
    """Deterministic CSV: rows in append order, floats via repr round-trip."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RUN_CSV_HEADER)
        for gs, es, tid, name, value, seed, method in record.rows:
            w.writerow([gs, es, tid, name, repr(value), seed, method])


def read_run_csv(path: str | Path) -> RunRecord:
    record = RunRecord()
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            record.add(
                row["global_step"], row["env_steps"], row["task_id"],
                row["metric_name"], float(row["value"]), row["seed"], row["method"],
            )
    return record


def emit_fewshot_table(results: list[dict], path: str | Path):
    """Few-shot transfer table: one row per (method, task).

    ``results`` entries: {"method": str, "task": str, "returns": [per-seed
    cumulative rewards]}. The std column is the population standard
    deviation (ddof=0), stated in the header comment row.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["task", "method", "n_seeds", "mean_return", "std_return_population"])
        for entry in sorted(results, key=lambda e: (e["task"], e["method"])):
            returns = np.asarray(entry["returns"], dtype=np.float64)
            w.writerow([
                entry["task"], entry["method"], len(returns),
                repr(float(returns.mean())), repr(float(returns.std())),
            ])


def emit_artifact_manifest(run_dir: str | Path, artifacts: list[str | Path]):
    """JSON manifest of a run's emitted files with content hashes."""
    import hashlib

    run_dir = Path(run_dir)
    entries = {}
    for a in artifacts:
        p = Path(a)
        entries[str(p.relative_to(run_dir))] = hashlib.sha256(p.read_bytes()).hexdigest()
    out = run_dir / "artifacts.json"
    out.write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")
    return out
