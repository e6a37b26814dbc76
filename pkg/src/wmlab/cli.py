"""Operator entry point.

Commands:
  train          run a task sequence per config, one run dir per seed
  transfer       few-shot evaluation of a checkpoint on a test task
  heatmap        prediction heatmap of a checkpointed model
  compare        align run CSVs from several runs into one comparison table
  fewshot-table  aggregate transfer results into the summary table

Exit codes: 0 ok, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def cmd_train(args) -> int:
    from .config import ConfigError, build_lab_config, build_sequence, echo_config, load_config
    from .continual import ContinualTrainer
    from .evalkit import emit_artifact_manifest, emit_run_csv

    try:
        resolved = load_config(args.config)
        if args.method:
            resolved["method"] = args.method
        if args.seed is not None:
            resolved["seeds"] = [args.seed]
        if args.out:
            resolved["run_dir"] = args.out
        from .config import resolve_config

        resolved = resolve_config(resolved)  # re-validate after overrides
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE

    run_dir = Path(resolved["run_dir"])
    echo_config(resolved, run_dir)
    cfg = build_lab_config(resolved)
    for seed in resolved["seeds"]:
        seq = build_sequence(resolved, seed)
        seed_dir = run_dir / f"seed_{seed}"
        trainer = ContinualTrainer(seq, cfg)
        trainer.run(out_dir=seed_dir)
        emit_run_csv(trainer.record, seed_dir / "run.csv")
        artifacts = sorted(p for p in seed_dir.rglob("*") if p.is_file())
        emit_artifact_manifest(seed_dir, artifacts)
        print(f"seed {seed}: {len(trainer.record)} metric rows, "
              f"{trainer.counters['env_steps/learner']} learner steps -> {seed_dir}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    from .config import ConfigError, build_lab_config, resolve_config
    from .continual import few_shot_eval
    from .envs import make_transfer_task

    try:
        task = make_transfer_task(args.task)
    except KeyError as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    checkpoint = Path(args.checkpoint) if args.checkpoint else None
    if checkpoint is not None and not (checkpoint / "manifest.json").exists():
        print(f"error: no checkpoint manifest under {checkpoint}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        resolved = resolve_config(json.loads(Path(args.config).read_text())) if args.config else resolve_config({})
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    cfg = build_lab_config(resolved)
    result = few_shot_eval(
        checkpoint, task, cfg, seed=args.seed,
        budget_episodes=args.budget, eval_episodes=args.eval_episodes,
    )
    row = {
        "task": args.task,
        "method": args.label or (str(checkpoint) if checkpoint else "scratch"),
        "seed": args.seed,
        **result,
    }
    print(json.dumps(row))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "a") as f:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    from .continual import load_dynamics
    from .envs import make_eval_env
    from .evalkit import export_heatmap_pgm, prediction_heatmap
    from .worldmodel import WorldModel

    task_dir = Path(args.checkpoint)
    if not (task_dir / "manifest.json").exists():
        print(f"error: no checkpoint manifest under {task_dir}", file=sys.stderr)
        return EXIT_RUNTIME
    loaded = load_dynamics(task_dir)
    dynamics = loaded["dynamics"]
    env = make_eval_env()
    model = WorldModel(dynamics, loaded["dynamics_target"], env.obs_dim, env.action_dim)
    grid = prediction_heatmap(model, env)
    out = Path(args.out or (task_dir / "heatmap.pgm"))
    export_heatmap_pgm(grid, out, tau_vis=args.tau_vis)
    print(f"wrote {out} and {out.with_suffix('.csv')}")
    return EXIT_OK


def cmd_compare(args) -> int:
    import csv

    from .evalkit import read_run_csv

    runs = {}
    for run_dir in args.runs:
        p = Path(run_dir)
        csvs = sorted(p.glob("seed_*/run.csv")) or ([p / "run.csv"] if (p / "run.csv").exists() else [])
        if not csvs:
            print(f"error: no run.csv under {run_dir}", file=sys.stderr)
            return EXIT_RUNTIME
        label = p.name or str(p)
        while label in runs:
            label += "'"
        runs[label] = [read_run_csv(c) for c in csvs]

    # align evaluation curves: per run, mean over seeds of eval/return_mean
    # values, keyed by occurrence order within each task
    aligned = {}
    shapes = {}
    for name, records in runs.items():
        series = {}
        for rec in records:
            per_task = {}
            for gs, es, tid, metric, value, seed, method in rec.rows:
                if metric != "eval/return_mean":
                    continue
                per_task.setdefault(tid, []).append(value)
            for tid, vals in per_task.items():
                for i, v in enumerate(vals):
                    series.setdefault((tid, i), []).append(v)
        aligned[name] = {k: float(np.mean(v)) for k, v in series.items()}
        shapes[name] = sorted(aligned[name])
    names = list(aligned)
    if any(shapes[n] != shapes[names[0]] for n in names):
        print("error: runs have incompatible sequences (eval checkpoints differ)", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out or "compare.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    base = names[0]
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["task_id", "eval_index"] + [f"{n}_return" for n in names]
                   + [f"diff_{n}" for n in names])
        for key in shapes[base]:
            row = [key[0], key[1]]
            row += [repr(aligned[n][key]) for n in names]
            row += [repr(aligned[n][key] - aligned[base][key]) for n in names]
            w.writerow(row)

    retention_out = _write_retention_summary(args.runs, names, out)
    msg = f"wrote {out} ({len(shapes[base])} aligned eval points, runs: {', '.join(names)})"
    if retention_out is not None:
        msg += f" and {retention_out}"
    print(msg)
    return EXIT_OK


def _region_means_from_heatmap_csv(path) -> dict:
    import csv as _csv

    sums, counts = {}, {}
    with open(path, newline="") as f:
        for row in _csv.DictReader(f):
            if not row["mse"]:
                continue
            region = int(row["region"])
            sums[region] = sums.get(region, 0.0) + float(row["mse"])
            counts[region] = counts.get(region, 0) + 1
    return {r: sums[r] / counts[r] for r in sums}


def _write_retention_summary(run_dirs, names, curves_out: Path):
    """Seed-aggregated per-region final error and its rise since the
    region's own task end, one row per (region, run)."""
    import csv

    per_run = {}
    for name, run_dir in zip(names, run_dirs):
        p = Path(run_dir)
        seed_dirs = sorted(d for d in p.glob("seed_*") if d.is_dir()) or [p]
        series = {}  # region -> task_id -> [per-seed means]
        for sd in seed_dirs:
            for task_dir in sorted(sd.glob("task_*")):
                hm = task_dir / "heatmap.csv"
                if not hm.exists():
                    continue
                task_id = int(task_dir.name.split("_")[1])
                for region, mean in _region_means_from_heatmap_csv(hm).items():
                    series.setdefault(region, {}).setdefault(task_id, []).append(mean)
        if series:
            per_run[name] = series
    if not per_run:
        return None

    out = curves_out.with_name(curves_out.stem + "_retention.csv")
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["region", "run", "final_mse", "forgetting_vs_own_task"])
        for name, series in per_run.items():
            for region in sorted(series):
                by_task = series[region]
                final_task = max(by_task)
                final = float(np.mean(by_task[final_task]))
                own = float(np.mean(by_task[region])) if region in by_task else None
                rise = "" if own is None else repr(final - own)
                w.writerow([region, name, repr(final), rise])
    return out


def cmd_fewshot_table(args) -> int:
    from collections import defaultdict

    from .evalkit import emit_fewshot_table

    rows = []
    for path in args.results:
        p = Path(path)
        if not p.exists():
            print(f"error: missing results file {p}", file=sys.stderr)
            return EXIT_RUNTIME
        with open(p) as f:
            rows += [json.loads(line) for line in f if line.strip()]
    grouped = defaultdict(list)
    for r in rows:
        grouped[(r["task"], r["method"])].append(float(r["mean_return"]))
    results = [
        {"task": task, "method": method, "returns": returns}
        for (task, method), returns in grouped.items()
    ]
    out = Path(args.out or "fewshot_table.csv")
    emit_fewshot_table(results, out)
    print(f"wrote {out} ({len(results)} rows)")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="wmlab", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a task sequence from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override: run this single seed")
    p.add_argument("--method", help="override the config's method")
    p.add_argument("--out", help="override the config's run_dir")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("transfer", help="few-shot evaluation on a test task")
    p.add_argument("--checkpoint", help="task checkpoint dir (omit for scratch)")
    p.add_argument("--task", required=True, help="room1to2 | room1to3 | room3to4")
    p.add_argument("--budget", type=int, default=20, help="training episodes (default 20)")
    p.add_argument("--eval-episodes", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="optional config for the adaptation profile")
    p.add_argument("--label", help="method label recorded in the results row")
    p.add_argument("--out", help="JSONL file to append the result row to")
    p.set_defaults(fn=cmd_transfer)

    p = sub.add_parser("heatmap", help="export a checkpoint's prediction heatmap")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.add_argument("--tau-vis", type=float, default=1.0)
    p.set_defaults(fn=cmd_heatmap)

    p = sub.add_parser("compare", help="align eval curves across run dirs")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("fewshot-table", help="aggregate transfer JSONL results")
    p.add_argument("results", nargs="+")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_fewshot_table)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BrokenPipeError:
        return EXIT_RUNTIME
    except Exception as e:  # surface runtime failures with the right code
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
