"""Experiment-runner CLI: run, sweep and compare verbs.

Every run persists per-seed event logs (CSV), a summary CSV, a scatter plot of
the final samples over the mixture density and reward locus, and the
running-best-reward-vs-NFE curve, all as vector graphics.  Outputs are a pure
function of (config, seed): rerunning a config reproduces the CSVs byte for
byte.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import baselines, search
from .config import (ExperimentConfig, default_scenario, load_config,
                     resolve_best_of_n, resolve_evosearch,
                     resolve_particle_sampling)
from .errors import ConfigurationError
from .metrics import CoverageSpec, angular_coverage, diversity_l2
from .models import log_density_p0
from .search import SearchResult

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ("event_index", "generation", "cumulative_nfe", "reward")


def run_method(cfg: ExperimentConfig, seed: int) -> SearchResult:
    steps = cfg.schedule.num_steps
    if cfg.method == "evosearch":
        evo = resolve_evosearch(cfg.method_params, steps)
        return search.evosearch_run(evo, cfg.model, cfg.schedule, cfg.reward_fn, seed)
    if cfg.method == "best_of_n":
        bon = resolve_best_of_n(cfg.method_params, steps)
        return baselines.best_of_n(bon["n"], cfg.model, cfg.schedule, cfg.reward_fn,
                                   seed, final_k=bon["final_k"])
    ps = resolve_particle_sampling(cfg.method_params, steps)
    return baselines.particle_sampling(ps, cfg.model, cfg.schedule, cfg.reward_fn, seed)


def write_events_csv(path: Path, result: SearchResult):
    arch = result.archive
    dim = arch.samples[0].size
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_COLUMNS + tuple(f"x{i}" for i in range(dim)))
        for i in range(len(arch)):
            writer.writerow([i, arch.generations[i], arch.nfe[i],
                             repr(arch.rewards[i])]
                            + [repr(float(v)) for v in arch.samples[i]])


def read_events_csv(path: Path) -> dict:
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    dim = sum(1 for k in rows[0] if k.startswith("x") and k[1:].isdigit())
    return {"generation": np.array([int(r["generation"]) for r in rows]),
            "cumulative_nfe": np.array([int(r["cumulative_nfe"]) for r in rows]),
            "reward": np.array([float(r["reward"]) for r in rows]),
            "samples": np.array([[float(r[f"x{i}"]) for i in range(dim)] for r in rows])}


def _coverage_spec(cfg: ExperimentConfig) -> CoverageSpec:
    radius = float(cfg.reward_spec.get("radius", 2.0))
    return CoverageSpec(radius=radius)


def summarize_seed(cfg: ExperimentConfig, seed: int, result: SearchResult) -> dict:
    spec = _coverage_spec(cfg)
    outs = result.outputs
    evaluated = np.stack(result.archive.samples, axis=0)
    return {
        "method": cfg.method,
        "seed": seed,
        "model_calls": result.ledger.model_calls,
        "reward_calls": result.ledger.reward_calls,
        "best_reward": repr(result.best_reward),
        "mean_output_reward": repr(float(result.output_rewards.mean())),
        "diversity_l2": repr(diversity_l2(outs) if outs.shape[0] >= 2 else 0.0),
        "angular_coverage": repr(angular_coverage(evaluated, spec)),
        "num_events": len(result.archive),
    }


def write_summary_csv(path: Path, rows: list[dict]):
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _plot_scatter(cfg: ExperimentConfig, result: SearchResult, path: Path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    lim = 3.0
    grid = np.linspace(-lim, lim, 200)
    xx, yy = np.meshgrid(grid, grid)
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    if cfg.model.dim == 2:
        dens = np.exp(log_density_p0(cfg.model, pts)).reshape(xx.shape)
        ax.contour(xx, yy, dens, levels=8, colors="gray", linewidths=0.6)
    if cfg.reward_spec.get("kind") == "circle":
        radius = float(cfg.reward_spec.get("radius", 2.0))
        circle = plt.Circle((0, 0), radius, fill=False, color="tab:green",
                            linestyle="--", label="reward locus")
        ax.add_patch(circle)
    ax.scatter(result.outputs[:, 0], result.outputs[:, 1], s=14, c="tab:red",
               label=f"{cfg.method} outputs")
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(f"{cfg.method}: final samples")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_curves(per_seed: dict[int, SearchResult], method: str, path: Path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for seed, result in per_seed.items():
        ax.plot(result.archive.nfe, result.best_reward_curve, alpha=0.7,
                label=f"seed {seed}")
    ax.set_xlabel("cumulative NFE (model calls)")
    ax.set_ylabel("running best reward")
    ax.set_title(f"{method}: reward vs compute")
    if len(per_seed) <= 10:
        ax.legend(fontsize=7)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def run(config_path: str, seed_override=None, output_dir=None,
        quiet: bool = False) -> Path:
    """Execute the configured method for every seed; return the output directory."""
    cfg = load_config(config_path, seed_override=seed_override, output_dir=output_dir)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(Path(config_path).read_text())

    rows = []
    per_seed = {}
    for seed in cfg.seeds:
        result = run_method(cfg, seed)
        per_seed[seed] = result
        write_events_csv(out / f"events_{cfg.method}_seed{seed}.csv", result)
        rows.append(summarize_seed(cfg, seed, result))
        if not quiet:
            print(f"{cfg.method} seed={seed} best_reward={result.best_reward:.4f} "
                  f"nfe={result.ledger.model_calls}")
    write_summary_csv(out / "summary.csv", rows)
    _plot_scatter(cfg, per_seed[cfg.seeds[0]], out / f"scatter_seed{cfg.seeds[0]}.svg")
    _plot_curves(per_seed, cfg.method, out / "curve.svg")
    return out


def sweep(config_path: str, budgets: list[int], seed_override=None,
          output_dir=None, quiet: bool = False) -> Path:
    """One run block per budget; population sizes scale with budget."""
    if any(b <= a for a, b in zip(budgets, budgets[1:])):
        raise ConfigurationError(f"budgets must be strictly ascending, got {budgets}")
    cfg = load_config(config_path, seed_override=seed_override, output_dir=output_dir)
    root = cfg.output_dir
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for budget in budgets:
        sub = root / f"budget_{budget}"
        sub.mkdir(parents=True, exist_ok=True)
        (sub / "config.yaml").write_text(Path(config_path).read_text())
        scoped = ExperimentConfig(
            model=cfg.model, model_kind=cfg.model_kind, schedule=cfg.schedule,
            reward_fn=cfg.reward_fn, reward_spec=cfg.reward_spec, method=cfg.method,
            method_params={**cfg.method_params, "nfe_budget": budget},
            seeds=cfg.seeds, output_dir=sub, raw=cfg.raw)
        per_seed = {}
        seed_rows = []
        for seed in scoped.seeds:
            result = run_method(scoped, seed)
            per_seed[seed] = result
            write_events_csv(sub / f"events_{cfg.method}_seed{seed}.csv", result)
            row = summarize_seed(scoped, seed, result)
            seed_rows.append(row)
            rows.append({"nfe_budget": budget, **row})
            if not quiet:
                print(f"budget={budget} {cfg.method} seed={seed} "
                      f"best_reward={result.best_reward:.4f}")
        write_summary_csv(sub / "summary.csv", seed_rows)
        _plot_curves(per_seed, f"{cfg.method} @ {budget}", sub / "curve.svg")
    write_summary_csv(root / "sweep_summary.csv", rows)
    return root


def _read_summary(run_dir: Path) -> tuple[list[dict], str]:
    summary = run_dir / "summary.csv"
    if not summary.exists():
        raise ConfigurationError(f"{run_dir} has no summary.csv (incomplete run?)")
    with summary.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    import yaml
    reward_spec = yaml.safe_load((run_dir / "config.yaml").read_text()).get("reward")
    return rows, repr(sorted(reward_spec.items()))


def compare(run_dirs: list[str], output_path: str | None = None) -> str:
    """Aggregate summaries of completed runs into a markdown + CSV table."""
    if len(run_dirs) < 2:
        raise ConfigurationError("compare needs at least 2 run directories")
    blocks = []
    reward_keys = set()
    for d in run_dirs:
        rows, key = _read_summary(Path(d))
        reward_keys.add(key)
        blocks.append((Path(d), rows))
    if len(reward_keys) > 1:
        raise ConfigurationError("compared runs use different reward specs")

    table = []
    for run_dir, rows in blocks:
        best = np.array([float(r["best_reward"]) for r in rows])
        div = np.array([float(r["diversity_l2"]) for r in rows])
        cov = np.array([float(r["angular_coverage"]) for r in rows])
        nfe = np.array([int(r["model_calls"]) for r in rows])
        table.append({
            "run": str(run_dir),
            "method": rows[0]["method"],
            "seeds": len(rows),
            "best_reward_mean": repr(float(best.mean())),
            "best_reward_std": repr(float(best.std())),
            "diversity_mean": repr(float(div.mean())),
            "coverage_mean": repr(float(cov.mean())),
            "nfe_mean": repr(float(nfe.mean())),
        })

    lines = ["| method | run | seeds | best reward (mean±std) | diversity | coverage | NFE |",
             "|---|---|---|---|---|---|---|"]
    for row in table:
        lines.append(
            f"| {row['method']} | {row['run']} | {row['seeds']} "
            f"| {float(row['best_reward_mean']):.4f} ± {float(row['best_reward_std']):.4f} "
            f"| {float(row['diversity_mean']):.4f} | {float(row['coverage_mean']):.3f} "
            f"| {float(row['nfe_mean']):.0f} |")
    markdown = "\n".join(lines) + "\n"
    if output_path is not None:
        base = Path(output_path)
        base.with_suffix(".md").write_text(markdown)
        write_summary_csv(base.with_suffix(".csv"), table)
    return markdown


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evosearch",
                                     description="Reward-guided search over denoising "
                                                 "trajectories on analytic mixtures")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--seed-override", type=str, default=None,
                       help="comma-separated seeds replacing the config's list")
        p.add_argument("--output-dir", type=str, default=None)
        p.add_argument("--quiet", action="store_true")

    p_run = sub.add_parser("run", help="run one method over all seeds")
    p_run.add_argument("config")
    common(p_run)

    p_sweep = sub.add_parser("sweep", help="run over ascending NFE budgets")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--budgets", type=str, required=True,
                         help="comma-separated ascending NFE budgets")
    common(p_sweep)

    p_cmp = sub.add_parser("compare", help="tabulate >= 2 completed runs")
    p_cmp.add_argument("run_dirs", nargs="+")
    p_cmp.add_argument("--output", type=str, default=None,
                       help="basename for comparison .md/.csv files")
    p_cmp.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO)
    try:
        if args.verb == "run":
            seeds = ([int(s) for s in args.seed_override.split(",")]
                     if args.seed_override else None)
            run(args.config, seed_override=seeds, output_dir=args.output_dir,
                quiet=args.quiet)
        elif args.verb == "sweep":
            seeds = ([int(s) for s in args.seed_override.split(",")]
                     if args.seed_override else None)
            budgets = [int(b) for b in args.budgets.split(",")]
            sweep(args.config, budgets, seed_override=seeds,
                  output_dir=args.output_dir, quiet=args.quiet)
        else:
            markdown = compare(args.run_dirs, output_path=args.output)
            if not args.quiet:
                print(markdown)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.exception("run failed")
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
