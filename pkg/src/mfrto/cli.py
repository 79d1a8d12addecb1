"""Command-line driver for Monte-Carlo RTO campaigns and comparisons.

Subcommands
-----------
run       Execute one campaign (a scenario on a problem, several seeded
          replicates) and write ``results.csv`` + ``summary.json``.
motivate  Reproduce the 1-D confidence-band demonstration data
          (``bands.csv``): a sparsely trained GP whose +-r*std bands fail to
          cover the ground truth even for large r.
compare   Merge several campaign result directories into per-iteration cost
          bands and cumulative violation counts.

All randomness flows from one master seed through per-replicate spawned
generators, so campaigns are bit-reproducible and replicates independent of
execution order. Replicates run on a process pool.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .chance import RiskSpec
from .errors import ConfigError, SchemaMismatch
from .gp import KernelFamily, fit_gp, posterior_many
from .plants import pbr_problem, synthetic_benchmark, xsinx_problem, xsinx_sample
from .plants.photobioreactor import NoiseSpec
from .rto import (
    AcquisitionKind,
    AcquisitionSpec,
    ExperimentRecord,
    RtoConfig,
    RtoProblem,
    run_rto,
)

SCENARIOS = ("proposed", "a", "b", "c")
PROBLEMS = ("pbr", "synthetic", "xsinx")
KERNELS = {
    "matern32": KernelFamily.MATERN32,
    "matern52": KernelFamily.MATERN52,
    "squared_exponential": KernelFamily.SQUARED_EXPONENTIAL,
}
ACQUISITIONS = {
    "ei": AcquisitionKind.EXPECTED_IMPROVEMENT,
    "lcb": AcquisitionKind.LOWER_CONFIDENCE_BOUND,
}

CSV_HEADER = [
    "replicate",
    "iteration",
    "subproblem_feasible",
    "accepted",
    "plant_failed",
    "rho",
    "radius",
    "step_norm",
    "cost",
    "best_feasible_cost",
    "n_violations",
    "violation_flags",
    "point",
    "wall_time",
]

BAND_MULTIPLIERS = (1, 2, 3, 4, 10)

# Scenario switch table: chance constraints / trust region / prior model.
_SCENARIO_FLAGS = {
    "proposed": (True, True, True),
    "a": (False, True, True),
    "b": (True, False, True),
    "c": (True, True, False),
}


@dataclass(frozen=True)
class CampaignConfig:
    """Validated campaign settings (one scenario on one problem)."""

    problem: str = "synthetic"
    scenario: str = "proposed"
    n_replicates: int = 10
    master_seed: int = 0
    max_iterations: int = 30
    n_initial: int = 13
    alpha: float = 0.1
    acquisition: str = "ei"
    beta: float = 2.0
    n_starts: int = 20
    n_model_points: int = 30
    kernel: str = "matern32"
    fit_restarts: int = 10
    fit_budget: int = 400
    subproblem_budget: int = 400
    delta_max: float = 1.0
    eta1: float = 0.2
    eta2: float = 0.8
    gamma_red: float = 0.5
    gamma_inc: float = 2.0
    noise_enabled: bool = True
    synthetic_noise_std: float = 0.01
    synthetic_mismatch: float = 1.0
    include_terminal_nitrate: bool = False
    feasible_attempt_cap: int = 5000
    workers: int = 0  # 0 = one per CPU, capped by replicate count
    output_dir: str = "results"

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"kernel must be one of {tuple(KERNELS)}, got {self.kernel!r}")
        if self.acquisition not in ACQUISITIONS:
            raise ConfigError(
                f"acquisition must be one of {tuple(ACQUISITIONS)}, got {self.acquisition!r}"
            )
        if self.n_replicates < 1:
            raise ConfigError("n_replicates must be >= 1")
        if self.n_initial < 2:
            raise ConfigError("n_initial must be >= 2")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")

    def rto_config(self) -> RtoConfig:
        chance, trust, prior = _SCENARIO_FLAGS[self.scenario]
        return RtoConfig(
            risk=RiskSpec(self.alpha),
            acquisition=AcquisitionSpec(ACQUISITIONS[self.acquisition], self.beta),
            n_starts=self.n_starts,
            n_model_points=self.n_model_points if prior else 0,
            max_iterations=self.max_iterations,
            use_trust_region=trust,
            use_chance_constraints=chance,
            use_prior_model=prior,
            kernel_family=KERNELS[self.kernel],
            fit_restarts=self.fit_restarts,
            fit_budget=self.fit_budget,
            subproblem_budget=self.subproblem_budget,
            delta_max=self.delta_max,
            eta1=self.eta1,
            eta2=self.eta2,
            gamma_red=self.gamma_red,
            gamma_inc=self.gamma_inc,
        )


def load_campaign_config(path: Optional[str], overrides: dict) -> CampaignConfig:
    """Read a YAML campaign config, apply CLI overrides, validate hard.

    Unknown keys are errors (typo safety), as are non-mapping files.
    """
    raw: dict = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("campaign config must be a mapping")
        raw.update(loaded)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(CampaignConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return CampaignConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def build_problem(cfg: CampaignConfig) -> RtoProblem:
    if cfg.problem == "pbr":
        return pbr_problem(
            noise=NoiseSpec(enabled=cfg.noise_enabled),
            include_terminal_nitrate=cfg.include_terminal_nitrate,
        )
    if cfg.problem == "synthetic":
        noise = cfg.synthetic_noise_std if cfg.noise_enabled else 0.0
        return synthetic_benchmark(noise_std=noise, mismatch=cfg.synthetic_mismatch)
    noise = cfg.synthetic_noise_std if cfg.noise_enabled else 0.0
    return xsinx_problem(noise_std=noise, mismatch=cfg.synthetic_mismatch)


def generate_initial_design(
    problem: RtoProblem, cfg: CampaignConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Measured starting dataset: inputs, costs, constraints.

    Candidate inputs are rejection-sampled uniformly and screened with the
    noiseless model's constraints; if the attempt cap is hit before enough
    feasible candidates are found, the least-violating attempts fill the
    remainder. The plant is then measured once at each accepted input.
    """
    accepted: list[np.ndarray] = []
    fallback_pts: list[np.ndarray] = []
    fallback_viol: list[float] = []
    attempts = 0
    chunk = max(cfg.n_initial, 64)
    while len(accepted) < cfg.n_initial and attempts < cfg.feasible_attempt_cap:
        n = min(chunk, cfg.feasible_attempt_cap - attempts)
        pts = problem.domain.sample(rng, n)
        attempts += n
        if problem.n_constraints == 0:
            accepted.extend(pts)
            continue
        if problem.model_batch is not None:
            _, cons = problem.model_batch(pts)
        else:
            cons = np.stack([problem.model(p)[1] for p in pts])
        worst = np.max(cons, axis=1)
        for p, w in zip(pts, worst):
            if w <= 0.0 and len(accepted) < cfg.n_initial:
                accepted.append(p)
            else:
                fallback_pts.append(p)
                fallback_viol.append(float(w))
    if len(accepted) < cfg.n_initial:
        order = np.argsort(fallback_viol)
        for i in order[: cfg.n_initial - len(accepted)]:
            accepted.append(fallback_pts[i])
    inputs = np.stack(accepted[: cfg.n_initial])

    if problem.plant_batch is not None:
        costs, constraints = problem.plant_batch(inputs, rng)
    else:
        measured = [problem.plant(p, rng) for p in inputs]
        costs = np.array([m[0] for m in measured])
        constraints = np.stack([np.atleast_1d(m[1]) for m in measured]).reshape(
            len(measured), -1
        )
    return inputs, costs, constraints


def choose_start(
    inputs: np.ndarray, costs: np.ndarray, constraints: np.ndarray
) -> np.ndarray:
    """Best measured-feasible initial point (least violating as fallback)."""
    if constraints.shape[1] == 0:
        return inputs[int(np.argmin(costs))]
    feasible = np.all(constraints <= 0.0, axis=1)
    if np.any(feasible):
        masked = np.where(feasible, costs, np.inf)
        return inputs[int(np.argmin(masked))]
    worst = np.max(constraints, axis=1)
    return inputs[int(np.argmin(worst))]


def initial_radius(
    inputs: np.ndarray, u0: np.ndarray, domain, delta_max: float
) -> float:
    """Smallest normalized box radius around all initial points, centered at
    the start; the initial trust region must enclose the whole dataset."""
    width = np.where(domain.width > 0.0, domain.width, 1.0)
    dist = np.max(np.abs((inputs - u0) / width))
    return float(min(max(dist, 1e-3), delta_max))


def _record_to_row(rep: int, rec: ExperimentRecord) -> list:
    flags = (
        ";".join(str(int(v)) for v in rec.violations) if rec.violations is not None else ""
    )
    return [
        rep,
        rec.iteration,
        int(rec.subproblem_feasible),
        int(rec.accepted),
        int(rec.plant_failed),
        "" if rec.merit is None else repr(float(rec.merit)),
        repr(float(rec.radius)),
        "" if rec.step is None else repr(float(np.max(np.abs(rec.step)))),
        "" if rec.measured_cost is None else repr(float(rec.measured_cost)),
        repr(float(rec.best_feasible_cost)),
        "" if rec.violations is None else int(np.sum(rec.violations)),
        flags,
        "" if rec.evaluated_point is None else " ".join(repr(float(x)) for x in rec.evaluated_point),
        f"{rec.wall_time:.6f}",
    ]


def run_replicate(cfg: CampaignConfig, rep: int, seed: np.random.SeedSequence) -> dict:
    """Worker entry: one fully seeded replicate; returns rows + aggregates."""
    rng = np.random.default_rng(seed)
    problem = build_problem(cfg)
    inputs, costs, constraints = generate_initial_design(problem, cfg, rng)
    u0 = choose_start(inputs, costs, constraints)
    delta0 = initial_radius(inputs, u0, problem.domain, cfg.delta_max)
    records = run_rto(
        problem, cfg.rto_config(), inputs, costs, constraints, u0, delta0, rng
    )
    measured = [r for r in records if r.violations is not None]
    initial_best = _best_feasible(costs, constraints)
    final_best = records[-1].best_feasible_cost if records else initial_best
    return {
        "replicate": rep,
        "rows": [_record_to_row(rep, r) for r in records],
        "n_measured": len(measured),
        "n_violation_iterations": sum(bool(np.any(r.violations)) for r in measured),
        "initial_best_cost": float(initial_best),
        "final_best_cost": float(final_best),
    }


def _best_feasible(costs: np.ndarray, constraints: np.ndarray) -> float:
    if constraints.shape[1] == 0:
        return float(np.min(costs))
    feasible = np.all(constraints <= 0.0, axis=1)
    if np.any(feasible):
        return float(np.min(costs[feasible]))
    return float(costs[int(np.argmin(np.max(constraints, axis=1)))])


def _stats(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=float)
    return {"mean": float(arr.mean()), "min": float(arr.min()), "max": float(arr.max())}


def summary_schema() -> dict:
    return json.loads(resources.files("mfrto").joinpath("summary_schema.json").read_text())


def write_summary(path: Path, cfg: CampaignConfig, replicates: list[dict]) -> dict:
    import jsonschema

    total_measured = sum(r["n_measured"] for r in replicates)
    total_violations = sum(r["n_violation_iterations"] for r in replicates)
    summary = {
        "schema_version": 1,
        "problem": cfg.problem,
        "scenario": cfg.scenario,
        "n_replicates": cfg.n_replicates,
        "iterations": cfg.max_iterations,
        "master_seed": cfg.master_seed,
        "violation_fraction": (total_violations / total_measured) if total_measured else 0.0,
        "final_best_cost": _stats([r["final_best_cost"] for r in replicates]),
        "final_best_objective": _stats([-r["final_best_cost"] for r in replicates]),
        "initial_best_cost": _stats([r["initial_best_cost"] for r in replicates]),
        "per_replicate": [
            {k: r[k] for k in (
                "replicate",
                "final_best_cost",
                "initial_best_cost",
                "n_violation_iterations",
                "n_measured",
            )}
            for r in replicates
        ],
        "config": dataclasses.asdict(cfg),
    }
    jsonschema.validate(summary, summary_schema())
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {
        "master_seed": args.seed,
        "scenario": args.scenario,
        "n_replicates": args.replicates,
        "max_iterations": args.iterations,
        "output_dir": args.out,
    }
    cfg = load_campaign_config(args.config, overrides)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    seeds = np.random.SeedSequence(cfg.master_seed).spawn(cfg.n_replicates)
    jobs = [(cfg, rep, ss) for rep, ss in enumerate(seeds)]

    replicates: list[dict] = []
    failed = False
    n_workers = cfg.workers if cfg.workers > 0 else None
    try:
        if cfg.n_replicates == 1 or cfg.workers == 1:
            for job in jobs:
                replicates.append(run_replicate(*job))
        else:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                futures = [pool.submit(run_replicate, *job) for job in jobs]
                for fut in futures:
                    replicates.append(fut.result())
    except Exception:
        traceback.print_exc()
        failed = True

    replicates.sort(key=lambda r: r["replicate"])
    with (out_dir / "results.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rep in replicates:
            writer.writerows(rep["rows"])
    if replicates:
        write_summary(out_dir / "summary.json", cfg, replicates)
    if failed:
        print(f"campaign failed; partial results for {len(replicates)} replicate(s) "
              f"kept in {out_dir}", file=sys.stderr)
        return 2
    print(f"wrote {out_dir / 'results.csv'} and {out_dir / 'summary.json'}")
    return 0


def cmd_motivate(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    # Sparse layout aliasing the zero crossings of x sin(x): the samples look
    # like a flat low-amplitude trend, so the fitted GP is confidently wrong
    # between them. Duplicates make the noise level identifiable.
    x_train = np.repeat(np.array([0.0, 3.1, 6.3, 9.4]), 2)
    y_train = xsinx_sample(x_train, rng=rng)
    gp = fit_gp(
        x_train[:, None],
        y_train,
        KernelFamily.SQUARED_EXPONENTIAL,
        n_restarts=10,
        rng=rng,
    )
    grid = np.linspace(0.0, 12.0, 481)
    means, variances = posterior_many(gp, grid[:, None])
    std = np.sqrt(variances)
    truth = grid * np.sin(grid)

    header = ["x", "truth", "mean", "std"]
    for r in BAND_MULTIPLIERS:
        header += [f"lower_{r}", f"upper_{r}"]
    header.append("escapes_r10")
    r_max = BAND_MULTIPLIERS[-1]
    escapes = np.abs(truth - means) > r_max * std
    with (out_dir / "bands.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, x in enumerate(grid):
            row = [repr(float(x)), repr(float(truth[i])), repr(float(means[i])), repr(float(std[i]))]
            for r in BAND_MULTIPLIERS:
                row += [repr(float(means[i] - r * std[i])), repr(float(means[i] + r * std[i]))]
            row.append(int(escapes[i]))
            writer.writerow(row)
    meta = {
        "train_x": x_train.tolist(),
        "train_y": y_train.tolist(),
        "fitted_noise_std": float(np.sqrt(gp.noise_variance) * gp.target_transform.scale[0]),
        "n_escapes_r10": int(np.sum(escapes)),
    }
    (out_dir / "bands_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {out_dir / 'bands.csv'} ({meta['n_escapes_r10']} grid points escape the r=10 band)")
    return 0


def _load_campaign_dir(path: Path) -> tuple[dict, dict]:
    """Returns (summary, per-replicate iteration rows) for one result dir."""
    import jsonschema

    csv_path = path / "results.csv"
    summary_path = path / "summary.json"
    if not csv_path.exists() or not summary_path.exists():
        raise SchemaMismatch(f"{path} is missing results.csv or summary.json")
    summary = json.loads(summary_path.read_text())
    try:
        jsonschema.validate(summary, summary_schema())
    except jsonschema.ValidationError as exc:
        raise SchemaMismatch(f"{summary_path}: {exc.message}") from exc
    with csv_path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise SchemaMismatch(f"{csv_path} header differs from the expected schema")
        rows = list(reader)
    return summary, {"rows": rows}


def cmd_compare(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    campaigns = []
    for d in args.dirs:
        summary, data = _load_campaign_dir(Path(d))
        label = summary["scenario"]
        campaigns.append((label, summary, data["rows"]))

    idx = {name: i for i, name in enumerate(CSV_HEADER)}
    merged_rows = []
    comparison_summary = {}
    for label, summary, rows in campaigns:
        by_iter: dict[int, list] = {}
        violations_by_iter: dict[int, int] = {}
        for row in rows:
            it = int(row[idx["iteration"]])
            by_iter.setdefault(it, []).append(float(row[idx["best_feasible_cost"]]))
            n_viol = row[idx["n_violations"]]
            violated = bool(n_viol) and int(n_viol) > 0
            violations_by_iter[it] = violations_by_iter.get(it, 0) + int(violated)
        cumulative = 0
        for it in sorted(by_iter):
            costs = np.array(by_iter[it])
            cumulative += violations_by_iter.get(it, 0)
            merged_rows.append(
                [label, it, costs.mean(), costs.min(), costs.max(), cumulative]
            )
        comparison_summary[label] = {
            "violation_fraction": summary["violation_fraction"],
            "final_best_objective": summary["final_best_objective"],
            "cumulative_violations": cumulative,
        }

    with (out_dir / "comparison.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scenario", "iteration", "cost_mean", "cost_min", "cost_max", "cum_violations"]
        )
        for row in merged_rows:
            writer.writerow(row)
    (out_dir / "comparison_summary.json").write_text(
        json.dumps(comparison_summary, indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {out_dir / 'comparison.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfrto", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one campaign")
    p_run.add_argument("--config", help="YAML campaign config", default=None)
    p_run.add_argument("--seed", type=int, default=None, help="master seed override")
    p_run.add_argument("--scenario", choices=SCENARIOS, default=None)
    p_run.add_argument("--replicates", type=int, default=None)
    p_run.add_argument("--iterations", type=int, default=None)
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.set_defaults(func=cmd_run)

    p_mot = sub.add_parser("motivate", help="write confidence-band demo data")
    p_mot.add_argument("--out", default="motivate", help="output directory")
    p_mot.add_argument("--seed", type=int, default=0)
    p_mot.set_defaults(func=cmd_motivate)

    p_cmp = sub.add_parser("compare", help="merge campaign result directories")
    p_cmp.add_argument("dirs", nargs="+", help="campaign result directories")
    p_cmp.add_argument("--out", default="comparison", help="output directory")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
