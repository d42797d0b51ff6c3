"""Multi-trial experiment suites and their on-disk artifacts.

A suite directory holds

* ``trial_XX.csv`` -- one convergence curve per trial,
* ``summary.json`` -- per-trial finals plus mean and SEM,
* ``table_row.txt`` -- ``mean ± SEM`` with ``@ solved_at`` when the median
  trial solved the task,
* ``INCOMPLETE`` -- present only while the suite is running or if it died.

Outputs contain no timestamps or host details, so rerunning a suite with the
same configuration and master seed reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import seeding
from .engine import MODES, EngineConfig, RunRecord, make_run
from .errors import ConfigError, SchemaError
from .gp import GPConfig
from .learners import LearnerConfig
from .stats import median_solved_at, sem

SCHEMA_VERSION = 1
FRACTIONS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
CSV_HEADER = ("generation", "evaluations", "best_fitness", "mean_fitness", "instinct_ratio", "solved")
INCOMPLETE = "INCOMPLETE"

# Budgets keep 30 agents x 10 episodes per generation; ea-only spends one unit per agent.
PRESETS = {
    "desk": {"trials": 5, "budget": 18_000},
    "full": {"trials": 10, "budget": 60_000},
}

ALGO_LABELS = {
    ("evo-rl", "q"): "eQ-learning",
    ("evo-rl", "dqn"): "eDQN",
    ("rl-only", "q"): "Q-learning",
    ("rl-only", "dqn"): "DQN",
    ("ea-only", "q"): "EA-only",
    ("ea-only", "dqn"): "EA-only",
}


@dataclass
class RunConfig:
    """Everything needed to run a suite of independent trials.

    ``gp`` and ``learner`` hold overrides of :class:`GPConfig` and
    :class:`LearnerConfig` fields. When ``generations`` is None it is derived
    from the budget so that the generation cap and budget cap coincide.
    """

    env: str = "cartpole"
    mode: str = "evo-rl"
    algo: str = "q"
    fraction: float = 0.0
    trials: int = 10
    seed: int = 0
    budget: int = 60_000
    generations: Optional[int] = None
    episodes_per_agent: int = 10
    eval_episodes: int = 100
    eval_interval: int = 300
    gp: dict = field(default_factory=dict)
    learner: dict = field(default_factory=dict)
    out: str = "runs"
    allow_any_fraction: bool = False
    population_stddev: bool = False
    parallel_trials: int = 1
    workers: int = 1
    checkpoint: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.algo not in ("q", "dqn"):
            raise ConfigError(f"unknown algo {self.algo!r}; expected 'q' or 'dqn'")
        if not self.allow_any_fraction and not any(math.isclose(self.fraction, f) for f in FRACTIONS):
            raise ConfigError(
                f"fraction {self.fraction!r} is outside {FRACTIONS}; pass --allow-any-fraction to use it"
            )
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.parallel_trials < 1:
            raise ConfigError("parallel_trials must be >= 1")
        for key in self.gp:
            if key not in _field_names(GPConfig):
                raise ConfigError(f"unknown gp option {key!r}")
        for key in self.learner:
            if key not in _field_names(LearnerConfig):
                raise ConfigError(f"unknown learner option {key!r}")
        # builds and validates the engine config of the first trial
        self.engine_config(0).validate()

    def generation_cap(self) -> int:
        if self.generations is not None:
            return self.generations
        pop = int(self.gp.get("population_size", GPConfig.population_size))
        per_gen = pop if self.mode == "ea-only" else pop * self.episodes_per_agent
        return max(self.budget // per_gen, 0)

    def trial_seed(self, trial: int) -> int:
        return seeding.derive_seed(self.seed, seeding.TRIAL, trial)

    def engine_config(self, trial: int) -> EngineConfig:
        gp = dict(self.gp)
        gp["generations"] = self.generation_cap()
        if "init_depth_range" in gp:
            gp["init_depth_range"] = tuple(gp["init_depth_range"])
        learner = dict(self.learner)
        learner["algo"] = self.algo
        try:
            return EngineConfig(
                env=self.env,
                mode=self.mode,
                fraction=float(self.fraction),
                gp=GPConfig(**gp),
                learner=LearnerConfig(**learner),
                episodes_per_agent=self.episodes_per_agent,
                eval_episodes=self.eval_episodes,
                budget=self.budget,
                eval_interval=self.eval_interval,
                seed=self.trial_seed(trial),
                workers=self.workers,
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("out", "parallel_trials", "workers", "checkpoint"):
            d.pop(k)  # do not affect results
        return d


def _field_names(cls) -> set:
    return {f.name for f in fields(cls)}


def load_config(path: str | Path | None = None, preset: str | None = None, **overrides) -> RunConfig:
    """Build a :class:`RunConfig` from defaults, a preset, a JSON file and overrides.

    Later sources win. ``None`` overrides are ignored so argparse namespaces
    can be passed straight through. A ``preset`` key inside the file is
    honoured unless ``preset`` is given explicitly.
    """
    values: dict = {}
    file_values: dict = {}
    if path is not None:
        try:
            file_values = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a JSON object")
    preset = preset or file_values.pop("preset", None)
    file_values.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    values.update(file_values)
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = _field_names(RunConfig)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# running


@dataclass
class TrialResult:
    trial: int
    seed: int
    records: list
    final_reward: float
    solved_at: Optional[int]
    instinct_ratio: float
    consumed: int


@dataclass
class TrialSummary:
    env: str
    mode: str
    algo: str
    fraction: float
    trials: int
    final_rewards: list
    solved_at: list
    instinct_ratios: list
    consumed: list
    mean: float
    sem: float
    solved_count: int
    median_solved_at: Optional[float]
    stddev: str
    config: dict
    schema_version: int = SCHEMA_VERSION

    @property
    def label(self) -> str:
        return ALGO_LABELS[(self.mode, self.algo)]

    def table_row(self) -> str:
        return format_cell(self.mean, self.sem, self.median_solved_at)


def format_cell(mean: float, err: float, solved_at: Optional[float]) -> str:
    text = f"{mean:.1f} ± {err:.1f}"
    if solved_at is not None:
        text += f" @ {solved_at:,.0f}"
    return text


def run_trial(cfg: RunConfig, trial: int, checkpoint_dir: str | Path | None = None) -> TrialResult:
    ecfg = cfg.engine_config(trial)
    kwargs = {"checkpoint_dir": checkpoint_dir} if checkpoint_dir and ecfg.mode != "rl-only" else {}
    run = make_run(ecfg, **kwargs)
    records = run.run()
    last = records[-1] if records else None
    return TrialResult(
        trial=trial,
        seed=ecfg.seed,
        records=records,
        final_reward=last.best_fitness if last else float("nan"),
        solved_at=run.ledger.solved_at,
        instinct_ratio=last.instinct_ratio if last else 0.0,
        consumed=run.ledger.consumed,
    )


def _run_trial_job(args) -> TrialResult:
    cfg, trial, ckpt = args
    return run_trial(cfg, trial, ckpt)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def convergence_csv(records: list[RunRecord], mode: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(CSV_HEADER)
    if mode == "rl-only":
        header[0] = "eval_point"
    w.writerow(header)
    for r in records:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])
    return buf.getvalue()


def summarize(cfg: RunConfig, results: list[TrialResult]) -> TrialSummary:
    finals = [r.final_reward for r in results]
    solved = [r.solved_at for r in results]
    return TrialSummary(
        env=cfg.env,
        mode=cfg.mode,
        algo=cfg.algo,
        fraction=float(cfg.fraction),
        trials=len(results),
        final_rewards=finals,
        solved_at=solved,
        instinct_ratios=[r.instinct_ratio for r in results],
        consumed=[r.consumed for r in results],
        mean=float(np.mean(finals)),
        sem=sem(finals, population=cfg.population_stddev),
        solved_count=sum(s is not None for s in solved),
        median_solved_at=median_solved_at(solved),
        stddev="population" if cfg.population_stddev else "sample",
        config=cfg.to_dict(),
    )


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def run_suite(cfg: RunConfig, out: str | Path | None = None) -> TrialSummary:
    """Run ``cfg.trials`` independent trials and write the suite artifacts.

    Trials are seeded from the master seed and their index only, so the
    artifacts do not depend on ``parallel_trials``. Raises OSError on
    filesystem failures, leaving the ``INCOMPLETE`` marker behind.
    """
    cfg.validate()
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / INCOMPLETE
    _write(marker, "suite started\n")

    ckpts = [str(out / f"trial_{t:02d}_checkpoints") if cfg.checkpoint else None for t in range(cfg.trials)]
    jobs = [(cfg, t, ckpts[t]) for t in range(cfg.trials)]
    results: list[TrialResult] = []
    if cfg.parallel_trials > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(min(cfg.parallel_trials, cfg.trials)) as pool:
            for res in pool.map(_run_trial_job, jobs):
                results.append(res)
                _write(out / f"trial_{res.trial:02d}.csv", convergence_csv(res.records, cfg.mode))
    else:
        for job in jobs:
            res = _run_trial_job(job)
            results.append(res)
            _write(out / f"trial_{res.trial:02d}.csv", convergence_csv(res.records, cfg.mode))

    summary = summarize(cfg, results)
    _write(out / "summary.json", json.dumps(asdict(summary), sort_keys=True, indent=2) + "\n")
    _write(out / "table_row.txt", f"{summary.label}\t{summary.env}\t{summary.fraction:g}\t{summary.table_row()}\n")
    os.remove(marker)
    return summary


# ---------------------------------------------------------------------------
# reporting


def load_summary(path: str | Path) -> TrialSummary:
    path = Path(path)
    data = json.loads(path.read_text())
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{path}: summary schema version {version!r}, expected {SCHEMA_VERSION}")
    try:
        return TrialSummary(**data)
    except TypeError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def find_summaries(paths) -> list[Path]:
    """Suite summaries in ``paths``; a directory without one is searched one level down."""
    found = []
    for p in map(Path, paths):
        if p.is_file():
            found.append(p)
        elif (p / "summary.json").is_file():
            found.append(p / "summary.json")
        elif p.is_dir():
            found.extend(sorted(p.glob("*/summary.json")))
        else:
            raise FileNotFoundError(f"no such run directory: {p}")
    return found


@dataclass
class Report:
    rows: list  # (env, fraction)
    columns: list  # algorithm labels
    cells: dict  # (row, column) -> TrialSummary
    spearman: dict  # (env, column) -> (rho, n_fractions)

    def text(self) -> str:
        head = ["env", "fraction"] + self.columns
        lines = [head]
        for row in self.rows:
            line = [row[0], f"{row[1]:.0%}"]
            for col in self.columns:
                s = self.cells.get((row, col))
                if s is None:
                    line.append("-")
                else:
                    line.append(s.table_row() + (" *" if s.median_solved_at is not None else ""))
            lines.append(line)
        widths = [max(len(r[i]) for r in lines) for i in range(len(head))]
        out = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in lines]
        out.append("(* median trial solved; '@' gives the median solve point in budget units)")
        for (env, col), (rho, n) in sorted(self.spearman.items()):
            out.append(f"instinct ratio vs fraction, {env} {col}: spearman {rho:+.3f} over {n} fractions")
        return "\n".join(out) + "\n"

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            ["env", "fraction", "algorithm", "mean", "sem", "stddev", "trials", "solved_count",
             "median_solved_at", "mean_instinct_ratio", "final_rewards"]
        )
        for row in self.rows:
            for col in self.columns:
                s = self.cells.get((row, col))
                if s is None:
                    continue
                w.writerow([
                    row[0], _fmt(row[1]), col, _fmt(s.mean), _fmt(s.sem), s.stddev, s.trials,
                    s.solved_count, "" if s.median_solved_at is None else _fmt(s.median_solved_at),
                    _fmt(float(np.mean(s.instinct_ratios))), ";".join(_fmt(v) for v in s.final_rewards),
                ])
        return buf.getvalue()


def build_report(summaries: list[TrialSummary]) -> Report:
    """Merge suite summaries into an env x fraction by algorithm grid.

    A later summary for an already filled cell replaces the earlier one.
    """
    from scipy.stats import spearmanr

    cells = {}
    for s in summaries:
        cells[((s.env, s.fraction), s.label)] = s
    rows = sorted({k[0] for k in cells})
    order = list(dict.fromkeys(ALGO_LABELS.values()))
    columns = sorted({k[1] for k in cells}, key=order.index)
    spearman = {}
    for env in sorted({r[0] for r in rows}):
        for col in columns:
            pts = sorted(
                (s.fraction, float(np.mean(s.instinct_ratios)))
                for (r, c), s in cells.items()
                if r[0] == env and c == col
            )
            # only evolved agents with a learner have a meaningful ratio to trend
            if len(pts) >= 3 and col in ("eQ-learning", "eDQN"):
                x, y = zip(*pts)
                rho = spearmanr(x, y).statistic
                spearman[(env, col)] = (float(rho), len(pts))
    return Report(rows, columns, cells, spearman)


def report(paths, out: str | Path | None = None) -> Report:
    """Aggregate suite directories; writes ``report.txt`` and ``report.csv`` into ``out`` if given."""
    rep = build_report([load_summary(p) for p in find_summaries(paths)])
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "report.txt", rep.text())
        _write(out / "report.csv", rep.csv())
    return rep
