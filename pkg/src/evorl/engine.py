"""The evolutionary-driven RL life cycle.

Each generation every agent goes through

1. **infancy** -- it lives ``episodes_per_agent`` episodes in the masked
   environment; whenever its behavior tree picks an action that action is
   taken and the learner neither acts nor learns for that step;
2. **maturity** -- its overall (tree + greedy learner) policy is scored on a
   fixed set of evaluation episodes using the true, unmasked return;
3. **conception** -- parents chosen by tournament produce children whose
   trees come from crossover and mutation and whose learned behavior is the
   (mutated) average of the parents'.

``ea-only`` skips infancy and learned-behavior transfer, ``rl-only`` trains a
single agent with an empty tree.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from . import behavior_tree as bt
from . import seeding
from .classic_control import ControlEnv, make_env
from .errors import ConfigError, InvalidArgumentError, ProtocolError, SchemaError
from .gp import (
    GPConfig,
    PrimitiveSet,
    mutate_inherited,
    ramped_half_and_half,
    subtree_crossover,
    subtree_mutation,
    tournament_select,
)
from .learners import (
    LearnedBehavior,
    Learner,
    LearnerConfig,
    MLPParams,
    QTable,
    Transition,
    initial_behavior,
    learned_from_dict,
    learned_to_dict,
    linear_epsilon,
    make_learner,
    merge_learned,
    mlp_forward,
)
from .masking import BinGrid, MaskedEnv, bin_index_batch, build_mask

log = logging.getLogger(__name__)

MODES = ("evo-rl", "ea-only", "rl-only")
CHECKPOINT_VERSION = 1


class LifeState(enum.Enum):
    BORN = "born"
    MATURE = "mature"
    FERTILE = "fertile"


@dataclass
class Agent:
    id: int
    tree: Optional[bt.Node]
    learned: LearnedBehavior
    life_state: LifeState = LifeState.BORN
    fitness: Optional[float] = None
    instinct_steps: int = 0
    total_steps: int = 0
    learner_updates: int = 0
    eval_instinct_steps: int = 0
    eval_total_steps: int = 0
    eval_returns: Optional[np.ndarray] = field(default=None, repr=False)

    def mark_mature(self) -> None:
        if self.life_state is not LifeState.BORN:
            raise ProtocolError(f"agent {self.id} is {self.life_state.value}, expected born")
        self.life_state = LifeState.MATURE

    def mark_fertile(self, fitness: float) -> None:
        if self.life_state is not LifeState.MATURE:
            raise ProtocolError(f"agent {self.id} is {self.life_state.value}, expected mature")
        self.fitness = float(fitness)
        self.life_state = LifeState.FERTILE

    def instinct_ratio(self, phase: str = "eval") -> float:
        if phase == "eval":
            num, den = self.eval_instinct_steps, self.eval_total_steps
        else:
            num, den = self.instinct_steps, self.total_steps
        return num / den if den else 0.0

    def offspring_copy(self, new_id: int) -> "Agent":
        """A born copy carrying the same genotype and learned behavior."""
        return Agent(new_id, self.tree, self.learned.copy())


class BudgetExhausted(Exception):
    pass


@dataclass
class BudgetLedger:
    unit: str
    cap: int
    consumed: int = 0
    solved_at: Optional[int] = None

    @property
    def remaining(self) -> int:
        return self.cap - self.consumed

    def charge(self, n: int) -> None:
        if self.consumed + n > self.cap:
            raise BudgetExhausted(f"charging {n} {self.unit} exceeds the cap of {self.cap}")
        self.consumed += n


@dataclass(frozen=True)
class RunRecord:
    generation: int
    evaluations: int
    best_fitness: float
    mean_fitness: float
    instinct_ratio: float
    solved: bool
    best_tree: str = ""


@dataclass(frozen=True)
class StepInfo:
    """Per-step trace emitted during infancy for instrumentation."""

    instinct: bool
    reward_present: bool
    learner_updated: bool


@dataclass
class EngineConfig:
    env: str = "cartpole"
    mode: str = "evo-rl"
    fraction: float = 0.0
    bins_per_dim: Optional[tuple] = None
    gp: GPConfig = field(default_factory=GPConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    episodes_per_agent: int = 10
    eval_episodes: int = 100
    budget: int = 60_000
    eval_interval: int = 300
    seed: int = 0
    reward_threshold: Optional[float] = None
    instinct_ratio_phase: str = "eval"
    workers: int = 1

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        try:
            make_env(self.env)
            self.gp.validate()
            self.learner.validate()
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from None
        if not 0.0 <= self.fraction <= 0.5:
            raise ConfigError(f"rewardless fraction must lie in [0, 0.5], got {self.fraction!r}")
        if self.episodes_per_agent < 1 or self.eval_episodes < 1 or self.eval_interval < 1:
            raise ConfigError("episode counts must be positive")
        if self.budget < 0:
            raise ConfigError("budget must be non-negative")
        if self.instinct_ratio_phase not in ("eval", "infancy"):
            raise ConfigError("instinct_ratio_phase must be 'eval' or 'infancy'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bins_per_dim"] = list(self.bins_per_dim) if self.bins_per_dim else None
        d["gp"]["init_depth_range"] = list(self.gp.init_depth_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        d = dict(d)
        gp = dict(d.pop("gp", {}) or {})
        if "init_depth_range" in gp:
            gp["init_depth_range"] = tuple(gp["init_depth_range"])
        learner = LearnerConfig(**(d.pop("learner", {}) or {}))
        if d.get("bins_per_dim"):
            d["bins_per_dim"] = tuple(d["bins_per_dim"])
        return cls(gp=GPConfig(**gp), learner=learner, **d)


# ---------------------------------------------------------------------------
# life-cycle phases


def run_episodes(
    tree: Optional[bt.Node],
    learner: Learner,
    env: MaskedEnv,
    rng: np.random.Generator,
    n_episodes: int,
    epsilon: Callable[[int], float],
    first_episode: int = 0,
    on_step: Callable[[StepInfo], None] | None = None,
) -> tuple[int, int]:
    """Train ``learner`` for ``n_episodes`` under instinct precedence.

    Returns:
        ``(instinct_steps, total_steps)`` over the episodes.
    """
    instinct = total = 0
    for ep in range(first_episode, first_episode + n_episodes):
        learner.epsilon = epsilon(ep)
        obs = env.reset(rng)
        done = False
        while not done:
            action = bt.decide(tree, obs)
            by_instinct = action is not None
            if by_instinct:
                out = env.step(action)
                instinct += 1
                updated = False
            else:
                action = learner.act(obs, rng)
                out = env.step(action)
                updated = learner.observe(Transition(obs, action, out.reward, out.observation, out.terminal))
            total += 1
            if on_step is not None:
                on_step(StepInfo(by_instinct, out.reward is not None, updated))
            obs = out.observation
            done = out.terminal or out.truncated
    return instinct, total


def infancy(
    agent: Agent,
    env: MaskedEnv,
    cfg: LearnerConfig,
    rng: np.random.Generator,
    episodes: int = 10,
    ledger: BudgetLedger | None = None,
    on_step: Callable[[StepInfo], None] | None = None,
    learner: Learner | None = None,
) -> Agent:
    """Learning phase of a born agent; the agent is mature afterwards.

    ``learner`` overrides the learner built from ``cfg`` and the agent's
    learned behavior (used for instrumentation).
    """
    if agent.life_state is not LifeState.BORN:
        raise ProtocolError(f"infancy requires a born agent, agent {agent.id} is {agent.life_state.value}")
    if ledger is not None:
        ledger.charge(episodes)
    if learner is None:
        learner = make_learner(cfg, agent.learned, env.grid, rng)
    decay = cfg.eps_decay_episodes or episodes
    inst, total = run_episodes(
        agent.tree,
        learner,
        env,
        rng,
        episodes,
        lambda ep: linear_epsilon(ep, decay, cfg.eps_start, cfg.eps_end),
        on_step=on_step,
    )
    agent.instinct_steps += inst
    agent.total_steps += total
    agent.learner_updates += learner.update_count
    agent.learned = learner.behavior
    agent.mark_mature()
    return agent


def greedy_actions(learned: LearnedBehavior, grid: BinGrid, obs: np.ndarray) -> np.ndarray:
    if isinstance(learned, QTable):
        return learned.values[bin_index_batch(grid, obs)].argmax(axis=1)
    return mlp_forward(learned, obs).argmax(axis=1)


@dataclass
class Rollout:
    returns: np.ndarray
    instinct_steps: int
    total_steps: int


def evaluate_policy(
    tree: Optional[bt.Node],
    learned: LearnedBehavior,
    env: ControlEnv,
    grid: BinGrid,
    initial_states: np.ndarray,
) -> Rollout:
    """Greedy lockstep rollout of one episode per initial state; true returns.

    No learning happens here, and withholding reward has no effect on which
    actions are taken, so the rollout runs on the bare dynamics.
    """
    states = np.array(initial_states, dtype=float)
    n = states.shape[0]
    obs = env.batch_observe(states)
    returns = np.zeros(n)
    active = np.ones(n, dtype=bool)
    instinct = total = 0
    for _ in range(env.spec.max_episode_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        o = obs[idx]
        actions = bt.decide_batch(tree, o)
        learned_rows = actions < 0
        instinct += int(idx.size - learned_rows.sum())
        total += int(idx.size)
        if learned_rows.any():
            actions[learned_rows] = greedy_actions(learned, grid, o[learned_rows])
        nxt, reward, terminal = env.batch_step(states[idx], actions)
        states[idx] = nxt
        obs[idx] = env.batch_observe(nxt)
        returns[idx] += reward
        active[idx[terminal]] = False
    return Rollout(returns, instinct, total)


def evaluate_population(
    agents: list[Agent],
    env: ControlEnv,
    grid: BinGrid,
    initial_states: np.ndarray,
) -> list[Rollout]:
    """:func:`evaluate_policy` for many agents in one lockstep pass.

    Rows are grouped by agent so every elementwise operation sees the same
    values it would in a per-agent rollout; only the tree decision and,
    for networks, the forward pass run per agent.
    """
    m = len(agents)
    starts = np.asarray(initial_states, dtype=float)
    n = starts.shape[0]
    states = np.tile(starts, (m, 1))
    owner = np.repeat(np.arange(m), n)
    obs = env.batch_observe(states)
    returns = np.zeros(m * n)
    active = np.ones(m * n, dtype=bool)
    instinct = np.zeros(m, dtype=np.int64)
    total = np.zeros(m, dtype=np.int64)
    tables = None
    if m and all(isinstance(a.learned, QTable) for a in agents):
        tables = np.stack([a.learned.values for a in agents])
    for _ in range(env.spec.max_episode_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        o = obs[idx]
        who = owner[idx]
        bounds = np.searchsorted(who, np.arange(m + 1))
        actions = np.full(idx.size, -1, dtype=np.int64)
        for i, agent in enumerate(agents):
            lo, hi = bounds[i], bounds[i + 1]
            if agent.tree is not None and hi > lo:
                actions[lo:hi] = bt.decide_batch(agent.tree, o[lo:hi])
        learned_rows = actions < 0
        total += np.bincount(who, minlength=m)
        instinct += np.bincount(who[~learned_rows], minlength=m)
        if learned_rows.any():
            rows = np.flatnonzero(learned_rows)
            if tables is not None:
                bins = bin_index_batch(grid, o[rows])
                actions[rows] = tables[who[rows], bins].argmax(axis=1)
            else:
                for i, agent in enumerate(agents):
                    mine = rows[who[rows] == i]
                    if mine.size:
                        actions[mine] = greedy_actions(agent.learned, grid, o[mine])
        nxt, reward, terminal = env.batch_step(states[idx], actions)
        states[idx] = nxt
        obs[idx] = env.batch_observe(nxt)
        returns[idx] += reward
        active[idx[terminal]] = False
    return [Rollout(returns[i * n : (i + 1) * n], int(instinct[i]), int(total[i])) for i in range(m)]


def _record_eval(agent: Agent, result: Rollout) -> Agent:
    agent.eval_returns = result.returns
    agent.eval_instinct_steps = result.instinct_steps
    agent.eval_total_steps = result.total_steps
    agent.mark_fertile(float(np.mean(result.returns)))
    return agent


def maturity_eval(agent: Agent, env: ControlEnv, grid: BinGrid, initial_states: np.ndarray) -> Agent:
    """Score a mature agent on fixed initial states; the agent is fertile afterwards."""
    if agent.life_state is not LifeState.MATURE:
        raise ProtocolError(f"evaluation requires a mature agent, agent {agent.id} is {agent.life_state.value}")
    return _record_eval(agent, evaluate_policy(agent.tree, agent.learned, env, grid, initial_states))


def maturity_eval_all(agents: list[Agent], env: ControlEnv, grid: BinGrid, initial_states: np.ndarray) -> list[Agent]:
    """Batched :func:`maturity_eval` over a whole population."""
    for agent in agents:
        if agent.life_state is not LifeState.MATURE:
            raise ProtocolError(f"evaluation requires a mature agent, agent {agent.id} is {agent.life_state.value}")
    results = evaluate_population(agents, env, grid, initial_states)
    return [_record_eval(a, r) for a, r in zip(agents, results)]


def conception(
    population: list[Agent],
    gp: GPConfig,
    prims: PrimitiveSet,
    rng: np.random.Generator,
    next_id: int,
    transfer_learned: bool = True,
) -> list[Agent]:
    """Produce the next born generation from a fertile population.

    Parents are never modified. Elites are copied verbatim (tree and learned
    behavior); every other child gets a varied tree and, when
    ``transfer_learned``, the mutated average of both parents' learned
    behavior. Without transfer a child keeps its first parent's learned
    behavior unchanged.
    """
    for a in population:
        if a.life_state is not LifeState.FERTILE:
            raise ProtocolError(f"conception requires fertile agents, agent {a.id} is {a.life_state.value}")
    ranked = sorted(population, key=lambda a: (-a.fitness, a.id))
    children: list[Agent] = []
    for elite in ranked[: gp.elitism]:
        children.append(elite.offspring_copy(next_id))
        next_id += 1
    while len(children) < gp.population_size:
        pa = tournament_select(population, gp.tournament_k, rng)
        pb = tournament_select(population, gp.tournament_k, rng)
        ta, tb = subtree_crossover(pa.tree, pb.tree, rng, gp.crossover_rate, gp.max_depth, gp.max_nodes)
        for tree in (ta, tb):
            if len(children) >= gp.population_size:
                break
            tree = subtree_mutation(tree, rng, prims, gp.mutation_rate, gp.max_depth, gp.max_nodes)
            if transfer_learned:
                learned = mutate_inherited(
                    merge_learned(pa.learned, pb.learned),
                    rng,
                    gp.inherited_mutation_rate,
                    gp.inherited_element_prob,
                    gp.inherited_sigma,
                )
            else:
                learned = pa.learned.copy()
            children.append(Agent(next_id, tree, learned))
            next_id += 1
    return children


# ---------------------------------------------------------------------------
# runs


class _Setup:
    """Objects shared by every run mode, derived from the config and seed."""

    def __init__(self, cfg: EngineConfig):
        cfg.validate()
        self.cfg = cfg
        self.env = make_env(cfg.env)
        self.spec = self.env.spec
        self.threshold = self.spec.reward_threshold if cfg.reward_threshold is None else cfg.reward_threshold
        self.grid = BinGrid.for_spec(self.spec, cfg.bins_per_dim)
        self.mask = build_mask(self.grid, cfg.fraction, seeding.derive_seed(cfg.seed, seeding.MASK))
        self.prims = PrimitiveSet.for_spec(self.spec, cfg.gp.extended_primitives, cfg.gp.max_children)
        self.eval_states = self.env.sample_initial_states(
            seeding.stream(cfg.seed, seeding.EVAL), cfg.eval_episodes
        )

    def masked_env(self) -> MaskedEnv:
        return MaskedEnv(make_env(self.cfg.env), self.grid, self.mask)


def _develop(setup: _Setup, agent: Agent, generation: int) -> Agent:
    cfg = setup.cfg
    if cfg.mode == "evo-rl":
        rng = seeding.stream(cfg.seed, seeding.INFANCY, generation, agent.id)
        infancy(agent, setup.masked_env(), cfg.learner, rng, cfg.episodes_per_agent)
    else:
        agent.mark_mature()
    return agent


_WORKER_SETUP: _Setup | None = None


def _worker_init(cfg_dict):
    global _WORKER_SETUP
    _WORKER_SETUP = _Setup(EngineConfig.from_dict(cfg_dict))


def _worker_develop(args):
    agent, generation = args
    return _develop(_WORKER_SETUP, agent, generation)


class EvolutionRun:
    """Iterable Evo-RL or EA-only run; yields one :class:`RunRecord` per generation.

    Args:
        cfg: run configuration (``mode`` must be ``evo-rl`` or ``ea-only``).
        checkpoint_dir: when given, the born population of every next
            generation is written there as ``gen_XXXX.json``.
    """

    def __init__(self, cfg: EngineConfig, checkpoint_dir: str | Path | None = None):
        if cfg.mode not in ("evo-rl", "ea-only"):
            raise ConfigError(f"EvolutionRun handles evo-rl and ea-only, not {cfg.mode!r}")
        self.setup = _Setup(cfg)
        self.cfg = cfg
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        unit = "episodes" if cfg.mode == "evo-rl" else "individuals"
        self.ledger = BudgetLedger(unit, cfg.budget)
        self.records: list[RunRecord] = []
        self.champion: Agent | None = None
        self.generation = 0
        self.population = self._initial_population()
        self.next_id = len(self.population)
        self.finished = False

    def _initial_population(self) -> list[Agent]:
        cfg, s = self.cfg, self.setup
        trees = ramped_half_and_half(
            cfg.gp.population_size,
            seeding.stream(cfg.seed, seeding.INIT, 0),
            s.prims,
            cfg.gp.init_depth_range,
            cfg.gp.max_nodes,
        )
        agents = []
        for i, tree in enumerate(trees):
            learned = initial_behavior(
                cfg.learner, s.grid, s.spec.state_dim, s.spec.action_count, seeding.stream(cfg.seed, seeding.INIT, 1, i)
            )
            agents.append(Agent(i, tree, learned))
        return agents

    @property
    def cost_per_agent(self) -> int:
        return self.cfg.episodes_per_agent if self.cfg.mode == "evo-rl" else 1

    def _develop_all(self) -> list[Agent]:
        gen = self.generation
        if self.cfg.workers > 1:
            with ProcessPoolExecutor(
                self.cfg.workers, initializer=_worker_init, initargs=(self.cfg.to_dict(),)
            ) as pool:
                mature = list(pool.map(_worker_develop, [(a, gen) for a in self.population]))
        else:
            mature = [_develop(self.setup, a, gen) for a in self.population]
        s = self.setup
        return maturity_eval_all(mature, s.env, s.grid, s.eval_states)

    def __iter__(self) -> Iterator[RunRecord]:
        cfg = self.cfg
        while not self.finished and self.generation < cfg.gp.generations:
            cost = self.cost_per_agent * len(self.population)
            if self.ledger.remaining < cost:
                log.info("budget exhausted after %d %s", self.ledger.consumed, self.ledger.unit)
                break
            self.ledger.charge(cost)
            self.population = self._develop_all()
            record = self._score_generation()
            self.records.append(record)
            yield record
            if record.solved:
                break
            self.population = conception(
                self.population,
                cfg.gp,
                self.setup.prims,
                seeding.stream(cfg.seed, seeding.CONCEPTION, self.generation),
                self.next_id,
                transfer_learned=cfg.mode == "evo-rl",
            )
            self.next_id += len(self.population)
            if self.checkpoint_dir is not None:
                self.save_checkpoint(self.checkpoint_dir / f"gen_{self.generation:04d}.json")
        self.finished = True

    def _score_generation(self) -> RunRecord:
        self.generation += 1
        pop = self.population
        best = max(pop, key=lambda a: (a.fitness, -a.id))
        if self.champion is None or best.fitness > self.champion.fitness:
            self.champion = best
        champ = self.champion
        solved = champ.fitness >= self.setup.threshold
        if solved and self.ledger.solved_at is None:
            self.ledger.solved_at = self.ledger.consumed
        return RunRecord(
            generation=self.generation,
            evaluations=self.ledger.consumed,
            best_fitness=champ.fitness,
            mean_fitness=float(np.mean([a.fitness for a in pop])),
            instinct_ratio=champ.instinct_ratio(self.cfg.instinct_ratio_phase),
            solved=solved,
            best_tree=bt.to_sexpr(champ.tree),
        )

    def run(self) -> list[RunRecord]:
        for _ in self:
            pass
        return self.records

    # -- checkpoints ----------------------------------------------------
    def save_checkpoint(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        champ = self.champion
        data = {
            "version": CHECKPOINT_VERSION,
            "config": self.cfg.to_dict(),
            "generation": self.generation,
            "consumed": self.ledger.consumed,
            "solved_at": self.ledger.solved_at,
            "next_id": self.next_id,
            "records": [asdict(r) for r in self.records],
            "champion": None
            if champ is None
            else {
                "id": champ.id,
                "tree": bt.to_sexpr(champ.tree),
                "learned": learned_to_dict(champ.learned),
                "fitness": champ.fitness,
                "eval_instinct_steps": champ.eval_instinct_steps,
                "eval_total_steps": champ.eval_total_steps,
                "instinct_steps": champ.instinct_steps,
                "total_steps": champ.total_steps,
            },
            "population": [
                {"id": a.id, "tree": bt.to_sexpr(a.tree), "learned": learned_to_dict(a.learned)}
                for a in self.population
            ],
        }
        path.write_text(json.dumps(data, sort_keys=True))

    @classmethod
    def resume(cls, path: str | Path, checkpoint_dir: str | Path | None = None) -> "EvolutionRun":
        data = json.loads(Path(path).read_text())
        if data.get("version") != CHECKPOINT_VERSION:
            raise SchemaError(f"unsupported checkpoint version {data.get('version')!r}")
        run = cls(EngineConfig.from_dict(data["config"]), checkpoint_dir)
        run.generation = data["generation"]
        run.ledger.consumed = data["consumed"]
        run.ledger.solved_at = data["solved_at"]
        run.next_id = data["next_id"]
        run.records = [RunRecord(**r) for r in data["records"]]
        run.population = [
            Agent(p["id"], bt.parse_sexpr(p["tree"]), learned_from_dict(p["learned"])) for p in data["population"]
        ]
        c = data["champion"]
        if c is not None:
            champ = Agent(
                c["id"],
                bt.parse_sexpr(c["tree"]),
                learned_from_dict(c["learned"]),
                LifeState.FERTILE,
                c["fitness"],
                c["instinct_steps"],
                c["total_steps"],
                eval_instinct_steps=c["eval_instinct_steps"],
                eval_total_steps=c["eval_total_steps"],
            )
            run.champion = champ
        return run


class RLOnlyRun:
    """A single learner with no instinct, evaluated every ``eval_interval`` episodes."""

    def __init__(self, cfg: EngineConfig):
        if cfg.mode != "rl-only":
            raise ConfigError(f"RLOnlyRun handles rl-only, not {cfg.mode!r}")
        self.setup = _Setup(cfg)
        self.cfg = cfg
        s = self.setup
        learned = initial_behavior(
            cfg.learner, s.grid, s.spec.state_dim, s.spec.action_count, seeding.stream(cfg.seed, seeding.INIT, 1, 0)
        )
        self.agent = Agent(0, None, learned)
        self.rng = seeding.stream(cfg.seed, seeding.INFANCY, 0, 0)
        self.learner = make_learner(cfg.learner, learned, s.grid, self.rng)
        self.env = s.masked_env()
        self.ledger = BudgetLedger("episodes", cfg.budget)
        self.records: list[RunRecord] = []
        self.best_fitness = -math.inf

    def __iter__(self) -> Iterator[RunRecord]:
        cfg, s = self.cfg, self.setup
        decay = cfg.learner.eps_decay_episodes or max(cfg.budget, 1)
        eval_point = 0
        while self.ledger.remaining > 0:
            chunk = min(cfg.eval_interval, self.ledger.remaining)
            start = self.ledger.consumed
            self.ledger.charge(chunk)
            inst, total = run_episodes(
                None,
                self.learner,
                self.env,
                self.rng,
                chunk,
                lambda ep: linear_epsilon(ep, decay, cfg.learner.eps_start, cfg.learner.eps_end),
                first_episode=start,
            )
            self.agent.instinct_steps += inst
            self.agent.total_steps += total
            result = evaluate_policy(None, self.learner.behavior, s.env, s.grid, s.eval_states)
            mean = float(np.mean(result.returns))
            self.best_fitness = max(self.best_fitness, mean)
            solved = mean >= s.threshold
            eval_point += 1
            if solved and self.ledger.solved_at is None:
                self.ledger.solved_at = self.ledger.consumed
            record = RunRecord(eval_point, self.ledger.consumed, self.best_fitness, mean, 0.0, solved)
            self.records.append(record)
            yield record
            if solved:
                break
        self.agent.learned = self.learner.behavior
        self.agent.learner_updates = self.learner.update_count

    def run(self) -> list[RunRecord]:
        for _ in self:
            pass
        return self.records


def run_evo_rl(cfg: EngineConfig, **kwargs) -> EvolutionRun:
    if cfg.mode != "evo-rl":
        raise ConfigError("run_evo_rl requires mode 'evo-rl'")
    return EvolutionRun(cfg, **kwargs)


def run_ea_only(cfg: EngineConfig, **kwargs) -> EvolutionRun:
    if cfg.mode != "ea-only":
        raise ConfigError("run_ea_only requires mode 'ea-only'")
    return EvolutionRun(cfg, **kwargs)


def run_rl_only(cfg: EngineConfig) -> RLOnlyRun:
    return RLOnlyRun(cfg)


def make_run(cfg: EngineConfig, **kwargs):
    """Dispatch on ``cfg.mode``."""
    if cfg.mode == "rl-only":
        return RLOnlyRun(cfg)
    return EvolutionRun(cfg, **kwargs)
