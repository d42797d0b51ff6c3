"""Reinforcement learners for the learnable part of an agent's behavior.

Two learned-behavior representations are supported:

* :class:`QTable` -- action values indexed by (state bin, action), used by
  :class:`QLearner`.
* :class:`MLPParams` -- a ReLU multilayer perceptron stored as one flat
  parameter vector, used by :class:`DQNLearner`.

Every learner treats a transition whose reward is ``None`` (a rewardless
state) as if it never happened: no buffer insert, no counter increment,
no parameter change.
"""

from __future__ import annotations

import json
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InvalidArgumentError, NumericFaultError, SchemaError
from .masking import BinGrid, bin_index, bin_index_batch


@dataclass
class Transition:
    obs: Sequence[float]
    action: int
    reward: Optional[float]
    next_obs: Sequence[float]
    terminal: bool


# ---------------------------------------------------------------------------
# learned-behavior representations


class QTable:
    """Sparse-by-convention action-value table.

    Values live in a dense ``(n_bins, n_actions)`` array; ``visited`` records
    which entries have been written. Unwritten entries read as ``0.0``.
    """

    def __init__(self, n_bins: int, n_actions: int, values=None, visited=None):
        self.n_bins = int(n_bins)
        self.n_actions = int(n_actions)
        shape = (self.n_bins, self.n_actions)
        self.values = np.zeros(shape) if values is None else np.array(values, dtype=float)
        self.visited = np.zeros(shape, dtype=bool) if visited is None else np.array(visited, dtype=bool)
        if self.values.shape != shape or self.visited.shape != shape:
            raise InvalidArgumentError(f"table arrays must have shape {shape}")

    @classmethod
    def from_entries(cls, n_bins: int, n_actions: int, entries: dict) -> "QTable":
        table = cls(n_bins, n_actions)
        for (b, a), v in entries.items():
            table.set(b, a, v)
        return table

    def set(self, b: int, a: int, value: float) -> None:
        self.values[b, a] = value
        self.visited[b, a] = True

    def entries(self) -> dict:
        return {(int(b), int(a)): float(self.values[b, a]) for b, a in zip(*np.nonzero(self.visited))}

    def copy(self) -> "QTable":
        return QTable(self.n_bins, self.n_actions, self.values.copy(), self.visited.copy())

    def mutable_values(self) -> np.ndarray:
        return self.values[self.visited]

    def with_mutable_values(self, new: np.ndarray) -> "QTable":
        out = self.copy()
        out.values[out.visited] = new
        return out

    def to_json(self) -> str:
        rows = [[b, a, v] for (b, a), v in sorted(self.entries().items())]
        return json.dumps({"kind": "qtable", "n_bins": self.n_bins, "n_actions": self.n_actions, "entries": rows})

    @classmethod
    def from_json(cls, text: str) -> "QTable":
        data = json.loads(text)
        if data.get("kind") != "qtable":
            raise SchemaError("not a serialized Q-table")
        table = cls(data["n_bins"], data["n_actions"])
        for b, a, v in data["entries"]:
            table.set(int(b), int(a), float(v))
        return table

    def to_bytes(self) -> bytes:
        return self.to_json().encode()

    def __eq__(self, other):
        if not isinstance(other, QTable):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __repr__(self):
        return f"QTable(n_bins={self.n_bins}, n_actions={self.n_actions}, entries={int(self.visited.sum())})"


class MLPParams:
    """Weights of a fully connected network ``sizes[0] -> ... -> sizes[-1]``.

    The flat layout is, per layer, the ``(fan_in, fan_out)`` weight matrix in
    row-major order followed by the bias vector.
    """

    def __init__(self, sizes: Sequence[int], flat: np.ndarray):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise InvalidArgumentError(f"invalid layer sizes {sizes!r}")
        self.flat = np.array(flat, dtype=np.float64).ravel()
        if self.flat.size != self.count(self.sizes):
            raise InvalidArgumentError(
                f"expected {self.count(self.sizes)} parameters for {self.sizes}, got {self.flat.size}"
            )

    @staticmethod
    def count(sizes: Sequence[int]) -> int:
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    @classmethod
    def initialize(cls, sizes: Sequence[int], rng: np.random.Generator, zero_output: bool = False) -> "MLPParams":
        """Uniform(+-1/sqrt(fan_in)) initialization."""
        parts = []
        pairs = list(zip(sizes[:-1], sizes[1:]))
        for i, (fan_in, fan_out) in enumerate(pairs):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=fan_in * fan_out)
            b = rng.uniform(-bound, bound, size=fan_out)
            if zero_output and i == len(pairs) - 1:
                w[:] = 0.0
                b[:] = 0.0
            parts += [w, b]
        return cls(sizes, np.concatenate(parts))

    def layers(self, flat: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(W, b)`` views into ``flat`` (defaults to this object's parameters)."""
        flat = self.flat if flat is None else flat
        out, pos = [], 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            w = flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            b = flat[pos : pos + fan_out]
            pos += fan_out
            out.append((w, b))
        return out

    def copy(self) -> "MLPParams":
        return MLPParams(self.sizes, self.flat.copy())

    def mutable_values(self) -> np.ndarray:
        return self.flat.copy()

    def with_mutable_values(self, new: np.ndarray) -> "MLPParams":
        return MLPParams(self.sizes, new)

    def to_bytes(self) -> bytes:
        header = struct.pack(f"<I{len(self.sizes)}I", len(self.sizes), *self.sizes)
        return header + self.flat.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "MLPParams":
        try:
            (n,) = struct.unpack_from("<I", data, 0)
            sizes = struct.unpack_from(f"<{n}I", data, 4)
        except struct.error as exc:
            raise SchemaError(f"truncated network header: {exc}") from None
        body = data[4 + 4 * n :]
        if len(body) != 8 * cls.count(sizes):
            raise SchemaError("network parameter payload has the wrong length")
        return cls(sizes, np.frombuffer(body, dtype="<f8").astype(np.float64))

    def __eq__(self, other):
        if not isinstance(other, MLPParams):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def __repr__(self):
        return f"MLPParams(sizes={self.sizes})"


LearnedBehavior = Union[QTable, MLPParams]


def merge_learned(a: LearnedBehavior, b: LearnedBehavior) -> LearnedBehavior:
    """Average two parents' learned behaviors.

    Networks are averaged element-wise. Q-tables are averaged over entries
    both parents have written; an entry written by only one parent is copied
    from that parent.
    """
    if isinstance(a, MLPParams) and isinstance(b, MLPParams):
        if a.sizes != b.sizes:
            raise InvalidArgumentError(f"network shapes differ: {a.sizes} vs {b.sizes}")
        return MLPParams(a.sizes, (a.flat + b.flat) / 2.0)
    if isinstance(a, QTable) and isinstance(b, QTable):
        if (a.n_bins, a.n_actions) != (b.n_bins, b.n_actions):
            raise InvalidArgumentError("Q-table shapes differ")
        both = a.visited & b.visited
        values = np.where(both, (a.values + b.values) / 2.0, np.where(a.visited, a.values, b.values))
        visited = a.visited | b.visited
        values = np.where(visited, values, 0.0)
        return QTable(a.n_bins, a.n_actions, values, visited)
    raise InvalidArgumentError(f"cannot merge {type(a).__name__} with {type(b).__name__}")


def learned_to_dict(learned: LearnedBehavior) -> dict:
    if isinstance(learned, QTable):
        return {"kind": "qtable", "json": learned.to_json()}
    return {"kind": "mlp", "hex": learned.to_bytes().hex()}


def learned_from_dict(data: dict) -> LearnedBehavior:
    if data.get("kind") == "qtable":
        return QTable.from_json(data["json"])
    if data.get("kind") == "mlp":
        return MLPParams.from_bytes(bytes.fromhex(data["hex"]))
    raise SchemaError(f"unknown learned-behavior kind {data.get('kind')!r}")


# ---------------------------------------------------------------------------
# MLP numerics


def mlp_forward(params: MLPParams, x: np.ndarray, flat: np.ndarray | None = None) -> np.ndarray:
    """Action values for a batch ``x`` of shape ``(n, sizes[0])``."""
    h = np.atleast_2d(np.asarray(x, dtype=float))
    layers = params.layers(flat)
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
    w, b = layers[-1]
    return h @ w + b


def td_loss_and_grad(
    params: MLPParams,
    x: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
    flat: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Mean squared error between ``Q(x, a)`` and ``targets`` and its gradient w.r.t. the flat parameters."""
    flat = params.flat if flat is None else flat
    layers = params.layers(flat)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    actions = np.asarray(actions, dtype=np.int64)
    n = x.shape[0]

    acts = [x]
    pre = []
    h = x
    for w, b in layers[:-1]:
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    w, b = layers[-1]
    q = h @ w + b

    rows = np.arange(n)
    err = q[rows, actions] - targets
    loss = float(np.mean(err**2))

    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * err / n
    grads = []
    delta = dq
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        grads.append((acts[li].T @ delta, delta.sum(axis=0)))
        if li > 0:
            delta = (delta @ w.T) * (pre[li - 1] > 0)
    grads.reverse()
    return loss, np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


# ---------------------------------------------------------------------------
# learners


class Learner(ABC):
    """Common interface for lifetime learners.

    ``epsilon`` is the exploration rate used by :meth:`act`; callers own the
    schedule. ``update_count`` counts parameter updates actually applied.
    """

    epsilon: float = 0.0
    update_count: int = 0

    @property
    @abstractmethod
    def behavior(self) -> LearnedBehavior:
        """The current learned behavior (a live reference, not a copy)."""

    @abstractmethod
    def greedy(self, obs: Sequence[float]) -> int: ...

    @abstractmethod
    def greedy_batch(self, obs: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def observe(self, transition: Transition) -> bool:
        """Learn from one transition; return whether any parameter changed."""

    def act(self, obs: Sequence[float], rng: np.random.Generator) -> int:
        if self.epsilon > 0.0 and rng.random() < self.epsilon:
            return int(rng.integers(self.n_actions))
        return self.greedy(obs)

    n_actions: int = 0


class QLearner(Learner):
    """One-step tabular Q-learning over a :class:`BinGrid` discretization."""

    def __init__(
        self,
        grid: BinGrid,
        n_actions: int,
        alpha: float = 0.1,
        gamma: float = 0.99,
        table: QTable | None = None,
        epsilon: float = 0.0,
    ):
        self.grid = grid
        self.n_actions = int(n_actions)
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.epsilon = float(epsilon)
        self.table = QTable(grid.total_bins, n_actions) if table is None else table.copy()
        if (self.table.n_bins, self.table.n_actions) != (grid.total_bins, self.n_actions):
            raise InvalidArgumentError("Q-table shape does not match grid and action count")
        self.update_count = 0

    @property
    def behavior(self) -> QTable:
        return self.table

    def greedy(self, obs) -> int:
        # argmax returns the first maximum: ties go to the lowest action id
        return int(self.table.values[bin_index(self.grid, obs)].argmax())

    def greedy_batch(self, obs: np.ndarray) -> np.ndarray:
        return self.table.values[bin_index_batch(self.grid, obs)].argmax(axis=1)

    def observe(self, tr: Transition) -> bool:
        if tr.reward is None:
            return False
        s = bin_index(self.grid, tr.obs)
        values = self.table.values
        if tr.terminal:
            target = tr.reward
        else:
            target = tr.reward + self.gamma * values[bin_index(self.grid, tr.next_obs)].max()
        values[s, tr.action] += self.alpha * (target - values[s, tr.action])
        self.table.visited[s, tr.action] = True
        self.update_count += 1
        return True


def q_act(learner: QLearner, obs, rng: np.random.Generator) -> int:
    return learner.act(obs, rng)


def q_observe(learner: QLearner, transition: Transition) -> bool:
    return learner.observe(transition)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of rewarded transitions."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise InvalidArgumentError("replay capacity must be positive")
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def push(self, tr: Transition) -> None:
        if tr.reward is None:
            raise InvalidArgumentError("transitions without reward are not admitted to replay")
        i = self._next
        self.obs[i] = tr.obs
        self.next_obs[i] = tr.next_obs
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        self.terminal[i] = tr.terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int):
        if self.size == 0:
            raise InvalidArgumentError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.terminal[idx]


class DQNLearner(Learner):
    """Minimal DQN: replay buffer, target network, plain SGD on the squared TD error."""

    def __init__(
        self,
        params: MLPParams,
        rng: np.random.Generator,
        gamma: float = 0.99,
        lr: float = 1e-3,
        batch_size: int = 32,
        buffer_capacity: int = 10_000,
        train_interval: int = 1,
        target_sync: int = 500,
        learning_starts: int | None = None,
        epsilon: float = 0.0,
    ):
        self.params = params.copy()
        self.target = params.copy()
        self.rng = rng
        self.n_actions = self.params.sizes[-1]
        self.gamma = float(gamma)
        self.lr = float(lr)
        self.batch_size = int(batch_size)
        self.train_interval = int(train_interval)
        self.target_sync = int(target_sync)
        self.learning_starts = self.batch_size if learning_starts is None else int(learning_starts)
        self.epsilon = float(epsilon)
        self.buffer = ReplayBuffer(buffer_capacity, self.params.sizes[0])
        self.steps = 0
        self.update_count = 0

    @property
    def behavior(self) -> MLPParams:
        return self.params

    def q_values(self, obs) -> np.ndarray:
        q = mlp_forward(self.params, obs)
        if not np.all(np.isfinite(q)):
            raise NumericFaultError("network produced non-finite action values")
        return q

    def greedy(self, obs) -> int:
        return int(self.q_values(obs)[0].argmax())

    def greedy_batch(self, obs: np.ndarray) -> np.ndarray:
        return self.q_values(obs).argmax(axis=1)

    def train_step(self) -> float:
        """One SGD step on a replay minibatch; returns the loss before the step."""
        obs, actions, rewards, next_obs, terminal = self.buffer.sample(self.rng, self.batch_size)
        next_q = mlp_forward(self.target, next_obs).max(axis=1)
        targets = rewards + self.gamma * next_q * (~terminal)
        loss, grad = td_loss_and_grad(self.params, obs, actions, targets)
        if not np.isfinite(loss):
            raise NumericFaultError("non-finite TD loss")
        self.params.flat -= self.lr * grad
        self.update_count += 1
        return loss

    def observe(self, tr: Transition) -> bool:
        if tr.reward is None:
            return False
        self.buffer.push(tr)
        self.steps += 1
        updated = False
        if self.steps % self.train_interval == 0 and len(self.buffer) >= self.learning_starts:
            self.train_step()
            updated = True
        if self.steps % self.target_sync == 0:
            self.target = self.params.copy()
        return updated


def dqn_act(learner: DQNLearner, obs, rng: np.random.Generator) -> int:
    return learner.act(obs, rng)


def dqn_observe(learner: DQNLearner, transition: Transition) -> bool:
    return learner.observe(transition)


# ---------------------------------------------------------------------------
# configuration


ALGORITHMS = ("q", "dqn")


@dataclass
class LearnerConfig:
    algo: str = "q"
    alpha: float = 0.1
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    # None: decay over the learning phase (infancy episodes, or the RL-only budget)
    eps_decay_episodes: Optional[int] = None
    hidden: int = 64
    lr: float = 1e-3
    batch_size: int = 32
    buffer_capacity: int = 10_000
    train_interval: int = 1
    target_sync: int = 500
    learning_starts: Optional[int] = None

    def validate(self) -> None:
        if self.algo == "ppo":
            raise InvalidArgumentError("algo 'ppo' is not implemented; use 'q' or 'dqn'")
        if self.algo not in ALGORITHMS:
            raise InvalidArgumentError(f"unknown learner {self.algo!r}; expected one of {ALGORITHMS}")
        for name in ("alpha", "gamma", "eps_start", "eps_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1], got {v!r}")
        if self.lr <= 0 or self.hidden < 1 or self.batch_size < 1 or self.buffer_capacity < 1:
            raise InvalidArgumentError("DQN sizes and learning rate must be positive")
        if self.train_interval < 1 or self.target_sync < 1:
            raise InvalidArgumentError("train_interval and target_sync must be >= 1")


def linear_epsilon(episode: int, n_episodes: int, start: float, end: float) -> float:
    """Exploration rate for ``episode`` (0-based) of a linear ``start -> end`` decay."""
    if n_episodes <= 1:
        return end if episode > 0 else start
    frac = min(max(episode / (n_episodes - 1), 0.0), 1.0)
    return start + (end - start) * frac


def initial_behavior(cfg: LearnerConfig, grid: BinGrid, state_dim: int, n_actions: int, rng) -> LearnedBehavior:
    if cfg.algo == "q":
        return QTable(grid.total_bins, n_actions)
    return MLPParams.initialize((state_dim, cfg.hidden, n_actions), rng)


def make_learner(cfg: LearnerConfig, learned: LearnedBehavior, grid: BinGrid, rng: np.random.Generator) -> Learner:
    if cfg.algo == "q":
        if not isinstance(learned, QTable):
            raise InvalidArgumentError("Q-learning requires a Q-table")
        return QLearner(grid, learned.n_actions, cfg.alpha, cfg.gamma, table=learned)
    if not isinstance(learned, MLPParams):
        raise InvalidArgumentError("DQN requires network parameters")
    return DQNLearner(
        learned,
        rng,
        gamma=cfg.gamma,
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        buffer_capacity=cfg.buffer_capacity,
        train_interval=cfg.train_interval,
        target_sync=cfg.target_sync,
        learning_starts=cfg.learning_starts,
    )
