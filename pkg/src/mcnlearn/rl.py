"""Baseline learners: DQN with a target network, and Monte-Carlo value training.

Both play full episodes on freshly sampled instances with an epsilon-greedy
policy (epsilon decays per environment step) and share the value network,
optimizer and checkpoint machinery of the curriculum trainer. Forced skip
transitions carry no decision and are settled silently between steps.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .curriculum import DistributionConfig, sample_instance
from .game import (
    GameState,
    Player,
    current_player,
    legal_actions,
    next_state,
    settle_skips,
    terminal_score,
)
from .nn.model import ModelConfig, ValueNetwork, q_forward, q_forward_tensor, value_forward, value_forward_tensor
from .nn.train import AdamState, adam_step
from .nn import autodiff as ad
from .seeding import derive_seed


@dataclass(frozen=True)
class EpsilonSchedule:
    """Exponentially decaying exploration rate."""

    eps_start: float = 0.9
    eps_end: float = 0.05
    t_decay: float = 1000.0

    def __post_init__(self):
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if self.t_decay <= 0:
            raise ValueError("t_decay must be positive")


def epsilon_at(sched: EpsilonSchedule, t: int) -> float:
    """eps(t) = end + (start - end) * exp(-t / t_decay)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return sched.eps_end + (sched.eps_start - sched.eps_end) * math.exp(-t / sched.t_decay)


class ReplayMemory:
    """Fixed-capacity FIFO buffer with i.i.d. batch sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._buf: list = []
        self._next = 0

    def push(self, record) -> None:
        if len(self._buf) < self.capacity:
            self._buf.append(record)
        else:
            self._buf[self._next] = record
            self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._buf)

    def items(self) -> list:
        """Records oldest first."""
        return self._buf[self._next :] + self._buf[: self._next]

    def sample(self, m: int, rng: np.random.Generator) -> list:
        if not self._buf:
            raise ValueError("cannot sample from an empty memory")
        idx = rng.integers(0, len(self._buf), size=m)
        return [self._buf[i] for i in idx]


@dataclass(frozen=True)
class TrainRunConfig:
    """Episode/optimization budget shared by the two baseline trainers."""

    episodes: int = 1000
    batch_size: int = 64
    t_target: int = 100
    memory_capacity: int = 10240
    memory_multiplier: int = 27
    lr: float = 1e-3
    eps: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    seed: int = 0
    max_updates: Optional[int] = None
    env_batch: int = 1
    episode_workers: int = 1

    def __post_init__(self):
        if min(self.episodes, self.batch_size, self.t_target, self.memory_capacity,
               self.memory_multiplier, self.env_batch, self.episode_workers) < 1:
            raise ValueError("all counts must be positive")


@dataclass
class TrainResult:
    net: ValueNetwork
    curve: list[dict]
    updates: int
    episodes: int


@dataclass(frozen=True)
class Transition:
    state: GameState
    action: int
    reward: int
    next: GameState
    terminal: bool


def _greedy_from_map(values: dict[int, float], maximize: bool) -> int:
    best_v, best_a = None, None
    for a in sorted(values):
        v = values[a]
        if best_v is None or (v > best_v if maximize else v < best_v):
            best_v, best_a = v, a
    return best_a


def dqn_target(record: Transition, q_fn: Callable[[GameState], dict[int, float]]) -> float:
    """One-step backup: r, plus the max (defender) or min (attacker) of the
    target network's values at the successor when it is not terminal."""
    if record.terminal:
        return float(record.reward)
    vals = q_fn(record.next)
    agg = max if current_player(record.next) is Player.DEFENDER else min
    return float(record.reward) + agg(vals.values())


def _epsilon_greedy_q(
    s: GameState, net: ValueNetwork, eps: float, rng: np.random.Generator
) -> int:
    acts = legal_actions(s)
    if rng.random() < eps:
        return int(rng.choice(acts))
    return _greedy_from_map(q_forward(s, net), current_player(s) is Player.DEFENDER)


def _epsilon_greedy_v(
    s: GameState, net: ValueNetwork, eps: float, rng: np.random.Generator
) -> int:
    acts = legal_actions(s)
    if rng.random() < eps:
        return int(rng.choice(acts))
    scores = {}
    for a in acts:
        child, reward = next_state(s, a)
        scores[a] = reward + value_forward(settle_skips(child), net)[0]
    return _greedy_from_map(scores, current_player(s) is Player.DEFENDER)


def multil_dqn_train(
    run_cfg: TrainRunConfig, dist_cfg: DistributionConfig, model_cfg: ModelConfig
) -> TrainResult:
    """Q-learning on full episodes with replay memory and a target network.

    ``env_batch`` instances step in lockstep (one optimization update per
    synchronized step), which reproduces batched episode generation while
    keeping the run deterministic under its seed.
    """
    seed = run_cfg.seed
    env_rng = np.random.default_rng(derive_seed(seed, "env"))
    batch_rng = np.random.default_rng(derive_seed(seed, "batch"))
    net = ValueNetwork.initialize(model_cfg, seed=derive_seed(seed, "qnet"), kind="q")
    target = net.copy()
    memory = ReplayMemory(run_cfg.memory_capacity)
    opt = AdamState.for_network(net)

    curve: list[dict] = []
    episodes_started = 0
    episodes_done = 0
    updates = 0
    step = 0

    def fresh() -> Optional[GameState]:
        nonlocal episodes_started, episodes_done
        while episodes_started < run_cfg.episodes:
            episodes_started += 1
            s = settle_skips(sample_instance(dist_cfg, env_rng))
            if current_player(s) is not Player.TERMINAL:
                return s
            episodes_done += 1
        return None

    envs: list[GameState] = []
    for _ in range(run_cfg.env_batch):
        s = fresh()
        if s is not None:
            envs.append(s)

    while envs:
        if run_cfg.max_updates is not None and updates >= run_cfg.max_updates:
            break
        next_envs: list[GameState] = []
        for s in envs:
            eps = epsilon_at(run_cfg.eps, step)
            a = _epsilon_greedy_q(s, net, eps, env_rng)
            child, reward = next_state(s, a)
            child = settle_skips(child)
            done = current_player(child) is Player.TERMINAL
            memory.push(Transition(s, a, reward, child, done))
            step += 1
            if done:
                episodes_done += 1
                replacement = fresh()
                if replacement is not None:
                    next_envs.append(replacement)
            else:
                next_envs.append(child)
        envs = next_envs

        batch = memory.sample(run_cfg.batch_size, batch_rng)
        targets = [dqn_target(t, lambda st: q_forward(st, target)) for t in batch]
        loss = _dqn_update(net, opt, batch, targets, run_cfg, updates)
        updates += 1
        if updates % run_cfg.t_target == 0:
            target = net.copy()
        curve.append({"update": updates, "loss": loss,
                      "epsilon": epsilon_at(run_cfg.eps, step), "episodes_seen": episodes_done})
    return TrainResult(net, curve, updates, episodes_done)


def _dqn_update(net, opt, batch, targets, run_cfg, update_idx) -> float:
    grad = np.zeros_like(net.theta)
    leaves = net.leaves(grad_buf=grad)
    rng = np.random.default_rng(derive_seed(run_cfg.seed, "dropout", update_idx))
    total = None
    for tr, y in zip(batch, targets):
        q_col = q_forward_tensor(tr.state, leaves, net.config, train=True, rng=rng)
        idx = tr.state.graph.index_of(tr.action)
        picked = (q_col * ad.Tensor(_one_hot(tr.state.graph.n, idx, net.config.dtype))).sum()
        diff = picked - ad.Tensor(np.asarray(y, dtype=net.config.dtype))
        sq = diff * diff
        total = sq if total is None else total + sq
    loss = total * (1.0 / len(batch))
    ad.backward(loss)
    adam_step(net, grad, opt, lr=run_cfg.lr)
    return float(loss.data)


def _one_hot(n: int, idx: int, dtype) -> np.ndarray:
    col = np.zeros((n, 1), dtype=dtype)
    col[idx, 0] = 1.0
    return col


def mc_backup(rewards: list[int], terminal: int) -> list[float]:
    """Return-to-go targets: y_t = r_t + y_{t+1}, seeded with the terminal score."""
    targets: list[float] = []
    acc = float(terminal)
    for r in reversed(rewards):
        acc += r
        targets.append(acc)
    targets.reverse()
    return targets


def _mc_episode(
    s0: GameState, net: ValueNetwork, sched: EpsilonSchedule, step0: int,
    rng: np.random.Generator,
) -> tuple[list[tuple[GameState, float]], int]:
    """Play one epsilon-greedy episode; returns (state, target) pairs."""
    s = settle_skips(s0)
    states: list[GameState] = []
    rewards: list[int] = []
    step = step0
    while current_player(s) is not Player.TERMINAL:
        states.append(s)
        a = _epsilon_greedy_v(s, net, epsilon_at(sched, step), rng)
        s, r = next_state(s, a)
        s = settle_skips(s)
        rewards.append(r)
        step += 1
    targets = mc_backup(rewards, terminal_score(s))
    return list(zip(states, targets)), step


def multil_mc_train(
    run_cfg: TrainRunConfig, dist_cfg: DistributionConfig, model_cfg: ModelConfig
) -> TrainResult:
    """Value-network training on Monte-Carlo episode returns.

    Memory capacity is ``memory_multiplier * batch_size``; every time a
    batch worth of new samples arrives, one full epoch over the shuffled
    memory runs, so each sample is revisited ``memory_multiplier`` times
    before eviction. ``episode_workers`` episodes are generated per round
    (in parallel when > 1) against the network as of the round start; each
    episode draws from its own derived seed, so a run is reproducible for
    any fixed worker count.
    """
    seed = run_cfg.seed
    shuffle_rng = np.random.default_rng(derive_seed(seed, "shuffle"))
    net = ValueNetwork.initialize(model_cfg, seed=derive_seed(seed, "vnet"), kind="value")
    opt = AdamState.for_network(net)
    m = run_cfg.batch_size
    memory = ReplayMemory(run_cfg.memory_multiplier * m)

    curve: list[dict] = []
    updates = 0
    step = 0
    new_samples = 0
    episodes_done = 0
    stop = False

    def run_epoch() -> None:
        nonlocal updates, stop
        items = memory.items()
        order = shuffle_rng.permutation(len(items))
        for start in range(0, len(order), m):
            if run_cfg.max_updates is not None and updates >= run_cfg.max_updates:
                stop = True
                return
            batch = [items[i] for i in order[start : start + m]]
            loss = _mc_update(net, opt, batch, run_cfg, updates)
            updates += 1
            curve.append({"update": updates, "loss": loss,
                          "epsilon": epsilon_at(run_cfg.eps, step),
                          "episodes_seen": episodes_done})

    def play(episode_idx: int, step0: int):
        rng = np.random.default_rng(derive_seed(seed, "episode", episode_idx))
        s0 = sample_instance(dist_cfg, rng)
        return _mc_episode(s0, net, run_cfg.eps, step0, rng)

    while episodes_done < run_cfg.episodes and not stop:
        round_size = min(run_cfg.episode_workers, run_cfg.episodes - episodes_done)
        first = episodes_done
        if round_size == 1:
            results = [play(first, step)]
        else:
            with ThreadPoolExecutor(max_workers=round_size) as pool:
                results = list(pool.map(lambda i: play(first + i, step), range(round_size)))
        for pairs, _end_step in results:
            step += len(pairs)
            episodes_done += 1
            for pair in pairs:
                memory.push(pair)
            new_samples += len(pairs)
            if new_samples >= m:
                new_samples = 0
                run_epoch()
                if stop:
                    break
    return TrainResult(net, curve, updates, episodes_done)


def _mc_update(net, opt, batch, run_cfg, update_idx) -> float:
    grad = np.zeros_like(net.theta)
    leaves = net.leaves(grad_buf=grad)
    rng = np.random.default_rng(derive_seed(run_cfg.seed, "mc_dropout", update_idx))
    total = None
    for state, y in batch:
        vhat, _ = value_forward_tensor(state, leaves, net.config, train=True, rng=rng)
        diff = vhat - ad.Tensor(np.asarray(y, dtype=net.config.dtype))
        sq = diff * diff
        total = sq if total is None else total + sq
    loss = total * (1.0 / len(batch))
    ad.backward(loss)
    adam_step(net, grad, opt, lr=run_cfg.lr)
    return float(loss.data)
