"""Bottom-up curriculum: stage experts trained on greedy-rollout targets.

The total budget decomposes the game into stages (phase, remaining
units), ordered from the last protection unit up to the first vaccination
unit. Each stage gets a dataset of states produced by random prior play
(random rollback), labelled by a greedy rollout that scores afterstates
with the already-frozen lower-stage experts; terminal afterstates are
scored exactly. Training a network stage by stage and freezing a copy per
stage yields the expert list used by the greedy policy at inference.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .game import (
    SKIP,
    Action,
    BudgetTuple,
    GameState,
    Phase,
    Player,
    StageKey,
    current_player,
    initial_state,
    legal_actions,
    next_state,
    stage_of,
    terminal_score,
)
from .graph import generate_graph
from .nn.model import ModelConfig, ValueNetwork, value_forward
from .nn.train import AdamState, adam_step, batch_loss, loss_and_gradient
from .seeding import derive_seed


class MissingExpertError(KeyError):
    """A non-terminal afterstate has no trained expert for its stage."""


@dataclass(frozen=True)
class DistributionConfig:
    """Instance distribution: graph family plus budget ranges."""

    n_range: tuple[int, int]
    density_range: tuple[float, float]
    directed: bool = False
    weight_range: tuple[int, int] = (1, 1)
    omega_range: tuple[int, int] = (0, 0)
    phi_range: tuple[int, int] = (1, 1)
    lambda_range: tuple[int, int] = (0, 0)

    def __post_init__(self):
        for name in ("n_range", "omega_range", "phi_range", "lambda_range", "weight_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: [{lo}, {hi}]")
            if lo < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_range[0] < 1:
            raise ValueError("n_range must start at 1 or more")

    @property
    def variant(self) -> str:
        if self.directed:
            return "mcn_dir"
        if self.weight_range != (1, 1):
            return "mcn_w"
        return "mcn"

    @property
    def max_nodes(self) -> int:
        return self.n_range[1]


@dataclass(frozen=True)
class StageDatasetRecord:
    """One supervised pair: a stage state and its greedy-rollout value."""

    state: GameState
    target: float


def sample_instance(
    cfg: DistributionConfig,
    rng: np.random.Generator,
    budget_floors: tuple[int, int, int] = (0, 0, 0),
) -> GameState:
    """Draw a fresh instance; ``budget_floors`` raise the per-phase minimum."""

    def draw(rg: tuple[int, int], floor: int) -> int:
        lo = max(rg[0], floor)
        if lo > rg[1]:
            raise ValueError(f"budget floor {floor} exceeds range {rg}")
        return int(rng.integers(lo, rg[1] + 1))

    n = int(rng.integers(cfg.n_range[0], cfg.n_range[1] + 1))
    g = generate_graph(n, cfg.density_range, cfg.directed, cfg.weight_range, rng=rng)
    omega = draw(cfg.omega_range, budget_floors[0])
    phi = draw(cfg.phi_range, budget_floors[1])
    lam = draw(cfg.lambda_range, budget_floors[2])
    return initial_state(g, omega, phi, lam)


def enumerate_stages(cfg: DistributionConfig) -> list[StageKey]:
    """Stages needing an expert, bottom-up; the topmost stage is dropped.

    Decisions are taken over afterstates, so states of the very first
    stage are never fed to a network and no expert is trained for it.
    """
    stages: list[StageKey] = []
    for phase, hi in (
        (Phase.PROTECTION, cfg.lambda_range[1]),
        (Phase.ATTACK, cfg.phi_range[1]),
        (Phase.VACCINATION, cfg.omega_range[1]),
    ):
        stages.extend(StageKey(phase, k) for k in range(1, hi + 1))
    return stages[:-1] if stages else []


def _stage_rank(stage: StageKey) -> tuple[int, int]:
    return (stage.phase.value, stage.remaining)


def random_rollback(
    cfg: DistributionConfig,
    stage: StageKey,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GameState:
    """Sample an instance and play random moves until it sits at ``stage``.

    Budgets are conditioned so the stage is reachable. On tiny graphs a
    forced skip can jump past the target, in which case a fresh instance
    is drawn.
    """
    if stage not in enumerate_stages(cfg):
        raise ValueError(f"{stage!r} is not a stage of this distribution")
    if rng is None:
        rng = np.random.default_rng(seed)
    floors = [0, 0, 0]
    floors[{Phase.VACCINATION: 0, Phase.ATTACK: 1, Phase.PROTECTION: 2}[stage.phase]] = (
        stage.remaining
    )
    want = _stage_rank(stage)
    while True:
        s = sample_instance(cfg, rng, budget_floors=tuple(floors))
        while True:
            here = stage_of(s)
            if here is not None and _stage_rank(here) == want:
                return s
            if here is None or _stage_rank(here) < want:
                break
            acts = legal_actions(s)
            a: Action = int(rng.choice(acts)) if acts else SKIP
            s, _ = next_state(s, a)


class ExpertList:
    """Frozen per-stage value networks; terminal states bypass the list."""

    def __init__(self):
        self.experts: dict[StageKey, ValueNetwork] = {}

    def add(self, stage: StageKey, net: ValueNetwork) -> None:
        if stage in self.experts:
            raise ValueError(f"stage {stage!r} already has an expert")
        self.experts[stage] = net.copy(frozen=True)

    def has(self, stage: StageKey) -> bool:
        return stage in self.experts

    def __len__(self) -> int:
        return len(self.experts)

    def value_of(self, s: GameState) -> float:
        """Score a state: terminal score if over, else its stage's expert."""
        stage = stage_of(s)
        if stage is None:
            return float(terminal_score(s))
        net = self.experts.get(stage)
        if net is None:
            raise MissingExpertError(f"no expert for stage {stage!r}")
        return value_forward(s, net)[0]


def greedy_policy_value(s: GameState, experts) -> tuple[float, list[Action]]:
    """Play greedily against the expert scores; returns (value, actions).

    At every step all afterstates are generated and scored as immediate
    reward plus the expert value (exact terminal score for terminal
    afterstates); the defender takes the max, the attacker the min, ties
    broken by lowest node id. The returned value is the realized episode
    value: accumulated rewards plus the final terminal score.
    """
    total = 0.0
    actions: list[Action] = []
    while current_player(s) is not Player.TERMINAL:
        acts = legal_actions(s)
        if not acts:
            s, r = next_state(s, SKIP)
            total += r
            actions.append(SKIP)
            continue
        maximize = current_player(s) is Player.DEFENDER
        best = None
        for a in acts:
            child, reward = next_state(s, a)
            score = reward + experts.value_of(child)
            if best is None or (score > best[0] if maximize else score < best[0]):
                best = (score, a, child, reward)
        _, a, child, reward = best
        total += reward
        actions.append(a)
        s = child
    return total + terminal_score(s), actions


def greedy_rollout(s: GameState, experts) -> float:
    """Value of the greedy-against-experts episode from ``s``."""
    return greedy_policy_value(s, experts)[0]


@dataclass(frozen=True)
class CurriculumTrainConfig:
    """Per-stage dataset sizes and optimization knobs."""

    train_size: int = 5000
    val_size: int = 500
    epochs: int = 12
    batch_size: int = 64
    t_val: int = 25
    lr: float = 1e-3
    threads: int = 1
    max_updates_per_stage: Optional[int] = None


def build_stage_dataset(
    cfg: DistributionConfig,
    stage: StageKey,
    experts,
    train_size: int,
    val_size: int,
    seed: int,
    threads: int = 1,
) -> tuple[list[StageDatasetRecord], list[StageDatasetRecord]]:
    """Sample (state, greedy target) pairs for one stage.

    Each record gets its own derived seed, so the result is independent of
    the worker count and any record can be regenerated alone.
    """

    def make(split: str, i: int) -> StageDatasetRecord:
        state = random_rollback(cfg, stage, seed=derive_seed(seed, split, i))
        return StageDatasetRecord(state, greedy_rollout(state, experts))

    def build(split: str, count: int) -> list[StageDatasetRecord]:
        if threads <= 1:
            return [make(split, i) for i in range(count)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda i: make(split, i), range(count)))

    return build("train", train_size), build("val", val_size)


def train_stage(
    stage: StageKey,
    train_set: Sequence[StageDatasetRecord],
    val_set: Sequence[StageDatasetRecord],
    net: ValueNetwork,
    train_cfg: CurriculumTrainConfig,
    seed: int,
) -> tuple[ValueNetwork, list[dict], float]:
    """Mini-batch MSE training with periodic validation checkpointing.

    Mutates ``net`` (the running parameters) in place and returns the
    frozen best-on-validation snapshot, the training-curve rows and the
    best validation loss. The initial parameters are validated before any
    update, so zero epochs is well defined.
    """
    rng = np.random.default_rng(derive_seed(seed, "shuffle"))
    pairs = [(r.state, r.target) for r in train_set]
    val_pairs = [(r.state, r.target) for r in val_set]
    opt = AdamState.for_network(net)

    t0 = time.perf_counter()

    def elapsed_ms() -> float:
        return (time.perf_counter() - t0) * 1000.0

    def validate() -> float:
        return batch_loss(net, val_pairs) if val_pairs else float("inf")

    best_val = validate()
    best_theta = net.theta.copy()
    rows: list[dict] = [
        {"stage": stage.label(), "update": 0, "train_mse": float("nan"),
         "val_mse": best_val, "wall_ms": elapsed_ms()}
    ]
    updates = 0
    m = train_cfg.batch_size
    done = False
    for _ in range(train_cfg.epochs):
        if done:
            break
        order = rng.permutation(len(pairs))
        for start in range(0, len(order), m):
            batch = [pairs[i] for i in order[start : start + m]]
            loss, grad = loss_and_gradient(
                net, batch, train=True, dropout_seed=derive_seed(seed, "dropout", updates)
            )
            adam_step(net, grad, opt, lr=train_cfg.lr)
            updates += 1
            if updates % train_cfg.t_val == 0:
                val = validate()
                if val < best_val:
                    best_val = val
                    best_theta = net.theta.copy()
                rows.append({"stage": stage.label(), "update": updates,
                             "train_mse": loss, "val_mse": val, "wall_ms": elapsed_ms()})
            else:
                rows.append({"stage": stage.label(), "update": updates,
                             "train_mse": loss, "val_mse": float("nan"),
                             "wall_ms": elapsed_ms()})
            if (train_cfg.max_updates_per_stage is not None
                    and updates >= train_cfg.max_updates_per_stage):
                done = True
                break
    final_val = validate()
    if final_val < best_val:
        best_val = final_val
        best_theta = net.theta.copy()
    best_theta = best_theta.copy()
    best_theta.flags.writeable = False
    return ValueNetwork(net.config, best_theta, kind=net.kind), rows, best_val


@dataclass
class CurriculumResult:
    experts: ExpertList
    stages: list[StageKey]
    history: list[dict] = field(default_factory=list)
    summaries: list[dict] = field(default_factory=list)
    total_updates: int = 0


def run_curriculum(
    dist_cfg: DistributionConfig,
    model_cfg: ModelConfig,
    train_cfg: CurriculumTrainConfig,
    seed: int,
    existing: Optional[ExpertList] = None,
    log=None,
) -> CurriculumResult:
    """Train one expert per stage, bottom-up, warm-starting each stage.

    ``existing`` experts (e.g. from an interrupted run) are kept and their
    stages skipped; training still needs every lower stage present.
    """
    stages = enumerate_stages(dist_cfg)
    experts = existing if existing is not None else ExpertList()
    running = ValueNetwork.initialize(model_cfg, seed=derive_seed(seed, "init"))
    result = CurriculumResult(experts=experts, stages=stages)
    for idx, stage in enumerate(stages):
        if experts.has(stage):
            continue
        stage_seed = derive_seed(seed, "stage", idx)
        t0 = time.perf_counter()
        train_set, val_set = build_stage_dataset(
            dist_cfg, stage, experts, train_cfg.train_size, train_cfg.val_size,
            seed=stage_seed, threads=train_cfg.threads,
        )
        data_s = time.perf_counter() - t0
        expert, rows, best_val = train_stage(stage, train_set, val_set, running, train_cfg, stage_seed)
        experts.add(stage, expert)
        result.history.extend(rows)
        n_updates = max(r["update"] for r in rows)
        result.total_updates += n_updates
        summary = {
            "stage": stage.label(),
            "updates": n_updates,
            "final_train_mse": rows[-1]["train_mse"],
            "best_val_mse": best_val,
            "dataset_s": round(data_s, 3),
            "train_s": round(time.perf_counter() - t0 - data_s, 3),
        }
        result.summaries.append(summary)
        if log is not None:
            log(summary)
    return result
