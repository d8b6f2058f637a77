"""File formats: instance records, checkpoints, manifests, experiment config.

Instance files are line-delimited JSON (one record per line, ``#`` lines
are comments). Checkpoints are binary with a versioned header and the
flat little-endian parameter array; round-trips are bit-exact. Manifests
record content hashes of the deterministic outputs of a run.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io as _io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .curriculum import CurriculumTrainConfig, DistributionConfig, ExpertList
from .game import BudgetTuple, GameState, StageKey
from .graph import Graph
from .nn.model import ModelConfig, ValueNetwork
from .rl import EpsilonSchedule, TrainRunConfig

INSTANCE_HEADER = "# mcnlearn-instances v1"
CHECKPOINT_MAGIC = b"MCNN"
EXPERTS_MAGIC = b"MCNX"
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    """A checkpoint file is corrupt or from an unknown format version."""


# -- instance records -------------------------------------------------------


@dataclass(frozen=True)
class InstanceRecord:
    """One serializable game instance, optionally with its exact solution."""

    id: str
    variant: str
    directed: bool
    nodes: tuple[int, ...]
    weights: tuple[int, ...]
    arcs: tuple[tuple[int, int], ...]
    budgets: tuple[int, int, int]
    attacked: tuple[int, ...] = ()
    exact_value: Optional[int] = None
    action_values: Optional[dict[int, int]] = None

    @classmethod
    def from_state(
        cls,
        instance_id: str,
        state: GameState,
        variant: Optional[str] = None,
        exact_value: Optional[int] = None,
        action_values: Optional[dict[int, int]] = None,
    ) -> "InstanceRecord":
        g = state.graph
        if variant is None:
            variant = "mcn_dir" if g.directed else (
                "mcn" if all(w == 1 for w in g.weights) else "mcn_w"
            )
        return cls(
            id=instance_id,
            variant=variant,
            directed=g.directed,
            nodes=g.nodes,
            weights=g.weights,
            arcs=g.arcs,
            budgets=state.budgets.as_tuple(),
            attacked=tuple(sorted(state.attacked)),
            exact_value=exact_value,
            action_values=action_values,
        )

    def to_state(self) -> GameState:
        g = Graph(self.nodes, self.weights, self.arcs, directed=self.directed)
        return GameState(g, BudgetTuple(*self.budgets), frozenset(self.attacked))

    def to_json(self) -> str:
        obj = {
            "id": self.id,
            "variant": self.variant,
            "directed": self.directed,
            "nodes": list(self.nodes),
            "weights": list(self.weights),
            "arcs": [list(a) for a in self.arcs],
            "budgets": list(self.budgets),
            "attacked": list(self.attacked),
        }
        if self.exact_value is not None:
            obj["exact_value"] = self.exact_value
        if self.action_values is not None:
            obj["action_values"] = {str(k): v for k, v in sorted(self.action_values.items())}
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "InstanceRecord":
        obj = json.loads(line)
        action_values = obj.get("action_values")
        if action_values is not None:
            action_values = {int(k): int(v) for k, v in action_values.items()}
        return cls(
            id=str(obj["id"]),
            variant=str(obj["variant"]),
            directed=bool(obj["directed"]),
            nodes=tuple(int(v) for v in obj["nodes"]),
            weights=tuple(int(w) for w in obj["weights"]),
            arcs=tuple((int(u), int(v)) for u, v in obj["arcs"]),
            budgets=tuple(int(b) for b in obj["budgets"]),
            attacked=tuple(int(v) for v in obj.get("attacked", ())),
            exact_value=None if obj.get("exact_value") is None else int(obj["exact_value"]),
            action_values=action_values,
        )


def write_instances(path, records: Iterable[InstanceRecord]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(INSTANCE_HEADER + "\n")
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_instances(path) -> list[InstanceRecord]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                out.append(InstanceRecord.from_json(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad instance record: {exc}") from exc
    return out


# -- checkpoints -------------------------------------------------------------


def _config_dict(cfg: ModelConfig) -> dict:
    return dataclasses.asdict(cfg)


def _write_net_blob(fh, net: ValueNetwork, stage: Optional[StageKey], meta: Optional[dict]):
    header = {
        "config": _config_dict(net.config),
        "kind": net.kind,
        "stage": stage.label() if stage is not None else None,
        "meta": meta or {},
        "dtype": str(net.theta.dtype),
        "count": int(net.theta.size),
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    fh.write(struct.pack("<I", len(payload)))
    fh.write(payload)
    data = np.ascontiguousarray(net.theta, dtype=net.theta.dtype)
    fh.write(data.astype(data.dtype.newbyteorder("<")).tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointFormatError(f"truncated checkpoint while reading {what}")
    return buf


def _read_net_blob(fh) -> tuple[ValueNetwork, Optional[StageKey], dict]:
    (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
    try:
        header = json.loads(_read_exact(fh, hlen, "header").decode("utf-8"))
        cfg = ModelConfig(**header["config"])
        count = int(header["count"])
        dtype = np.dtype(header["dtype"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"bad checkpoint header: {exc}") from exc
    raw = _read_exact(fh, count * dtype.itemsize, "parameters")
    theta = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype)
    net = ValueNetwork(cfg, theta, kind=header["kind"])
    stage = None if header["stage"] is None else StageKey.from_label(header["stage"])
    return net, stage, header.get("meta", {})


def save_network(path, net: ValueNetwork, stage: Optional[StageKey] = None, meta=None) -> None:
    with Path(path).open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        _write_net_blob(fh, net, stage, meta)


def load_network(path) -> tuple[ValueNetwork, Optional[StageKey], dict]:
    with Path(path).open("rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        return _read_net_blob(fh)


def save_expert_list(path, experts: ExpertList, meta=None) -> None:
    stages = sorted(experts.experts, key=lambda st: (st.phase.value, st.remaining))
    with Path(path).open("wb") as fh:
        fh.write(EXPERTS_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(stages)))
        header = json.dumps({"meta": meta or {}}, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for stage in stages:
            _write_net_blob(fh, experts.experts[stage], stage, None)


def load_expert_list(path) -> tuple[ExpertList, dict]:
    experts = ExpertList()
    with Path(path).open("rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != EXPERTS_MAGIC:
            raise CheckpointFormatError(f"bad magic {magic!r}, expected {EXPERTS_MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise CheckpointFormatError(f"unsupported expert-list version {version}")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "expert count"))
        (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "meta length"))
        meta = json.loads(_read_exact(fh, hlen, "meta").decode("utf-8")).get("meta", {})
        for _ in range(count):
            net, stage, _ = _read_net_blob(fh)
            if stage is None:
                raise CheckpointFormatError("expert blob is missing its stage key")
            experts.add(stage, net)
    return experts, meta


# -- CSV ---------------------------------------------------------------------


def write_csv(path, rows: list[dict], columns: list[str], append: bool = False) -> None:
    path = Path(path)
    new_file = not (append and path.exists())
    mode = "a" if append and path.exists() else "w"
    with path.open(mode, encoding="utf-8", newline="\n") as fh:
        if new_file:
            fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row.get(c)) for c in columns) + "\n")


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


# -- manifest ----------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config_obj: dict) -> str:
    return hashlib.sha256(
        json.dumps(config_obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


def write_manifest(
    path, config_obj: dict, seed: int, hashed_files: list, unhashed_files: list = ()
) -> dict:
    """Manifest of a run: config hash, seed, content hash per output.

    Timing-bearing outputs (training curves) are listed but not hashed so
    that identical (config, seed) runs produce identical manifests.
    """
    base = Path(path).parent
    manifest = {
        "format": "mcnlearn-manifest-v1",
        "config_hash": config_hash(config_obj),
        "master_seed": int(seed),
        "outputs": {
            str(Path(f).relative_to(base)): sha256_file(f) for f in sorted(map(str, hashed_files))
        },
        "unhashed_outputs": sorted(str(Path(f).relative_to(base)) for f in unhashed_files),
    }
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


# -- experiment configuration ------------------------------------------------

DISTRIBUTION_PRESETS: dict[str, DistributionConfig] = {
    # Reference experiment distributions.
    "D1": DistributionConfig(
        n_range=(10, 23), density_range=(0.1, 0.2), directed=False,
        weight_range=(1, 5), omega_range=(0, 3), phi_range=(1, 3), lambda_range=(0, 3),
    ),
    "D2": DistributionConfig(
        n_range=(20, 60), density_range=(0.05, 0.15), directed=False,
        weight_range=(1, 5), omega_range=(0, 3), phi_range=(1, 3), lambda_range=(0, 3),
    ),
    # CPU-scale distribution used by the acceptance experiments.
    "DESK": DistributionConfig(
        n_range=(8, 12), density_range=(0.15, 0.3), directed=False,
        weight_range=(1, 1), omega_range=(0, 1), phi_range=(1, 1), lambda_range=(0, 1),
    ),
}


@dataclass
class ExperimentConfig:
    """Everything a training/eval run needs, loadable from one JSON file."""

    distribution: DistributionConfig
    model: ModelConfig
    curriculum: CurriculumTrainConfig = field(default_factory=CurriculumTrainConfig)
    rl: TrainRunConfig = field(default_factory=TrainRunConfig)
    seed: int = 0
    out_dir: str = "runs/out"

    def to_dict(self) -> dict:
        return {
            "distribution": dataclasses.asdict(self.distribution),
            "model": dataclasses.asdict(self.model),
            "curriculum": dataclasses.asdict(self.curriculum),
            "rl": _rl_dict(self.rl),
            "seed": self.seed,
            "out_dir": self.out_dir,
        }


def _rl_dict(cfg: TrainRunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["eps"] = dataclasses.asdict(cfg.eps)
    return d


def _dist_from_obj(obj) -> DistributionConfig:
    if isinstance(obj, str):
        try:
            return DISTRIBUTION_PRESETS[obj]
        except KeyError:
            raise ValueError(
                f"unknown distribution preset {obj!r}; have {sorted(DISTRIBUTION_PRESETS)}"
            ) from None
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()}
    return DistributionConfig(**kwargs)


def _model_from_obj(obj, dist: DistributionConfig) -> ModelConfig:
    if obj is None or obj == "desk":
        return ModelConfig.desk(K=dist.max_nodes)
    if obj == "paper":
        return ModelConfig.paper_preset(K=dist.max_nodes)
    if isinstance(obj, str):
        raise ValueError(f"unknown model preset {obj!r}; have 'desk', 'paper'")
    obj = dict(obj)
    obj.setdefault("K", dist.max_nodes)
    return ModelConfig(**obj)


def load_experiment_config(path) -> ExperimentConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON: {exc}") from exc
    return experiment_config_from_dict(obj)


def experiment_config_from_dict(obj: dict) -> ExperimentConfig:
    if "distribution" not in obj:
        raise ValueError("config is missing the 'distribution' field")
    dist = _dist_from_obj(obj["distribution"])
    model = _model_from_obj(obj.get("model"), dist)
    cur = CurriculumTrainConfig(**obj.get("curriculum", {}))
    rl_obj = dict(obj.get("rl", {}))
    if "eps" in rl_obj:
        rl_obj["eps"] = EpsilonSchedule(**rl_obj["eps"])
    rl = TrainRunConfig(**rl_obj)
    return ExperimentConfig(
        distribution=dist,
        model=model,
        curriculum=cur,
        rl=rl,
        seed=int(obj.get("seed", 0)),
        out_dir=str(obj.get("out_dir", "runs/out")),
    )
