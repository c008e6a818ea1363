"""Three parameter-isolated Q-learning agents and their machinery.

The cluster picker (C1), the operator picker (Op), and the second cluster
picker (C2, active only for binary operators) each own a small
fully-connected Q-network, a target copy of it, and a FIFO replay buffer.
Nothing is shared between them except the scalar reward.

State encodings are fixed-width regardless of how many features the table
currently has: every column is summarized by 7 descriptive statistics and
the resulting (m x 7) matrix is summarized again column-wise, giving a
49-value dataset descriptor.

    C1  : 49   (dataset descriptor)
    Op  : 98   (dataset ++ selected-cluster descriptor)
    C2  : 113  (dataset ++ cluster ++ 15-slot operator one-hot)

Networks are plain numpy (float64, SGD, gradient-norm clip) so training is
bit-reproducible and the analytic gradients can be checked directly
against finite differences.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import DataTable, column_stats
from .errors import InsufficientSamples, MissingContext, NoValidAction
from .transform import N_OPERATORS

DESCRIPTOR_SIZE = 49  # 7 stats of 7 per-column stats


class Role(Enum):
    C1 = "C1"
    OP = "Op"
    C2 = "C2"


class Variant(Enum):
    DQN = "dqn"
    DDQN = "ddqn"
    DUELING_DQN = "dueling"
    DUELING_DDQN = "duelingddqn"


def is_dueling(variant: Variant) -> bool:
    return variant in (Variant.DUELING_DQN, Variant.DUELING_DDQN)


def is_double(variant: Variant) -> bool:
    return variant in (Variant.DDQN, Variant.DUELING_DDQN)


@dataclass(frozen=True)
class StateVector:
    values: np.ndarray
    role: Role

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if not np.all(np.isfinite(v)):
            raise ValueError("state entries must be finite")


@dataclass(frozen=True)
class Transition:
    state: StateVector
    action: int
    reward: float
    next_state: StateVector
    terminal: bool


class ReplayBuffer:
    """Bounded FIFO of transitions; eviction is strictly oldest-first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.entries: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.entries)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if len(self.entries) < batch_size:
            raise InsufficientSamples(f"buffer holds {len(self.entries)} < batch {batch_size}")
        idx = rng.integers(0, len(self.entries), size=batch_size)
        return [self.entries[int(i)] for i in idx]


def store(buffer: ReplayBuffer, transition: Transition) -> None:
    buffer.entries.append(transition)


@dataclass(frozen=True)
class AgentConfig:
    variant: Variant = Variant.DQN
    gamma: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 30
    lr: float = 1e-3
    batch_size: int = 32
    buffer_capacity: int = 512
    target_sync: int = 10
    hidden: tuple = (64, 64)
    grad_clip: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.epsilon_end > self.epsilon_start:
            raise ValueError("epsilon_end must not exceed epsilon_start")
        for name in ("epsilon_decay_steps", "lr", "batch_size", "buffer_capacity", "target_sync"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class QNetwork:
    """Fully-connected Q-value network with a delayed target copy.

    ReLU hidden layers of the given widths; the dueling variant splits
    after the trunk into a scalar state value V and per-action advantages
    A, combined as Q = V + A - mean(A). Parameters are float64 throughout.
    """

    def __init__(self, in_dim: int, n_actions: int, hidden=(64, 64), dueling: bool = False, seed: int = 0):
        self.in_dim = in_dim
        self.n_actions = n_actions
        self.hidden = tuple(hidden)
        self.dueling = dueling
        self.update_count = 0
        rng = np.random.default_rng(seed)
        self.params: list[np.ndarray] = []
        prev = in_dim
        for width in self.hidden:
            self.params.append(rng.normal(0.0, np.sqrt(2.0 / prev), size=(prev, width)))
            self.params.append(np.zeros(width))
            prev = width
        if dueling:
            self.params.append(rng.normal(0.0, np.sqrt(2.0 / prev), size=(prev, 1)))
            self.params.append(np.zeros(1))
            self.params.append(rng.normal(0.0, np.sqrt(2.0 / prev), size=(prev, n_actions)))
            self.params.append(np.zeros(n_actions))
        else:
            self.params.append(rng.normal(0.0, np.sqrt(2.0 / prev), size=(prev, n_actions)))
            self.params.append(np.zeros(n_actions))
        self.target_params = [p.copy() for p in self.params]

    # -- forward -----------------------------------------------------------

    def _forward(self, X: np.ndarray, params: list[np.ndarray], keep: bool = False):
        acts = [X]
        pre = []
        a = X
        n_trunk = len(self.hidden)
        for layer in range(n_trunk):
            W, b = params[2 * layer], params[2 * layer + 1]
            z = a @ W + b
            a = np.maximum(z, 0.0)
            if keep:
                pre.append(z)
                acts.append(a)
        if self.dueling:
            Wv, bv, Wa, ba = params[2 * n_trunk : 2 * n_trunk + 4]
            v = a @ Wv + bv
            adv = a @ Wa + ba
            q = v + adv - adv.mean(axis=1, keepdims=True)
        else:
            W, b = params[2 * n_trunk], params[2 * n_trunk + 1]
            q = a @ W + b
        if keep:
            return q, acts, pre
        return q

    def q_values(self, state_values, target: bool = False) -> np.ndarray:
        x = np.atleast_2d(np.asarray(state_values, dtype=np.float64))
        params = self.target_params if target else self.params
        return self._forward(x, params)[0]

    # -- training ----------------------------------------------------------

    def batch_loss(self, states: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> float:
        q = self._forward(states, self.params)
        sel = q[np.arange(states.shape[0]), actions]
        return float(np.mean((targets - sel) ** 2))

    def loss_and_grads(self, states: np.ndarray, actions: np.ndarray, targets: np.ndarray):
        B = states.shape[0]
        q, acts, pre = self._forward(states, self.params, keep=True)
        sel = q[np.arange(B), actions]
        loss = float(np.mean((targets - sel) ** 2))

        G = np.zeros_like(q)
        G[np.arange(B), actions] = 2.0 * (sel - targets) / B
        grads: list[Optional[np.ndarray]] = [None] * len(self.params)
        n_trunk = len(self.hidden)
        h = acts[-1]
        if self.dueling:
            gV = G.sum(axis=1, keepdims=True)
            gA = G - G.sum(axis=1, keepdims=True) / self.n_actions
            Wv, _, Wa, _ = self.params[2 * n_trunk : 2 * n_trunk + 4]
            grads[2 * n_trunk] = h.T @ gV
            grads[2 * n_trunk + 1] = gV.sum(axis=0)
            grads[2 * n_trunk + 2] = h.T @ gA
            grads[2 * n_trunk + 3] = gA.sum(axis=0)
            upstream = gV @ Wv.T + gA @ Wa.T
        else:
            W = self.params[2 * n_trunk]
            grads[2 * n_trunk] = h.T @ G
            grads[2 * n_trunk + 1] = G.sum(axis=0)
            upstream = G @ W.T
        for layer in range(n_trunk - 1, -1, -1):
            dz = upstream * (pre[layer] > 0.0)
            grads[2 * layer] = acts[layer].T @ dz
            grads[2 * layer + 1] = dz.sum(axis=0)
            upstream = dz @ self.params[2 * layer].T
        return loss, grads

    def apply_gradients(self, grads, lr: float, clip: float) -> None:
        norm = np.sqrt(sum(float(np.sum(g**2)) for g in grads))
        scale = clip / norm if norm > clip else 1.0
        for p, g in zip(self.params, grads):
            p -= lr * scale * g

    def sync_target(self) -> None:
        self.target_params = [p.copy() for p in self.params]

    # -- serialization helpers ---------------------------------------------

    @property
    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    @flat_params.setter
    def flat_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for p in self.params:
            p[...] = flat[offset : offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != flat.size:
            raise ValueError("flat parameter vector has the wrong length")


# -- state encoding ----------------------------------------------------------


_STAT_CAP = 1e15  # moments of extreme-magnitude columns overflow float64


def _safe_stats(vector: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # saturation below is deliberate
        stats = column_stats(vector)
    return np.clip(np.nan_to_num(stats, nan=0.0, posinf=_STAT_CAP, neginf=-_STAT_CAP),
                   -_STAT_CAP, _STAT_CAP)


def dataset_descriptor(X: np.ndarray) -> np.ndarray:
    """49-value fixed-width summary of a column matrix (zeros if empty).

    Total over any finite input: statistics that overflow (squares of
    1e200-scale columns) saturate at +-1e15 instead of poisoning the
    state with infinities.
    """
    if X.size == 0:
        return np.zeros(DESCRIPTOR_SIZE)
    per_column = np.stack([_safe_stats(X[:, j]) for j in range(X.shape[1])])
    return np.concatenate([_safe_stats(per_column[:, t]) for t in range(per_column.shape[1])])


def operator_onehot(op_index: int) -> np.ndarray:
    onehot = np.zeros(N_OPERATORS)
    onehot[op_index] = 1.0
    return onehot


def encode_state(table: DataTable, role: Role, selected_cluster=None, op_onehot=None) -> StateVector:
    """Role-specific fixed-width state encoding.

    C1 sees the dataset descriptor; Op additionally sees the descriptor of
    the cluster C1 picked; C2 additionally sees the chosen operator's
    one-hot. Passing context a role does not need is rejected, as is
    omitting context it does.
    """
    if role is Role.C1:
        if selected_cluster is not None or op_onehot is not None:
            raise ValueError("C1 takes no selection context")
        return StateVector(dataset_descriptor(table.X), role)
    if selected_cluster is None:
        raise MissingContext(f"{role.value} requires the selected cluster")
    cluster_idx = sorted(selected_cluster)
    cluster_block = dataset_descriptor(table.X[:, cluster_idx])
    if role is Role.OP:
        if op_onehot is not None:
            raise ValueError("Op does not see an operator one-hot")
        return StateVector(np.concatenate([dataset_descriptor(table.X), cluster_block]), role)
    if op_onehot is None:
        raise MissingContext("C2 requires the operator one-hot")
    onehot = np.asarray(op_onehot, dtype=np.float64)
    if onehot.shape != (N_OPERATORS,):
        raise ValueError(f"operator one-hot must have length {N_OPERATORS}")
    return StateVector(
        np.concatenate([dataset_descriptor(table.X), cluster_block, onehot]), role
    )


# -- action selection and learning -------------------------------------------


def select_action(net: QNetwork, state: StateVector, valid_mask, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the masked actions; greedy ties go to the lowest index."""
    mask = np.asarray(valid_mask, dtype=bool)
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise NoValidAction("mask excludes every action")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(valid[rng.integers(valid.size)])
    q = net.q_values(state.values)
    masked = np.where(mask, q, -np.inf)
    return int(np.argmax(masked))


def td_target(variant: Variant, transition: Transition, net: QNetwork, gamma: float) -> float:
    """Bootstrap target: plain variants max over the target net, double
    variants evaluate the online argmax with the target net."""
    if transition.terminal:
        return float(transition.reward)
    next_values = transition.next_state.values
    q_target = net.q_values(next_values, target=True)
    if is_double(variant):
        a_star = int(np.argmax(net.q_values(next_values)))
        bootstrap = q_target[a_star]
    else:
        bootstrap = q_target.max()
    return float(transition.reward + gamma * bootstrap)


def train_step(net: QNetwork, buffer: ReplayBuffer, config: AgentConfig, rng: np.random.Generator) -> float:
    """One SGD step on a uniformly sampled batch; returns the pre-step loss."""
    batch = buffer.sample(config.batch_size, rng)
    states = np.stack([t.state.values for t in batch])
    actions = np.array([t.action for t in batch], dtype=np.intp)
    targets = np.array([td_target(config.variant, t, net, config.gamma) for t in batch])
    loss, grads = net.loss_and_grads(states, actions, targets)
    net.apply_gradients(grads, lr=config.lr, clip=config.grad_clip)
    net.update_count += 1
    if net.update_count % config.target_sync == 0:
        net.sync_target()
    return loss


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(net: QNetwork, prefix, variant: Variant) -> None:
    """Write `<prefix>.bin` (flat little-endian float64) and `<prefix>.json`."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    net.flat_params.astype("<f8").tofile(prefix.with_suffix(".bin"))
    sidecar = {
        "in_dim": net.in_dim,
        "n_actions": net.n_actions,
        "hidden": list(net.hidden),
        "dueling": net.dueling,
        "variant": variant.value,
        "update_count": net.update_count,
        "shapes": [list(p.shape) for p in net.params],
    }
    prefix.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_checkpoint(prefix) -> tuple[QNetwork, Variant]:
    prefix = Path(prefix)
    sidecar = json.loads(prefix.with_suffix(".json").read_text())
    net = QNetwork(
        in_dim=sidecar["in_dim"],
        n_actions=sidecar["n_actions"],
        hidden=tuple(sidecar["hidden"]),
        dueling=sidecar["dueling"],
    )
    flat = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8")
    net.flat_params = flat
    net.sync_target()
    net.update_count = sidecar["update_count"]
    return net, Variant(sidecar["variant"])


# -- orchestration-facing bundle ----------------------------------------------


@dataclass
class Agent:
    """One decision maker: its role, network, buffer, and private RNG streams."""

    role: Role
    config: AgentConfig
    net: QNetwork
    buffer: ReplayBuffer
    rng_policy: np.random.Generator = field(repr=False, default=None)
    rng_train: np.random.Generator = field(repr=False, default=None)

    @classmethod
    def build(cls, role: Role, in_dim: int, n_actions: int, config: AgentConfig) -> "Agent":
        role_offset = {"C1": 1, "Op": 2, "C2": 3}[role.value]
        net = QNetwork(
            in_dim,
            n_actions,
            hidden=config.hidden,
            dueling=is_dueling(config.variant),
            seed=config.seed * 7919 + role_offset,
        )
        return cls(
            role=role,
            config=config,
            net=net,
            buffer=ReplayBuffer(config.buffer_capacity),
            rng_policy=np.random.default_rng((config.seed, role_offset, 1)),
            rng_train=np.random.default_rng((config.seed, role_offset, 2)),
        )

    def act(self, state: StateVector, valid_mask, epsilon: float) -> int:
        return select_action(self.net, state, valid_mask, epsilon, self.rng_policy)

    def observe(self, transition: Transition) -> None:
        store(self.buffer, transition)

    def learn(self) -> Optional[float]:
        """Train once if the buffer can fill a batch; None during warm-up."""
        if len(self.buffer) < self.config.batch_size:
            return None
        return train_step(self.net, self.buffer, self.config, self.rng_train)
