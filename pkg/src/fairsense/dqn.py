"""From-scratch deep Q-learning on numpy.

A small dense network maps the 5-dim state to one Q-value per lattice
action. Training regresses the chosen action's Q-value onto the bootstrap
target r + gamma * max_a Q_target(s', a) with plain SGD on the mean squared
error; the target network is a periodic copy of the main one. Everything is
float64 so checkpoints and replays are bit-exact.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import AgentConfig
from .rlenv import STATE_DIM, EpochDiag, WifiEnv

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray


class QNetwork:
    """Dense rectifier network, identity output, fan-in scaled uniform init."""

    def __init__(self, sizes: list[int], rng: Optional[np.random.Generator] = None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                bound = 1.0 / np.sqrt(fan_in)
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.weights.append(w.astype(np.float64))
            self.biases.append(np.zeros(fan_out, dtype=np.float64))

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for one state (1-d input) or a batch (2-d input)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.input_dim:
            raise ValueError(f"input dim {h.shape[1]} != {self.input_dim}")
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
        out = h @ self.weights[-1] + self.biases[-1]
        return out[0] if single else out

    def forward_with_activations(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batched forward pass keeping layer inputs for backprop."""
        acts = [np.asarray(x, dtype=np.float64)]
        h = acts[0]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
            acts.append(h)
        return h @ self.weights[-1] + self.biases[-1], acts

    def backward(self, acts: list[np.ndarray],
                 dout: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Gradients of a scalar loss given d(loss)/d(output)."""
        grads_w = [np.zeros_like(w) for w in self.weights]
        grads_b = [np.zeros_like(b) for b in self.biases]
        delta = dout
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = acts[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (acts[layer] > 0.0)
        return grads_w, grads_b

    def copy_from(self, other: "QNetwork") -> None:
        if self.sizes != other.sizes:
            raise ValueError("network shapes differ")
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def clone(self) -> "QNetwork":
        twin = QNetwork(self.sizes, rng=None)
        twin.copy_from(self)
        return twin


def td_target(tr: Transition, target_net: QNetwork, gamma: float) -> float:
    """Bootstrap target r + gamma * max_a Q_target(s', a); never terminal."""
    return tr.r + gamma * float(np.max(target_net.forward(tr.s_next)))


def train_step(net: QNetwork, target_net: QNetwork, batch: list[Transition],
               gamma: float, lr: float, grad_clip: float = 10.0) -> float:
    """One SGD step on the batch MSE; returns the pre-update loss.

    Gradients flow only through each transition's chosen action; the
    targets come from the frozen target network.
    """
    if not batch:
        raise ValueError("training batch must not be empty")
    states = np.stack([tr.s for tr in batch])
    actions = np.array([tr.a for tr in batch])
    rewards = np.array([tr.r for tr in batch])
    next_states = np.stack([tr.s_next for tr in batch])
    targets = rewards + gamma * target_net.forward(next_states).max(axis=1)

    q_all, acts = net.forward_with_activations(states)
    n = len(batch)
    q_taken = q_all[np.arange(n), actions]
    errors = q_taken - targets
    loss = float(np.mean(errors ** 2))
    if not np.isfinite(loss):
        raise FloatingPointError(f"training diverged: loss={loss}")

    dout = np.zeros_like(q_all)
    dout[np.arange(n), actions] = 2.0 * errors / n
    grads_w, grads_b = net.backward(acts, dout)

    norm_sq = sum(float(np.sum(g * g)) for g in grads_w)
    norm_sq += sum(float(np.sum(g * g)) for g in grads_b)
    scale = 1.0
    norm = np.sqrt(norm_sq)
    if grad_clip > 0 and norm > grad_clip:
        scale = grad_clip / norm
    for w, gw in zip(net.weights, grads_w):
        w -= lr * scale * gw
    for b, gb in zip(net.biases, grads_b):
        b -= lr * scale * gb
    return loss


def select_action(q_values: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy: argmax (lowest index on ties) with prob 1 - epsilon,
    otherwise uniform."""
    q_values = np.asarray(q_values)
    if q_values.size == 0:
        raise ValueError("no actions to select from")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(q_values.size))
    return int(np.argmax(q_values))


class ReplayBuffer:
    """FIFO ring of transitions with uniform without-replacement sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._ring: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._ring)

    def push(self, tr: Transition) -> None:
        self._ring.append(tr)

    def contents(self) -> list[Transition]:
        return list(self._ring)

    def sample(self, batch: int, rng: np.random.Generator) -> list[Transition]:
        if batch > len(self._ring):
            raise ValueError(
                f"warm-up not complete: buffer holds {len(self._ring)} < {batch}")
        idx = rng.choice(len(self._ring), size=batch, replace=False)
        items = self._ring
        return [items[int(i)] for i in idx]


def sync_target(net: QNetwork, target_net: QNetwork) -> None:
    target_net.copy_from(net)


class DqnAgent:
    """Main/target networks, replay buffer, and the per-iteration recipe."""

    def __init__(self, state_dim: int, action_count: int, config: AgentConfig,
                 rng: np.random.Generator):
        self.config = config
        self.rng = rng
        sizes = [state_dim, *config.hidden, action_count]
        self.net = QNetwork(sizes, rng)
        self.target_net = self.net.clone()
        self.buffer = ReplayBuffer(config.buffer)
        self.iteration = 0
        self.last_loss: Optional[float] = None

    def act(self, state: np.ndarray) -> int:
        return select_action(self.net.forward(state), self.config.epsilon,
                             self.rng)

    def greedy_action(self, state: np.ndarray) -> int:
        return int(np.argmax(self.net.forward(state)))

    def observe(self, tr: Transition) -> None:
        """Store, train when warm, and sync the target on schedule."""
        self.buffer.push(tr)
        self.iteration += 1
        if len(self.buffer) >= self.config.batch:
            batch = self.buffer.sample(self.config.batch, self.rng)
            self.last_loss = train_step(
                self.net, self.target_net, batch, self.config.gamma,
                self.config.lr, self.config.grad_clip)
        if self.iteration % self.config.sync_period == 0:
            sync_target(self.net, self.target_net)

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        arrays = {}
        for i, (w, b) in enumerate(zip(self.net.weights, self.net.biases)):
            arrays[f"w{i}"] = w
            arrays[f"b{i}"] = b
        for i, (w, b) in enumerate(zip(self.target_net.weights,
                                       self.target_net.biases)):
            arrays[f"tw{i}"] = w
            arrays[f"tb{i}"] = b
        meta = {
            "version": CHECKPOINT_VERSION,
            "sizes": self.net.sizes,
            "iteration": self.iteration,
            "config": {
                "gamma": self.config.gamma, "lr": self.config.lr,
                "epsilon": self.config.epsilon, "batch": self.config.batch,
                "buffer": self.config.buffer,
                "sync_period": self.config.sync_period,
                "hidden": list(self.config.hidden),
                "grad_clip": self.config.grad_clip,
            },
        }
        np.savez(path, meta=json.dumps(meta, sort_keys=True), **arrays)

    @classmethod
    def load(cls, path: str | Path, rng: np.random.Generator) -> "DqnAgent":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta['version']}")
            cfg = meta["config"]
            config = AgentConfig(
                gamma=cfg["gamma"], lr=cfg["lr"], epsilon=cfg["epsilon"],
                batch=cfg["batch"], buffer=cfg["buffer"],
                sync_period=cfg["sync_period"], hidden=tuple(cfg["hidden"]),
                grad_clip=cfg["grad_clip"])
            sizes = meta["sizes"]
            agent = cls(sizes[0], sizes[-1], config, rng)
            agent.net.sizes = sizes
            for i in range(len(sizes) - 1):
                agent.net.weights[i] = data[f"w{i}"]
                agent.net.biases[i] = data[f"b{i}"]
                agent.target_net.weights[i] = data[f"tw{i}"]
                agent.target_net.biases[i] = data[f"tb{i}"]
            agent.iteration = int(meta["iteration"])
        return agent


def train_loop(env: WifiEnv, config: AgentConfig, steps: int,
               rng: np.random.Generator,
               agent: Optional[DqnAgent] = None,
               on_epoch: Optional[Callable[[EpochDiag], None]] = None,
               ) -> tuple[DqnAgent, list[EpochDiag]]:
    """Instant learning only: act, observe, store, train, sync; no
    pre-training phase."""
    if agent is None:
        agent = DqnAgent(STATE_DIM, env.action_count, config, rng)
    state = env.reset()
    diags: list[EpochDiag] = []
    for _ in range(steps):
        action = agent.act(state)
        next_state, reward, diag = env.step(action)
        agent.observe(Transition(state, action, reward, next_state))
        diags.append(diag)
        if on_epoch is not None:
            on_epoch(diag)
        state = next_state
    return agent, diags
