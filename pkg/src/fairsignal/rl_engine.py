"""Double DQN in plain numpy.

A small fully connected Q-network (ReLU hidden layers, linear output) with
hand-written backprop, an Adam optimizer, a uniform ring replay buffer,
soft target updates and the episode training loop.
"""
from __future__ import annotations

import io
import json
import logging
import zipfile
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .fairness import nearest_rank_quantile
from .sim_core import Phase

log = logging.getLogger(__name__)


class DimensionError(ValueError):
    pass


class TrainingDivergenceError(RuntimeError):
    pass


class QNetwork:
    """MLP ``sizes[0] -> ... -> sizes[-1]`` with ReLU between layers."""

    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None):
        self.sizes = tuple(int(s) for s in sizes)
        self.W: List[np.ndarray] = []
        self.b: List[np.ndarray] = []
        rng = rng if rng is not None else np.random.default_rng(0)
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.W.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.b.append(np.zeros(fan_out))

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def n_actions(self) -> int:
        return self.sizes[-1]

    def params(self) -> List[np.ndarray]:
        return [p for pair in zip(self.W, self.b) for p in pair]

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        params = list(params)
        self.W = [np.array(p, dtype=float) for p in params[0::2]]
        self.b = [np.array(p, dtype=float) for p in params[1::2]]

    def copy(self) -> "QNetwork":
        net = QNetwork.__new__(QNetwork)
        net.sizes = self.sizes
        net.W = [w.copy() for w in self.W]
        net.b = [b.copy() for b in self.b]
        return net

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise DimensionError(f"expected input dim {self.input_dim}, got {x.shape[-1]}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        h = x
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    __call__ = forward

    def forward_cache(self, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
        """Output plus layer inputs and pre-activations, for backprop."""
        x = self._check(np.atleast_2d(x))
        inputs, pre = [], []
        h = x
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            inputs.append(h)
            z = h @ W + b
            pre.append(z)
            h = np.maximum(z, 0.0) if i < last else z
        return h, inputs, pre

    def backward(self, inputs, pre, dout: np.ndarray) -> List[np.ndarray]:
        """Gradients (W0, b0, W1, b1, ...) given dLoss/dOutput."""
        grads: List[np.ndarray] = [None] * (2 * len(self.W))
        g = dout
        for i in reversed(range(len(self.W))):
            if i < len(self.W) - 1:
                g = g * (pre[i] > 0)
            grads[2 * i] = inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = g @ self.W[i].T
        return grads

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def forward(network: QNetwork, observation) -> np.ndarray:
    return network.forward(observation)


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions; uniform sampling with replacement."""

    def __init__(self, capacity: int, obs_dim: int, rng: Optional[np.random.Generator] = None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, obs_dim))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._next = 0
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def __len__(self) -> int:
        return self.size

    def push(self, tr: Transition) -> None:
        if not np.isfinite(tr.r):
            raise ValueError(f"non-finite reward {tr.r}")
        i = self._next
        self.s[i] = tr.s
        self.a[i] = tr.a
        self.r[i] = tr.r
        self.s_next[i] = tr.s_next
        self.terminal[i] = tr.terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> Dict[str, np.ndarray]:
        idx = self.rng.integers(0, self.size, size=batch_size)
        return {"s": self.s[idx], "a": self.a[idx], "r": self.r[idx],
                "s_next": self.s_next[idx], "terminal": self.terminal[idx]}


def batch_from_transitions(batch: Sequence[Transition]) -> Dict[str, np.ndarray]:
    return {"s": np.array([t.s for t in batch], dtype=float),
            "a": np.array([t.a for t in batch], dtype=np.int64),
            "r": np.array([t.r for t in batch], dtype=float),
            "s_next": np.array([t.s_next for t in batch], dtype=float),
            "terminal": np.array([t.terminal for t in batch], dtype=bool)}


def ddqn_target(r, s_next, terminal, online: QNetwork, target: QNetwork, gamma: float):
    """r + gamma * Q_target(s', argmax_a Q_online(s', a)); no bootstrap when terminal.

    Works on scalars or batches.
    """
    s_next = np.atleast_2d(np.asarray(s_next, dtype=float))
    a_star = np.argmax(online.forward(s_next), axis=1)
    q_eval = target.forward(s_next)[np.arange(len(a_star)), a_star]
    y = np.asarray(r, dtype=float) + gamma * np.where(terminal, 0.0, q_eval)
    return float(y[0]) if np.ndim(r) == 0 else y


def td_loss_and_grads(online: QNetwork, batch: Dict[str, np.ndarray], y: np.ndarray):
    """Mean squared TD error on the taken actions and its gradient."""
    q, inputs, pre = online.forward_cache(batch["s"])
    n = q.shape[0]
    rows = np.arange(n)
    err = q[rows, batch["a"]] - y
    loss = float(np.mean(err ** 2))
    dout = np.zeros_like(q)
    dout[rows, batch["a"]] = 2.0 * err / n
    return loss, online.backward(inputs, pre, dout)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    gamma: float = 0.99
    episodes: int = 400
    max_steps: int = 2000
    epsilon_start: float = 0.5
    epsilon_end: float = 0.05
    tau: float = 0.001
    seed: int = 0
    buffer_capacity: int = 100_000
    hidden: Tuple[int, ...] = (32, 32)
    bootstrap_on_truncation: bool = False
    # global gradient-norm clip; 0 disables
    grad_clip: float = 10.0

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 <= self.epsilon_end <= self.epsilon_start <= 1:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.batch_size < 1 or self.episodes < 0:
            raise ValueError("batch_size must be >= 1 and episodes >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def train_batch(online: QNetwork, target: QNetwork, batch, config: TrainConfig,
                optimizer: Adam) -> float:
    """One Adam step on the DDQN loss. ``batch`` is a dict of arrays or a list of Transitions."""
    if not isinstance(batch, dict):
        batch = batch_from_transitions(batch)
    if len(batch["a"]) == 0:
        raise ValueError("empty batch")
    y = ddqn_target(batch["r"], batch["s_next"], batch["terminal"], online, target, config.gamma)
    loss, grads = td_loss_and_grads(online, batch, y)
    if not np.isfinite(loss):
        raise TrainingDivergenceError(f"non-finite loss {loss} (targets range "
                                      f"{np.min(y)}..{np.max(y)})")
    if config.grad_clip > 0:
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if norm > config.grad_clip:
            grads = [g * (config.grad_clip / norm) for g in grads]
    optimizer.step(online.params(), grads)
    if not online.is_finite():
        raise TrainingDivergenceError("non-finite parameters after Adam step")
    return loss


def soft_update(target: QNetwork, online: QNetwork, tau: float) -> QNetwork:
    for pt, po in zip(target.params(), online.params()):
        if pt.shape != po.shape:
            raise DimensionError("target/online shape mismatch")
        pt *= (1.0 - tau)
        pt += tau * po
    return target


def epsilon_at(episode: int, config: TrainConfig) -> float:
    if config.episodes <= 1:
        return config.epsilon_start
    frac = episode / (config.episodes - 1)
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


def epsilon_greedy(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Draws exactly one uniform always, plus one action draw when exploring."""
    if rng.random() < epsilon:
        return int(rng.integers(len(q_values)))
    return int(np.argmax(q_values))


def episode_seed(master_seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([master_seed, episode]).generate_state(1)[0])


@dataclass
class TrainingCurves:
    cumulative_reward: List[float] = field(default_factory=list)
    quantile_95: List[float] = field(default_factory=list)
    max_wait: List[float] = field(default_factory=list)
    mean_loss: List[float] = field(default_factory=list)
    episode_ticks: List[int] = field(default_factory=list)


def train_agent(env_factory: Callable[[], "object"], config: TrainConfig,
                progress: Optional[Callable[[int, TrainingCurves], None]] = None
                ) -> Tuple[QNetwork, TrainingCurves]:
    """Train a DDQN agent on environments from ``env_factory``.

    The environment must expose ``reset(seed) -> obs``, ``step(Phase) ->
    (obs, reward, done, info)``, ``record`` (an EpisodeRecord) and
    ``agent`` (the AgentSpec). Curves hold per-episode cumulative (unscaled)
    reward, 0.95 wait quantile and max wait of departed vehicles.
    """
    env = env_factory()
    spec = env.agent
    ss = np.random.SeedSequence(config.seed)
    init_ss, act_ss, buf_ss = ss.spawn(3)
    online = QNetwork((spec.obs_dim, *config.hidden, 2), np.random.default_rng(init_ss))
    target = online.copy()
    opt = Adam(config.learning_rate)
    buffer = ReplayBuffer(config.buffer_capacity, spec.obs_dim, np.random.default_rng(buf_ss))
    act_rng = np.random.default_rng(act_ss)
    curves = TrainingCurves()

    for ep in range(config.episodes):
        eps = epsilon_at(ep, config)
        obs = env.reset(episode_seed(config.seed, ep))
        losses = []
        while not env.done and env.state.clock < config.max_steps:
            a = epsilon_greedy(online.forward(obs), eps, act_rng)
            obs_next, r, done, info = env.step(Phase(a))
            truncated = env.state.clock >= config.max_steps
            terminal = info["terminated"] or ((done or truncated) and not config.bootstrap_on_truncation)
            buffer.push(Transition(obs, a, r * spec.effective_reward_scale, obs_next, terminal))
            obs = obs_next
            if len(buffer) >= config.batch_size:
                losses.append(train_batch(online, target, buffer.sample(config.batch_size),
                                          config, opt))
                soft_update(target, online, config.tau)
        if not env.done:
            env._finalize()
        rec = env.record
        waits = rec.waits()
        curves.cumulative_reward.append(rec.total_reward)
        curves.quantile_95.append(nearest_rank_quantile(waits, 0.95) if waits else float("nan"))
        curves.max_wait.append(float(max(waits)) if waits else float("nan"))
        curves.mean_loss.append(float(np.mean(losses)) if losses else float("nan"))
        curves.episode_ticks.append(rec.length)
        if progress is not None:
            progress(ep, curves)
        log.debug("episode %d eps=%.3f reward=%.1f q95=%s", ep, eps, rec.total_reward,
                  curves.quantile_95[-1])
    return online, curves


# ---------------------------------------------------------------------------
# Serialization: a single .npz holding row-major arrays plus a JSON header
# ---------------------------------------------------------------------------

def save_network(path, network: QNetwork, agent_spec: dict, extra: Optional[dict] = None) -> None:
    header = {"format": "fairsignal-qnet-1", "sizes": list(network.sizes),
              "agent": agent_spec, **(extra or {})}
    arrays = {"header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    arrays.update({f"p{i}": p for i, p in enumerate(network.params())})
    # fixed zip timestamps so identical parameters give identical bytes
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)),
                        buf.getvalue())


def load_network(path) -> Tuple[QNetwork, dict]:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        n = 2 * (len(header["sizes"]) - 1)
        params = [data[f"p{i}"] for i in range(n)]
    net = QNetwork.__new__(QNetwork)
    net.sizes = tuple(header["sizes"])
    net.set_params(params)
    for W, (fi, fo) in zip(net.W, zip(net.sizes[:-1], net.sizes[1:])):
        if W.shape != (fi, fo):
            raise DimensionError(f"stored weight shape {W.shape} != ({fi}, {fo})")
    return net, header
