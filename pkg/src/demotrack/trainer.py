"""Asynchronous actor-critic training with imitating agents and a curriculum.

Half of the ``P`` workers imitate the expert through a masked L1 loss, the
other half run actor-critic updates with Gaussian exploration whose width is
the distance between the policy mean and the ground-truth action. Testing
workers play greedy episodes against the expert's demonstrations and the
curriculum grows the episode horizon when the agent matches the expert often
enough. All workers share one :class:`ParameterStore`.
"""

from __future__ import annotations

import hashlib
import logging
import math
import threading
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .expert import Demonstration
from .geometry import ActionDelta, box_delta
from .mdp import EpisodeConfig, reset, step
from .neuralnet import autograd as ag
from .neuralnet.checkpoint import save_checkpoint
from .neuralnet.losses import actor_critic_loss, discounted_returns, imitation_loss
from .neuralnet.model import Graph, ModelConfig, PolicyValueNet, RecurrentState, init_parameters
from .synthworld import Rng, SyntheticSequence

log = logging.getLogger(__name__)

IMITATION = "imitation"
RL = "rl"
TEST = "test"


class ConfigError(ValueError):
    """Raised for invalid or unknown training configuration keys."""


@dataclass
class TrainConfig:
    workers: int = 16
    t_max: int = 5
    gamma: float = 1.0
    tau: float = 0.25
    lr: float = 1e-4
    weight_decay: float = 1e-4
    episodes: int = 3000
    sigma_min: float = 1e-3
    value_coef: float = 0.5
    max_grad_norm: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    window: int = 100
    initial_horizon: int = 8
    horizon_increment: int = 8
    testing_workers: int = 1
    imitation_only: bool = False
    rl_only: bool = False
    curriculum_disabled: bool = False
    deterministic: bool = False
    checkpoint_every: int = 500
    seed: int = 0
    k: float = 1.5
    patch_size: int = 32
    conv_filters: tuple[int, ...] = (8, 16)
    fc_widths: tuple[int, ...] = (64, 64)
    lstm_width: int = 64
    shared_encoder: bool = True

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.imitation_only and self.rl_only:
            raise ConfigError("imitation_only and rl_only are mutually exclusive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not (self.imitation_only or self.rl_only) and self.workers % 2:
            raise ConfigError("workers must be even when both worker kinds are enabled")
        if not 0 < self.tau < 1:
            raise ConfigError("tau must lie in (0, 1)")
        if self.t_max < 1:
            raise ConfigError("t_max must be >= 1")
        if self.sigma_min <= 0:
            raise ConfigError("sigma_min must be positive")
        if self.window < 1 or self.initial_horizon < 1 or self.horizon_increment < 0:
            raise ConfigError("curriculum window / horizon settings invalid")
        if self.episodes < 0 or self.lr <= 0:
            raise ConfigError("episodes must be >= 0 and lr > 0")

    def model_config(self, channels: int) -> ModelConfig:
        return ModelConfig(patch_size=self.patch_size, channels=channels,
                           conv_filters=tuple(self.conv_filters), fc_widths=tuple(self.fc_widths),
                           lstm_width=self.lstm_width, shared_encoder=self.shared_encoder)

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(k=self.k, patch_size=self.patch_size)

    def worker_kinds(self) -> list[str]:
        if self.imitation_only:
            return [IMITATION] * self.workers
        if self.rl_only:
            return [RL] * self.workers
        half = self.workers // 2
        return [IMITATION] * half + [RL] * half

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = int(value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, **overrides) -> "TrainConfig":
        """Parse ``key=value`` lines (``#`` comments allowed); unknown keys are errors."""
        values: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        return cls.from_strings(values, **overrides)

    @classmethod
    def from_strings(cls, values: dict[str, str], **overrides) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs: dict[str, object] = {}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key].default, value, key)
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**kwargs)  # type: ignore[arg-type]
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _coerce(default, value: str, key: str):
    try:
        if isinstance(default, bool):
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


# -- shared parameter store ----------------------------------------------------

class ParameterStore:
    """Master parameters with shared Adam moments behind one exclusive lock."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0,
                 max_grad_norm: float = 0.0, track_checksums: bool = False) -> None:
        self._lock = threading.Lock()
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.max_grad_norm = max_grad_norm
        self.version = 0
        self.update_count = 0
        self.counts = {IMITATION: 0, RL: 0}
        self.rejections: list[str] = []
        self.grad_norms: list[tuple[str, float]] = []
        self.track_checksums = track_checksums
        self.checksums: dict[str, float] = {}
        if track_checksums:
            self.checksums = {k: float(v.sum()) for k, v in self.params.items()}

    def snapshot(self) -> tuple[dict[str, np.ndarray], int]:
        """Consistent copy of the parameters and the version it belongs to."""
        with self._lock:
            return {k: v.copy() for k, v in self.params.items()}, self.version

    def snapshot_with_checksums(self) -> tuple[dict[str, np.ndarray], int, dict[str, float]]:
        with self._lock:
            return ({k: v.copy() for k, v in self.params.items()}, self.version,
                    dict(self.checksums))

    def apply_gradients(self, grads: dict[str, np.ndarray], kind: str = RL) -> int | None:
        """One Adam step; returns the new version, or ``None`` if the gradient was rejected."""
        if set(grads) != set(self.params):
            raise KeyError("gradient names do not match the stored parameters")
        bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
        if bad:
            msg = f"rejected {kind} update: non-finite gradient in {', '.join(sorted(bad))}"
            with self._lock:
                self.rejections.append(msg)
            log.warning(msg)
            return None
        scale = 1.0
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if self.max_grad_norm > 0:
            if norm > self.max_grad_norm:
                scale = self.max_grad_norm / norm
        with self._lock:
            self.update_count += 1
            t = self.update_count
            b1, b2 = self.beta1, self.beta2
            c1 = 1.0 - b1 ** t
            c2 = 1.0 - b2 ** t
            for k, p in self.params.items():
                g = grads[k] * scale if scale != 1.0 else grads[k]
                if kind == IMITATION and self.weight_decay:
                    g = g + self.weight_decay * p
                m = self.m[k]
                v = self.v[k]
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * (g * g)
                p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
                if self.track_checksums:
                    self.checksums[k] = float(p.sum())
            self.counts[kind] = self.counts.get(kind, 0) + 1
            self.grad_norms.append((kind, norm))
            self.version += 1
            return self.version


def sync_local(store: ParameterStore) -> tuple[dict[str, np.ndarray], int]:
    return store.snapshot()


# -- curriculum ----------------------------------------------------------------

class CurriculumState:
    def __init__(self, t_hat: int, window: int = 100, increment: int = 8, max_t: int | None = None,
                 tau: float = 0.25) -> None:
        self._lock = threading.Lock()
        self.max_t = max_t if max_t is not None else t_hat
        self.t_hat = min(t_hat, self.max_t)
        self.window = window
        self.increment = increment
        self.tau = tau
        self.outcomes: deque[bool] = deque(maxlen=window)
        self.total = 0
        self.successes = 0
        self.history: list[int] = [self.t_hat]

    def record(self, success: bool) -> int:
        """Store a test outcome, advance if due, and return the current horizon."""
        with self._lock:
            self.outcomes.append(bool(success))
            self.total += 1
            self.successes += int(success)
            curriculum_advance(self, self.tau, self.max_t)
            return self.t_hat

    @property
    def ratio(self) -> float:
        return sum(self.outcomes) / len(self.outcomes) if self.outcomes else 0.0


def curriculum_advance(cs: CurriculumState, tau: float, max_t: int) -> int:
    """Grow the horizon once the window of test outcomes reaches a success ratio >= tau."""
    if len(cs.outcomes) < cs.window:
        return cs.t_hat
    if sum(cs.outcomes) / cs.window >= tau:
        new = min(cs.t_hat + cs.increment, max_t)
        if new != cs.t_hat:
            cs.history.append(new)
        cs.t_hat = max(cs.t_hat, new)
        cs.outcomes.clear()
    return cs.t_hat


# -- workers -------------------------------------------------------------------

@dataclass
class RolloutRecord:
    kind: str
    loss: float
    rewards: list[float]
    demo_rewards: list[float]
    version: int | None
    grads: dict[str, np.ndarray] | None = None
    masks: list[int] = field(default_factory=list)


@dataclass
class WorkerContext:
    store: ParameterStore
    model_cfg: ModelConfig
    episode_cfg: EpisodeConfig
    cfg: TrainConfig


def _action(mu: np.ndarray) -> ActionDelta:
    return ActionDelta(float(mu[0]), float(mu[1]), float(mu[2]), float(mu[3]))


def imitation_rollouts(ctx: WorkerContext, sequence: SyntheticSequence, demo: Demonstration,
                       horizon: int | None, apply: bool = True,
                       on_rollout: Callable[[RolloutRecord], None] | None = None
                       ) -> list[RolloutRecord]:
    """One imitation episode, updating the store every ``t_max`` steps."""
    if demo.sequence_id != sequence.id or len(demo) != len(sequence):
        raise ValueError(f"demonstration {demo.sequence_id} does not match sequence {sequence.id}")
    env, obs = reset(sequence, ctx.episode_cfg.with_horizon(horizon))
    state = RecurrentState.zeros(ctx.model_cfg.lstm_width)
    records = []
    while not env.done:
        params, _ = sync_local(ctx.store)
        graph = ctx_graph(ctx, params)
        h, c = graph.initial(state)
        mus, targets, masks, rewards, demo_rewards = [], [], [], [], []
        for _ in range(ctx.cfg.t_max):
            out = graph.step(obs, h, c)
            h, c = out.h, out.c
            t = env.t
            target, _ = box_delta(demo.boxes[t], env.box)
            res = step(env, _action(out.mu.data))
            r_d = demo.rewards[t - 1]
            mus.append(out.mu)
            targets.append(target.as_array())
            # equal rewards are not "worse than the demonstrator"
            masks.append(1 if res.reward < r_d else 0)
            rewards.append(res.reward)
            demo_rewards.append(r_d)
            obs = res.observation
            if res.done:
                break
        state = RecurrentState(h.data.copy(), c.data.copy())
        loss = imitation_loss(mus, targets, masks)
        grads = graph.backward(loss)
        version = ctx.store.apply_gradients(grads, IMITATION) if apply else None
        rec = RolloutRecord(IMITATION, float(loss.data), rewards, demo_rewards, version, grads, masks)
        records.append(rec)
        if on_rollout:
            on_rollout(rec)
    return records


def exploration_sigma(mu: np.ndarray, gt_action: np.ndarray, sigma_min: float) -> np.ndarray:
    return np.maximum(np.abs(mu - gt_action), sigma_min)


def rl_rollouts(ctx: WorkerContext, sequence: SyntheticSequence, demo: Demonstration | None,
                horizon: int | None, rng: Rng, apply: bool = True,
                on_rollout: Callable[[RolloutRecord], None] | None = None) -> list[RolloutRecord]:
    """One actor-critic episode with ground-truth-scaled Gaussian exploration."""
    env, obs = reset(sequence, ctx.episode_cfg.with_horizon(horizon))
    state = RecurrentState.zeros(ctx.model_cfg.lstm_width)
    cfg = ctx.cfg
    records = []
    while not env.done:
        params, _ = sync_local(ctx.store)
        graph = ctx_graph(ctx, params)
        h, c = graph.initial(state)
        mus, values, samples, sigmas, rewards, demo_rewards = [], [], [], [], [], []
        for _ in range(cfg.t_max):
            out = graph.step(obs, h, c)
            h, c = out.h, out.c
            t = env.t
            mu = out.mu.data
            gt_action, _ = box_delta(sequence.groundtruth[t], env.box)
            sigma = exploration_sigma(mu, gt_action.as_array(), cfg.sigma_min)
            sample = mu + sigma * rng.normal(size=4)
            res = step(env, _action(np.clip(sample, -1.0, 1.0)))
            mus.append(out.mu)
            values.append(out.value)
            samples.append(sample)
            sigmas.append(sigma)
            rewards.append(res.reward)
            demo_rewards.append(demo.rewards[t - 1] if demo is not None else float("nan"))
            obs = res.observation
            if res.done:
                break
        bootstrap = 0.0
        if not env.done:
            with ag.no_grad():
                bootstrap = float(graph.step(obs, h, c).value.data)
        returns = discounted_returns(rewards, cfg.gamma, bootstrap)
        state = RecurrentState(h.data.copy(), c.data.copy())
        loss, _ = actor_critic_loss(mus, values, samples, sigmas, returns, cfg.value_coef)
        grads = graph.backward(loss)
        version = ctx.store.apply_gradients(grads, RL) if apply else None
        rec = RolloutRecord(RL, float(loss.data), rewards, demo_rewards, version, grads)
        records.append(rec)
        if on_rollout:
            on_rollout(rec)
    return records


def ctx_graph(ctx: WorkerContext, params: dict[str, np.ndarray]) -> Graph:
    return Graph(ctx.model_cfg, params)


def greedy_rewards(net: PolicyValueNet, sequence: SyntheticSequence, episode_cfg: EpisodeConfig,
                   horizon: int | None) -> list[float]:
    env, obs = reset(sequence, episode_cfg.with_horizon(horizon))
    state = net.initial_state()
    rewards = []
    while not env.done:
        mu, _, state = net.forward(obs, state)
        res = step(env, mu)
        rewards.append(res.reward)
        obs = res.observation
    return rewards


def testing_episode(net: PolicyValueNet, sequence: SyntheticSequence, demo: Demonstration,
                    horizon: int, episode_cfg: EpisodeConfig,
                    curriculum: CurriculumState | None = None) -> tuple[bool, float, float]:
    """Greedy episode; success when the agent's reward sum matches or beats the expert's."""
    rewards = greedy_rewards(net, sequence, episode_cfg, horizon)
    agent = sum(rewards)
    expert = sum(demo.rewards[:len(rewards)])
    success = agent >= expert
    if curriculum is not None:
        curriculum.record(success)
    return success, agent, expert


# -- training loop ---------------------------------------------------------------

@dataclass
class TrainResult:
    net: PolicyValueNet
    log_lines: list[str]
    store: ParameterStore
    curriculum: CurriculumState

    @property
    def log_text(self) -> str:
        return "\n".join(self.log_lines) + "\n"


class EmptyDemonstrationPool(ValueError):
    """Raised when no positive demonstration is available for training."""


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


class _Trainer:
    def __init__(self, cfg: TrainConfig, pairs: list[tuple[SyntheticSequence, Demonstration]]) -> None:
        self.cfg = cfg
        self.pairs = pairs
        channels = pairs[0][0].channels
        self.model_cfg = cfg.model_config(channels)
        self.episode_cfg = cfg.episode_config()
        self.store = ParameterStore(init_parameters(self.model_cfg, cfg.seed), cfg.lr,
                                    cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
                                    cfg.weight_decay, cfg.max_grad_norm)
        self.ctx = WorkerContext(self.store, self.model_cfg, self.episode_cfg, cfg)
        max_t = max(len(s) - 1 for s, _ in pairs)
        start = max_t if cfg.curriculum_disabled else cfg.initial_horizon
        self.curriculum = CurriculumState(start, cfg.window, cfg.horizon_increment, max_t, cfg.tau)
        self.kinds = cfg.worker_kinds()
        self.lock = threading.Lock()
        self.lines = ["# " + line for line in cfg.to_text().splitlines()]
        self.lines.append(f"# worker_kinds={','.join(self.kinds)}")
        self.lines.append("episode,worker_kind,loss,sum_reward,sum_demo_reward,That,version")
        self.episodes_started = 0
        self.episodes_done = 0
        self.checkpoint_path: Path | None = None

    def _emit(self, episode: int, kind: str, loss, rewards, demo_rewards, version) -> None:
        line = (f"{episode},{kind},{_fmt(loss)},{_fmt(sum(rewards))},"
                f"{_fmt(sum(demo_rewards))},{self.curriculum.t_hat},"
                f"{'' if version is None else version}")
        with self.lock:
            self.lines.append(line)

    def run_training_episode(self, worker: int, episode: int, rng: Rng) -> None:
        seq, demo = self.pairs[rng.integers(0, len(self.pairs) - 1)]
        horizon = self.curriculum.t_hat
        kind = self.kinds[worker]

        def emit(rec: RolloutRecord) -> None:
            self._emit(episode, kind, rec.loss, rec.rewards, rec.demo_rewards, rec.version)

        if kind == IMITATION:
            imitation_rollouts(self.ctx, seq, demo, horizon, on_rollout=emit)
        else:
            rl_rollouts(self.ctx, seq, demo, horizon, rng, on_rollout=emit)

    def run_test_episode(self, episode: int, rng: Rng) -> None:
        seq, demo = self.pairs[rng.integers(0, len(self.pairs) - 1)]
        params, _ = sync_local(self.store)
        net = PolicyValueNet(self.model_cfg, params)
        horizon = self.curriculum.t_hat
        _, agent, expert = testing_episode(net, seq, demo, horizon, self.episode_cfg)
        self.curriculum.record(agent >= expert)
        self._emit(episode, TEST, None, [agent], [expert], None)

    def maybe_checkpoint(self, done: int) -> None:
        every = self.cfg.checkpoint_every
        if self.checkpoint_path is not None and every > 0 and done % every == 0:
            save_checkpoint(self.current_net(done), self.checkpoint_path)

    def current_net(self, episodes: int) -> PolicyValueNet:
        params, version = sync_local(self.store)
        cfg = self.cfg
        meta = {
            "episodes": str(episodes),
            "t_hat": str(self.curriculum.t_hat),
            "version": str(version),
            "imitation_updates": str(self.store.counts.get(IMITATION, 0)),
            "rl_updates": str(self.store.counts.get(RL, 0)),
            "imitation_only": str(int(cfg.imitation_only)),
            "curriculum_disabled": str(int(cfg.curriculum_disabled)),
            "value_trained": str(int(self.store.counts.get(RL, 0) > 0)),
            "k": repr(cfg.k),
            "seed": str(cfg.seed),
        }
        return PolicyValueNet(self.model_cfg, params, meta)

    def run_deterministic(self) -> None:
        rngs = [Rng(self.cfg.seed, 1000 + w) for w in range(len(self.kinds))]
        test_rngs = [Rng(self.cfg.seed, 5000 + i) for i in range(self.cfg.testing_workers)]
        episode = 0
        test_episode = 0
        while episode < self.cfg.episodes:
            for w in range(len(self.kinds)):
                if episode >= self.cfg.episodes:
                    break
                self.run_training_episode(w, episode, rngs[w])
                episode += 1
                self.maybe_checkpoint(episode)
            for trng in test_rngs:
                self.run_test_episode(test_episode, trng)
                test_episode += 1
        self.episodes_done = episode

    def run_threaded(self) -> None:
        stop = threading.Event()
        errors: list[BaseException] = []

        def claim() -> int | None:
            with self.lock:
                if self.episodes_started >= self.cfg.episodes:
                    return None
                self.episodes_started += 1
                return self.episodes_started - 1

        def finish() -> None:
            with self.lock:
                self.episodes_done += 1
                done = self.episodes_done
            self.maybe_checkpoint(done)

        def train_loop(w: int) -> None:
            rng = Rng(self.cfg.seed, 1000 + w)
            try:
                while not stop.is_set():
                    ep = claim()
                    if ep is None:
                        return
                    self.run_training_episode(w, ep, rng)
                    finish()
            except BaseException as exc:  # surfaced after join
                errors.append(exc)
                stop.set()

        def test_loop(i: int) -> None:
            rng = Rng(self.cfg.seed, 5000 + i)
            n = 0
            try:
                while not stop.is_set():
                    self.run_test_episode(n, rng)
                    n += 1
            except BaseException as exc:
                errors.append(exc)
                stop.set()

        trainers = [threading.Thread(target=train_loop, args=(w,), daemon=True)
                    for w in range(len(self.kinds))]
        testers = [threading.Thread(target=test_loop, args=(i,), daemon=True)
                   for i in range(self.cfg.testing_workers)]
        for th in trainers + testers:
            th.start()
        for th in trainers:
            th.join()
        stop.set()
        for th in testers:
            th.join()
        if errors:
            raise errors[0]


def pair_demonstrations(sequences: Sequence[SyntheticSequence], demos: Sequence[Demonstration]
                        ) -> list[tuple[SyntheticSequence, Demonstration]]:
    """Match sequences with their positive demonstrations; others are not trained on."""
    by_id = {s.id: s for s in sequences}
    pairs = []
    for d in demos:
        if d.positive and d.sequence_id in by_id and len(by_id[d.sequence_id]) == len(d):
            pairs.append((by_id[d.sequence_id], d))
    return pairs


def train(cfg: TrainConfig, sequences: Sequence[SyntheticSequence], demos: Sequence[Demonstration],
          checkpoint_path: str | Path | None = None, log_path: str | Path | None = None
          ) -> TrainResult:
    """Train a policy / value network; returns the final network and the training log."""
    pairs = pair_demonstrations(sequences, demos)
    if not pairs:
        raise EmptyDemonstrationPool("no positive demonstration matches the training sequences")
    trainer = _Trainer(cfg, pairs)
    if checkpoint_path is not None:
        trainer.checkpoint_path = Path(checkpoint_path)
    log.info("training on %d sequences with workers %s", len(pairs), trainer.kinds)
    if cfg.deterministic:
        trainer.run_deterministic()
    else:
        trainer.run_threaded()
    net = trainer.current_net(trainer.episodes_done)
    trainer.lines.append(
        f"# summary episodes={trainer.episodes_done} updates={trainer.store.update_count} "
        f"imitation_updates={trainer.store.counts.get(IMITATION, 0)} "
        f"rl_updates={trainer.store.counts.get(RL, 0)} "
        f"rejected={len(trainer.store.rejections)} "
        f"t_hat_history={'|'.join(map(str, trainer.curriculum.history))} "
        f"success_ratio={trainer.curriculum.successes / max(trainer.curriculum.total, 1)!r} "
        f"a3ctd_eligible={int(trainer.store.counts.get(RL, 0) > 0)}")
    result = TrainResult(net, trainer.lines, trainer.store, trainer.curriculum)
    if checkpoint_path is not None:
        save_checkpoint(net, checkpoint_path)
    if log_path is not None:
        Path(log_path).write_text(result.log_text)
    return result


def log_digest(result: TrainResult) -> str:
    return hashlib.sha256(result.log_text.encode()).hexdigest()
