"""Policy / value network: conv encoder -> two dense layers -> LSTM -> action and value heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..geometry import ActionDelta
from ..mdp import Observation
from ..synthworld import Rng
from . import autograd as ag
from .autograd import Var


@dataclass(frozen=True)
class ModelConfig:
    patch_size: int = 32
    channels: int = 1
    conv_filters: tuple[int, ...] = (8, 16)
    conv_kernel: int = 3
    conv_stride: int = 2
    fc_widths: tuple[int, ...] = (64, 64)
    lstm_width: int = 64
    shared_encoder: bool = True
    # gain applied to the fan-in bound of the action head
    action_head_gain: float = 0.1

    def __post_init__(self) -> None:
        widths = (*self.conv_filters, *self.fc_widths, self.lstm_width, self.patch_size, self.channels)
        if min(widths) < 1:
            raise ValueError("all widths must be >= 1")
        if self.conv_kernel < 1 or self.conv_stride < 1:
            raise ValueError("conv kernel and stride must be >= 1")

    @property
    def feature_size(self) -> int:
        s = self.patch_size
        pad = self.conv_kernel // 2
        for _ in self.conv_filters:
            s = (s + 2 * pad - self.conv_kernel) // self.conv_stride + 1
        return s * s * self.conv_filters[-1]

    def to_text(self) -> str:
        out = []
        for key, value in asdict(self).items():
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = int(value)
            elif isinstance(value, float):
                value = repr(value)
            out.append(f"{key}={value}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs: dict[str, object] = {}
        for line in text.splitlines():
            if not line.strip() or "=" not in line:
                continue
            key, value = line.split("=", 1)
            if key not in kinds:
                continue
            default = getattr(cls(), key)
            if isinstance(default, tuple):
                kwargs[key] = tuple(int(v) for v in value.split(",") if v)
            elif isinstance(default, bool):
                kwargs[key] = bool(int(value))
            elif isinstance(default, int):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)  # type: ignore[arg-type]


@dataclass
class RecurrentState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, width: int) -> "RecurrentState":
        return cls(np.zeros(width), np.zeros(width))


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    encoders = ["enc"] if cfg.shared_encoder else ["enc0", "enc1"]
    for enc in encoders:
        c_in = cfg.channels
        for i, f in enumerate(cfg.conv_filters):
            shapes[f"{enc}.conv{i}.w"] = (f, c_in, cfg.conv_kernel, cfg.conv_kernel)
            shapes[f"{enc}.conv{i}.b"] = (f,)
            c_in = f
    d = 2 * cfg.feature_size
    for i, width in enumerate(cfg.fc_widths):
        shapes[f"fc{i}.w"] = (d, width)
        shapes[f"fc{i}.b"] = (width,)
        d = width
    hdim = cfg.lstm_width
    shapes["lstm.w"] = (d + hdim, 4 * hdim)
    shapes["lstm.b"] = (4 * hdim,)
    shapes["pi.w"] = (hdim, 4)
    shapes["pi.b"] = (4,)
    shapes["v.w"] = (hdim, 1)
    shapes["v.b"] = (1,)
    return shapes


def init_parameters(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform weights, zero biases, LSTM forget-gate bias 1."""
    rng = Rng(seed, 0x5EED)
    params: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
        if name.startswith(("enc", "fc")):
            bound = np.sqrt(6.0 / fan_in)  # He-uniform ahead of ReLU
        else:
            bound = 1.0 / np.sqrt(fan_in)
        if name == "pi.w":
            bound *= cfg.action_head_gain
        params[name] = rng.uniform(-bound, bound, size=shape)
    h = cfg.lstm_width
    params["lstm.b"][h:2 * h] = 1.0
    return params


@dataclass
class StepOutput:
    mu: Var
    value: Var
    h: Var
    c: Var

    @property
    def state(self) -> RecurrentState:
        return RecurrentState(self.h.data.copy(), self.c.data.copy())


def trace_step(cfg: ModelConfig, p: dict[str, Var], patches: np.ndarray,
               h: Var, c: Var) -> StepOutput:
    """One recorded forward step given parameter variables ``p``."""
    expected = (2, cfg.channels, cfg.patch_size, cfg.patch_size)
    if patches.shape != expected:
        raise ValueError(f"observation shape {patches.shape} does not match model {expected}")
    pad = cfg.conv_kernel // 2
    if cfg.shared_encoder:
        x = Var(patches)
        for i in range(len(cfg.conv_filters)):
            x = ag.relu(ag.conv2d(x, p[f"enc.conv{i}.w"], p[f"enc.conv{i}.b"], cfg.conv_stride, pad))
        feats = ag.reshape(x, (-1,))
    else:
        branches = []
        for k in range(2):
            x = Var(patches[k:k + 1])
            for i in range(len(cfg.conv_filters)):
                x = ag.relu(ag.conv2d(x, p[f"enc{k}.conv{i}.w"], p[f"enc{k}.conv{i}.b"],
                                      cfg.conv_stride, pad))
            branches.append(ag.reshape(x, (-1,)))
        feats = ag.concat(branches)
    x = feats
    for i in range(len(cfg.fc_widths)):
        x = ag.relu(ag.linear(x, p[f"fc{i}.w"], p[f"fc{i}.b"]))
    z = ag.linear(ag.concat([x, h]), p["lstm.w"], p["lstm.b"])
    h2, c2 = ag.lstm_cell(z, c)
    mu = ag.tanh(ag.linear(h2, p["pi.w"], p["pi.b"]))
    value = ag.reshape(ag.linear(h2, p["v.w"], p["v.b"]), ())
    return StepOutput(mu, value, h2, c2)


class GraphStateError(RuntimeError):
    """Raised when gradients are requested before anything was recorded."""


class Graph:
    """Records forward steps against fresh parameter leaves and returns their gradients."""

    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray]) -> None:
        self.cfg = cfg
        self.leaves = {k: Var(v, requires_grad=True) for k, v in params.items()}
        self.steps = 0

    def initial(self, state: RecurrentState) -> tuple[Var, Var]:
        return Var(state.h), Var(state.c)

    def step(self, obs: Observation | np.ndarray, h: Var, c: Var) -> StepOutput:
        patches = obs.patches if isinstance(obs, Observation) else obs
        self.steps += 1
        return trace_step(self.cfg, self.leaves, patches, h, c)

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        if self.steps == 0:
            raise GraphStateError("backward called before any forward step was recorded")
        if loss.requires_grad:
            loss.backward()
        return {k: (v.grad.copy() if v.grad is not None else np.zeros_like(v.data))
                for k, v in self.leaves.items()}


@dataclass
class PolicyValueNet:
    cfg: ModelConfig
    params: dict[str, np.ndarray]
    meta: dict[str, str] = field(default_factory=dict)

    @classmethod
    def create(cls, cfg: ModelConfig, seed: int = 0) -> "PolicyValueNet":
        return cls(cfg, init_parameters(cfg, seed))

    def initial_state(self) -> RecurrentState:
        return RecurrentState.zeros(self.cfg.lstm_width)

    def forward(self, obs: Observation | np.ndarray, state: RecurrentState
                ) -> tuple[ActionDelta, float, RecurrentState]:
        """Greedy action mean, state value and the next recurrent state."""
        patches = obs.patches if isinstance(obs, Observation) else obs
        with ag.no_grad():
            leaves = {k: Var(v) for k, v in self.params.items()}
            out = trace_step(self.cfg, leaves, patches, Var(state.h), Var(state.c))
        return ActionDelta.from_seq(out.mu.data), float(out.value.data), out.state

    def graph(self, params: dict[str, np.ndarray] | None = None) -> Graph:
        return Graph(self.cfg, self.params if params is None else params)

    def copy(self) -> "PolicyValueNet":
        return PolicyValueNet(self.cfg, {k: v.copy() for k, v in self.params.items()}, dict(self.meta))
