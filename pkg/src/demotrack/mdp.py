"""The tracking MDP: states are crop pairs, actions move the box, rewards grade IoU.

Crop sampling is bilinear with half-pixel centers: output pixel ``j`` of an
``m``-wide patch taken from region ``[r0, r0 + rs)`` samples the source at the
continuous coordinate ``u = r0 + (j + 0.5) * rs / m`` (pixel ``p`` covers
``[p, p + 1)``). Samples with ``u`` outside ``[0, N)`` take the pad value;
inside the frame the four neighbours are clamped to valid indices. Pixels are
standardized as ``value / 255 - 0.5`` so the pad value (mid-gray) is ``0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (ActionDelta, BBox, DomainError, apply_action, clamp_size,
                       dilate_box, iou, quantized_reward)
from .synthworld import SyntheticSequence

PAD_VALUE = 0.0


@dataclass(frozen=True)
class EpisodeConfig:
    k: float = 1.5
    patch_size: int = 32
    # None means run to the end of the sequence
    horizon: int | None = None
    pixel_scale: float = 1.0 / 255.0
    pixel_shift: float = -0.5

    def __post_init__(self) -> None:
        if not self.k > 1:
            raise ValueError("k must be > 1")
        if self.patch_size < 8:
            raise ValueError("patch_size must be >= 8")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def with_horizon(self, horizon: int | None) -> "EpisodeConfig":
        return EpisodeConfig(self.k, self.patch_size, horizon, self.pixel_scale, self.pixel_shift)


@dataclass
class Observation:
    patches: np.ndarray  # (2, C, m, m): previous-frame crop, current-frame crop
    box: BBox
    region: BBox

    @property
    def patch_prev(self) -> np.ndarray:
        return self.patches[0]

    @property
    def patch_cur(self) -> np.ndarray:
        return self.patches[1]


def _axis_weights(r0: float, rs: float, m: int, n: int) -> tuple[np.ndarray, int]:
    """Interpolation matrix (m, span) over source indices starting at the returned offset."""
    u = r0 + (np.arange(m) + 0.5) * (rs / m)
    inside = (u >= 0.0) & (u < n)
    if not inside.any():
        return np.zeros((m, 1)), 0
    q = u - 0.5
    i0 = np.floor(q)
    frac = q - i0
    i0 = i0.astype(np.int64)
    lo_idx = np.minimum(np.maximum(i0, 0), n - 1)
    hi_idx = np.minimum(np.maximum(i0 + 1, 0), n - 1)
    rows = np.nonzero(inside)[0]
    lo = int(lo_idx[rows].min())
    hi = int(hi_idx[rows].max())
    weights = np.zeros((m, hi - lo + 1))
    # each row is touched once per assignment, so fancy indexing is safe
    weights[rows, lo_idx[rows] - lo] = 1.0 - frac[rows]
    weights[rows, hi_idx[rows] - lo] += frac[rows]
    return weights, lo


def crop_frames(frames: list[np.ndarray], region: BBox, m: int, cfg: EpisodeConfig) -> np.ndarray:
    """Resample ``region`` of each (H, W, C) uint8 frame into a (len, C, m, m) stack."""
    h, w, _ = frames[0].shape
    wy, y0 = _axis_weights(region.y, region.h, m, h)
    wx, x0 = _axis_weights(region.x, region.w, m, w)
    ys = slice(y0, y0 + wy.shape[1])
    xs = slice(x0, x0 + wx.shape[1])
    sub = np.stack([f[ys, xs] for f in frames]).astype(np.float64)
    sub = sub * cfg.pixel_scale + cfg.pixel_shift                 # (F, sy, sx, C)
    rows = np.matmul(wy, sub.transpose(0, 3, 1, 2))             # (F, C, m, sx)
    return np.matmul(rows, wx.T)                                  # (F, C, m, m)


def crop_state(frame_prev: np.ndarray, frame_cur: np.ndarray, box: BBox,
               cfg: EpisodeConfig) -> Observation:
    """Build the state from two consecutive frames and the previous box."""
    if box.degenerate:
        raise DomainError(f"cannot crop around degenerate box {box}")
    region = dilate_box(box, cfg.k)
    patches = crop_frames([frame_prev, frame_cur], region, cfg.patch_size, cfg)
    return Observation(patches, box, region)


class EpisodeError(RuntimeError):
    """Raised on invalid episode transitions."""


@dataclass
class EnvState:
    sequence: SyntheticSequence
    cfg: EpisodeConfig
    t: int
    box: BBox
    done: bool = False
    total_reward: float = 0.0
    rewards: list[float] = field(default_factory=list)

    @property
    def last_index(self) -> int:
        n = len(self.sequence) - 1
        return n if self.cfg.horizon is None else min(self.cfg.horizon, n)


@dataclass
class StepResult:
    observation: Observation | None
    reward: float
    done: bool
    box: BBox
    iou: float


def reset(sequence: SyntheticSequence, cfg: EpisodeConfig,
          init_box: BBox | None = None) -> tuple[EnvState, Observation]:
    if len(sequence) < 2:
        raise EpisodeError("sequence must contain at least 2 frames")
    box = init_box if init_box is not None else sequence.groundtruth[0]
    state = EnvState(sequence, cfg, t=1, box=box)
    obs = crop_state(sequence.frames[0], sequence.frames[1], box, cfg)
    return state, obs


def step(state: EnvState, action: ActionDelta) -> StepResult:
    if state.done:
        raise EpisodeError("episode already finished")
    t = state.t
    box = clamp_size(apply_action(action, state.box))
    overlap = iou(box, state.sequence.groundtruth[t])
    reward = quantized_reward(overlap)
    state.rewards.append(reward)
    state.total_reward += reward
    state.box = box
    if t >= state.last_index:
        state.done = True
        return StepResult(None, reward, True, box, overlap)
    state.t = t + 1
    frames = state.sequence.frames
    obs = crop_state(frames[t], frames[t + 1], box, state.cfg)
    return StepResult(obs, reward, False, box, overlap)
