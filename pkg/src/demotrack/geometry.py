"""Axis-aligned box arithmetic.

Boxes are ``[x, y, w, h]`` in pixels with ``(x, y)`` the top-left corner.
Actions are relative motions ``[dx, dy, dw, dh]`` in ``[-1, 1]^4`` expressed
as fractions of the reference box size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

# Minimum side length (pixels) substituted for degenerate boxes produced by
# extreme actions.
EPS_SIZE = 1e-3


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a box operation."""


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __iter__(self) -> Iterator[float]:
        return iter((self.x, self.y, self.w, self.h))

    @classmethod
    def from_seq(cls, values: Sequence[float]) -> "BBox":
        x, y, w, h = (float(v) for v in values)
        return cls(x, y, w, h)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def degenerate(self) -> bool:
        return not (self.w > 0 and self.h > 0)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)


@dataclass(frozen=True)
class ActionDelta:
    dx: float
    dy: float
    dw: float
    dh: float

    def __iter__(self) -> Iterator[float]:
        return iter((self.dx, self.dy, self.dw, self.dh))

    @classmethod
    def from_seq(cls, values: Sequence[float]) -> "ActionDelta":
        dx, dy, dw, dh = (float(v) for v in values)
        return cls(dx, dy, dw, dh)

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dw, self.dh], dtype=np.float64)


ZERO_ACTION = ActionDelta(0.0, 0.0, 0.0, 0.0)


def _require_positive(b: BBox, name: str) -> None:
    if not (b.w > 0 and b.h > 0):
        raise DomainError(f"{name} must have positive width and height, got {b}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes."""
    _require_positive(a, "a")
    _require_positive(b, "b")
    if a == b:
        # edge arithmetic like (y + h) - y can lose the last bit
        return 1.0
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return min(1.0, max(0.0, inter / union))


def apply_action(a: ActionDelta, b_prev: BBox) -> BBox:
    """Move ``b_prev`` by the relative action ``a``.

    The result is not clamped to the frame and may be degenerate
    (``w <= 0`` or ``h <= 0``) for actions at the edge of the range; check
    ``BBox.degenerate`` and use :func:`clamp_size` where a valid box is needed.
    """
    _require_positive(b_prev, "b_prev")
    return BBox(
        b_prev.x + a.dx * b_prev.w,
        b_prev.y + a.dy * b_prev.h,
        b_prev.w * (1.0 + a.dw),
        b_prev.h * (1.0 + a.dh),
    )


def clamp_size(b: BBox, eps: float = EPS_SIZE) -> BBox:
    if b.w >= eps and b.h >= eps:
        return b
    return BBox(b.x, b.y, max(b.w, eps), max(b.h, eps))


def box_delta(b_cur: BBox, b_prev: BBox) -> tuple[ActionDelta, bool]:
    """Relative action taking ``b_prev`` to ``b_cur``.

    Returns the action clipped to ``[-1, 1]^4`` and whether any component
    was clipped.
    """
    _require_positive(b_prev, "b_prev")
    raw = (
        (b_cur.x - b_prev.x) / b_prev.w,
        (b_cur.y - b_prev.y) / b_prev.h,
        (b_cur.w - b_prev.w) / b_prev.w,
        (b_cur.h - b_prev.h) / b_prev.h,
    )
    clipped = tuple(min(1.0, max(-1.0, v)) for v in raw)
    return ActionDelta(*clipped), clipped != raw


def floor_to_grid(z: float) -> float:
    """Floor ``z`` to the 0.05 grid, robust to binary representation error."""
    return math.floor(z * 20.0 + 1e-9) / 20.0


def quantized_reward(iou_value: float) -> float:
    """Reward for an overlap value.

    ``2 * floor_0.05(iou) - 1`` when ``iou >= 0.5``, otherwise ``-1``. The
    image is exactly ``{-1, 0.0, 0.1, ..., 1.0}``.
    """
    if not (0.0 <= iou_value <= 1.0):
        raise DomainError(f"IoU must lie in [0, 1], got {iou_value!r}")
    if iou_value < 0.5:
        return -1.0
    n = math.floor(iou_value * 20.0 + 1e-9)
    # (2n - 20) / 20 is a single correctly-rounded division, so the result is
    # the float nearest to the exact grid value.
    return (2 * n - 20) / 20


def dilate_box(b: BBox, k: float) -> BBox:
    """Scale ``b`` by ``k`` about its center."""
    if not k > 0:
        raise DomainError(f"dilation factor must be positive, got {k!r}")
    cx, cy = b.center
    w, h = b.w * k, b.h * k
    return BBox(cx - w / 2.0, cy - h / 2.0, w, h)


def center_distance(a: BBox, b: BBox) -> float:
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by)
