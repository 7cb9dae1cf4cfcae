"""Scripted expert trackers and their demonstrations.

Two families are provided. ``OracleNoise`` perturbs the ground truth with
jitter and occasional persistent drift, giving demonstrations of controllable
quality. ``NCC`` is a template matcher (normalized cross-correlation over a
dilated search window at three scales) that fails the way real trackers do,
by drifting or latching onto distractors.
"""

from __future__ import annotations

import math
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geometry import (ActionDelta, BBox, apply_action, box_delta, dilate_box, iou,
                       quantized_reward)
from .synthworld import Rng, SyntheticSequence

DEMO_VERSION = 1
_TIE_TOL = 1e-9


class DemoFormatError(ValueError):
    """Raised when a demonstration file is malformed."""


@dataclass(frozen=True)
class OracleNoise:
    """Ground truth plus Gaussian jitter (``eta`` relative to box size) and drift."""

    eta: float = 0.05
    drift_prob: float = 0.1

    def __post_init__(self) -> None:
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if not 0 <= self.drift_prob <= 1:
            raise ValueError("drift_prob must lie in [0, 1]")

    def to_text(self) -> str:
        return f"oracle_noise(eta={self.eta!r},drift_prob={self.drift_prob!r})"


@dataclass(frozen=True)
class NCC:
    """Template matcher searching the previous box dilated by ``search``."""

    search: float = 2.0
    scales: tuple[float, ...] = (0.96, 1.0, 1.04)
    update_rate: float = 0.0

    def __post_init__(self) -> None:
        if not self.scales:
            raise ValueError("scale set must be non-empty")
        if self.search < 1:
            raise ValueError("search dilation must be >= 1")
        if not 0 <= self.update_rate <= 1:
            raise ValueError("update_rate must lie in [0, 1]")

    def to_text(self) -> str:
        scales = "|".join(repr(s) for s in self.scales)
        return f"ncc(search={self.search!r},scales={scales},update_rate={self.update_rate!r})"


ExpertKind = Union[OracleNoise, NCC]


def parse_expert(text: str) -> ExpertKind:
    """Parse ``oracle_noise(eta=..,drift_prob=..)`` or ``ncc(search=..,scales=a|b|c,update_rate=..)``."""
    m = re.fullmatch(r"\s*(\w+)\s*(?:\((.*)\))?\s*", text)
    if not m:
        raise ValueError(f"cannot parse expert {text!r}")
    name, body = m.group(1), m.group(2) or ""
    kwargs: dict[str, object] = {}
    for item in filter(None, (p.strip() for p in body.split(","))):
        if "=" not in item:
            raise ValueError(f"expected key=value in expert spec, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key == "scales":
            kwargs[key] = tuple(float(v) for v in value.split("|"))
        else:
            kwargs[key] = float(value)
    try:
        if name == "oracle_noise":
            return OracleNoise(**kwargs)  # type: ignore[arg-type]
        if name == "ncc":
            return NCC(**kwargs)  # type: ignore[arg-type]
    except TypeError as exc:
        raise ValueError(f"bad parameters for expert {name!r}: {exc}") from None
    raise ValueError(f"unknown expert {name!r}")


class Expert(Protocol):
    def start(self, sequence: SyntheticSequence, init_box: BBox) -> None: ...

    def track(self, t: int) -> BBox: ...


def _gray(frame: np.ndarray) -> np.ndarray:
    f = frame.astype(np.float64)
    return f[..., 0] if f.shape[-1] == 1 else f.mean(axis=-1)


def _resample(img: np.ndarray, region: BBox, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of ``region`` of a 2-D image, edge-clamped."""
    H, W = img.shape
    u = region.x + (np.arange(out_w) + 0.5) * (region.w / out_w) - 0.5
    v = region.y + (np.arange(out_h) + 0.5) * (region.h / out_h) - 0.5
    x0 = np.floor(u).astype(int)
    y0 = np.floor(v).astype(int)
    fx = u - x0
    fy = v - y0
    xa, xb = np.clip(x0, 0, W - 1), np.clip(x0 + 1, 0, W - 1)
    ya, yb = np.clip(y0, 0, H - 1), np.clip(y0 + 1, 0, H - 1)
    top = img[ya][:, xa] * (1 - fx) + img[ya][:, xb] * fx
    bot = img[yb][:, xa] * (1 - fx) + img[yb][:, xb] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def ncc_map(window: np.ndarray, template: np.ndarray) -> np.ndarray:
    """NCC of ``template`` at every valid offset in ``window``; NaN where undefined."""
    th, tw = template.shape
    t = template - template.mean()
    t_norm = math.sqrt(float((t * t).sum()))
    ny, nx = window.shape[0] - th + 1, window.shape[1] - tw + 1
    if t_norm <= 1e-9 or ny <= 0 or nx <= 0:
        return np.full((max(ny, 0), max(nx, 0)), np.nan)
    views = sliding_window_view(window, (th, tw))
    cross = np.tensordot(views, t, axes=([2, 3], [0, 1]))
    # window sums through integral images
    ii = np.pad(window, ((1, 0), (1, 0))).cumsum(0).cumsum(1)
    ii2 = np.pad(window * window, ((1, 0), (1, 0))).cumsum(0).cumsum(1)

    def box_sum(a: np.ndarray) -> np.ndarray:
        return a[th:, tw:] - a[:-th, tw:] - a[th:, :-tw] + a[:-th, :-tw]

    n = th * tw
    s1 = box_sum(ii)
    var = box_sum(ii2) - s1 * s1 / n
    with np.errstate(invalid="ignore", divide="ignore"):
        score = cross / (np.sqrt(np.maximum(var, 0.0)) * t_norm)
    score[var <= 1e-6 * n] = np.nan
    return score


class NCCTracker:
    def __init__(self, params: NCC) -> None:
        self.params = params
        self.template: np.ndarray | None = None
        self.box: BBox | None = None
        self.sequence: SyntheticSequence | None = None

    def start(self, sequence: SyntheticSequence, init_box: BBox) -> None:
        self.sequence = sequence
        self.box = init_box
        th = max(int(round(init_box.h)), 2)
        tw = max(int(round(init_box.w)), 2)
        self.template = _resample(_gray(sequence.frames[0]), init_box, th, tw)

    def track(self, t: int) -> BBox:
        assert self.sequence is not None and self.box is not None
        self.box = ncc_step(self.template, self.box, self.sequence.frames[t], self.params)
        if self.params.update_rate > 0:
            th, tw = self.template.shape
            patch = _resample(_gray(self.sequence.frames[t]), self.box, th, tw)
            r = self.params.update_rate
            self.template = (1 - r) * self.template + r * patch
        return self.box


def ncc_step(template: np.ndarray, prev: BBox, frame: np.ndarray, params: NCC) -> BBox:
    """One exhaustive NCC search around ``prev``; returns ``prev`` when nothing matches."""
    img = _gray(frame)
    H, W = img.shape
    region = dilate_box(prev, params.search)
    x0 = max(int(math.floor(region.x)), 0)
    y0 = max(int(math.floor(region.y)), 0)
    x1 = min(int(math.ceil(region.x + region.w)), W)
    y1 = min(int(math.ceil(region.y + region.h)), H)
    if x1 <= x0 or y1 <= y0:
        return prev
    window = img[y0:y1, x0:x1]
    pcx, pcy = prev.center
    base_h, base_w = template.shape

    best: tuple[float, float, float] | None = None  # (-score, displacement, |log s|)
    best_box = prev
    for s in params.scales:
        w, h = prev.w * s, prev.h * s
        tw, th = max(int(round(w)), 2), max(int(round(h)), 2)
        if th > window.shape[0] or tw > window.shape[1]:
            continue
        tmpl = _resample(template, BBox(0.0, 0.0, float(base_w), float(base_h)), th, tw)
        score = ncc_map(window, tmpl)
        if score.size == 0 or np.all(np.isnan(score)):
            continue
        top = np.nanmax(score)
        oy, ox = np.nonzero(score >= top - _TIE_TOL)
        cx = x0 + ox + tw / 2.0
        cy = y0 + oy + th / 2.0
        disp = np.hypot(cx - pcx, cy - pcy)
        i = int(np.lexsort((disp,))[0])
        key = (-float(top), float(disp[i]), abs(math.log(s)))
        if best is None or _better(key, best):
            best = key
            best_box = BBox(float(cx[i]) - w / 2.0, float(cy[i]) - h / 2.0, w, h)
    return best_box


def _better(a: tuple[float, float, float], b: tuple[float, float, float]) -> bool:
    if abs(a[0] - b[0]) > _TIE_TOL:
        return a[0] < b[0]
    return a[1:] < b[1:]


class OracleNoiseTracker:
    def __init__(self, params: OracleNoise, seed: int) -> None:
        self.params = params
        self.seed = seed
        self.sequence: SyntheticSequence | None = None

    def start(self, sequence: SyntheticSequence, init_box: BBox) -> None:
        self.sequence = sequence
        self.rng = Rng(self.seed, zlib.crc32(sequence.id.encode()))
        self.drift = [0.0, 0.0]

    def track(self, t: int) -> BBox:
        assert self.sequence is not None
        g = self.sequence.groundtruth[t]
        eta = self.params.eta
        # every draw is made regardless of eta so quality is monotone in eta
        drift_event = self.rng.uniform() < self.params.drift_prob
        kick = self.rng.normal(size=2)
        n = self.rng.normal(size=4)
        if drift_event:
            self.drift[0] += eta * float(kick[0])
            self.drift[1] += eta * float(kick[1])
        return BBox(
            g.x + (self.drift[0] + eta * float(n[0])) * g.w,
            g.y + (self.drift[1] + eta * float(n[1])) * g.h,
            g.w * math.exp(eta * float(n[2])),
            g.h * math.exp(eta * float(n[3])),
        )


def make_expert(kind: ExpertKind, seed: int = 0) -> Expert:
    if isinstance(kind, OracleNoise):
        return OracleNoiseTracker(kind, seed)
    if isinstance(kind, NCC):
        return NCCTracker(kind)
    raise TypeError(f"unknown expert kind {kind!r}")


@dataclass
class Demonstration:
    sequence_id: str
    boxes: list[BBox]
    ious: list[float | None]
    expert: str = ""
    seed: int = 0
    actions: list[ActionDelta] = field(init=False)
    clipped: list[bool] = field(init=False)
    rewards: list[float] = field(init=False)

    def __post_init__(self) -> None:
        if len(self.boxes) != len(self.ious):
            raise ValueError("boxes and ious must have equal length")
        if len(self.boxes) < 2:
            raise ValueError("a demonstration needs at least 2 frames")
        self.actions, self.clipped = [], []
        for prev, cur in zip(self.boxes, self.boxes[1:]):
            a, c = box_delta(cur, prev)
            self.actions.append(a)
            self.clipped.append(c)
        self.rewards = [quantized_reward(v) for v in self.ious[1:]]

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def positive(self) -> bool:
        return all(v > 0.5 for v in self.ious[1:])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Demonstration):
            return NotImplemented
        return (self.sequence_id == other.sequence_id and self.boxes == other.boxes
                and self.ious == other.ious and self.expert == other.expert
                and self.seed == other.seed)


def run_expert(kind: ExpertKind, sequence: SyntheticSequence, seed: int = 0) -> Demonstration:
    """Run an expert over ``sequence`` starting from the first ground-truth box."""
    if len(sequence) < 2:
        raise ValueError("sequence must contain at least 2 frames")
    expert = make_expert(kind, seed)
    g0 = sequence.groundtruth[0]
    expert.start(sequence, g0)
    boxes = [g0]
    ious: list[float | None] = [None]
    for t in range(1, len(sequence)):
        b = expert.track(t)
        if b.degenerate:
            b = boxes[-1]
        boxes.append(b)
        ious.append(iou(b, sequence.groundtruth[t]))
    return Demonstration(sequence.id, boxes, ious, kind.to_text(), seed)


def filter_positive(demos: Iterable[Demonstration]) -> list[Demonstration]:
    """Keep demonstrations whose IoU with ground truth exceeds 0.5 on every frame t >= 1."""
    return [d for d in demos if d.positive]


def save_demo(demo: Demonstration, path: str | Path) -> None:
    lines = [
        f"# version={DEMO_VERSION}",
        f"# expert={demo.expert}",
        f"# seed={demo.seed}",
        f"# positive={int(demo.positive)}",
        f"# sequence={demo.sequence_id}",
    ]
    for b, v in zip(demo.boxes, demo.ious):
        lines.append(f"{b.x!r},{b.y!r},{b.w!r},{b.h!r}," + ("" if v is None else repr(v)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_demo(path: str | Path) -> Demonstration:
    header: dict[str, str] = {}
    boxes: list[BBox] = []
    ious: list[float | None] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise DemoFormatError(f"{path}:{lineno}: malformed header line {line!r}")
            header[key.strip()] = value.strip()
            continue
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise DemoFormatError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            boxes.append(BBox.from_seq(parts[:4]))
            ious.append(None if parts[4] == "" else float(parts[4]))
        except ValueError as exc:
            raise DemoFormatError(f"{path}:{lineno}: {exc}") from None
    for key in ("version", "expert", "seed", "positive", "sequence"):
        if key not in header:
            raise DemoFormatError(f"{path}: missing header field {key!r}")
    if header["version"] != str(DEMO_VERSION):
        raise DemoFormatError(f"{path}: unsupported version {header['version']}")
    if len(boxes) < 2 or ious[0] is not None or any(v is None for v in ious[1:]):
        raise DemoFormatError(f"{path}: iou column must be empty exactly at t=0")
    demo = Demonstration(header["sequence"], boxes, ious, header["expert"], int(header["seed"]))
    if int(header["positive"]) != int(demo.positive):
        raise DemoFormatError(f"{path}: positive flag disagrees with stored IoUs")
    return demo


def replay_matches(demo: Demonstration) -> bool:
    """True when re-applying unclipped actions reproduces every stored box."""
    for t, (a, c) in enumerate(zip(demo.actions, demo.clipped), 1):
        if c:
            continue
        b = apply_action(a, demo.boxes[t - 1])
        if max(abs(u - v) for u, v in zip(b, demo.boxes[t])) > 1e-9 * max(1.0, *map(abs, demo.boxes[t])):
            return False
    return True
