"""Test-time trackers.

``track_a3ct`` rolls the greedy policy forward from the initial box.
``track_a3ctd`` additionally runs an expert tracker alongside and, frame by
frame, keeps whichever box the value head scores higher. The expert follows
its own trajectory; the agent always continues from the arbitrated box.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

from .expert import Expert, ExpertKind, make_expert
from .geometry import BBox, apply_action, clamp_size
from .mdp import EpisodeConfig, crop_state
from .neuralnet.checkpoint import checkpoint_digest
from .neuralnet.model import PolicyValueNet, RecurrentState
from .synthworld import SyntheticSequence

AGENT = "agent"
EXPERT = "expert"
TRAJECTORY_FIELDS = "t,x,y,w,h,source,Rhat,Rhat_d"


class CheckpointRefused(ValueError):
    """Raised when a checkpoint cannot drive the requested tracker mode."""


class TrajectoryFormatError(ValueError):
    """Raised for malformed trajectory files."""


@dataclass
class TrajectoryRecord:
    sequence_id: str
    boxes: list[BBox]
    mode: str = "a3ct"
    sources: list[str | None] | None = None
    values: list[float | None] | None = None
    expert_values: list[float | None] | None = None
    frame_times: list[float] = field(default_factory=list)
    checkpoint: str = ""
    expert: str = ""
    dataset: str = ""

    def __len__(self) -> int:
        return len(self.boxes)

    def to_text(self) -> str:
        """Serialized form; wall times are left out so files stay reproducible."""
        head = [f"# mode={self.mode}", f"# checkpoint={self.checkpoint}",
                f"# expert={self.expert}", f"# sequence={self.sequence_id}"]
        if self.dataset:
            head.append(f"# dataset={self.dataset}")
        lines = head + [TRAJECTORY_FIELDS]
        for t, b in enumerate(self.boxes):
            src = self.sources[t] if self.sources else None
            rv = self.values[t] if self.values else None
            rd = self.expert_values[t] if self.expert_values else None
            lines.append(f"{t},{b.x!r},{b.y!r},{b.w!r},{b.h!r},{src or ''},"
                         f"{_num(rv)},{_num(rd)}")
        return "\n".join(lines) + "\n"


def _num(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def save_trajectory(rec: TrajectoryRecord, path: str | Path) -> None:
    Path(path).write_text(rec.to_text())


def load_trajectory(path: str | Path) -> TrajectoryRecord:
    header: dict[str, str] = {}
    boxes, sources, values, evalues = [], [], [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
            continue
        if line == TRAJECTORY_FIELDS:
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise TrajectoryFormatError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        try:
            t = int(parts[0])
            box = BBox(*(float(v) for v in parts[1:5]))
            rv = float(parts[6]) if parts[6] else None
            rd = float(parts[7]) if parts[7] else None
        except ValueError as exc:
            raise TrajectoryFormatError(f"{path}:{lineno}: {exc}") from None
        if t != len(boxes):
            raise TrajectoryFormatError(f"{path}:{lineno}: frame index {t} out of order")
        boxes.append(box)
        sources.append(parts[5] or None)
        values.append(rv)
        evalues.append(rd)
    if "sequence" not in header:
        raise TrajectoryFormatError(f"{path}: missing sequence header")
    mode = header.get("mode", "")
    dual = mode == "a3ctd"
    return TrajectoryRecord(header["sequence"], boxes, mode,
                            sources if dual else None, values if dual else None,
                            evalues if dual else None, [], header.get("checkpoint", ""),
                            header.get("expert", ""), header.get("dataset", ""))


def episode_config_for(net: PolicyValueNet) -> EpisodeConfig:
    k = float(net.meta.get("k", 1.5))
    return EpisodeConfig(k=k, patch_size=net.cfg.patch_size)


def _check_shapes(net: PolicyValueNet, sequence: SyntheticSequence) -> None:
    if sequence.channels != net.cfg.channels:
        raise ValueError(f"checkpoint expects {net.cfg.channels} channel(s), "
                         f"sequence {sequence.id} has {sequence.channels}")
    if len(sequence) < 1:
        raise ValueError(f"sequence {sequence.id} is empty")


def track_a3ct(net: PolicyValueNet, sequence: SyntheticSequence, init_box: BBox | None = None,
               cfg: EpisodeConfig | None = None) -> TrajectoryRecord:
    """Greedy rollout with a propagating recurrent state and frozen weights."""
    _check_shapes(net, sequence)
    cfg = cfg or episode_config_for(net)
    box = init_box if init_box is not None else sequence.groundtruth[0]
    boxes = [box]
    times = [0.0]
    state = net.initial_state()
    frames = sequence.frames
    for t in range(1, len(sequence)):
        start = time.perf_counter()
        obs = crop_state(frames[t - 1], frames[t], box, cfg)
        mu, _, state = net.forward(obs, state)
        box = clamp_size(apply_action(mu, box))
        boxes.append(box)
        times.append(time.perf_counter() - start)
    return TrajectoryRecord(sequence.id, boxes, "a3ct", frame_times=times,
                            checkpoint=checkpoint_digest(net))


def ensure_value_head(net: PolicyValueNet) -> None:
    if net.meta.get("imitation_only") == "1" or net.meta.get("value_trained") == "0":
        raise CheckpointRefused(
            "checkpoint was trained without RL workers; its value head is untrained "
            "and cannot arbitrate between agent and expert")


class DualStreamTracker:
    """Per-frame arbitration between the agent's proposal and a live expert.

    The two value estimates come from separate recurrent streams: one fed with
    crops around the arbitrated boxes, one with crops around the expert's own
    boxes. ``expert=None`` disables the expert (its value is ``-inf``).
    """

    def __init__(self, net: PolicyValueNet, expert: Expert | None,
                 cfg: EpisodeConfig | None = None) -> None:
        self.net = net
        self.expert = expert
        self.cfg = cfg or episode_config_for(net)

    def agent_step(self, obs, state: RecurrentState):
        return self.net.forward(obs, state)

    def expert_value(self, obs, state: RecurrentState) -> tuple[float, RecurrentState]:
        _, value, state = self.net.forward(obs, state)
        return value, state

    def run(self, sequence: SyntheticSequence, init_box: BBox | None = None) -> TrajectoryRecord:
        _check_shapes(self.net, sequence)
        box = init_box if init_box is not None else sequence.groundtruth[0]
        expert_box = box
        if self.expert is not None:
            self.expert.start(sequence, box)
        a_state = self.net.initial_state()
        e_state = self.net.initial_state()
        boxes, sources, values, evalues, times = [box], [None], [None], [None], [0.0]
        frames = sequence.frames
        for t in range(1, len(sequence)):
            start = time.perf_counter()
            obs = crop_state(frames[t - 1], frames[t], box, self.cfg)
            mu, r_hat, a_state = self.agent_step(obs, a_state)
            proposal = clamp_size(apply_action(mu, box))
            if self.expert is not None:
                e_obs = crop_state(frames[t - 1], frames[t], expert_box, self.cfg)
                r_hat_d, e_state = self.expert_value(e_obs, e_state)
                expert_box = self.expert.track(t)
            else:
                r_hat_d = -math.inf
            # ties go to the agent
            if r_hat >= r_hat_d:
                box, src = proposal, AGENT
            else:
                box, src = expert_box, EXPERT
            boxes.append(box)
            sources.append(src)
            values.append(r_hat)
            evalues.append(None if self.expert is None else r_hat_d)
            times.append(time.perf_counter() - start)
        return TrajectoryRecord(sequence.id, boxes, "a3ctd", sources, values, evalues, times,
                                checkpoint_digest(self.net))


def track_a3ctd(net: PolicyValueNet, expert: ExpertKind | Expert | None,
                sequence: SyntheticSequence, init_box: BBox | None = None,
                expert_seed: int = 0, cfg: EpisodeConfig | None = None) -> TrajectoryRecord:
    """Track with value-based arbitration; refuses checkpoints without a trained value head."""
    ensure_value_head(net)
    label = ""
    runner: Expert | None
    if expert is None:
        runner = None
    elif hasattr(expert, "track"):
        runner = expert  # type: ignore[assignment]
    else:
        runner = make_expert(expert, expert_seed)  # type: ignore[arg-type]
        label = expert.to_text()  # type: ignore[union-attr]
    rec = DualStreamTracker(net, runner, cfg).run(sequence, init_box)
    rec.expert = label
    return rec
