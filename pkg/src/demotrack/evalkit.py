"""One-pass evaluation: overlap and center-error metrics, reports and SVG plots.

Every metric skips frame 0, which is the initialization frame.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .expert import ExpertKind, make_expert
from .geometry import BBox, center_distance, iou
from .neuralnet.checkpoint import checkpoint_digest
from .neuralnet.model import PolicyValueNet
from .synthworld import SyntheticSequence
from .tracker import TrajectoryRecord, track_a3ct, track_a3ctd

SUCCESS_THRESHOLDS = tuple(i / 20 for i in range(21))
PRECISION_THRESHOLDS = tuple(range(51))
PS_DISTANCE = 20
MODES = ("a3ct", "a3ctd", "static", "expert")


class EvalError(ValueError):
    """Raised for misaligned trajectories or inconsistent evaluation inputs."""


def _aligned(traj: Sequence[BBox], gt: Sequence[BBox]) -> None:
    if len(traj) != len(gt):
        raise EvalError(f"trajectory has {len(traj)} boxes, ground truth {len(gt)}")
    if len(gt) < 2:
        raise EvalError("need at least one frame after initialization")


def overlaps(traj: Sequence[BBox], gt: Sequence[BBox]) -> np.ndarray:
    _aligned(traj, gt)
    return np.array([iou(b, g) for b, g in zip(traj[1:], gt[1:])])


def center_errors(traj: Sequence[BBox], gt: Sequence[BBox]) -> np.ndarray:
    _aligned(traj, gt)
    return np.array([center_distance(b, g) for b, g in zip(traj[1:], gt[1:])])


def ao(traj: Sequence[BBox], gt: Sequence[BBox]) -> float:
    return float(np.mean(overlaps(traj, gt)))


def sr(traj: Sequence[BBox], gt: Sequence[BBox], threshold: float) -> float:
    """Fraction of frames whose overlap strictly exceeds ``threshold``."""
    if not 0 < threshold < 1:
        raise EvalError("threshold must lie in (0, 1)")
    return float(np.mean(overlaps(traj, gt) > threshold))


def _success(o: np.ndarray) -> list[float]:
    return [float(np.mean(o > th)) for th in SUCCESS_THRESHOLDS]


def _precision(e: np.ndarray) -> list[float]:
    return [float(np.mean(e <= d)) for d in PRECISION_THRESHOLDS]


def success_curve(traj: Sequence[BBox], gt: Sequence[BBox]) -> tuple[list[float], float]:
    curve = _success(overlaps(traj, gt))
    return curve, float(np.mean(curve))


def ss(traj: Sequence[BBox], gt: Sequence[BBox]) -> float:
    return success_curve(traj, gt)[1]


def precision_curve(traj: Sequence[BBox], gt: Sequence[BBox]) -> tuple[list[float], float]:
    curve = _precision(center_errors(traj, gt))
    return curve, curve[PS_DISTANCE]


def ps(traj: Sequence[BBox], gt: Sequence[BBox]) -> float:
    return precision_curve(traj, gt)[1]


@dataclass
class SequenceMetrics:
    sequence_id: str
    frames: int
    ao: float
    sr50: float
    sr75: float
    success: list[float]
    ss: float
    precision: list[float]
    ps: float

    @classmethod
    def compute(cls, sequence_id: str, traj: Sequence[BBox], gt: Sequence[BBox]) -> "SequenceMetrics":
        o = overlaps(traj, gt)
        e = center_errors(traj, gt)
        succ = _success(o)
        prec = _precision(e)
        return cls(sequence_id, len(o), float(np.mean(o)), float(np.mean(o > 0.5)),
                   float(np.mean(o > 0.75)), succ, float(np.mean(succ)), prec, prec[PS_DISTANCE])


_SCALARS = ("ao", "sr50", "sr75", "ss", "ps")


def _column_means(rows: list[list[float]]) -> list[float]:
    return [math.fsum(col) / len(rows) for col in zip(*rows)]


@dataclass
class EvalReport:
    mode: str
    sequences: list[SequenceMetrics]
    dataset: str = ""
    checkpoint: str = ""
    expert: str = ""
    trajectories: list[TrajectoryRecord] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if not self.sequences:
            raise EvalError("a report needs at least one sequence")

    def _mean(self, name: str) -> float:
        # fsum is correctly rounded, so aggregates do not depend on sequence order
        return math.fsum(getattr(m, name) for m in self.sequences) / len(self.sequences)

    @property
    def ao(self) -> float:
        return self._mean("ao")

    @property
    def sr50(self) -> float:
        return self._mean("sr50")

    @property
    def sr75(self) -> float:
        return self._mean("sr75")

    @property
    def ss(self) -> float:
        return self._mean("ss")

    @property
    def ps(self) -> float:
        return self._mean("ps")

    @property
    def frames(self) -> int:
        return sum(m.frames for m in self.sequences)

    @property
    def success(self) -> list[float]:
        return _column_means([m.success for m in self.sequences])

    @property
    def precision(self) -> list[float]:
        return _column_means([m.precision for m in self.sequences])

    def to_text(self) -> str:
        lines = [f"# mode={self.mode}", f"# dataset={self.dataset}",
                 f"# checkpoint={self.checkpoint}", f"# expert={self.expert}",
                 f"sequences={len(self.sequences)}", f"frames={self.frames}"]
        lines += [f"{k}={getattr(self, k)!r}" for k in _SCALARS]
        lines.append("curve.success=" + ";".join(repr(v) for v in self.success))
        lines.append("curve.precision=" + ";".join(repr(v) for v in self.precision))
        for m in sorted(self.sequences, key=lambda m: m.sequence_id):
            lines.append(f"seq.{m.sequence_id}.frames={m.frames}")
            lines += [f"seq.{m.sequence_id}.{k}={getattr(m, k)!r}" for k in _SCALARS]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def save_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(report.to_text())


def read_report_curves(path: str | Path) -> dict[str, object]:
    """Scalars, curves and header of a saved report (enough to re-plot it)."""
    out: dict[str, object] = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            out[f"header.{k}"] = v
        elif line.startswith("curve."):
            k, _, v = line.partition("=")
            out[k] = [float(x) for x in v.split(";")]
        elif "=" in line and not line.startswith("seq."):
            k, _, v = line.partition("=")
            out[k] = float(v)
    return out


def evaluate(records: Iterable[TrajectoryRecord], sequences: Mapping[str, SyntheticSequence] | Sequence[SyntheticSequence],
             mode: str = "external", dataset: str = "", checkpoint: str = "", expert: str = "") -> EvalReport:
    """Score already computed trajectories against the sequences' ground truth."""
    by_id = sequences if isinstance(sequences, Mapping) else {s.id: s for s in sequences}
    records = list(records)
    metrics = []
    for rec in records:
        if rec.sequence_id not in by_id:
            raise EvalError(f"no ground truth for sequence {rec.sequence_id!r}")
        metrics.append(SequenceMetrics.compute(rec.sequence_id, rec.boxes,
                                               by_id[rec.sequence_id].groundtruth))
    return EvalReport(mode, metrics, dataset, checkpoint, expert, records)


def static_trajectory(sequence: SyntheticSequence) -> TrajectoryRecord:
    g0 = sequence.groundtruth[0]
    return TrajectoryRecord(sequence.id, [g0] * len(sequence), "static")


def expert_trajectory(kind: ExpertKind, sequence: SyntheticSequence, seed: int = 0) -> TrajectoryRecord:
    runner = make_expert(kind, seed)
    g0 = sequence.groundtruth[0]
    runner.start(sequence, g0)
    boxes = [g0] + [runner.track(t) for t in range(1, len(sequence))]
    return TrajectoryRecord(sequence.id, boxes, "expert", expert=kind.to_text())


def ope_run(mode: str, sequences: Sequence[SyntheticSequence], net: PolicyValueNet | None = None,
            expert: ExpertKind | None = None, expert_seed: int = 0, dataset: str = "") -> EvalReport:
    """One-pass evaluation: start every sequence from its first ground-truth box, never reset."""
    if mode not in MODES:
        raise EvalError(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode in ("a3ct", "a3ctd") and net is None:
        raise EvalError(f"mode {mode} needs a checkpoint")
    if mode in ("a3ctd", "expert") and expert is None:
        raise EvalError(f"mode {mode} needs an expert")
    records = []
    for seq in sequences:
        if mode == "a3ct":
            rec = track_a3ct(net, seq)
        elif mode == "a3ctd":
            rec = track_a3ctd(net, expert, seq, expert_seed=expert_seed)
        elif mode == "static":
            rec = static_trajectory(seq)
        else:
            rec = expert_trajectory(expert, seq, expert_seed)
        rec.dataset = dataset
        records.append(rec)
    digest = checkpoint_digest(net) if net is not None and mode in ("a3ct", "a3ctd") else ""
    label = expert.to_text() if expert is not None and mode in ("a3ctd", "expert") else ""
    return evaluate(records, sequences, mode, dataset, digest, label)


# -- plots ---------------------------------------------------------------------

_W, _H = 480, 360
_LEFT, _RIGHT, _TOP, _BOTTOM = 60, 20, 30, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _svg(title: str, xlabel: str, ylabel: str, xs: Sequence[float], xmax: float,
         series: list[tuple[str, list[float], float]]) -> str:
    pw = _W - _LEFT - _RIGHT
    ph = _H - _TOP - _BOTTOM

    def px(x: float) -> str:
        return f"{_LEFT + pw * x / xmax:.2f}"

    def py(y: float) -> str:
        return f"{_TOP + ph * (1.0 - y):.2f}"

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<text x="{_W / 2:.0f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{_LEFT}" y1="{_TOP + ph}" x2="{_LEFT + pw}" y2="{_TOP + ph}" stroke="black"/>',
           f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + ph}" stroke="black"/>']
    for i in range(6):
        v = i / 5
        out.append(f'<text x="{_LEFT - 6}" y="{py(v)}" text-anchor="end" font-size="10">{v:.1f}</text>')
        xv = xmax * i / 5
        label = f"{xv:.1f}" if xmax <= 1 else f"{xv:.0f}"
        out.append(f'<text x="{px(xv)}" y="{_TOP + ph + 14}" text-anchor="middle" '
                   f'font-size="10">{label}</text>')
    out.append(f'<text x="{_LEFT + pw / 2:.0f}" y="{_H - 10}" text-anchor="middle" '
               f'font-size="12">{xlabel}</text>')
    out.append(f'<text x="14" y="{_TOP + ph / 2:.0f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 14 {_TOP + ph / 2:.0f})">{ylabel}</text>')
    for k, (name, ys, score) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{px(x)},{py(y)}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = _TOP + 14 + 16 * k
        out.append(f'<line x1="{_LEFT + pw - 150}" y1="{ly}" x2="{_LEFT + pw - 130}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_LEFT + pw - 125}" y="{ly + 4}" font-size="11">'
                   f'{_escape(name)} [{score:.3f}]</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_plots(reports: Mapping[str, EvalReport | Mapping[str, object]], out_dir: str | Path
               ) -> tuple[Path, Path]:
    """Write ``success.svg`` and ``precision.svg`` with one curve per named report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    succ, prec = [], []
    for name in reports:
        r = reports[name]
        if isinstance(r, EvalReport):
            s_curve, p_curve, s_score, p_score = r.success, r.precision, r.ss, r.ps
        else:
            s_curve, p_curve = r["curve.success"], r["curve.precision"]  # type: ignore[index]
            s_score, p_score = float(r["ss"]), float(r["ps"])  # type: ignore[arg-type]
        succ.append((name, list(s_curve), s_score))
        prec.append((name, list(p_curve), p_score))
    s_path = out / "success.svg"
    p_path = out / "precision.svg"
    s_path.write_text(_svg("Success plot", "Overlap threshold", "Success rate",
                           SUCCESS_THRESHOLDS, 1.0, succ))
    p_path.write_text(_svg("Precision plot", "Location error threshold (px)", "Precision",
                           PRECISION_THRESHOLDS, 50.0, prec))
    return s_path, p_path
