import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demotrack.evalkit import (EvalError, EvalReport, SequenceMetrics, ao, emit_plots, evaluate,
                               ope_run, precision_curve, ps, read_report_curves, save_report, sr,
                               ss, success_curve)
from demotrack.expert import NCC, OracleNoise
from demotrack.geometry import BBox
from demotrack.synthworld import WorldConfig, generate_sequence
from demotrack.tracker import TrajectoryRecord

WORLD = WorldConfig(width=64, height=64, min_size=10, max_size=16, min_length=6, max_length=9)
GT = [BBox(0, 0, 10, 10)] * 4


def brute_iou(a, b):
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    return inter / (a.w * a.h + b.w * b.h - inter)


def brute_metrics(traj, gt):
    """Independent double loops over frames and thresholds."""
    n = len(gt) - 1
    ious, errs = [], []
    for t in range(1, len(gt)):
        ious.append(brute_iou(traj[t], gt[t]))
        ax, ay = traj[t].x + traj[t].w / 2, traj[t].y + traj[t].h / 2
        gx, gy = gt[t].x + gt[t].w / 2, gt[t].y + gt[t].h / 2
        errs.append(math.hypot(ax - gx, ay - gy))
    succ = []
    for i in range(21):
        succ.append(sum(1 for v in ious if v > i / 20) / n)
    prec = []
    for d in range(51):
        prec.append(sum(1 for e in errs if e <= d) / n)
    return dict(ao=sum(ious) / n, sr50=sum(v > 0.5 for v in ious) / n,
                sr75=sum(v > 0.75 for v in ious) / n, ss=sum(succ) / 21, ps=prec[20],
                succ=succ, prec=prec)


def shifted(dx, dy=0.0, w=10.0, h=10.0):
    return BBox(dx, dy, w, h)


def random_fixture(rng, n):
    gt = [BBox(*rng.uniform(0, 100, 2), *rng.uniform(5, 40, 2)) for _ in range(n)]
    traj = [gt[0]] + [BBox(g.x + rng.normal(0, 8), g.y + rng.normal(0, 8),
                           g.w * rng.uniform(0.6, 1.5), g.h * rng.uniform(0.6, 1.5)) for g in gt[1:]]
    return traj, gt


class TestExamples:
    def iou_traj(self):
        # overlaps 1.0, 0.6, 0.4 against a 10x10 box via horizontal shifts
        d06 = 10 * (1 - 0.6) / (1 + 0.6)
        d04 = 10 * (1 - 0.4) / (1 + 0.4)
        return [GT[0], GT[1], shifted(d06), shifted(d04)]

    def test_ao_and_sr(self):
        traj = self.iou_traj()
        assert ao(traj, GT) == pytest.approx(2 / 3, abs=1e-12)
        assert sr(traj, GT, 0.5) == pytest.approx(2 / 3)
        assert sr(traj, GT, 0.75) == pytest.approx(1 / 3)

    def test_perfect_and_disjoint(self):
        assert ao(GT, GT) == 1.0 and ps(GT, GT) == 1.0
        curve, score = success_curve(GT, GT)
        assert curve[:-1] == [1.0] * 20 and curve[-1] == 0.0 and score == pytest.approx(20 / 21)
        far = [GT[0]] + [shifted(500)] * 3
        assert ao(far, GT) == 0.0
        assert success_curve(far, GT)[0] == [0.0] * 21 and ss(far, GT) == 0.0

    def test_strict_boundary(self):
        half = shifted(10 / 3)      # overlap exactly 0.5
        traj = [GT[0], half, half, half]
        assert ao(traj, GT) == pytest.approx(0.5)
        assert sr(traj, GT, 0.5) < 1.0

    def test_constant_offset(self):
        traj = [GT[0]] + [shifted(25)] * 3
        curve, score = precision_curve(traj, GT)
        assert score == 0.0
        assert curve[24] == 0.0 and curve[25] == 1.0

    def test_frame_zero_excluded(self):
        traj = [shifted(300)] + GT[1:]
        assert ao(traj, GT) == 1.0

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1])
    def test_threshold_domain(self, bad):
        with pytest.raises(EvalError):
            sr(GT, GT, bad)

    def test_length_mismatch(self):
        for fn in (ao, ss, ps):
            with pytest.raises(EvalError):
                fn(GT[:3], GT)
        with pytest.raises(EvalError):
            ao(GT[:1], GT[:1])


class TestOracle:
    def test_random_fixtures(self):
        rng = np.random.default_rng(21)
        for i in range(100):
            traj, gt = random_fixture(rng, int(rng.integers(2, 101)))
            m = SequenceMetrics.compute("s", traj, gt)
            b = brute_metrics(traj, gt)
            for key in ("ao", "sr50", "sr75", "ss", "ps"):
                assert abs(getattr(m, key) - b[key]) <= 1e-12, (i, key)
            assert np.max(np.abs(np.array(m.success) - b["succ"])) <= 1e-12
            assert np.max(np.abs(np.array(m.precision) - b["prec"])) <= 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 60))
    def test_curve_invariants(self, seed, n):
        traj, gt = random_fixture(np.random.default_rng(seed), n)
        m = SequenceMetrics.compute("s", traj, gt)
        assert all(0.0 <= v <= 1.0 for v in (m.ao, m.sr50, m.sr75, m.ss, m.ps))
        assert all(a >= b for a, b in zip(m.success, m.success[1:]))
        assert all(a <= b for a, b in zip(m.precision, m.precision[1:]))
        assert m.ss == pytest.approx(np.mean(m.success), abs=1e-15)
        assert m.sr50 >= m.sr75


def synthetic_report(mode="x", seed=0, count=4):
    rng = np.random.default_rng(seed)
    seqs, recs = [], []
    for i in range(count):
        traj, gt = random_fixture(rng, 12)
        seqs.append((f"s{i}", gt))
        recs.append(TrajectoryRecord(f"s{i}", traj))
    return [SequenceMetrics.compute(sid, r.boxes, gt) for (sid, gt), r in zip(seqs, recs)]


class TestReport:
    def test_aggregate_is_unweighted_mean(self):
        ms = synthetic_report()
        r = EvalReport("x", ms)
        assert r.ao == pytest.approx(np.mean([m.ao for m in ms]), abs=1e-15)
        assert r.frames == sum(m.frames for m in ms)
        single = EvalReport("x", ms[:1])
        assert (single.ao, single.ss, single.ps) == (ms[0].ao, ms[0].ss, ms[0].ps)

    @settings(max_examples=20, deadline=None)
    @given(st.permutations(range(5)))
    def test_permutation_invariant(self, order):
        ms = synthetic_report(count=5)
        a = EvalReport("x", ms)
        b = EvalReport("x", [ms[i] for i in order])
        assert a.to_text() == b.to_text()

    def test_empty(self):
        with pytest.raises(EvalError):
            EvalReport("x", [])

    def test_text_and_curves(self, tmp_path):
        r = EvalReport("a3ct", synthetic_report(), "dd", "cc", "ncc")
        save_report(r, tmp_path / "r.txt")
        back = read_report_curves(tmp_path / "r.txt")
        assert back["ao"] == r.ao and back["curve.success"] == r.success
        assert back["header.dataset"] == "dd" and back["sequences"] == 4.0
        assert len(back["curve.precision"]) == 51

    def test_evaluate_ground_truth(self):
        seqs = [generate_sequence(i, WORLD, seq_id=f"q{i}") for i in range(3)]
        recs = [TrajectoryRecord(s.id, list(s.groundtruth)) for s in seqs]
        r = evaluate(recs, seqs)
        assert r.ao == 1.0 and r.ps == 1.0
        with pytest.raises(EvalError):
            evaluate([TrajectoryRecord("zz", list(seqs[0].groundtruth))], seqs)


class TestOPE:
    def test_modes(self):
        seqs = [generate_sequence(30 + i, WORLD) for i in range(3)]
        static = ope_run("static", seqs)
        oracle = ope_run("expert", seqs, expert=OracleNoise(eta=0.0))
        assert oracle.ao == 1.0 and static.ao < 1.0
        assert ope_run("static", seqs).digest() == static.digest()
        assert ope_run("expert", seqs, expert=NCC()).expert == NCC().to_text()

    @pytest.mark.parametrize("mode, kw", [("a3ct", {}), ("a3ctd", {}), ("expert", {}), ("vot", {})])
    def test_missing_inputs(self, mode, kw):
        with pytest.raises(EvalError):
            ope_run(mode, [generate_sequence(1, WORLD)], **kw)


class TestPlots:
    def reports(self):
        return {"a3ct": EvalReport("a3ct", synthetic_report(seed=1)),
                "static": EvalReport("static", synthetic_report(seed=2))}

    def test_svg_files(self, tmp_path):
        s, p = emit_plots(self.reports(), tmp_path)
        for path in (s, p):
            text = path.read_text()
            assert text.startswith("<?xml") and "<svg" in text and text.rstrip().endswith("</svg>")
            assert len(re.findall(r"<polyline", text)) == 2
            assert "a3ct" in text and "static" in text

    def test_deterministic(self, tmp_path):
        emit_plots(self.reports(), tmp_path / "a")
        emit_plots(self.reports(), tmp_path / "b")
        for name in ("success.svg", "precision.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_from_saved_report(self, tmp_path):
        rep = self.reports()["a3ct"]
        save_report(rep, tmp_path / "r.txt")
        emit_plots({"a": rep}, tmp_path / "x")
        emit_plots({"a": read_report_curves(tmp_path / "r.txt")}, tmp_path / "y")
        assert (tmp_path / "x" / "success.svg").read_bytes() == (tmp_path / "y" / "success.svg").read_bytes()
