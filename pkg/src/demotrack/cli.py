"""Command-line entry point: ``demotrack {gen,demos,train,track,eval,plot,gradcheck}``.

Exit codes: 0 ok, 1 runtime error, 2 usage error, 3 integrity warning.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .expert import filter_positive, load_demo, parse_expert, run_expert, save_demo
from .synthworld import WorldConfig, generate_dataset, load_dataset, read_manifest

log = logging.getLogger("demotrack")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_INTEGRITY = 0, 1, 2, 3


class UsageError(Exception):
    """Invalid combination of arguments discovered after parsing."""


def _dataset_digest(directory: Path) -> str:
    return read_manifest(directory).digest()


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = WorldConfig.from_text(Path(args.world_config).read_text()) if args.world_config else WorldConfig()
    manifest = generate_dataset(args.count, args.seed, cfg, args.out)
    print(f"wrote {len(manifest.entries)} sequences to {args.out} (digest {manifest.digest()})")
    return EXIT_OK


def cmd_demos(args: argparse.Namespace) -> int:
    kind = parse_expert(args.expert)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    demos = []
    for seq in load_dataset(args.data):
        demo = run_expert(kind, seq, args.seed)
        save_demo(demo, out / f"{seq.id}.demo")
        demos.append(demo)
    positive = filter_positive(demos)
    (out / "index.txt").write_text("".join(f"{d.sequence_id}\n" for d in demos))
    (out / "positive.txt").write_text("".join(f"{d.sequence_id}\n" for d in positive))
    (out / "source.txt").write_text(f"dataset={_dataset_digest(Path(args.data))}\n"
                                    f"expert={kind.to_text()}\nseed={args.seed}\n")
    print(f"{len(positive)}/{len(demos)} positive demonstrations with {kind.to_text()}")
    return EXIT_OK


def _load_demos(directory: Path):
    index = directory / "positive.txt"
    if index.is_file():
        ids = [s for s in index.read_text().split() if s]
        return [load_demo(directory / f"{i}.demo") for i in ids]
    return [load_demo(p) for p in sorted(directory.glob("*.demo"))]


def cmd_train(args: argparse.Namespace) -> int:
    from .trainer import TrainConfig, train

    overrides = {
        "episodes": args.episodes, "seed": args.seed, "workers": args.workers,
        "lr": args.lr, "t_max": args.t_max,
        "imitation_only": True if args.imitation_only else None,
        "rl_only": True if args.rl_only else None,
        "curriculum_disabled": True if args.no_curriculum else None,
        "deterministic": True if args.deterministic else None,
    }
    text = Path(args.config).read_text() if args.config else ""
    cfg = TrainConfig.parse(text, **overrides)
    log.info("resolved training config:\n%s", cfg.to_text())
    sequences = load_dataset(args.data)
    demos = _load_demos(Path(args.demos))
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_suffix(out.suffix + ".log")
    result = train(cfg, sequences, demos, out, log_path)
    print(result.log_lines[-1].lstrip("# "))
    print(f"checkpoint {out}, log {log_path}")
    return EXIT_OK


def _select(sequences, ids: str | None):
    if not ids:
        return sequences
    wanted = ids.split(",")
    by_id = {s.id: s for s in sequences}
    missing = [i for i in wanted if i not in by_id]
    if missing:
        raise UsageError(f"unknown sequence id(s): {', '.join(missing)}")
    return [by_id[i] for i in wanted]


def cmd_track(args: argparse.Namespace) -> int:
    from .neuralnet.checkpoint import load_checkpoint
    from .tracker import save_trajectory, track_a3ct, track_a3ctd

    net = load_checkpoint(args.checkpoint)
    if args.mode == "a3ctd" and not args.expert:
        raise UsageError("--mode a3ctd needs --expert")
    kind = parse_expert(args.expert) if args.expert else None
    data = Path(args.data)
    digest = _dataset_digest(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seq in _select(load_dataset(data), args.sequences):
        if args.mode == "a3ct":
            rec = track_a3ct(net, seq)
        else:
            rec = track_a3ctd(net, kind, seq, expert_seed=args.seed)
        rec.dataset = digest
        save_trajectory(rec, out / f"{seq.id}.traj")
    print(f"wrote trajectories to {out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    from .evalkit import EvalError, evaluate, ope_run, save_report
    from .neuralnet.checkpoint import load_checkpoint
    from .tracker import load_trajectory

    data = Path(args.data)
    digest = _dataset_digest(data)
    sequences = _select(load_dataset(data), args.sequences)
    status = EXIT_OK
    if args.trajectories:
        records = [load_trajectory(p) for p in sorted(Path(args.trajectories).glob("*.traj"))]
        if not records:
            raise UsageError(f"no .traj files in {args.trajectories}")
        stale = sorted({r.dataset for r in records if r.dataset and r.dataset != digest})
        if stale:
            print(f"warning: trajectories were produced on dataset {', '.join(stale)}, "
                  f"evaluating against {digest}", file=sys.stderr)
            status = EXIT_INTEGRITY
        wanted = {s.id for s in sequences}
        records = [r for r in records if r.sequence_id in wanted]
        modes = {r.mode for r in records}
        mode = modes.pop() if len(modes) == 1 else "external"
        checkpoints = {r.checkpoint for r in records}
        experts = {r.expert for r in records}
        try:
            report = evaluate(records, sequences, mode, digest,
                              checkpoints.pop() if len(checkpoints) == 1 else "",
                              experts.pop() if len(experts) == 1 else "")
        except EvalError as exc:
            if not stale:
                raise
            # the dataset mismatch is the root cause, so report it as such
            print(f"demotrack eval: cannot score: {exc}", file=sys.stderr)
            return EXIT_INTEGRITY
    else:
        if not args.mode:
            raise UsageError("eval needs --mode or --trajectories")
        net = load_checkpoint(args.checkpoint) if args.checkpoint else None
        kind = parse_expert(args.expert) if args.expert else None
        report = ope_run(args.mode, sequences, net, kind, args.seed, digest)
    save_report(report, args.out)
    print(f"{report.mode}: AO={report.ao:.4f} SR50={report.sr50:.4f} SR75={report.sr75:.4f} "
          f"SS={report.ss:.4f} PS={report.ps:.4f} ({len(report.sequences)} sequences)")
    return status


def cmd_plot(args: argparse.Namespace) -> int:
    from .evalkit import emit_plots, read_report_curves

    reports = {}
    for item in args.report:
        name, sep, path = item.partition("=")
        if not sep:
            path = name
            name = str(read_report_curves(path).get("header.mode") or Path(path).stem)
        reports[name] = read_report_curves(path)
    s, p = emit_plots(reports, args.out)
    print(f"wrote {s} and {p}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    from .neuralnet.gradcheck import run_all

    results = run_all(args.seed)
    for name in sorted(results):
        if args.verbose:
            print(f"{name}: {results[name]:.3e}")
    worst = max(results.values())
    print(f"max relative error {worst:.3e} over {len(results)} checks")
    return EXIT_OK if worst <= args.tolerance else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="demotrack", description="Tracking agents trained from demonstrations.")
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--world-config", help="key=value world settings")
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("demos", help="run an expert over a dataset")
    d.add_argument("--data", required=True)
    d.add_argument("--expert", default="ncc", help="e.g. ncc or oracle_noise(eta=0.05)")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_demos)

    t = sub.add_parser("train", help="train a policy/value network")
    t.add_argument("--data", required=True)
    t.add_argument("--demos", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--config", help="key=value training config; flags override it")
    t.add_argument("--log", help="training log path (default: <out>.log)")
    t.add_argument("--episodes", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--workers", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--t-max", type=int)
    t.add_argument("--imitation-only", action="store_true")
    t.add_argument("--rl-only", action="store_true")
    t.add_argument("--no-curriculum", action="store_true")
    t.add_argument("--deterministic", action="store_true")
    t.set_defaults(func=cmd_train)

    k = sub.add_parser("track", help="track sequences with a checkpoint")
    k.add_argument("--checkpoint", required=True)
    k.add_argument("--data", required=True)
    k.add_argument("--mode", choices=("a3ct", "a3ctd"), default="a3ct")
    k.add_argument("--expert")
    k.add_argument("--seed", type=int, default=0, help="expert seed")
    k.add_argument("--sequences", help="comma-separated sequence ids")
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="one-pass evaluation report")
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True, help="report path")
    e.add_argument("--mode", choices=("a3ct", "a3ctd", "static", "expert"))
    e.add_argument("--checkpoint")
    e.add_argument("--expert")
    e.add_argument("--seed", type=int, default=0, help="expert seed")
    e.add_argument("--trajectories", help="directory of .traj files to score instead of tracking")
    e.add_argument("--sequences", help="comma-separated sequence ids")
    e.set_defaults(func=cmd_eval)

    pl = sub.add_parser("plot", help="success and precision SVG plots")
    pl.add_argument("--report", action="append", required=True, help="[name=]report path; repeatable")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)

    gc = sub.add_parser("gradcheck", help="finite-difference checks of the network engine")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--tolerance", type=float, default=1e-4)
    gc.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"demotrack {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # report, don't trace
        log.debug("failure", exc_info=True)
        print(f"demotrack {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
