"""Command-line surface: score, select, eval, simulate, ablate-tau.

Exit codes: 0 success, 1 usage error, 2 data/format error.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .boxmask import ResegmenterSpec, ScoringConfig, expand_crop_region, generate_boxmask
from .domain import SampleRecord
from .formats import (
    FormatError,
    ScoreRow,
    load_manifest,
    parse_sim_config,
    read_scores_csv,
    write_cycle_reports_csv,
    write_eval_report_csv,
    write_scores_csv,
    write_tau_sweep_csv,
)
from .inconsistency import score_sample
from .metrics import build_report, mean_average_precision, mean_iou
from .simulator import DEFAULT_SPACE, StrategyKind, generate_world, run_simulation, select_batch

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; this CLI reserves
    2 for data errors, so remap usage problems to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _open_unit(value: str) -> float:
    x = float(value)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"{value} not in (0, 1)")
    return x


def _closed_unit(value: str) -> float:
    x = float(value)
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"{value} not in [0, 1]")
    return x


def _nonneg_float(value: str) -> float:
    x = float(value)
    if x < 0.0:
        raise argparse.ArgumentTypeError(f"{value} is negative")
    return x


def _positive_float(value: str) -> float:
    x = float(value)
    if x <= 0.0:
        raise argparse.ArgumentTypeError(f"{value} is not positive")
    return x


def _positive_int(value: str) -> int:
    x = int(value)
    if x <= 0:
        raise argparse.ArgumentTypeError(f"{value} is not positive")
    return x


def _tau_list(value: str) -> list[float]:
    taus = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            raise argparse.ArgumentTypeError("empty entry in tau list")
        tau = float(part)
        if not 0.0 < tau < 1.0:
            raise argparse.ArgumentTypeError(f"tau {part} not in (0, 1)")
        taus.append(tau)
    if not taus:
        raise argparse.ArgumentTypeError("tau list is empty")
    return taus


def _build_parser() -> _Parser:
    parser = _Parser(prog="crosstask", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="score manifest samples and write a CSV")
    p_score.add_argument("--manifest", required=True)
    p_score.add_argument("--out", required=True)
    p_score.add_argument("--tau", type=_open_unit, default=0.3)
    p_score.add_argument("--epsilon", type=_open_unit, default=1e-6)
    p_score.add_argument("--margin", type=_nonneg_float, default=0.1)
    p_score.add_argument(
        "--resegmenter", choices=["identity", "synthetic"], default="identity"
    )
    p_score.add_argument("--reseg-noise", type=_closed_unit, default=0.0)
    p_score.add_argument("--reseg-seed", type=int, default=0)
    p_score.add_argument("--jobs", type=_positive_int, default=1)
    p_score.set_defaults(func=_cmd_score)

    p_select = sub.add_parser("select", help="pick an annotation batch from a scores CSV")
    p_select.add_argument("--scores", required=True)
    p_select.add_argument("--budget-frac", type=_closed_unit, default=0.10)
    p_select.add_argument(
        "--strategy", choices=["inconsistency", "random"], required=True
    )
    p_select.add_argument("--seed", type=int, default=0)
    p_select.add_argument("--out", required=True)
    p_select.set_defaults(func=_cmd_select)

    p_eval = sub.add_parser("eval", help="evaluate manifest predictions against ground truth")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--map-fully", type=_positive_float, required=True)
    p_eval.add_argument("--miou-fully", type=_positive_float, required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=_cmd_eval)

    p_sim = sub.add_parser("simulate", help="run the annotation-loop simulation")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument(
        "--strategy", choices=["inconsistency", "random"], required=True
    )
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=_cmd_simulate)

    p_tau = sub.add_parser(
        "ablate-tau", help="sweep the BoxMask threshold against ground-truth masks"
    )
    p_tau.add_argument("--manifest", required=True)
    p_tau.add_argument("--taus", type=_tau_list, default=[0.1, 0.3, 0.5, 0.7])
    p_tau.add_argument("--margin", type=_nonneg_float, default=0.1)
    p_tau.add_argument("--out", required=True)
    p_tau.set_defaults(func=_cmd_ablate_tau)

    return parser


def _cmd_score(args) -> int:
    space, records = load_manifest(args.manifest)
    if args.resegmenter == "identity":
        reseg = ResegmenterSpec.identity()
    else:
        reseg = ResegmenterSpec.synthetic(args.reseg_noise, args.reseg_seed)
    config = ScoringConfig(
        tau=args.tau,
        epsilon=args.epsilon,
        margin_fraction=args.margin,
        resegmenter=reseg,
    )

    def one(record: SampleRecord) -> ScoreRow:
        breakdown = score_sample(record, space, config)
        return ScoreRow(
            sample_id=record.sample_id,
            s_seg=breakdown.s_seg,
            max_s_box=breakdown.max_s_box,
            combined=breakdown.combined,
            n_detections=len(record.detections),
        )

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(one, records))
    else:
        rows = [one(r) for r in records]
    write_scores_csv(rows, args.out)
    return 0


def _cmd_select(args) -> int:
    rows = read_scores_csv(args.scores)
    budget = int(round(args.budget_frac * len(rows)))
    strategy = StrategyKind(kind=args.strategy, seed=args.seed)
    selected = select_batch([(r.sample_id, r.combined) for r in rows], budget, strategy)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text("".join(f"{sid}\n" for sid in selected), encoding="utf-8")
    return 0


def _cmd_eval(args) -> int:
    space, records = load_manifest(args.manifest)
    report = build_report(
        map=mean_average_precision(records, space),
        miou=mean_iou(records, space),
        map_fully=args.map_fully,
        miou_fully=args.miou_fully,
    )
    write_eval_report_csv(report, args.out)
    return 0


def _cmd_simulate(args) -> int:
    cfg = parse_sim_config(args.config)
    world = generate_world(
        cfg.n_samples, DEFAULT_SPACE, args.seed, cfg.dims, cfg.max_objects
    )
    strategy = StrategyKind(kind=args.strategy, seed=args.seed)
    reports, _ = run_simulation(
        world,
        DEFAULT_SPACE,
        cfg.scoring,
        strategy,
        protocol=cfg.protocol,
        params=cfg.params,
        seed=args.seed,
    )
    write_cycle_reports_csv(reports, args.out)
    return 0


def _cmd_ablate_tau(args) -> int:
    space, records = load_manifest(args.manifest)
    missing = [r.sample_id for r in records if r.truth is None]
    if missing:
        raise ValueError(f"ablate-tau needs ground truth; missing on {missing[:5]}")
    rows = []
    for tau in args.taus:
        config = ScoringConfig(tau=tau, margin_fraction=args.margin)
        ious = []
        for rec in records:
            for det in rec.detections:
                region = expand_crop_region(
                    det.box, config.margin_fraction, (rec.height, rec.width)
                )
                bm = generate_boxmask(det, rec, space, config)
                window = (slice(region.y0, region.y1), slice(region.x0, region.x1))
                pred = bm.bits[window]
                seg_class = space.seg_index(det.class_index)
                gt = rec.truth.label_map[window] == seg_class
                union = int(np.count_nonzero(pred | gt))
                inter = int(np.count_nonzero(pred & gt))
                ious.append(1.0 if union == 0 else inter / union)
        mean = float(np.mean(ious)) if ious else float("nan")
        rows.append((tau, mean, len(ious)))
    write_tau_sweep_csv(rows, args.out)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"crosstask: error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except ValueError as exc:
        print(f"crosstask: error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except OSError as exc:
        print(f"crosstask: error: {exc}", file=sys.stderr)
        return DATA_ERROR


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
