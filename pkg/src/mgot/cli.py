"""Command-line front end: ``align``, ``fairness``, ``synth``, ``train-mask``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 convergence failure.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import logging
import os
import sys

import numpy as np

from . import io as mio
from ._validation import ConvergenceError, DataError
from .fairness import FairnessError, fairness_report
from .graph import build_graph, cross_cost_matrix
from .losses import LossWeights
from .masked import (
    MaskGenerator,
    MaskTrainConfig,
    compute_mask,
    mask_objective,
    masked_got,
    mgot_distance,
    mgot_terms,
    train_mask,
)
from .ot import GotConfig, SinkhornConfig, got_distance, got_objective
from .synth import make_alignment_data

log = logging.getLogger("mgot")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_solver_flags(p):
    p.add_argument("--source-emb", required=True, help="patch embeddings (.emb binary or .csv)")
    p.add_argument("--target-emb", required=True, help="label embeddings (.emb binary or .csv)")
    p.add_argument("--lambda", dest="lambda_mix", type=float, default=0.5)
    p.add_argument("--beta-entropy", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--outer-iter", type=int, default=20)
    p.add_argument("--restarts", type=int, default=3,
                   help="extra seeded random starts of the structural alternation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=10.0)
    p.add_argument("--grad-mode", choices=["unrolled", "finite_difference"], default="unrolled")


def build_parser():
    parser = _Parser(prog="mgot", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("align", help="align patch embeddings with label embeddings")
    _add_solver_flags(p)
    p.add_argument("--mask", choices=["none", "file", "learn"], default="none")
    p.add_argument("--mask-file", help="id,weight CSV used with --mask file")
    p.add_argument("--weights", help="id,weight CSV of source marginal weights")
    p.add_argument("--target-weights", help="id,weight CSV of target marginal weights")
    p.add_argument("--out-plan", help="plan CSV (single-file mode)")
    p.add_argument("--out-mask", help="mask CSV (single-file mode)")
    p.add_argument("--out-summary", help="summary JSON")
    p.add_argument("--out-dir", help="output directory (required when --source-emb is a directory)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers in directory mode")
    p.add_argument("--alpha", type=float, default=1.0, help="confusion-loss weight")
    p.add_argument("--beta-align", type=float, default=0.8,
                   help="alignment-loss weight; the summary reports beta_align * objective")

    p = sub.add_parser("fairness", help="PQD / DPM / EOM from a predictions CSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True, help="report JSON path")

    p = sub.add_parser("synth", help="generate synthetic patch/label embeddings")
    p.add_argument("--n-patches", type=int, default=64)
    p.add_argument("--n-labels", type=int, default=8)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--noise-frac", type=float, default=0.6)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["binary", "csv"], default="binary")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train-mask", help="train the mask generator")
    _add_solver_flags(p)
    p.add_argument("--out-mask", required=True)
    p.add_argument("--out-trace", required=True)
    return parser


def _configs(args):
    try:
        cfg = GotConfig(
            args.lambda_mix,
            SinkhornConfig(args.beta_entropy, args.max_iter, args.tol),
            args.outer_iter,
            args.restarts,
        )
        tcfg = MaskTrainConfig(args.lr, args.epochs, args.seed, args.grad_mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not -1.0 <= args.tau <= 1.0:
        raise UsageError("--tau must lie in [-1, 1]")
    if hasattr(args, "alpha"):
        try:
            LossWeights(args.alpha, args.beta_align)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    return cfg, tcfg


def _marginal(path, ids):
    if path is None:
        return None
    _, w = mio.read_weights(path, ids)
    if np.any(w <= 0):
        raise DataError(f"{path}: marginal weights must be positive")
    return w / w.sum()


def align_one(source_path, target, args, cfg, tcfg):
    """Align one patch file against the labels; returns (summary, plan, mask, patches)."""
    patches = mio.read_embeddings(source_path)
    if patches.dim != target.dim:
        raise DataError(f"dimension mismatch: {patches.dim} vs {target.dim}")
    u = _marginal(args.weights, patches.ids)
    v = _marginal(args.target_weights, target.ids)
    mask = None
    if args.mask == "none":
        C = cross_cost_matrix(patches, target)
        A = build_graph(patches, args.tau).adjacency
        B = build_graph(target, args.tau).adjacency
        plan, _ = got_distance(C, A, B, u, v, cfg)
        objective, wd, gw = got_objective(plan, C, A, B, cfg.lambda_mix)
    else:
        if args.mask == "file":
            if not args.mask_file:
                raise UsageError("--mask file requires --mask-file")
            _, mask = mio.read_weights(args.mask_file, patches.ids)
            if np.any((mask <= 0) | (mask > 1)):
                raise DataError(f"{args.mask_file}: mask weights must lie in (0, 1]")
            plan, _ = masked_got(patches, target, mask, cfg, args.tau, u, v)
        else:
            gen, _ = train_mask(None, patches, target, cfg, tcfg, tau=args.tau)
            plan, mask, _ = mgot_distance(patches, target, gen, cfg, args.tau, u, v)
        objective, wd, gw = mgot_terms(plan, mask, patches, target, cfg.lambda_mix, args.tau)
    summary = {
        "objective": objective,
        "wd_term": wd,
        "gw_term": gw,
        "lambda": cfg.lambda_mix,
        "beta_entropy": cfg.sinkhorn.entropy_weight,
        "iterations_used": plan.n_iter,
        "alignment_loss": args.beta_align * objective,
    }
    return summary, plan, mask, patches


def _write_outputs(plan, mask, patches, target, plan_path, mask_path):
    if plan_path:
        mio.write_plan(plan, patches.ids, target.ids, plan_path)
    if mask_path and mask is not None:
        mio.write_mask(patches.ids, mask, mask_path)


def cmd_align(args):
    cfg, tcfg = _configs(args)
    target = mio.read_embeddings(args.target_emb)
    if os.path.isdir(args.source_emb):
        if not args.out_dir:
            raise UsageError("--out-dir is required when --source-emb is a directory")
        sources = sorted(
            os.path.join(args.source_emb, f)
            for f in os.listdir(args.source_emb)
            if os.path.isfile(os.path.join(args.source_emb, f))
        )
        if not sources:
            raise DataError(f"{args.source_emb}: no embedding files")
        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            results = list(pool.map(lambda s: align_one(s, target, args, cfg, tcfg), sources))
        os.makedirs(args.out_dir, exist_ok=True)
        summaries = []
        for path, (summary, plan, mask, patches) in zip(sources, results):
            stem = os.path.splitext(os.path.basename(path))[0]
            _write_outputs(
                plan, mask, patches, target,
                os.path.join(args.out_dir, f"{stem}.plan.csv"),
                os.path.join(args.out_dir, f"{stem}.mask.csv"),
            )
            summaries.append({"source": os.path.basename(path), **summary})
            print(f"{os.path.basename(path)} {summary['objective']:.12g}")
        mio.write_json(summaries, args.out_summary or os.path.join(args.out_dir, "summary.json"))
        return EXIT_OK

    summary, plan, mask, patches = align_one(args.source_emb, target, args, cfg, tcfg)
    _write_outputs(plan, mask, patches, target, args.out_plan, args.out_mask)
    if args.out_summary:
        mio.write_json(summary, args.out_summary)
    print(f"{summary['objective']:.12g}")
    return EXIT_OK


def cmd_fairness(args):
    records = mio.read_predictions(args.predictions)
    report = fairness_report(records)
    mio.write_report(report, args.out)
    for name in ("pqd", "dpm", "eom"):
        print(f"{name}={getattr(report, name):.6f}")
    return EXIT_OK


def cmd_synth(args):
    if not 0.0 <= args.noise_frac <= 1.0:
        raise UsageError("--noise-frac must lie in [0, 1]")
    if min(args.n_patches, args.n_labels, args.dim) < 1 or args.sigma < 0:
        raise UsageError("--n-patches, --n-labels and --dim must be positive")
    data = make_alignment_data(
        args.n_patches, args.n_labels, args.dim, args.noise_frac, args.seed, args.sigma
    )
    os.makedirs(args.out_dir, exist_ok=True)
    ext = "csv" if args.format == "csv" else "emb"
    mio.write_embeddings(data.patches, os.path.join(args.out_dir, f"patches.{ext}"), args.format)
    mio.write_embeddings(data.labels, os.path.join(args.out_dir, f"labels.{ext}"), args.format)
    mio.write_truth(data.truth, os.path.join(args.out_dir, "truth.csv"))
    return EXIT_OK


def cmd_train_mask(args):
    cfg, tcfg = _configs(args)
    patches = mio.read_embeddings(args.source_emb)
    labels = mio.read_embeddings(args.target_emb)
    if patches.dim != labels.dim:
        raise DataError(f"dimension mismatch: {patches.dim} vs {labels.dim}")
    init = MaskGenerator.init(patches.dim, tcfg.seed)
    gen, trace = train_mask(init, patches, labels, cfg, tcfg, tau=args.tau)
    mio.write_mask(patches.ids, compute_mask(gen, patches), args.out_mask)
    mio.write_trace(trace, args.out_trace)
    final = trace[-1] if trace else mask_objective(gen, patches, labels, cfg, args.tau)
    print(f"{final:.12g}")
    return EXIT_OK


COMMANDS = {
    "align": cmd_align,
    "fairness": cmd_fairness,
    "synth": cmd_synth,
    "train-mask": cmd_train_mask,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mgot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"mgot: convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (DataError, FairnessError, OSError, ValueError) as exc:
        print(f"mgot: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
