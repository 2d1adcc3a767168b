"""Command-line entry point.

Subcommands: gen, train, eval, sweep-negsize, analyze, replay.  Every run
writes a key=value manifest whose ``argv`` line replays it exactly.
Exit codes: 0 success, 1 runtime/configuration error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .analysis import min_batch_for, miss_probability, monte_carlo_miss
from .datagen import SyntheticSpec, generate, read_features, write_features
from .errors import ContractError, VSEError
from .evaluator import EvalProtocol, RetrievalReport, evaluate, evaluate_folds
from .loss import LossConfig
from .model import ProjectionModel, SimilarityKind
from .optimizer import LrSchedule
from .sampler import SamplerConfig
from .trainer import ModelConfig, TrainConfig, TrainingAborted, train

log = logging.getLogger("vsekit")

REPORT_COLUMNS = [
    "r1_cap", "r5_cap", "r10_cap", "r1_img", "r5_img", "r10_img",
    "medr_cap", "medr_img", "meanr_cap", "meanr_img", "rsum",
]
TRACE_COLUMNS = ["epoch", "train_loss", *REPORT_COLUMNS, "lr", "seconds"]
SWEEP_COLUMNS = ["neg_size", "seed", "status", "best_epoch", *REPORT_COLUMNS]
ANALYZE_COLUMNS = ["q", "M", "closed_form", "simulated", "stderr", "min_batch"]
DEFAULT_SWEEP = "2,4,8,16,32,64,128,256,512"


def _int_list(text):
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


# ---------------------------------------------------------------- manifest


def canonical_argv(parser, ns, command):
    """Fully materialized argv reproducing ``ns`` for ``parser``."""
    argv = [command]
    for action in parser._actions:
        if not action.option_strings or action.dest in ("help", "manifest"):
            continue
        value = getattr(ns, action.dest, None)
        if isinstance(action, argparse.BooleanOptionalAction):
            argv.append(action.option_strings[0] if value else action.option_strings[1])
        elif isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(action.option_strings[0])
        elif value is not None:
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            argv += [action.option_strings[0], _fmt(value)]
    return argv


def write_manifest(path, ns, argv, status):
    lines = ["tool=vsekit", f"version={__version__}", f"backend={kernels.BACKEND}", f"status={status}"]
    for key, value in sorted(vars(ns).items()):
        if key in ("func", "primary"):
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={_fmt(value)}")
    lines.append("argv=" + shlex.join(argv))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def _manifest_path(ns, primary):
    if ns.manifest:
        return ns.manifest
    if primary:
        return f"{primary}.manifest"
    return f"vsekit-{ns.command}.manifest"


# ---------------------------------------------------------------- snapshot


def save_snapshot(path, snap, similarity):
    m = snap.model
    with open(path, "wb") as fh:
        np.savez(
            fh,
            W_f=m.W_f,
            W_g=m.W_g,
            normalize_image=m.normalize_image,
            normalize_caption=m.normalize_caption,
            abs_before_similarity=m.abs_before_similarity,
            similarity=SimilarityKind.parse(similarity).value,
            epoch=snap.epoch,
            rsum=snap.rsum,
        )


def load_snapshot(path):
    with np.load(path) as z:
        model = ProjectionModel(
            z["W_f"],
            z["W_g"],
            normalize_image=bool(z["normalize_image"]),
            normalize_caption=bool(z["normalize_caption"]),
            abs_before_similarity=bool(z["abs_before_similarity"]),
        )
        return model, SimilarityKind.parse(str(z["similarity"]))


# ---------------------------------------------------------------- commands


def train_config_from(ns, neg_size=None, seed=None) -> TrainConfig:
    seed = ns.seed if seed is None else seed
    neg = neg_size or ns.neg_size or ns.batch_size
    return TrainConfig(
        loss=LossConfig(margin=ns.margin, kind=ns.loss, tau=ns.tau),
        sampler=SamplerConfig(batch_size=ns.batch_size, neg_pool_size=neg, seed=seed),
        schedule=LrSchedule(
            base_lr=ns.lr, drop_epoch=min(ns.lr_drop_epoch, ns.epochs), drop_factor=ns.lr_drop_factor, total_epochs=ns.epochs
        ),
        model=ModelConfig(
            dim=ns.dim,
            similarity=ns.similarity,
            normalize_image=ns.normalize_image,
            normalize_caption=ns.normalize_caption,
            abs_before_similarity=ns.abs,
        ),
        curriculum_switch_epoch=ns.curriculum_switch,
        eval_every=ns.eval_every,
        seed=seed,
    )


def write_trace(path, trace, timing=True):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in trace.records:
            rep = rec.report.flat() if rec.report is not None else {}
            secs = rec.seconds if timing else 0.0
            w.writerow([rec.epoch, _fmt(rec.train_loss), *(_fmt(rep.get(c)) for c in REPORT_COLUMNS), _fmt(rec.lr), _fmt(secs)])


def cmd_gen(ns):
    spec = SyntheticSpec(
        n_images=ns.n_images,
        cpi=ns.cpi,
        latent_dim=ns.latent,
        d_img=ns.d_img,
        d_cap=ns.d_cap,
        noise_sigma=ns.sigma,
        confuser_cluster_size=ns.cluster_size,
        confuser_fraction=ns.confuser_fraction,
        confuser_angle_deg=ns.confuser_angle,
        seed=ns.seed,
        basis_seed=ns.basis_seed,
    )
    write_features(generate(spec), ns.out)
    print(f"wrote {ns.n_images} images x {ns.cpi} captions to {ns.out}")


def cmd_train(ns):
    train_set = read_features(ns.train)
    val_set = read_features(ns.val)
    cfg = train_config_from(ns)
    trace_path = ns.trace or f"{ns.out}.trace.csv"
    try:
        snap, trace = train(train_set, val_set, cfg)
    except TrainingAborted as exc:
        write_trace(trace_path, exc.trace, ns.timing)
        raise
    save_snapshot(ns.out, snap, cfg.model.similarity)
    write_trace(trace_path, trace, ns.timing)
    print(f"best epoch {snap.epoch} rsum {snap.rsum:.2f}; snapshot {ns.out}; trace {trace_path}")


def _report_text(report: RetrievalReport) -> str:
    return "\n".join(f"{k}={_fmt(v)}" for k, v in report.flat().items())


def cmd_eval(ns):
    model, kind = load_snapshot(ns.snapshot)
    test = read_features(ns.test)
    if test.image_features.shape[1] != model.d_img or test.caption_features.shape[1] != model.d_cap:
        raise ContractError(
            f"snapshot expects features ({model.d_img}, {model.d_cap}), "
            f"test file has ({test.image_features.shape[1]}, {test.caption_features.shape[1]})"
        )
    protocol = EvalProtocol(cpi=test.cpi, folds=ns.folds, fold_size=ns.fold_size)
    if ns.folds > 1:
        report = evaluate_folds(model, kind, test.image_features, test.caption_features, protocol)
    else:
        report = evaluate(model, kind, test.image_features, test.caption_features, protocol)
    print(_report_text(report))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    w.writerow([_fmt(report.flat()[c]) for c in REPORT_COLUMNS])
    if ns.csv:
        Path(ns.csv).write_text(buf.getvalue())
    else:
        print(buf.getvalue(), end="")


def cmd_sweep_negsize(ns):
    train_set = read_features(ns.train)
    val_set = read_features(ns.val)
    test_set = read_features(ns.test)
    rows = []
    for size in ns.sizes:
        for seed in ns.seeds:
            row = {"neg_size": size, "seed": seed}
            try:
                cfg = train_config_from(ns, neg_size=size, seed=seed)
                snap, _ = train(train_set, val_set, cfg)
                rep = evaluate(
                    snap.model, cfg.model.similarity, test_set.image_features, test_set.caption_features,
                    EvalProtocol(cpi=test_set.cpi),
                )
                row.update(status="ok", best_epoch=snap.epoch, **rep.flat())
            except VSEError as exc:
                log.error("neg_size %d seed %d failed: %s", size, seed, exc)
                row.update(status=f"error: {exc}".replace("\n", " "))
            print(f"neg_size={size} seed={seed} status={row['status']} r1_cap={_fmt(row.get('r1_cap'))}", file=sys.stderr)
            rows.append(row)
    with open(ns.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in SWEEP_COLUMNS])


def cmd_analyze(ns):
    m_min = min_batch_for(ns.q, ns.eps)
    sizes = list(dict.fromkeys([*ns.m, m_min - 1, m_min])) if ns.m else [m_min - 1, m_min]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ANALYZE_COLUMNS)
    for M in sizes:
        if M < 1:
            continue
        sim, err = ("", "")
        if ns.monte_carlo:
            est = monte_carlo_miss(ns.q, M, trials=ns.monte_carlo, seed=ns.seed)
            sim, err = est.estimate, est.stderr
        w.writerow([_fmt(float(ns.q)), M, _fmt(miss_probability(ns.q, M)), _fmt(sim), _fmt(err), m_min])
    if ns.out:
        Path(ns.out).write_text(buf.getvalue())
    print(buf.getvalue(), end="")


# ---------------------------------------------------------------- parser


def _add_train_flags(p):
    p.add_argument("--loss", choices=["sh", "mh", "weighted"], default="mh")
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--tau", type=float, default=1.0, help="temperature for --loss weighted")
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--neg-size", type=int, default=None, help="negative pool size (default: batch size)")
    p.add_argument("--similarity", choices=["ip", "order"], default="ip")
    p.add_argument("--abs", action="store_true", help="absolute value of embeddings before scoring")
    p.add_argument("--normalize-image", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--normalize-caption", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--dim", type=int, default=1024)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--lr-drop-epoch", type=int, default=15)
    p.add_argument("--lr-drop-factor", type=float, default=10.0)
    p.add_argument("--curriculum-switch", type=int, default=None)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--timing", action=argparse.BooleanOptionalAction, default=True,
        help="record wall-clock seconds in the trace (--no-timing writes 0 for byte-stable traces)",
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="vsekit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vsekit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic VSEF feature file")
    p.add_argument("--n-images", type=int, required=True)
    p.add_argument("--cpi", type=int, default=5)
    p.add_argument("--latent", type=int, default=16)
    p.add_argument("--d-img", type=int, default=64)
    p.add_argument("--d-cap", type=int, default=48)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--cluster-size", type=int, default=4)
    p.add_argument("--confuser-fraction", type=float, default=0.0)
    p.add_argument("--confuser-angle", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--basis-seed", type=int, default=0, help="shared by splits of one synthetic world")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen, primary="out")

    p = sub.add_parser("train", help="train a model and keep the best validation snapshot")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out", required=True, help="snapshot file (.npz)")
    p.add_argument("--trace", default=None, help="trace CSV (default: <out>.trace.csv)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train, primary="out")

    p = sub.add_parser("eval", help="evaluate a snapshot on a test file")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--folds", type=int, default=1)
    p.add_argument("--fold-size", type=int, default=0)
    p.add_argument("--csv", default=None, help="write the report row here instead of stdout")
    p.set_defaults(func=cmd_eval, primary="csv")

    p = sub.add_parser("sweep-negsize", help="train once per negative pool size")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--sizes", type=_int_list, default=_int_list(DEFAULT_SWEEP))
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep_negsize, primary="out")

    p = sub.add_parser("analyze", help="hard-negative sampling probabilities")
    p.add_argument("--q", type=float, default=0.9)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--m", type=_int_list, default=None, help="batch sizes to tabulate")
    p.add_argument("--monte-carlo", type=int, default=0, metavar="TRIALS")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analyze, primary="out")

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("manifest_file")
    p.add_argument("--set", action="append", default=[], metavar="DEST=VALUE", help="override one recorded argument")
    p.set_defaults(func=None, primary=None)

    for sp in sub.choices.values():
        if sp is not sub.choices["replay"]:
            sp.add_argument("--manifest", default=None, help="manifest path (default: <output>.manifest)")
    return parser, sub


def _check_usage(parser, sub, ns):
    if ns.command == "analyze":
        if not 0 < ns.q < 1:
            sub.choices["analyze"].error("--q must lie in (0, 1)")
        if not 0 < ns.eps < 1:
            sub.choices["analyze"].error("--eps must lie in (0, 1)")
        if ns.monte_carlo and ns.monte_carlo < 1000:
            sub.choices["analyze"].error("--monte-carlo needs at least 1000 trials")
        if ns.m and min(ns.m) < 1:
            sub.choices["analyze"].error("--m values must be >= 1")


def _replay_argv(parser, sub, ns):
    recorded = read_manifest(ns.manifest_file)
    argv = shlex.split(recorded["argv"])
    sp = sub.choices[argv[0]]
    dest_to_opt = {a.dest: a.option_strings[0] for a in sp._actions if a.option_strings}
    for item in ns.set:
        key, _, value = item.partition("=")
        key = key.replace("-", "_")
        if key not in dest_to_opt:
            sp.error(f"--set: unknown argument {key!r}")
        argv += [dest_to_opt[key], value]
    return argv


def main(argv=None) -> int:
    parser, sub = build_parser()
    ns = parser.parse_args(argv)
    if ns.command == "replay":
        return main(_replay_argv(parser, sub, ns))
    _check_usage(parser, sub, ns)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    sp = sub.choices[ns.command]
    canon = canonical_argv(sp, ns, ns.command)
    manifest = _manifest_path(ns, getattr(ns, ns.primary) if ns.primary else None)
    write_manifest(manifest, ns, canon, "running")
    try:
        ns.func(ns)
    except (VSEError, OSError) as exc:
        write_manifest(manifest, ns, canon, f"error: {exc}")
        print(f"vsekit {ns.command}: error: {exc}", file=sys.stderr)
        return 1
    write_manifest(manifest, ns, canon, "ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
