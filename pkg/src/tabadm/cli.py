"""``tabadm`` command-line interface.

Progress goes to stderr; data artifacts go to the files named by ``--out``.
Exit codes: 0 success, 2 configuration/input error, 1 runtime failure.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import experiments
from .data import fit_normalizer, load_csv, stratified_truncate
from .errors import ConfigError, DataError, TabADMError
from .evalkit import RankTable, evaluate, percentile_series
from .model import ModelConfig
from .optim import OPTIMIZERS
from .scorer import score_set
from .trainer import Checkpoint, TrainConfig, train

log = logging.getLogger("tabadm")


def _add_train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--batch", type=int, default=8, help="batch size k")
    g.add_argument("--reject", type=int, default=1, help="samples rejected per batch m")
    g.add_argument("--steps", type=int, default=50_000, help="training steps e")
    g.add_argument("--lr", type=float, default=None, help="learning rate (default by d)")
    g.add_argument("--weight-decay", type=float, default=1e-4)
    g.add_argument("--optimizer", choices=OPTIMIZERS, default="adamw",
                   help="adamw (decoupled decay), adam (L2 in the gradient) or plain sgd")
    g.add_argument("-T", "--timesteps", type=int, default=100, dest="T")
    g.add_argument("--beta-start", type=float, default=1e-4)
    g.add_argument("--beta-end", type=float, default=0.02)
    g.add_argument("--hidden", type=int, default=None, help="FC width H (default by d)")
    g.add_argument("--time-embed", type=int, default=64, help="time embedding size")
    g.add_argument("--log-every", type=int, default=0, help="progress line cadence")


def _train_config(args, seed):
    return TrainConfig(
        batch_size=args.batch, reject=args.reject, steps=args.steps,
        learning_rate=args.lr, weight_decay=args.weight_decay, T=args.T,
        beta_start=args.beta_start, beta_end=args.beta_end, seed=seed,
        optimizer=args.optimizer, log_every=args.log_every,
    ).validate()


def _load(args, path=None, labels_required=False):
    ds = load_csv(path or args.data, args.label_col)
    if labels_required and ds.y is None:
        raise ConfigError("this command needs --label-col")
    if getattr(args, "truncate", None):
        ds = stratified_truncate(ds, args.truncate, args.seed)
    return ds


def _write_json(doc, path):
    text = json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _write_csv(header, rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_train(args):
    ds = _load(args)
    cfg = _train_config(args, args.seed)
    if args.eval_every:
        cfg = replace(cfg, eval_every=args.eval_every, eval_seed=args.inference_seed).validate()
    norm = fit_normalizer(ds)
    mc = ModelConfig.for_dim(ds.d, H=args.hidden, D_t=args.time_embed)
    validation = None
    if args.val_data:
        val = load_csv(args.val_data, args.label_col)
        if val.y is None:
            raise ConfigError("--val-data needs labels (--label-col)")
        validation = (norm.apply(val.X), val.y)
    log.info("training on %s: n=%d d=%d H=%d lr=%g steps=%d k=%d m=%d",
             ds.name, ds.n, ds.d, mc.H, cfg.resolved(ds.d).learning_rate,
             cfg.steps, cfg.batch_size, cfg.reject)
    ckpt, trace = train(norm.apply(ds.X), cfg, normalizer=norm, model_config=mc,
                        validation=validation)
    ckpt.save(args.out)
    log.info("wrote checkpoint %s", args.out)
    if args.trace_out and trace:
        _write_csv(["step", "aucroc", "ap"],
                   [(r["step"], r["aucroc"], r["ap"]) for r in trace], args.trace_out)


def cmd_score(args):
    ckpt = Checkpoint.load(args.model)
    ds = load_csv(args.data, args.label_col)
    X = ckpt.normalizer.apply(ds.X) if ckpt.normalizer is not None else ds.X
    run = score_set(ckpt, X, args.seed, jobs=args.jobs, fresh_noise=args.fresh_noise)
    header = ["row_index", "score"] + (["label"] if ds.y is not None else [])
    rows = []
    for i, s in enumerate(run.scores):
        row = [i, float(s)]
        if ds.y is not None:
            row.append(int(ds.y[i]))
        rows.append(row)
    _write_csv(header, rows, args.out)
    log.info("scored %d rows with inference seed %d -> %s", ds.n, args.seed, args.out)


def _read_column(path, column):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if column not in (reader.fieldnames or []):
            raise ConfigError(f"{path}: no column {column!r}")
        try:
            return np.array([float(r[column]) for r in reader])
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric value in column {column!r}: {exc}") from None


def cmd_eval(args):
    scores = _read_column(args.scores, "score")
    if args.labels:
        labels = _read_column(args.labels, args.label_col)
    else:
        labels = _read_column(args.scores, "label")
    if len(labels) != len(scores):
        raise ConfigError(f"{len(scores)} scores but {len(labels)} labels")
    m = evaluate(scores, labels.astype(np.int64))
    _write_json({"aucroc": m.aucroc, "ap": m.ap, "n_pos": m.n_pos, "n_neg": m.n_neg}, args.out)


def _print_summary(lines):
    for line in lines:
        print(line, file=sys.stderr)


def cmd_bench(args):
    cfg = _train_config(args, args.seed)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in experiments.METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {experiments.METHODS}")
    rows = []
    for path in args.data:
        ds = _load(args, path, labels_required=True)
        rows += experiments.bench(ds, methods, args.seed, args.repeats, cfg, args.train_frac,
                                  args.inference_seed, args.hidden, args.time_embed, args.jobs)
    doc = experiments.results_document("bench", rows, cfg,
                                       {"train_frac": args.train_frac, "repeats": args.repeats})
    _write_json(doc, args.out)
    _print_summary([f"{r['dataset']:<16} {r['method']:<8} AUCROC {100 * r['aucroc_mean']:6.2f}"
                    f"  AP {100 * r['ap_mean']:6.2f}" for r in rows])


def _series_out(args, default_suffix):
    if args.csv:
        return args.csv
    if args.out and args.out != "-":
        return args.out.rsplit(".", 1)[0] + default_suffix
    return None


def cmd_exp_contamination(args):
    cfg = _train_config(args, args.seed)
    ds = _load(args, labels_required=True)
    ratios = [float(r) / 100 for r in args.ratios.split(",")]
    res = experiments.exp_contamination(ds, ratios, args.seed, args.repeats, cfg, args.train_frac,
                                        args.test_ratio, args.inference_seed, args.hidden,
                                        args.time_embed, args.jobs)
    doc = experiments.results_document("contamination", res, cfg,
                                       {"train_frac": args.train_frac, "test_ratio": args.test_ratio})
    _write_json(doc, args.out)
    series = _series_out(args, ".csv")
    if series:
        _write_csv(["contamination_pct", "aucroc_mean", "ap_mean"],
                   [(100 * r["ratio"], r["aucroc_mean"], r["ap_mean"]) for r in res["rows"]], series)
    _print_summary([f"c={100 * r['ratio']:5.1f}%  AUCROC {100 * r['aucroc_mean']:6.2f}"
                    f"  AP {100 * r['ap_mean']:6.2f}" for r in res["rows"]])


def cmd_exp_rejection(args):
    cfg = _train_config(args, args.seed)
    ds = _load(args, labels_required=True)
    ms = [int(m) for m in args.m_values.split(",")]
    res = experiments.exp_rejection(ds, ms, args.seed, args.repeats, cfg, args.train_frac,
                                    args.inference_seed, args.hidden, args.time_embed, args.jobs)
    doc = experiments.results_document("rejection", res, cfg, {"train_frac": args.train_frac})
    _write_json(doc, args.out)
    series = _series_out(args, ".csv")
    if series:
        _write_csv(["m", "aucroc_mean", "ap_mean"],
                   [(r["m"], r["aucroc_mean"], r["ap_mean"]) for r in res["rows"]], series)
    _print_summary([f"m={r['m']}  AUCROC {100 * r['aucroc_mean']:6.2f}  AP {100 * r['ap_mean']:6.2f}"
                    for r in res["rows"]])


def cmd_exp_steps(args):
    cfg = _train_config(args, args.seed)
    ds = _load(args, labels_required=True)
    res = experiments.exp_steps(ds, args.eval_every, args.seed, args.repeats, cfg, args.train_frac,
                                args.inference_seed, args.hidden, args.time_embed, args.jobs)
    doc = experiments.results_document("steps", res, cfg, {"train_frac": args.train_frac})
    _write_json(doc, args.out)
    series = _series_out(args, ".csv")
    if series:
        _write_csv(["step", "aucroc_mean", "ap_mean"],
                   [(r["step"], r["aucroc_mean"], r["ap_mean"]) for r in res["rows"]], series)
    _print_summary([f"step {r['step']:>6}  AUCROC {100 * r['aucroc_mean']:6.2f}"
                    f"  AP {100 * r['ap_mean']:6.2f}" for r in res["rows"]])


def load_rank_table(paths, metric):
    table = RankTable()
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("schema_version") != experiments.SCHEMA_VERSION:
            raise ConfigError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
        if doc.get("experiment") != "bench":
            raise ConfigError(f"{path}: expected bench results, got {doc.get('experiment')!r}")
        for row in doc["rows"]:
            table.add(row["dataset"], row["method"], row[f"{metric}_mean"], row["dim"])
    return table


def cmd_ranks(args):
    table = load_rank_table(args.results, args.metric)
    taus = [int(t) for t in args.taus.split(",")]
    rows = percentile_series(table, taus)
    _write_csv(["tau", "method", "avg_rank", "n_datasets"], rows, args.out)
    _print_summary([f"tau={tau:>2} {m:<8} rank {r:.3f} over {n} datasets" for tau, m, r, n in rows])


def build_parser():
    parser = argparse.ArgumentParser(prog="tabadm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, multi_data=False):
        if multi_data:
            p.add_argument("--data", required=True, action="append", help="CSV file (repeatable)")
        else:
            p.add_argument("--data", required=True, help="CSV file with a header row")
        p.add_argument("--label-col", default=None, help="name of the 0/1 label column")
        p.add_argument("--seed", type=int, default=0, help="base seed")

    def experiment(p):
        p.add_argument("--repeats", type=int, default=5)
        p.add_argument("--train-frac", type=float, default=0.7)
        p.add_argument("--inference-seed", type=int, default=None,
                       help="base seed for scoring noise (default: seed + 1000)")
        p.add_argument("--truncate", type=int, default=None,
                       help="stratified truncation to this many rows before splitting")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        p.add_argument("--out", required=True, help="results JSON path ('-' for stdout)")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="checkpoint JSON path")
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--val-data", default=None, help="labeled CSV evaluated every --eval-every steps")
    p.add_argument("--inference-seed", type=int, default=0)
    p.add_argument("--trace-out", default=None, help="CSV for the evaluation trace")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score rows with a trained checkpoint")
    p.add_argument("--model", required=True, help="checkpoint JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None)
    p.add_argument("--seed", type=int, default=0, help="inference seed for the noise matrix")
    p.add_argument("--fresh-noise", action="store_true", help="draw new noise for every row")
    p.add_argument("--jobs", type=int, default=1, help="scoring threads")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="AUCROC/AP of a score CSV")
    p.add_argument("--scores", required=True, help="CSV with a 'score' column")
    p.add_argument("--labels", default=None, help="CSV holding the labels (default: --scores)")
    p.add_argument("--label-col", default="label")
    p.add_argument("--out", default=None, help="JSON path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="repeated 70/30 stratified benchmark")
    common(p, multi_data=True)
    _add_train_flags(p)
    experiment(p)
    p.add_argument("--methods", default="tabadm", help="comma list from tabadm,knn,hbos")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("exp-contamination", help="metrics versus training contamination")
    common(p)
    _add_train_flags(p)
    experiment(p)
    p.add_argument("--ratios", default="0,1,2,3,4,5,6,7,8,9,10", help="percentages")
    p.add_argument("--test-ratio", type=float, default=0.10)
    p.add_argument("--csv", default=None, help="series CSV (default: next to --out)")
    p.set_defaults(func=cmd_exp_contamination)

    p = sub.add_parser("exp-rejection", help="metrics versus rejection count m")
    common(p)
    _add_train_flags(p)
    experiment(p)
    p.add_argument("--m-values", default="0,1,4,7")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_exp_rejection)

    p = sub.add_parser("exp-steps", help="metrics versus training steps")
    common(p)
    _add_train_flags(p)
    experiment(p)
    p.add_argument("--eval-every", type=int, default=2000)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_exp_steps)

    p = sub.add_parser("ranks", help="average rank versus dimension percentile")
    p.add_argument("--results", required=True, nargs="+", help="bench results JSON file(s)")
    p.add_argument("--metric", choices=("aucroc", "ap"), default="aucroc")
    p.add_argument("--taus", default="0,10,20,30,40,50,60,70")
    p.add_argument("--out", required=True, help="series CSV")
    p.set_defaults(func=cmd_ranks)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (ConfigError, DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"tabadm: error: {exc}", file=sys.stderr)
        return 2
    except (TabADMError, OSError, ValueError) as exc:
        print(f"tabadm: failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
