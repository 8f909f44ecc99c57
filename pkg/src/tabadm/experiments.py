"""Repeated-split experiment drivers shared by the CLI and the acceptance tests.

Seed convention: repeat ``i`` of a run with base seed ``s`` uses ``s + i`` for the
split, the training stream and any contamination subsampling, and
``inference_base + i`` for the scoring noise (``inference_base`` defaults to
``s + 1000``).  Labels only reach splitting, contamination and metrics.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
import multiprocessing as mp

import numpy as np

from .data import build_contaminated, fit_normalizer, stratified_split
from .errors import ConfigError
from .evalkit import evaluate, hbos_score, knn_score
from .model import ModelConfig
from .scorer import score_set
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("tabadm", "knn", "hbos")
INFERENCE_OFFSET = 1000


def seeds_for(base, repeats):
    return [base + i for i in range(repeats)]


def _model_config(d, hidden, time_embed):
    return ModelConfig.for_dim(d, H=hidden, D_t=time_embed)


def fit_and_score(method, train_ds, test_ds, cfg, inference_seed,
                  hidden=None, time_embed=64, validation=None):
    """Train ``method`` on unlabeled training rows and score the test rows.

    Returns ``(scores, trace)``; ``trace`` is only non-empty for TabADM with
    periodic evaluation.
    """
    norm = fit_normalizer(train_ds)
    Xtr = norm.apply(train_ds.X)
    Xte = norm.apply(test_ds.X)
    if method == "tabadm":
        mc = _model_config(train_ds.d, hidden, time_embed)
        cfg = replace(cfg, eval_seed=inference_seed)
        ckpt, trace = train(Xtr, cfg, normalizer=norm, model_config=mc,
                            validation=(Xte, test_ds.y) if validation else None)
        return score_set(ckpt, Xte, inference_seed).scores, trace
    if method == "knn":
        return knn_score(Xtr, Xte, k=5), []
    if method == "hbos":
        return hbos_score(Xtr, Xte, bins=10), []
    raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")


def _summarize(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _run_tasks(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    # one BLAS thread per worker; spawned children read this at numpy import
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    ctx = mp.get_context("spawn")
    with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
        return list(pool.map(fn, tasks))


def _bench_task(task):
    ds, method, seed, inf_seed, cfg, hidden, time_embed, train_frac = task
    train_ds, test_ds = stratified_split(ds, train_frac, seed)
    cfg = replace(cfg, seed=seed)
    scores, _ = fit_and_score(method, train_ds, test_ds, cfg, inf_seed, hidden, time_embed)
    m = evaluate(scores, test_ds.y)
    log.info("%s %s seed=%d aucroc=%.4f ap=%.4f", ds.name, method, seed, m.aucroc, m.ap)
    return m


def bench(ds, methods=("tabadm",), base_seed=0, repeats=5, cfg=None, train_frac=0.7,
          inference_base=None, hidden=None, time_embed=64, jobs=1):
    """Averaged AUCROC/AP over ``repeats`` stratified splits, one row per method."""
    cfg = (cfg or TrainConfig()).validate()
    ds.require_labels()
    seeds = seeds_for(base_seed, repeats)
    inf_seeds = seeds_for(base_seed + INFERENCE_OFFSET if inference_base is None else inference_base,
                          repeats)
    tasks = [(ds, m, s, i, cfg, hidden, time_embed, train_frac)
             for m in methods for s, i in zip(seeds, inf_seeds)]
    results = _run_tasks(_bench_task, tasks, jobs)
    rows = []
    for j, m in enumerate(methods):
        res = results[j * repeats:(j + 1) * repeats]
        auc = [r.aucroc for r in res]
        ap = [r.ap for r in res]
        auc_mean, auc_std = _summarize(auc)
        ap_mean, ap_std = _summarize(ap)
        rows.append({
            "dataset": ds.name,
            "method": m,
            "dim": ds.d,
            "n": ds.n,
            "anomaly_rate": ds.anomaly_rate,
            "seeds": seeds,
            "inference_seeds": inf_seeds if m == "tabadm" else [],
            "aucroc": auc,
            "ap": ap,
            "aucroc_mean": auc_mean,
            "aucroc_std": auc_std,
            "ap_mean": ap_mean,
            "ap_std": ap_std,
        })
    return rows


def _contamination_task(task):
    ds, ratio, seed, inf_seed, cfg, hidden, time_embed, train_frac, test_ratio = task
    train_pool, test_pool = stratified_split(ds, train_frac, seed)
    train_c, test_c = build_contaminated(train_pool, ratio, test_pool, test_ratio, seed)
    cfg = replace(cfg, seed=seed)
    scores, _ = fit_and_score("tabadm", train_c, test_c, cfg, inf_seed, hidden, time_embed)
    m = evaluate(scores, test_c.y)
    log.info("%s contamination=%.3f seed=%d aucroc=%.4f ap=%.4f",
             ds.name, ratio, seed, m.aucroc, m.ap)
    return m, train_c.anomaly_rate, test_c.anomaly_rate


def exp_contamination(ds, ratios=tuple(i / 100 for i in range(11)), base_seed=0, repeats=5,
                      cfg=None, train_frac=0.7, test_ratio=0.10, inference_base=None,
                      hidden=None, time_embed=64, jobs=1):
    """Metrics versus training contamination; the test set is fixed per repeat."""
    cfg = (cfg or TrainConfig()).validate()
    seeds = seeds_for(base_seed, repeats)
    inf_seeds = seeds_for(base_seed + INFERENCE_OFFSET if inference_base is None else inference_base,
                          repeats)
    tasks = [(ds, c, s, i, cfg, hidden, time_embed, train_frac, test_ratio)
             for c in ratios for s, i in zip(seeds, inf_seeds)]
    out = _run_tasks(_contamination_task, tasks, jobs)
    rows = []
    for j, c in enumerate(ratios):
        res = out[j * repeats:(j + 1) * repeats]
        auc = [r[0].aucroc for r in res]
        ap = [r[0].ap for r in res]
        rows.append({
            "ratio": c,
            "achieved_train_ratio": [r[1] for r in res],
            "test_ratio": [r[2] for r in res],
            "aucroc": auc,
            "ap": ap,
            "aucroc_mean": _summarize(auc)[0],
            "ap_mean": _summarize(ap)[0],
        })
    return {"dataset": ds.name, "seeds": seeds, "inference_seeds": inf_seeds, "rows": rows}


def exp_rejection(ds, m_values=(0, 1, 4, 7), base_seed=0, repeats=5, cfg=None, train_frac=0.7,
                  inference_base=None, hidden=None, time_embed=64, jobs=1):
    """Metrics for each rejection count ``m`` on identical splits and seeds."""
    cfg = (cfg or TrainConfig()).validate()
    rows = []
    for m in m_values:
        r = bench(ds, ("tabadm",), base_seed, repeats, replace(cfg, reject=m).validate(),
                  train_frac, inference_base, hidden, time_embed, jobs)[0]
        rows.append({"m": m, **{k: r[k] for k in
                                ("aucroc", "ap", "aucroc_mean", "ap_mean", "aucroc_std", "ap_std")}})
    seeds = seeds_for(base_seed, repeats)
    return {"dataset": ds.name, "batch_size": cfg.batch_size, "seeds": seeds, "rows": rows}


def _steps_task(task):
    ds, seed, inf_seed, cfg, hidden, time_embed, train_frac = task
    train_ds, test_ds = stratified_split(ds, train_frac, seed)
    cfg = replace(cfg, seed=seed)
    _, trace = fit_and_score("tabadm", train_ds, test_ds, cfg, inf_seed, hidden, time_embed,
                             validation=True)
    return trace


def exp_steps(ds, eval_every=2000, base_seed=0, repeats=5, cfg=None, train_frac=0.7,
              inference_base=None, hidden=None, time_embed=64, jobs=1):
    """Metrics on the held-out split recorded every ``eval_every`` training steps."""
    cfg = replace(cfg or TrainConfig(), eval_every=eval_every).validate()
    seeds = seeds_for(base_seed, repeats)
    inf_seeds = seeds_for(base_seed + INFERENCE_OFFSET if inference_base is None else inference_base,
                          repeats)
    tasks = [(ds, s, i, cfg, hidden, time_embed, train_frac) for s, i in zip(seeds, inf_seeds)]
    traces = _run_tasks(_steps_task, tasks, jobs)
    rows = []
    for k, entry in enumerate(traces[0]):
        auc = [tr[k]["aucroc"] for tr in traces]
        ap = [tr[k]["ap"] for tr in traces]
        rows.append({"step": entry["step"], "aucroc": auc, "ap": ap,
                     "aucroc_mean": _summarize(auc)[0], "ap_mean": _summarize(ap)[0]})
    return {"dataset": ds.name, "seeds": seeds, "inference_seeds": inf_seeds, "rows": rows}


def results_document(experiment, payload, cfg, extra=None):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment,
        "train_config": asdict(cfg),
    }
    if extra:
        doc.update(extra)
    doc.update(payload if isinstance(payload, dict) else {"rows": payload})
    return doc
