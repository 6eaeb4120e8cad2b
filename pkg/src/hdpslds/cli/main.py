"""``hdpslds`` command-line entry point.

Subcommands: ``generate``, ``preprocess``, ``fit`` and ``evaluate``.
Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical error.
"""
from __future__ import annotations

import argparse
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import pydantic
import scipy

from .. import __version__
from ..errors import NumericalError, ParameterError
from ..evaluation import (changepoint_roc, hamming_trace, heldout_log_likelihood,
                          mode_count_summary, truth_for_estimate)
from ..gibbs.sampler import GibbsSampler, SequenceData, run_chains
from ..gibbs.synthetic import SCENARIOS, generate_synthetic, scenario_spec
from . import io
from .config import RunConfig
from .preprocess import STEPS, apply_steps

log = logging.getLogger("hdpslds")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4
PROTOCOLS = ("hamming", "roc", "heldout", "modes")


# ---------------------------------------------------------------------------
# generate

def cmd_generate(args) -> int:
    if args.scenario not in SCENARIOS:
        raise ParameterError(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}")
    spec = scenario_spec(args.scenario, T=args.T)
    data = generate_synthetic(spec, np.random.default_rng(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_matrix_csv(out / "data.csv", data.y)
    io.write_labels_csv(out / "truth.csv", data.z)
    log.info("wrote %s and %s", out / "data.csv", out / "truth.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# preprocess

def cmd_preprocess(args) -> int:
    steps = [s.strip() for s in args.steps.split(",") if s.strip()]
    y, header = io.read_matrix_csv(args.input)
    out, metas = apply_steps(y, steps)
    target = Path(args.out)
    target.parent.mkdir(parents=True, exist_ok=True)
    io.write_matrix_csv(target, out, header)
    io.write_json(target.with_suffix(".meta.json"), {"input": str(args.input), "steps": metas})
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit

def load_run_config(path) -> tuple[RunConfig, dict]:
    raw = io.read_json(path)
    try:
        cfg = RunConfig.model_validate(raw)
    except pydantic.ValidationError as exc:
        raise ParameterError(f"{path}: invalid configuration\n{exc}") from None
    return cfg, raw


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def load_run_data(cfg: RunConfig, base: Path) -> SequenceData:
    ys = []
    for p in cfg.data:
        y, _ = io.read_matrix_csv(_resolve(base, p))
        if cfg.preprocess:
            y, _ = apply_steps(y, cfg.preprocess)
        ys.append(y)
    sup = None
    if cfg.supervision is not None:
        sup = []
        for p, y in zip(cfg.supervision, ys):
            z = io.read_labels_csv(_resolve(base, p))
            n_steps = y.shape[0] - (cfg.order if cfg.family == "ar" else 0)
            if z.size == y.shape[0] and cfg.family == "ar":
                z = z[cfg.order:]
            if z.size != n_steps:
                raise ParameterError(f"{p}: {z.size} labels for {n_steps} time steps")
            sup.append(z)
    return SequenceData(tuple(ys), None if sup is None else tuple(sup))


def cmd_fit(args) -> int:
    cfg, _ = load_run_config(args.config)
    overrides = {k: v for k, v in (("seed", args.seed), ("chains", args.chains),
                                   ("output", args.out)) if v is not None}
    if overrides:
        try:
            cfg = RunConfig.model_validate({**cfg.model_dump(), **overrides})
        except pydantic.ValidationError as exc:
            raise ParameterError(f"invalid command-line override\n{exc}") from None
    base = Path(args.config).resolve().parent
    data = load_run_data(cfg, base)
    out = Path(args.out) if args.out is not None else _resolve(base, cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    config_dict = cfg.model_dump(mode="json")
    manifest = {
        "config": config_dict,
        "config_hash": io.config_hash(config_dict),
        "data_files": [str(_resolve(base, q).resolve()) for q in cfg.data],
        "seed": cfg.seed,
        "chains": cfg.chains,
        "trace_schema_version": io.TRACE_SCHEMA_VERSION,
        "versions": {"hdpslds": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }
    # validate the model against the data before any trace file is touched
    GibbsSampler(cfg.model_config_object(), data)
    io.write_json(out / "manifest.json", manifest)
    writer = io.TraceWriter(out / "traces", parameters=cfg.trace_parameters)
    for c in range(cfg.chains):
        writer.reset(c)
    run_chains(cfg.model_config_object(), data, cfg.chains, cfg.seed, workers=cfg.workers,
               callback=writer.append, with_log_joint=cfg.record_log_joint)
    log.info("wrote %d chain traces to %s", cfg.chains, out / "traces")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate

def _post_burn_in(records, manifest):
    sched = manifest["config"]["schedule"]
    burn = sched["burn_in"] if sched["burn_in"] is not None else sched["n_iters"] // 2
    kept = [r for r in records if r.iteration > burn]
    return kept or records[-1:]


def _evaluate_hamming(traces, manifest, truth, out):
    rows, per_chain_post, finals = [], [], []
    iters = None
    by_iter = []
    for c, recs in sorted(traces.items()):
        d = hamming_trace([r.z[0] for r in recs], truth)
        rows += [(c, r.iteration, float(v)) for r, v in zip(recs, d)]
        kept = {r.iteration for r in _post_burn_in(recs, manifest)}
        per_chain_post.append([float(v) for r, v in zip(recs, d) if r.iteration in kept])
        finals.append(float(d[-1]))
        it = [r.iteration for r in recs]
        if iters is None or it == iters:
            iters = it
            by_iter.append(d)
    io.write_rows_csv(out / "hamming.csv", ["chain", "iteration", "distance"], rows)
    qs = (0.1, 0.5, 0.9)
    pooled = np.concatenate([np.asarray(p) for p in per_chain_post])
    io.write_rows_csv(out / "hamming_quantiles.csv", ["quantile", "final_iteration", "post_burn_in"],
                      [(q, float(np.quantile(finals, q)), float(np.quantile(pooled, q))) for q in qs])
    if len(by_iter) == len(traces):
        band = np.quantile(np.vstack(by_iter), qs, axis=0)
        io.write_rows_csv(out / "hamming_by_iteration.csv", ["iteration", "q10", "q50", "q90"],
                          [(i, *map(float, band[:, j])) for j, i in enumerate(iters)])


def _evaluate_roc(traces, manifest, truth, out, window):
    samples = [r.z[0] for recs in traces.values() for r in _post_burn_in(recs, manifest)]
    T = samples[0].size
    z_true = truth_for_estimate(truth, T)
    events = np.flatnonzero(z_true[1:] != z_true[:-1]) + 1
    roc = changepoint_roc(np.vstack(samples), events, window)
    order = np.lexsort((roc.tpr, roc.fpr))
    io.write_rows_csv(out / "roc.csv", ["threshold", "fpr", "tpr"],
                      [(float(roc.thresholds[i]), float(roc.fpr[i]), float(roc.tpr[i])) for i in order])
    io.write_rows_csv(out / "roc_auc.csv", ["window", "auc"], [(window, roc.auc)])


def _evaluate_heldout(traces, manifest, heldout_path, out, seed):
    cfg = RunConfig.model_validate(manifest["config"])
    y, _ = io.read_matrix_csv(heldout_path)
    if cfg.preprocess:
        y, _ = apply_steps(y, cfg.preprocess)
    records = [r for recs in traces.values() for r in _post_burn_in(recs, manifest)]
    if records[0].A is None:
        raise ParameterError("held-out evaluation needs traces stored with parameters")
    kw = {}
    if cfg.family == "slds":
        train = load_run_data(cfg.model_copy(update={"data": manifest["data_files"],
                                                      "supervision": None}), Path("."))
        sampler = GibbsSampler(cfg.model_config_object(), train)
        kw = dict(C=sampler.C, P0=sampler.P0, rng=np.random.default_rng(seed))
    res = heldout_log_likelihood(records, y, cfg.family, cfg.order, **kw)
    io.write_rows_csv(out / "heldout.csv", ["chain", "iteration", "log_likelihood"],
                      [(r.chain, r.iteration, float(v)) for r, v in zip(records, res.values)])
    io.write_rows_csv(out / "heldout_interval.csv", ["method", "mass", "lower", "upper"],
                      [(res.method, res.mass, res.interval[0], res.interval[1])])


def _evaluate_modes(traces, manifest, out):
    records = [r for recs in traces.values() for r in _post_burn_in(recs, manifest)]
    summary = mode_count_summary(records)
    io.write_rows_csv(out / "modes.csv", ["active_modes", "frequency"],
                      sorted(summary.histogram.items()))


def cmd_evaluate(args) -> int:
    run_dir = Path(args.traces)
    manifest = io.read_json(run_dir / "manifest.json")
    traces = io.read_traces(run_dir / "traces")
    out = Path(args.out) if args.out else run_dir / "evaluation"
    out.mkdir(parents=True, exist_ok=True)
    if args.protocol in ("hamming", "roc"):
        if args.truth is None:
            raise ParameterError(f"protocol {args.protocol} needs --truth")
        truth = io.read_labels_csv(args.truth)
        if args.protocol == "hamming":
            _evaluate_hamming(traces, manifest, truth, out)
        else:
            _evaluate_roc(traces, manifest, truth, out, args.window)
    elif args.protocol == "heldout":
        if args.heldout is None:
            raise ParameterError("protocol heldout needs --heldout")
        _evaluate_heldout(traces, manifest, args.heldout, out, args.seed or 0)
    else:
        _evaluate_modes(traces, manifest, out)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdpslds", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a benchmark scenario")
    g.add_argument("--scenario", required=True, help=f"one of {', '.join(SCENARIOS)}")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--T", type=int, default=1000)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    pp = sub.add_parser("preprocess", help="transform an observation CSV")
    pp.add_argument("--input", required=True)
    pp.add_argument("--steps", required=True, help=f"comma-separated steps from {', '.join(STEPS)}")
    pp.add_argument("--out", required=True, help="output CSV; metadata goes next to it")
    pp.set_defaults(func=cmd_preprocess)

    f = sub.add_parser("fit", help="run Gibbs chains")
    f.add_argument("--config", required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--chains", type=int)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("evaluate", help="summarize traces")
    e.add_argument("--traces", required=True, help="run directory written by fit")
    e.add_argument("--protocol", required=True, choices=PROTOCOLS)
    e.add_argument("--truth", help="1-based label CSV")
    e.add_argument("--heldout", help="held-out observation CSV")
    e.add_argument("--window", type=int, default=10)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
