"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, config, evalsuite, experiment, hetnet, scmsynth, trainer
from .errors import ConfigError, GraceError

log = logging.getLogger("gracevae")

CONFIG_KEYS = tuple(dict.fromkeys(config.TRAIN_KEYS + config.SYNTH_KEYS))
CONTEXT_MASKS = (("GG",), ("GG", "PG"), ("GG", "PG", "PP"))
GNN_GRID = tuple((kind, layers) for kind in ("sage", "gcn", "gat") for layers in (1, 3))
ABLATION_COLUMNS = ("cell", "gnn", "gnn_layers", "edge_mask", "config_hash", "mean_r2", "mean_rmse",
                    "mean_mmd", "mean_abs_corr", "best_shd", "target_accuracy")


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- helpers

@contextmanager
def atomic_dir(out):
    """Yield a scratch directory that is renamed to ``out`` only on success."""
    out = Path(out)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise ConfigError(f"output directory {out} already exists and is not empty")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
        if out.exists():
            out.rmdir()
        tmp.rename(out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _add_config_flags(p: argparse.ArgumentParser, need_config: bool = True):
    p.add_argument("--config", required=need_config, help="key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
    g = p.add_argument_group("config keys (override the file and --set)")
    for key in CONFIG_KEYS:
        g.add_argument(f"--{key}", dest=f"key_{key}", metavar="VALUE")


def _values(args) -> dict:
    overrides = config.parse_overrides(args.set)
    for key in CONFIG_KEYS:
        raw = getattr(args, f"key_{key}", None)
        if raw is not None:
            overrides.update(config.parse_overrides([f"{key}={raw}"]))
    return config.load_values(args.config, overrides)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _load_run(run_dir):
    run_dir = Path(run_dir)
    meta = _read_json(run_dir / "run.json")
    cfg = config.config_from_text((run_dir / "config.cfg").read_text(encoding="utf-8"))
    state = trainer.load_checkpoint(run_dir / "checkpoint.ckpt", cfg.hash())
    return meta, cfg, state


def _progress(row):
    log.info("epoch %d  recon %.4f  kl %.4f  mmd %.5f  total %.4f",
             row["epoch"], row["recon"], row["kl"], row["mmd"], row["total"])


def _run_meta(cfg, run: experiment.Run, bundle) -> dict:
    return {"version": __version__, "bundle": str(bundle), "config_hash": cfg.hash(),
            "epochs_done": run.state.epoch, "vocabulary": run.vocabulary,
            "latent_dim": run.model.p, "obs_dim": run.model.d}


def _write_run(out: Path, cfg, run: experiment.Run, bundle):
    (out / "config.cfg").write_text(cfg.to_text(), encoding="utf-8")
    trainer.save_checkpoint(run.state, out / "checkpoint.ckpt")
    trainer.write_log(run.log, out / "train_log.csv")
    _write_json(out / "run.json", _run_meta(cfg, run, bundle))


def _write_eval(out: Path, run: experiment.Run, ev: experiment.Evaluation):
    evalsuite.write_metrics(ev.metrics, out / "metrics.csv")
    if ev.oracle is not None:
        _write_json(out / "oracle.json", ev.oracle)
    test = run.splits[2]
    groups = [("ctrl", "ctrl", test.X0)]
    for label, real in zip(test.labels, test.Xk):
        groups.append(("actual", label, real))
        groups.append(("generated", label, ev.generated[label]))
    evalsuite.export_samples(groups, test.feature_names, out / "samples.csv")


def _summary(cell: str, cfg, ev: experiment.Evaluation) -> dict:
    r2 = [r["r2"] for r in ev.metrics if r["r2"] is not None]
    row = {"cell": cell, "gnn": cfg.gnn, "gnn_layers": cfg.gnn_layers,
           "edge_mask": hetnet.format_edge_mask(cfg.edge_mask), "config_hash": cfg.hash(),
           "mean_r2": float(np.mean(r2)) if r2 else None,
           "mean_rmse": float(np.mean([r["rmse"] for r in ev.metrics])),
           "mean_mmd": float(np.mean([r["mmd"] for r in ev.metrics])),
           "mean_abs_corr": None, "best_shd": None, "target_accuracy": None}
    if ev.oracle:
        row.update(mean_abs_corr=ev.oracle["mean_abs_corr"], best_shd=ev.oracle["best_shd"],
                   target_accuracy=ev.oracle["target_accuracy"])
    return row


def ablation_cells(axis: str, base: config.TrainConfig):
    if axis == "context":
        return [(hetnet.format_edge_mask(m), base.replace(edge_mask=m)) for m in CONTEXT_MASKS]
    return [(f"{kind}{layers}", base.replace(gnn=kind, gnn_layers=layers)) for kind, layers in GNN_GRID]


def _run_cell(args):
    name, cfg, bundle, cell_dir = args
    gt, ds, graph = scmsynth.load_bundle(bundle)
    run = experiment.train_run(cfg, ds, graph)
    ev = experiment.evaluate(run, gt)
    cell_dir.mkdir()
    _write_run(cell_dir, cfg, run, bundle)
    _write_eval(cell_dir, run, ev)
    return _summary(name, cfg, ev)


# ---------------------------------------------------------------- subcommands

def cmd_synth(args):
    values = _values(args)
    sc = config.synth_config(values)
    gt, ds, graph = experiment.benchmark(sc)
    with atomic_dir(args.out) as tmp:
        scmsynth.save_bundle(tmp, gt, ds, graph, extra={k: str(v) for k, v in sorted(vars(sc).items())})
    log.info("wrote bundle %s", args.out)


def cmd_train(args):
    cfg = config.train_config(_values(args))
    gt, ds, graph = scmsynth.load_bundle(args.bundle)
    prior_log, state = [], None
    if args.resume:
        _, prev_cfg, state = _load_run(args.resume)
        if prev_cfg.hash() != cfg.hash():
            raise ConfigError(f"{args.resume}: run was trained under config hash {prev_cfg.hash()}, "
                              f"current config hashes to {cfg.hash()}")
        prior_log = trainer.read_log(Path(args.resume) / "train_log.csv")
    with atomic_dir(args.out) as tmp:
        run = experiment.train_run(cfg, ds, graph, progress=_progress, stop_epoch=args.stop_epoch, state=state)
        run.log[:0] = prior_log
        _write_run(tmp, cfg, run, args.bundle)


def cmd_eval(args):
    meta, cfg, state = _load_run(args.run)
    gt, ds, graph = scmsynth.load_bundle(args.bundle)
    if ds.vocabulary != meta["vocabulary"]:
        raise ConfigError(f"{args.bundle}: intervention vocabulary differs from the one the run was trained on")
    out = Path(args.out) if args.out else Path(args.run) / "eval"
    run = experiment.train_run(cfg, ds, graph, state=state, stop_epoch=state.epoch)
    ev = experiment.evaluate(run, gt, n_deg=args.n_deg)
    with atomic_dir(out) as tmp:
        _write_eval(tmp, run, ev)
    for r in ev.metrics:
        r2 = "error" if r["r2"] is None else f"{r['r2']:.4f}"
        print(f"{r['intervention']}\tr2={r2}\trmse={r['rmse']:.4f}\tmmd={r['mmd']:.6f}")
    if ev.oracle:
        o = ev.oracle
        print(f"mean|corr|={o['mean_abs_corr']:.4f}\tbest_shd={o['best_shd']} (tau={o['best_tau']:g})"
              f"\ttarget_accuracy={o['target_accuracy']}")


def cmd_ablate(args):
    base = config.train_config(_values(args))
    cells = ablation_cells(args.axis, base)
    with atomic_dir(args.out) as tmp:
        jobs = [(name, cfg, args.bundle, tmp / f"cell{i}_{name.replace('+', '_')}")
                for i, (name, cfg) in enumerate(cells)]
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                rows = list(pool.map(_run_cell, jobs))
        else:
            rows = []
            for job in jobs:
                log.info("ablation cell %s", job[0])
                rows.append(_run_cell(job))
        with open(tmp / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ABLATION_COLUMNS)
            for r in rows:
                w.writerow(["" if r[c] is None else r[c] for c in ABLATION_COLUMNS])
    for r in rows:
        print("\t".join(str(r[c]) for c in ABLATION_COLUMNS[:4] + ("mean_r2", "mean_mmd")))


def cmd_export_dag(args):
    meta, cfg, state = _load_run(args.run)
    p = meta["latent_dim"]
    from .causal import dag_matrix

    M = dag_matrix(state.params, p).data
    labels = args.labels.split(",") if args.labels else [f"u{i}" for i in range(p)]
    text = evalsuite.export_dag(M, args.tau, labels, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_gradcheck(args):
    worst = 0.0
    for gnn in args.gnn:
        err, used = experiment.composite_grad_check(seed=args.seed, eps=args.eps, gnn=gnn, mechanism=args.mechanism)
        print(f"{gnn}\tseed={used}\tmax_rel_err={err:.3e}")
        worst = max(worst, err)
    if worst >= args.tol:
        from .errors import NumericError

        raise NumericError(f"gradient check failed: max relative error {worst:.3e} >= {args.tol:g}")


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gracevae", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic benchmark bundle")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a bundle")
    _add_config_flags(p)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="run directory to continue from")
    p.add_argument("--stop-epoch", type=int, help="stop after this many epochs in total")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a trained run on its held-out split")
    p.add_argument("--run", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", help="report directory (default: RUN/eval)")
    p.add_argument("--n-deg", type=int, default=evalsuite.N_DEG)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and score a grid of encoder variants")
    _add_config_flags(p)
    p.add_argument("--axis", required=True, choices=("context", "gnn"))
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1, help="cells trained in parallel")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-dag", help="render the learned latent graph")
    p.add_argument("--run", required=True)
    p.add_argument("--tau", type=float, default=evalsuite.DEFAULT_TAU)
    p.add_argument("--format", choices=("dot", "json"), default="dot")
    p.add_argument("--labels", help="comma-separated node labels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_dag)

    p = sub.add_parser("gradcheck", help="compare recorded gradients with central differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--gnn", nargs="+", default=["sage"], choices=("sage", "gcn", "gat"))
    p.add_argument("--mechanism", default="mlp", choices=("linear", "mlp"))
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:      # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except GraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
