"""Command-line entry point: dataset generation, training, Bayesian
inference, and the self-check suite.

Exit codes: 0 success, 1 check failure, 2 config error, 3 generation
failure, 4 training failure, 5 inference failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bayes, checks, datasets, gnp, manifold, storage, training
from .manifold import NoiseSpec
from .training import Schedule, TrainConfig

EXIT_CHECK = 1
EXIT_CONFIG = 2
EXIT_GEN = 3
EXIT_TRAIN = 4
EXIT_INFER = 5


class ConfigError(ValueError):
    pass


# scale presets: dataset sizes at paper scale match the experiment
# protocols; desk scale is sized for CI-speed runs
SCALES = {
    "a": {
        "paper": {"num_train": 500, "num_test": 200, "n_points": 1024},
        "desk": {"num_train": 50, "num_test": 10, "n_points": 256},
    },
    "b": {
        "paper": {"num_train": 1000, "num_test": 200, "n_points": 1024,
                  "solution_lmax": 20},
        "desk": {"num_train": 100, "num_test": 20, "n_points": 256,
                 "solution_lmax": 12},
    },
    "c": {
        "paper": {"n_points": 1024, "n_centers": 194, "solution_lmax": 12},
        "desk": {"n_points": 256, "n_centers": 60, "solution_lmax": 12},
    },
}

MODEL_KEYS = {"latent_dim", "depth", "kernel_width", "kernel_mode",
              "n_blocks", "block_dim", "radius", "edge_values"}
TRAIN_KEYS = {"epochs", "batch_size", "lr0", "schedule", "seed", "runs",
              "clip_norm", "normalize", "eval_every", "checkpoint_every"}
SCHEDULE_KEYS = {"kind", "period", "lr_min"}

MODEL_DEFAULTS = {"latent_dim": 32, "depth": 4, "kernel_width": 64,
                  "kernel_mode": "full", "n_blocks": 8, "block_dim": 4,
                  "radius": 0.4, "edge_values": False}

# band limits used by the inference pipeline
LATTICE_LMAX = 12
SOLUTION_LMAX = 12


def _reject_unknown(d, allowed, where):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def load_run_config(path=None, seed_override=None):
    """Parse and validate the JSON run config; fill defaults."""
    doc = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    _reject_unknown(doc, {"model", "train"}, "config")
    model = {**MODEL_DEFAULTS, **doc.get("model", {})}
    _reject_unknown(doc.get("model", {}), MODEL_KEYS, "config.model")
    tdoc = dict(doc.get("train", {}))
    _reject_unknown(tdoc, TRAIN_KEYS, "config.train")
    sched = tdoc.pop("schedule", {"kind": "cosine", "period": 100})
    _reject_unknown(sched, SCHEDULE_KEYS, "config.train.schedule")
    try:
        tdoc["schedule"] = Schedule(**sched)
        tcfg = TrainConfig(**tdoc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if seed_override is not None:
        tcfg = TrainConfig.from_dict({**tcfg.to_dict(), "seed": seed_override})
    return model, tcfg


def resolved_env():
    return {"GNP_THREADS": os.environ.get("GNP_THREADS"),
            "GNP_SEED": os.environ.get("GNP_SEED")}


def _global_seed(args_seed):
    env = os.environ.get("GNP_SEED")
    return int(env) if env is not None else args_seed


def _apply_thread_cap():
    cap = os.environ.get("GNP_THREADS")
    if cap:
        try:
            import threadpoolctl
            threadpoolctl.threadpool_limits(int(cap))
        except ImportError:
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS"):
                os.environ.setdefault(var, cap)


def _write_resolved(out_dir, payload):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {**payload, "env": resolved_env()}
    (out_dir / "resolved_config.json").write_text(
        json.dumps(payload, indent=1, sort_keys=True) + "\n", "utf-8")


def cmd_gen(args):
    seed = _global_seed(args.seed)
    preset = dict(SCALES[args.task][args.scale])
    out = Path(args.out)
    if args.task == "a":
        n_points = preset["n_points"]
        n_outliers = (manifold.default_outlier_count(n_points)
                      if args.noise == "outlier" else 0)
        eps = args.eps
        if eps is None:
            eps = {"none": 0.0, "uniform_all": 0.01, "outlier": 0.10}[args.noise]
        noise = NoiseSpec(mode=args.noise, eps=eps, n_outliers=n_outliers,
                          seed=seed + 101)
        train_ds, test_ds = datasets.build_task_a(
            preset["num_train"], preset["num_test"], n_points, noise, seed)
    elif args.task == "b":
        refs = {m.label: m for m in manifold.reference_shapes(12)}
        m = refs[args.manifold]
        train_ds, test_ds = datasets.build_task_b(
            m, preset["num_train"], preset["num_test"], preset["n_points"],
            seed, preset["solution_lmax"], fresh_clouds=args.fresh_clouds)
    else:
        train_ds, test_ds = datasets.build_task_c(
            seed, preset["n_points"], preset["n_centers"],
            preset["solution_lmax"])
    for split, ds in (("train", train_ds), ("test", test_ds)):
        c = ds.to_container()
        c.meta["scale"] = args.scale
        c.save(out / split)
        print(f"{split}: {len(c.names())} arrays")
        for name, h in sorted(c.checksums().items()):
            print(f"  {h}  {name}")
    _write_resolved(out, {"command": "gen", "task": args.task,
                          "scale": args.scale, "seed": seed,
                          "options": {"noise": getattr(args, "noise", None),
                                      "manifold": getattr(args, "manifold",
                                                          None)}})
    return 0


def _load_dataset_samples(data_dir):
    """Returns (train_samples, test_samples, in_channels, out_channels)."""
    out = []
    kind = None
    for split in ("train", "test"):
        c = storage.Container.load(Path(data_dir) / split)
        kind = c.meta["kind"]
        if kind == "geometry":
            ds = datasets.GeometryDataset.from_container(c)
        elif kind == "lb_response":
            ds = datasets.LbDataset.from_container(c)
        elif kind == "shape_response":
            ds = datasets.ShapeResponseDataset.from_container(c)
        else:
            raise ConfigError(f"unknown dataset kind {kind!r}")
        out.append(ds.samples())
    if kind == "geometry":
        return out[0], out[1], 3, 7
    return out[0], out[1], 4, 1


def cmd_train(args):
    try:
        model_doc, tcfg = load_run_config(args.config)
    except ConfigError:
        raise
    train_samples, test_samples, d_in, d_out = _load_dataset_samples(args.data)
    out = Path(args.out)
    cfg = gnp.GnpConfig(in_channels=d_in, out_channels=d_out, **model_doc)
    runs = args.runs if args.runs is not None else tcfg.runs
    finals = []
    for r in range(runs):
        run_seed = tcfg.seed + r
        run_cfg = TrainConfig.from_dict({**tcfg.to_dict(), "seed": run_seed})
        run_dir = out / f"run{run_seed}"
        model = gnp.GnpModel(cfg, seed=run_seed)
        start_epoch, opt_state = 0, None
        ckpt_dir = run_dir / "checkpoint"
        if args.resume and (ckpt_dir / "manifest.json").exists():
            model, opt_state, _, meta = training.load_checkpoint(ckpt_dir)
            start_epoch = int(meta.get("epoch") or 0)
        model, metrics, norm = training.train(
            model, train_samples, test_samples, run_cfg,
            checkpoint_dir=ckpt_dir,
            log=(lambda e: print(f"run{run_seed} epoch {e['epoch']} "
                                 f"loss {e['loss']:.4e} lr {e['lr']:.2e}"))
            if args.verbose else None,
            start_epoch=start_epoch, opt_state=opt_state)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "metrics.json").write_text(metrics.to_json() + "\n", "utf-8")
        finals.append(metrics.final)
        print(f"run{run_seed}: train {metrics.final['train_rel_l2']:.4e} "
              f"test {metrics.final['test_rel_l2']:.4e}")
    tr = np.array([f["train_rel_l2"] for f in finals])
    te = np.array([f["test_rel_l2"] for f in finals])
    summary = ["metric,mean,std,formatted",
               f"train_rel_l2,{tr.mean():.6e},{tr.std():.6e},"
               f"{tr.mean():.2e} +/- {tr.std():.1e}",
               f"test_rel_l2,{te.mean():.6e},{te.std():.6e},"
               f"{te.mean():.2e} +/- {te.std():.1e}"]
    (out / "summary.csv").write_text("\n".join(summary) + "\n", "utf-8")
    print("\n".join(summary))
    _write_resolved(out, {"command": "train", "data": str(args.data),
                          "model": cfg.to_dict(), "train": tcfg.to_dict(),
                          "runs": runs})
    return 0


def cmd_infer(args):
    if args.samples not in (3, 5):
        raise ConfigError("--samples must be 3 or 5")
    if not (0 <= args.truth_shape < 21):
        raise ConfigError("--truth-shape must be in [0, 21)")
    seed = _global_seed(args.seed)
    out = Path(args.out)
    family = manifold.barycentric_lattice(6, LATTICE_LMAX)
    if args.oracle:
        surrogate = bayes.SpectralSurrogate(SOLUTION_LMAX)
        norm = None
    else:
        model, _, norm, _ = training.load_checkpoint(args.ckpt)
        surrogate = bayes.GnpSurrogate(model, norm)
    truth = family[args.truth_shape]
    obs = bayes.make_observation(truth, args.samples, args.points, seed,
                                 solution_lmax=SOLUTION_LMAX,
                                 truth_index=args.truth_shape)
    table = bayes.posterior(surrogate, obs, family,
                            candidate_seed=seed + 555, n_points=args.points)
    out.mkdir(parents=True, exist_ok=True)
    (out / "posterior.json").write_text(table.to_json() + "\n", "utf-8")
    (out / "posterior.csv").write_text(table.to_csv(), "utf-8")
    (out / "posterior.svg").write_text(table.to_svg(), "utf-8")
    _write_resolved(out, {"command": "infer", "truth_shape": args.truth_shape,
                          "samples": args.samples, "seed": seed,
                          "points": args.points, "oracle": args.oracle,
                          "ckpt": str(args.ckpt) if args.ckpt else None})
    print(table.to_csv().strip())
    print(f"MAP shape: {table.map_index}")
    return 0


def cmd_check(args):
    results = checks.run_checks()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else EXIT_CHECK


def build_parser():
    p = argparse.ArgumentParser(prog="geonop")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset container")
    g.add_argument("task", choices=("a", "b", "c"))
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scale", choices=("paper", "desk"), default="desk")
    g.add_argument("--noise", choices=("none", "uniform_all", "outlier"),
                   default="none")
    g.add_argument("--eps", type=float, default=None)
    g.add_argument("--manifold", choices=("A", "B", "C"), default="A")
    g.add_argument("--fresh-clouds", action="store_true")
    g.set_defaults(func=cmd_gen, exit_code=EXIT_GEN)

    t = sub.add_parser("train", help="train operator models")
    t.add_argument("--data", required=True)
    t.add_argument("--config", default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--runs", type=int, default=None)
    t.add_argument("--resume", action="store_true")
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(func=cmd_train, exit_code=EXIT_TRAIN)

    i = sub.add_parser("infer", help="Bayesian shape identification")
    i.add_argument("--ckpt", default=None)
    i.add_argument("--oracle", action="store_true")
    i.add_argument("--truth-shape", type=int, required=True)
    i.add_argument("--samples", type=int, default=5)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--points", type=int, default=256)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_infer, exit_code=EXIT_INFER)

    c = sub.add_parser("check", help="run the fast oracle suite")
    c.set_defaults(func=cmd_check, exit_code=EXIT_CHECK)
    return p


def main(argv=None):
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "infer" and not args.oracle and not args.ckpt:
        parser.error("infer requires --ckpt or --oracle")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - map to the command's exit code
        print(f"error: {exc}", file=sys.stderr)
        return args.exit_code


if __name__ == "__main__":
    sys.exit(main())
