"""Command-line front end: ``zubovnet <command> ...``.

Every command that writes files also writes ``<command>.manifest.json`` next
to them, recording the resolved settings, seeds, paths and timings.
"""

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .datagen import (DatasetFormatError, generate_dataset, label_histogram, read_dataset,
                      write_dataset)
from .dynsys import EquilibriumError, Region, parse_w, sample_point
from .levelset import (ModelEvaluator, ZubovEvaluator, axis_crossing, evaluate_grid,
                       extract_level, write_curves_csv)
from .mlp import (MLPArchitecture, ModelFormatError, TrainConfig, TrainingDivergedError,
                  init_params, load_model, save_model, train, validate)
from .parallel import default_workers
from .presets import SYSTEMS, preset
from .svg import histogram_figure, ivalue_figure, level_curve_figure
from .zubov import (Verdict, calibrate, compute_I, compute_many, eval_V,
                    write_ivalue_table, zubov_residual)


class CliError(Exception):
    """Bad input; reported on stderr with exit status 2."""


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    seeds: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    tool_version: str = __version__
    python: str = platform.python_version()

    def write(self, out_dir):
        path = os.path.join(out_dir, f"{self.command}.manifest.json")
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


# ------------------------------------------------------------------ arguments


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive(conv):
    def parse(text):
        v = conv(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def build_parser():
    ap = argparse.ArgumentParser(
        prog="zubovnet",
        description="Domains of attraction from the integral form of Zubov's equation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    g = ap.add_argument_group("system and run")
    g.add_argument("--system", choices=SYSTEMS, default="vdp")
    g.add_argument("--params", help="swing parameter JSON (default: shipped 39-bus file)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: all CPUs)")
    g.add_argument("--out-dir", default=".")
    z = ap.add_argument_group("integration settings (defaults come from the system preset)")
    z.add_argument("--w", help="W descriptor, e.g. dist2:0;0 or fieldnorm:1000")
    z.add_argument("--M", type=_positive(float), help="divergence threshold")
    z.add_argument("--alpha", type=_positive(float), help="scale factor (default 20/M)")
    z.add_argument("--delta-I", type=_positive(float))
    z.add_argument("--dt-chunk", type=_positive(float))
    z.add_argument("--t-max", type=_positive(float))
    z.add_argument("--rel-tol", type=_positive(float))
    z.add_argument("--abs-tol", type=_positive(float))
    z.add_argument("--region", help="box as lo:hi;lo:hi;... (default: preset region)")

    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="I(x), V(x) and the inside/outside verdict at one point")
    p.add_argument("x0", type=float, nargs="+")

    p = sub.add_parser("ivalue", help="I-value plot data and a suggested (M, alpha)")
    p.add_argument("-n", "--samples", type=_positive(int), default=3000)
    p.add_argument("--provisional-M", type=_positive(float), default=1000.0)
    p.add_argument("--points", help="CSV of sample points instead of random draws")

    p = sub.add_parser("dataset", help="labelled dataset from integrated trajectories")
    p.add_argument("--traj", type=_positive(int), default=1000)
    p.add_argument("--extra", type=int, default=4)
    p.add_argument("--label-space", choices=("V", "I"), default="V")
    p.add_argument("--name", default="dataset.csv")
    p.add_argument("--bins", type=_positive(int), default=20)

    p = sub.add_parser("train", help="fit the network to a dataset")
    p.add_argument("--train", required=True, dest="train_path")
    p.add_argument("--val", required=True, dest="val_path")
    p.add_argument("--hidden", type=_ints, default=[40, 40, 40])
    p.add_argument("--lr", type=_positive(float), default=1e-3)
    p.add_argument("--batch", type=_positive(int), default=256)
    p.add_argument("--epochs", type=_positive(int), default=200)
    p.add_argument("--lr-decay", type=_positive(float), default=1.0)
    p.add_argument("--name", default="model.txt")

    p = sub.add_parser("validate", help="error statistics of a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("levelcurves", help="level curves V = r for two-dimensional systems")
    p.add_argument("model", nargs="?", help="saved model; omit to integrate at every node")
    p.add_argument("--levels", type=_floats, default=[0.7, 0.8, 0.99])
    p.add_argument("--grid", type=int, default=201)

    p = sub.add_parser("residual-check", help="Zubov residual along converged trajectories")
    p.add_argument("-n", "--trajectories", type=_positive(int), default=20)
    p.add_argument("--fd-step", type=_positive(float), default=1e-2)
    p.add_argument("--v-cap", type=float, default=0.999)
    p.add_argument("--max-draws", type=_positive(int), default=10000)
    return ap


def _settings(args, cfg):
    """Apply the integration flags on top of the preset settings."""
    if args.M is not None:
        cfg = replace(cfg, M=args.M, alpha=args.alpha or 20.0 / args.M)
    elif args.alpha is not None:
        cfg = replace(cfg, alpha=args.alpha)
    for flag in ("delta_I", "dt_chunk", "t_max"):
        if getattr(args, flag) is not None:
            cfg = replace(cfg, **{flag: getattr(args, flag)})
    solver = cfg.solver
    if args.rel_tol is not None:
        solver = replace(solver, rel_tol=args.rel_tol)
    if args.abs_tol is not None:
        solver = replace(solver, abs_tol=args.abs_tol)
    cfg = replace(cfg, solver=solver)
    return cfg


def _setup(args):
    try:
        pre = preset(args.system, args.params)
    except (OSError, ValueError, KeyError, EquilibriumError) as exc:
        raise CliError(f"cannot set up system {args.system!r}: {exc}") from None
    try:
        cfg = _settings(args, pre.config)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    try:
        w = parse_w(args.w) if args.w else pre.w
        region = Region.parse(args.region) if args.region else pre.region
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if region.dim != pre.system.dim:
        raise CliError(f"region has dimension {region.dim}, {args.system} has {pre.system.dim}")
    workers = default_workers() if args.workers is None else max(1, args.workers)
    os.makedirs(args.out_dir, exist_ok=True)
    return pre, cfg, w, region, workers


def _config_dict(args, cfg, w, region, workers):
    return {
        "system": args.system, "params": args.params, "w": w.describe(),
        "region": region.describe(), "M": cfg.M, "alpha": cfg.alpha, "delta_I": cfg.delta_I,
        "dt_chunk": cfg.dt_chunk, "t_max": cfg.t_max, "rel_tol": cfg.solver.rel_tol,
        "abs_tol": cfg.solver.abs_tol, "workers": workers,
        "command_args": {k: v for k, v in vars(args).items() if k not in ("func",)},
    }


def _out(args, name):
    return os.path.join(args.out_dir, name)


def _need_file(path, what):
    if not os.path.isfile(path):
        raise CliError(f"{path}: no such file (expected {what})")


# ------------------------------------------------------------------ commands


def cmd_eval(args, argv):
    pre, cfg, w, _, _ = _setup(args)
    x0 = np.array(args.x0)
    if x0.shape[0] != pre.system.dim:
        raise CliError(f"x0 has {x0.shape[0]} components, {args.system} needs {pre.system.dim}")
    out = compute_I(pre.system, w, x0, cfg)
    if out.verdict is Verdict.INCONCLUSIVE:
        print(f"inconclusive: z={out.z_final:.6g} still growing at t_max={cfg.t_max:g}; "
              "raise --t-max or --delta-I", file=sys.stderr)
        return 1
    v = eval_V(out, cfg.alpha)
    where = "inside D" if out.converged else "outside D or in the boundary layer"
    I_text = f"{out.I:.10g}" if out.converged else f"> M = {cfg.M:g}"
    print(f"I(x) = {I_text}")
    print(f"V(x) = {v:.10g}")
    print(f"verdict: {where} ({out.verdict.value}, t = {out.elapsed:g})")
    return 0


def _read_points(path, dim):
    _need_file(path, f"CSV with {dim} numbers per line")
    try:
        X = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None
    if X.shape[1] != dim:
        raise CliError(f"{path}: expected {dim} columns, got {X.shape[1]}")
    return X


def cmd_ivalue(args, argv):
    pre, cfg, w, region, workers = _setup(args)
    man = RunManifest("ivalue", argv, _config_dict(args, cfg, w, region, workers),
                      seeds={"sample": args.seed})
    t0 = time.perf_counter()
    if args.points:
        X = _read_points(args.points, pre.system.dim)
        man.inputs["points"] = args.points
    else:
        X = np.array([sample_point(region, args.seed, i) for i in range(args.samples)])
    prov = replace(cfg, M=args.provisional_M, alpha=20.0 / args.provisional_M)
    outs = compute_many(pre.system, w, X, prov, workers)
    man.timings["integrate_s"] = time.perf_counter() - t0
    table = _out(args, "ivalue.csv")
    write_ivalue_table(outs, table, args.provisional_M)
    man.outputs["table"] = table
    try:
        cal = calibrate(outs)
    except ValueError:
        man.results["error"] = "no converged samples"
        man.write(args.out_dir)
        print("error: no sample converged; enlarge --provisional-M or --t-max, or move the "
              "region toward the attractor", file=sys.stderr)
        return 1
    print(cal.report())
    man.results.update(asdict(cal))
    cal_path = _out(args, "calibration.json")
    with open(cal_path, "w") as fh:
        json.dump(asdict(cal), fh, indent=2)
        fh.write("\n")
    man.outputs["calibration"] = cal_path
    idx = [i for i, o in enumerate(outs) if o.verdict is not Verdict.INCONCLUSIVE]
    vals = [o.z_final if o.converged else args.provisional_M for o in outs
            if o.verdict is not Verdict.INCONCLUSIVE]
    cen = [int(not o.converged) for o in outs if o.verdict is not Verdict.INCONCLUSIVE]
    fig = ivalue_figure(np.array(idx), np.array(vals), np.array(cen), args.provisional_M)
    fig.hline(cal.M, color="#2ca02c")
    svg = _out(args, "ivalue.svg")
    fig.save(svg)
    man.outputs["plot"] = svg
    man.timings["total_s"] = time.perf_counter() - t0
    man.write(args.out_dir)
    return 0


def cmd_dataset(args, argv):
    pre, cfg, w, region, workers = _setup(args)
    if args.extra < 0:
        raise CliError("--extra must be >= 0")
    man = RunManifest("dataset", argv, _config_dict(args, cfg, w, region, workers),
                      seeds={"sample": args.seed})
    t0 = time.perf_counter()
    d = generate_dataset(pre.system, w, cfg, region, args.traj, args.extra, args.seed,
                         workers, args.label_space)
    man.timings["generate_s"] = time.perf_counter() - t0
    path = _out(args, args.name)
    write_dataset(d, path)
    man.outputs["dataset"] = path
    m = d.meta
    print(f"{len(d)} points from {m['n_traj']} trajectories: {m['n_converged']} converged, "
          f"{m['n_exceeded']} exceeded, {m['n_inconclusive']} inconclusive (dropped)")
    man.results.update(n_points=len(d), n_converged=m["n_converged"],
                       n_exceeded=m["n_exceeded"], n_inconclusive=m["n_inconclusive"])
    if args.label_space == "V" and len(d):
        hist = label_histogram(d, args.bins)
        edges = [h[0] for h in hist] + [hist[-1][1]]
        svg = _out(args, os.path.splitext(args.name)[0] + "_hist.svg")
        histogram_figure(edges, [h[2] for h in hist], "Histogram of V(x)", "V(x)").save(svg)
        man.outputs["histogram"] = svg
        man.results["histogram"] = [h[2] for h in hist]
    man.write(args.out_dir)
    return 0


def _load_dataset(path):
    _need_file(path, "dataset file written by 'zubovnet dataset'")
    try:
        return read_dataset(path)
    except DatasetFormatError as exc:
        raise CliError(f"{path}: {exc} (expected a dataset file written by "
                       "'zubovnet dataset')") from None


def _load_model(path):
    _need_file(path, "model file written by 'zubovnet train'")
    try:
        return load_model(path)
    except ModelFormatError as exc:
        raise CliError(str(exc)) from None


def cmd_train(args, argv):
    os.makedirs(args.out_dir, exist_ok=True)
    tr = _load_dataset(args.train_path)
    va = _load_dataset(args.val_path)
    if tr.dim != va.dim:
        raise CliError(f"training data has {tr.dim} columns, validation data {va.dim}")
    if len(tr) == 0 or len(va) == 0:
        raise CliError("training and validation datasets must be nonempty")
    arch = MLPArchitecture(tr.dim, tuple(args.hidden))
    cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs,
                      seed=args.seed, lr_decay=args.lr_decay)
    man = RunManifest("train", argv, {"architecture": asdict(arch), "train": asdict(cfg)},
                      seeds={"init": args.seed, "shuffle": args.seed},
                      inputs={"train": args.train_path, "val": args.val_path})
    t0 = time.perf_counter()
    try:
        params, hist = train(init_params(arch, args.seed), tr, va, cfg)
    except TrainingDivergedError as exc:
        raise CliError(str(exc)) from None
    man.timings["train_s"] = time.perf_counter() - t0
    model = _out(args, args.name)
    save_model(params, model)
    hist_path = _out(args, "history.csv")
    with open(hist_path, "w") as fh:
        fh.write("epoch,train_loss,val_rmse\n")
        for k, (l, r) in enumerate(zip(hist.train_loss, hist.val_rmse)):
            fh.write(f"{k},{l!r},{r!r}\n")
    man.outputs.update(model=model, history=hist_path)
    man.results.update(best_epoch=hist.best_epoch, best_val_rmse=hist.best_val_rmse,
                       final_train_loss=hist.train_loss[-1])
    print(f"best validation RMSE {hist.best_val_rmse:.4e} at epoch {hist.best_epoch}; "
          f"final training loss {hist.train_loss[-1]:.4e}")
    man.write(args.out_dir)
    return 0


def cmd_validate(args, argv):
    os.makedirs(args.out_dir, exist_ok=True)
    params = _load_model(args.model)
    d = _load_dataset(args.data)
    if d.dim != params.arch.input_dim:
        raise CliError(f"{args.data}: {d.dim} columns but the model takes "
                       f"{params.arch.input_dim} inputs")
    if len(d) == 0:
        raise CliError(f"{args.data}: dataset is empty")
    stats = validate(params, d)
    print(stats.summary())
    man = RunManifest("validate", argv, {}, inputs={"model": args.model, "data": args.data})
    out = _out(args, "validation.json")
    res = {"rmse": stats.rmse, "p25": stats.p25, "p75": stats.p75,
           "max_abs_error": stats.max_abs_error, "n": len(d),
           "hist_counts": stats.hist_counts.tolist(), "hist_edges": stats.hist_edges.tolist()}
    with open(out, "w") as fh:
        json.dump(res, fh, indent=2)
        fh.write("\n")
    svg = _out(args, "validation_errors.svg")
    histogram_figure(stats.hist_edges, stats.hist_counts, "Pointwise error V - V_NN",
                     "V(x) - V_NN(x)").save(svg)
    man.outputs.update(stats=out, histogram=svg)
    man.results.update({k: v for k, v in res.items() if not k.startswith("hist")})
    man.write(args.out_dir)
    return 0


def cmd_levelcurves(args, argv):
    pre, cfg, w, region, workers = _setup(args)
    if region.dim != 2:
        raise CliError("level curves need a two-dimensional system")
    if args.grid < 2:
        raise CliError("--grid must be at least 2")
    bad = [r for r in args.levels if not 0 < r < 1]
    if bad or not args.levels:
        raise CliError("levels must lie strictly between 0 and 1")
    man = RunManifest("levelcurves", argv, _config_dict(args, cfg, w, region, workers))
    if args.model:
        params = _load_model(args.model)
        if params.arch.input_dim != 2:
            raise CliError(f"{args.model}: model takes {params.arch.input_dim} inputs, not 2")
        evaluator = ModelEvaluator(params)
        man.inputs["model"] = args.model
    else:
        evaluator = ZubovEvaluator(pre.system, w, cfg)
    t0 = time.perf_counter()
    g = evaluate_grid(evaluator, region, args.grid, args.grid, workers)
    man.timings["grid_s"] = time.perf_counter() - t0
    if g.failures:
        print(g.report(), file=sys.stderr)
    curves = [extract_level(g, r) for r in args.levels]
    csv_path = _out(args, "levelcurves.csv")
    write_curves_csv(curves, csv_path)
    svg = _out(args, "levelcurves.svg")
    level_curve_figure(curves, region).save(svg)
    grid_path = _out(args, "grid.csv")
    np.savetxt(grid_path, g.values, delimiter=",", fmt="%.17g",
               header=f"V on a {g.nx}x{g.ny} grid over {region.describe()}; rows follow x1")
    man.outputs.update(curves=csv_path, plot=svg, grid=grid_path)
    for c in curves:
        cross = axis_crossing(c)
        print(f"r = {c.level:g}: {len(c.polylines)} polyline(s), "
              f"{sum(c.closed)} closed, positive x1-axis crossing {cross:.6g}")
        man.results[f"r={c.level:g}"] = {"polylines": len(c.polylines),
                                         "closed": sum(c.closed), "x1_crossing": cross}
    man.results["failed_nodes"] = len(g.failures)
    man.write(args.out_dir)
    return 0


def cmd_residual_check(args, argv):
    pre, cfg, w, region, workers = _setup(args)
    man = RunManifest("residual-check", argv, _config_dict(args, cfg, w, region, workers),
                      seeds={"sample": args.seed})
    rows = []
    draws = 0
    t0 = time.perf_counter()
    while len(rows) < args.trajectories and draws < args.max_draws:
        x0 = sample_point(region, args.seed, draws)
        draws += 1
        if not compute_I(pre.system, w, x0, cfg).converged:
            continue
        res = zubov_residual(pre.system, w, x0, cfg, fd_step=args.fd_step, v_cap=args.v_cap)
        rows.append((x0, res))
    man.timings["total_s"] = time.perf_counter() - t0
    if not rows:
        print("error: no converged trajectory found", file=sys.stderr)
        man.write(args.out_dir)
        return 1
    worst = max(r for _, r in rows)
    out = _out(args, "residual.csv")
    with open(out, "w") as fh:
        fh.write(",".join(f"x{i + 1}" for i in range(pre.system.dim)) + ",max_rel_residual\n")
        for x0, r in rows:
            fh.write(",".join(repr(float(v)) for v in x0) + f",{r!r}\n")
    man.outputs["table"] = out
    man.results.update(trajectories=len(rows), draws=draws, max_rel_residual=worst)
    print(f"{len(rows)} converged trajectories ({draws} draws); "
          f"max relative Zubov residual {worst:.3e}")
    man.write(args.out_dir)
    return 0 if len(rows) == args.trajectories else 1


COMMANDS = {
    "eval": cmd_eval, "ivalue": cmd_ivalue, "dataset": cmd_dataset, "train": cmd_train,
    "validate": cmd_validate, "levelcurves": cmd_levelcurves,
    "residual-check": cmd_residual_check,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
