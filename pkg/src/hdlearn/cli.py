"""Command-line entry point: simulate, train, rollout, evaluate, distill.

Every subcommand derives all randomness from one --seed, validates paths
before doing work, and writes a manifest (config echo, seed, versions)
sufficient to re-run it. Identical (seed, config) produce byte-identical
artifacts.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import evaluation as ev
from . import graphnet as gn
from . import symreg as sr
from . import systems as sy
from . import training as tr
from .autodiff import backend_name
from .dynamics import rollout as dyn_rollout, velocity_verlet_step
from .errors import ConfigError, HdlearnError
from .state import SubSystem, SystemKind, SystemSpec, Trajectory

KINDS = [k.value for k in SystemKind if k is not SystemKind.HYBRID]


def _manifest(path, command, args, seed):
    import scipy
    doc = {
        "command": command,
        "config": {k: v for k, v in sorted(vars(args).items())
                   if k not in ("func",)},
        "seed": seed,
        "versions": {"hdlearn": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "backend": backend_name()},
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True, default=str)
        f.write("\n")


def _spec_for(kind, n):
    kind = SystemKind(kind)
    if kind is SystemKind.PENDULUM:
        return sy.pendulum_spec(n)
    if kind is SystemKind.SPRING:
        return sy.spring_spec(n)
    if kind is SystemKind.GRAVITATIONAL:
        return sy.gravitational_spec(n)
    if kind is SystemKind.BINARY_LJ:
        return sy.lj_spec(n)
    raise ConfigError(f"cannot build a spec for kind {kind}")


def _require_parent(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise ConfigError(f"output directory {parent} does not exist")


def cmd_simulate(args):
    _require_parent(args.out)
    spec = _spec_for(args.system, args.n)
    system = sy.analytic_system(spec)
    init = sy.sample_initial(spec, args.seed)
    if args.equilibrate:
        init = sy.equilibrate_lj(spec, init, args.equilibrate)
    dt = args.dt if args.dt is not None else sy.DEFAULT_DT[spec.kind]
    traj = sy.generate_trajectory(system, init, dt=dt, steps=args.steps,
                                  stride=args.stride)
    traj.write_csv(args.out)
    spec.save(str(args.out) + ".spec.json")
    _manifest(str(args.out) + ".manifest.json", "simulate", args, args.seed)
    return 0


_TRAIN_KEYS = {"n", "pairs_per_traj", "lr", "batch", "max_epochs",
               "stop_delta", "stop_window", "layers"}


def _load_trajectories(data_dir, kind):
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise ConfigError(f"data directory {data_dir} does not exist")
    csvs = sorted(data_dir.glob("*.csv"))
    if not csvs:
        raise ConfigError(f"no trajectory CSVs under {data_dir}")
    trajs = []
    for path in csvs:
        spec_path = Path(str(path) + ".spec.json")
        if not spec_path.exists():
            raise ConfigError(f"missing spec sidecar for {path}")
        spec = SystemSpec.load(spec_path)
        if spec.kind is not SystemKind(kind):
            raise ConfigError(f"{path} holds a {spec.kind.value} trajectory")
        man_path = Path(str(path) + ".manifest.json")
        dt = sy.DEFAULT_DT[spec.kind]
        stride = 1
        if man_path.exists():
            cfg = json.loads(man_path.read_text())["config"]
            stride = cfg.get("stride", 1)
            if cfg.get("dt") is not None:
                dt = cfg["dt"]
        traj = Trajectory.read_csv(path, spec, dt=dt, stride=stride)
        system = sy.analytic_system(spec)
        # one ground-truth fine step per recorded frame rebuilds the
        # successor states exactly (same integrator, same code path)
        traj.successors = [velocity_verlet_step(system.field, system.constraint,
                                                f, dt).state
                           for f in traj.frames]
        trajs.append(traj)
    return trajs


def cmd_train(args):
    _require_parent(args.out)
    with open(args.config) as f:
        cfg = json.load(f)
    unknown = set(cfg) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    trajs = _load_trajectories(args.data, args.system)
    seeds = np.random.SeedSequence(args.seed).spawn(3)
    dataset = tr.build_dataset(trajs, cfg.get("pairs_per_traj", 100),
                               seed=seeds[0])
    hyper = gn.default_hyper(args.system, dim=trajs[0].spec.dim)
    if "layers" in cfg:
        hyper["layers"] = int(cfg["layers"])
    params = gn.init_params(hyper, seed=int(seeds[1].generate_state(1)[0]))
    config = tr.TrainConfig(
        lr=cfg.get("lr", 1e-3), batch=cfg.get("batch", 100),
        max_epochs=cfg.get("max_epochs", 2000),
        stop_delta=cfg.get("stop_delta", 0.001),
        stop_window=cfg.get("stop_window", 100),
        seed=int(seeds[2].generate_state(1)[0]))
    trained, history = tr.train(params, dataset, config)
    trained.save(args.out)
    losses = Path(args.out).with_name(Path(args.out).stem + "_losses.csv")
    with open(losses, "w") as f:
        f.write("epoch,train,val\n")
        for e, a, b in history:
            f.write(f"{e},{a:.17g},{b:.17g}\n")
    _manifest(str(args.out) + ".manifest.json", "train", args, args.seed)
    return 0


def _load_hybrid(path):
    with open(path) as f:
        doc = json.load(f)
    spec = SystemSpec.from_json(doc["spec"])
    models = []
    for sub in spec.subsystems:
        ck = doc["checkpoints"].get(sub.kind.value)
        if ck is None:
            raise ConfigError(f"hybrid config misses a checkpoint for "
                              f"{sub.kind.value}")
        models.append((gn.ModelParams.load(ck), sub))
    field, constraints = gn.compose_hybrid(models, spec)
    return spec, field, constraints


def cmd_rollout(args):
    _require_parent(args.out)
    if bool(args.checkpoint) == bool(args.hybrid):
        raise ConfigError("pass exactly one of --checkpoint or --hybrid")
    if args.hybrid:
        spec, field, constraints = _load_hybrid(args.hybrid)
    else:
        spec = _spec_for(args.system, args.n)
        params = gn.ModelParams.load(args.checkpoint)
        field = gn.energy_field(params, spec)
        constraints = sy.analytic_system(spec).constraint
    init = sy.sample_initial(spec, args.seed)
    dt = args.dt if args.dt is not None else sy.DEFAULT_DT[spec.kind]
    traj = dyn_rollout(field, constraints, init, dt, args.steps, args.stride,
                       spec=spec)
    traj.write_csv(args.out)
    spec.save(str(args.out) + ".spec.json")
    _manifest(str(args.out) + ".manifest.json", "rollout", args, args.seed)
    return 0


def _eval_one_seed(checkpoint, kind, n, seed, steps, stride, dt):
    spec = _spec_for(kind, n)
    params = gn.ModelParams.load(checkpoint)
    system = sy.analytic_system(spec)
    init = sy.sample_initial(spec, seed)
    dt = dt if dt is not None else sy.DEFAULT_DT[spec.kind]
    series = ev.rollout_comparison(params, system, init, dt, steps, stride)
    comp = ev.compare_quantities(params, system, series.extra["true_traj"])
    return seed, series, comp


def cmd_evaluate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(range(args.seeds))
    jobs = [(args.checkpoint, args.system, args.n, s, args.steps, args.stride,
             args.dt) for s in seeds]
    if args.workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_eval_one_seed_star, jobs))
    else:
        results = [_eval_one_seed(*j) for j in jobs]
    results.sort(key=lambda r: r[0])
    with open(out / "metrics.csv", "w") as f:
        f.write("seed,t,EE,ME\n")
        for seed, series, _ in results:
            for t, e, m in zip(series.times, series.ee, series.me):
                f.write(f"{seed},{t:.17g},{e:.17g},{m:.17g}\n")
    with open(out / "scatter.csv", "w") as f:
        f.write("seed,frame,quantity,component,true,predicted\n")
        for seed, _, comp in results:
            for q in range(len(comp.times)):
                f.write(f"{seed},{q},T,0,{comp.true_T[q]:.17g},{comp.pred_T[q]:.17g}\n")
                f.write(f"{seed},{q},V,0,{comp.true_V[q]:.17g},{comp.pred_V[q]:.17g}\n")
                for c in range(comp.true_forces.shape[1]):
                    f.write(f"{seed},{q},force,{c},{comp.true_forces[q, c]:.17g},"
                            f"{comp.pred_forces[q, c]:.17g}\n")
    _manifest(out / "manifest.json", "evaluate", args, args.seed)
    return 0


def _eval_one_seed_star(job):
    return _eval_one_seed(*job)


def cmd_distill(args):
    _require_parent(args.out)
    powers = [int(p) for p in args.powers.split(",") if p != ""]
    model = gn.ModelParams.load(args.checkpoint) if args.checkpoint else None
    cfg = sr.GPConfig(seed=args.seed, population=args.population,
                      generations=args.generations)
    report = sr.distill(model, args.head, powers, count=args.count, config=cfg)
    with open(args.out, "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
        f.write("\n")
    _manifest(str(args.out) + ".manifest.json", "distill", args, args.seed)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="hdlearn",
                                description=__doc__.splitlines()[0])
    p.add_argument("--workers", type=int,
                   default=int(os.environ.get("HDL_WORKERS", "1")),
                   help="worker processes for seed-parallel evaluation")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a ground-truth trajectory")
    s.add_argument("--system", required=True, choices=KINDS)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--dt", type=float, default=None)
    s.add_argument("--equilibrate", type=int, default=0,
                   help="NVE equilibration steps before recording (mixture)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train", help="train a model on simulated trajectories")
    s.add_argument("--system", required=True, choices=KINDS)
    s.add_argument("--data", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("rollout", help="roll a trained or hybrid model forward")
    s.add_argument("--checkpoint")
    s.add_argument("--hybrid", help="hybrid composition JSON")
    s.add_argument("--system", choices=KINDS)
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--dt", type=float, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_rollout)

    s = sub.add_parser("evaluate", help="rollout metrics against ground truth")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--system", required=True, choices=KINDS)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--stride", type=int, default=10)
    s.add_argument("--dt", type=float, default=None)
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("distill", help="fit closed forms to learned heads")
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--head", required=True,
                   help="kinetic | node | edge:a-b | spring-edge | lj-edge:a-b")
    s.add_argument("--powers", default="2,3")
    s.add_argument("--count", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_distill)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HdlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
