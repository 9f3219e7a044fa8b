"""Command-line front end: gen, solve-energy, solve-time, train, sweep.

Configs are JSON files whose keys match the dataclass fields they fill
(ScenarioConfig, SweepSpec, TrainingSpec); command-line flags override the
file.  All outputs land in --out as JSON/CSV.
"""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from .harness import (ScenarioConfig, SweepSpec, TrainingSpec,
                      default_fl_params, gen_scenario, report_to_dict,
                      run_experiment, run_sweep, run_training,
                      scenario_from_dict, scenario_to_dict)
from .model import InfeasibleError
from .schemes import SchemeKind


def _load_config(path, cls, overrides):
    data = {}
    if path:
        data.update(json.loads(Path(path).read_text()))
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise SystemExit(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return cls(**data)


def _scenario_from_args(args):
    if getattr(args, "scenario", None):
        return scenario_from_dict(json.loads(Path(args.scenario).read_text()))
    config = _load_config(args.config, ScenarioConfig, {"seed": args.seed})
    return gen_scenario(config)


def _out_dir(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(args):
    config = _load_config(args.config, ScenarioConfig, {"seed": args.seed})
    scenario = gen_scenario(config)
    out = _out_dir(args) / "scenario.json"
    out.write_text(json.dumps(scenario_to_dict(scenario), indent=2))
    print(f"wrote {out} ({scenario.num_users} users)")
    return 0


def _run_schemes(args, completion_time):
    scenario = _scenario_from_args(args)
    fl = default_fl_params()
    out = _out_dir(args)
    status = 0
    for name in (args.scheme or "proposed").split(","):
        scheme = SchemeKind.parse(name, seed=args.seed or 0)
        try:
            report = run_experiment(scenario, fl, scheme,
                                    completion_time=completion_time)
        except InfeasibleError as exc:
            print(f"{scheme.kind}: infeasible ({exc})")
            status = 1
            continue
        path = out / f"report_{scheme.kind}.json"
        path.write_text(json.dumps(report_to_dict(report), indent=2))
        t_star = f", T*={report.t_star:.6g} s" if report.t_star else ""
        print(f"{scheme.kind}: energy={report.total_energy:.6g} J"
              f"{t_star} -> {path}")
    return status


def cmd_solve_energy(args):
    return _run_schemes(args, args.deadline)


def cmd_solve_time(args):
    return _run_schemes(args, None)


def cmd_train(args):
    spec = _load_config(args.config, TrainingSpec, {"seed": args.seed})
    out = _out_dir(args)
    trace, rows = run_training(spec, out_dir=out)
    reached = trace.rounds_to_target
    print(f"trained {len(trace.local_iters)} rounds, "
          f"loss {trace.global_loss[0]:.6g} -> {trace.global_loss[-1]:.6g}"
          + (f", target hit at round {reached}" if reached is not None else ""))
    return 0


def cmd_sweep(args):
    overrides = {"seed": args.seed, "runs": args.runs}
    if args.scheme:
        overrides["schemes"] = tuple(args.scheme.split(","))
    spec = _load_config(args.config, SweepSpec, overrides)
    base = _load_config(args.base_config, ScenarioConfig, {})
    out = _out_dir(args)
    rows, _ = run_sweep(spec, base, out_dir=out)
    errors = sum(1 for r in rows if r.get("error"))
    print(f"wrote {out / 'sweep_long.csv'} ({len(rows)} rows, {errors} errors)")
    return 0 if errors < len(rows) else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fedcell",
        description="Energy-aware resource allocation and training for "
                    "federated learning over a wireless cell.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_input=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--out", help="output directory (default: cwd)")
        if scenario_input:
            p.add_argument("--scenario", help="pre-generated scenario.json")
            p.add_argument("--scheme", help="comma-separated scheme list")

    p = sub.add_parser("gen", help="generate a scenario file")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve-energy", help="minimize energy at a deadline")
    common(p, scenario_input=True)
    p.add_argument("-T", "--deadline", type=float, required=True,
                   help="completion-time budget in seconds")
    p.set_defaults(func=cmd_solve_energy)

    p = sub.add_parser("solve-time", help="minimize the completion time")
    common(p, scenario_input=True)
    p.set_defaults(func=cmd_solve_time)

    p = sub.add_parser("train", help="run the federated training loop")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run an experiment sweep")
    common(p)
    p.add_argument("--base-config", help="JSON scenario config for the cells")
    p.add_argument("--runs", type=int, help="Monte Carlo repetitions")
    p.add_argument("--scheme", help="comma-separated scheme list")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
