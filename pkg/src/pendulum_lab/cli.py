"""Command-line entry point.

Subcommands follow the two-stage workflow in order:

    derive      linear model, transfer functions, poles, controllability
    design-lqr  solve the Riccati equation, save the gain
    gen-data    log stage-1 LQR runs, subsample the training dataset
    train       fit the fuzzy controller, save model + RMSE history
    simulate    one closed-loop run of a chosen controller and scenario
    benchmark   PI vs PID vs TS-LA comparison table

Every command reads one JSON config (defaults apply when omitted), writes
its artifacts plus a manifest (config hash, seed, version) into --out, and
reruns byte-identically given the same config and seed.  Exit codes: 0
success, 1 usage or config error, 2 numerical failure, 3 benchmark cells
that only failed by divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anfis import Dataset, load_model, save_model
from .config import ConfigError, RunConfig, config_sha256, default_config, load_config
from .controllers import CareError, LqrController, LqrDesign, PidController
from .pipeline import (benchmark_from_config, build_dataset, design_from_config, stage1_runs,
                       train_from_config)
from .plant import controllability, linearize, poles, root_locus_sweep, transfer_functions, \
    write_locus_csv, write_poles_csv
from .scenarios import make_disturbance
from .simulate import run_closed_loop

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_DIVERGED_CELLS = 3

DESIGN_FILE = "lqr_design.json"
DATASET_FILE = "dataset.csv"
SPLIT_FILE = "dataset_split.json"
MODEL_FILE = "anfis_model.json"


class _Parser(argparse.ArgumentParser):
    # usage problems are exit code 1 in this tool, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="pendulum-lab", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override every stochastic seed in the config")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    common(sub.add_parser("derive", help="linear model, poles, controllability"))
    common(sub.add_parser("design-lqr", help="solve the Riccati equation and save the gain"))
    common(sub.add_parser("gen-data", help="collect stage-1 LQR logs into a dataset"))
    common(sub.add_parser("train", help="train the fuzzy controller on the dataset"))

    p_sim = sub.add_parser("simulate", help="one closed-loop run")
    common(p_sim)
    p_sim.add_argument("--controller", required=True,
                       choices=["none", "lqr", "pi", "pid", "tsla"])
    p_sim.add_argument("--scenario", required=True, choices=["impulse", "noise"])

    p_bench = sub.add_parser("benchmark", help="PI vs PID vs TS-LA comparison")
    common(p_bench)
    p_bench.add_argument("--auto", action="store_true",
                         help="build any missing design/dataset/model first")
    return parser


def _load(args) -> RunConfig:
    config = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _manifest(out: Path, command: str, config: RunConfig, args, outputs: list[str]) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "config_sha256": config_sha256(config),
        "config_path": str(args.config) if args.config else None,
        "seed_override": args.seed,
        "effective_seeds": {"anfis": config.anfis.seed, "noise": config.scenarios.noise.seed},
        "outputs": sorted(outputs),
    }
    with open(out / f"{command}_manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(str(path))
    return path


def cmd_derive(args) -> int:
    config = _load(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    ss = linearize(config.physical)
    cart_tf, pend_tf = transfer_functions(config.physical)
    pend_poles = poles(pend_tf)
    cart_poles = poles(cart_tf)
    co = controllability(ss)

    with np.printoptions(precision=6, suppress=True):
        print("A =\n", ss.A)
        print("B =\n", ss.B.ravel())
        print("pendulum TF num/den:", pend_tf.numerator, pend_tf.denominator)
        print("cart TF num/den:", cart_tf.numerator, cart_tf.denominator)
        print("pendulum poles:", np.round(pend_poles, 6))
        print("cart poles:", np.round(cart_poles, 6))
        print(f"controllability rank: {co.rank}   det: {co.det:.6g}")

    report = {
        "A": ss.A.tolist(),
        "B": ss.B.tolist(),
        "cart_tf": {"num": list(cart_tf.numerator), "den": list(cart_tf.denominator)},
        "pendulum_tf": {"num": list(pend_tf.numerator), "den": list(pend_tf.denominator)},
        "pendulum_poles": [[p.real, p.imag] for p in pend_poles],
        "cart_poles": [[p.real, p.imag] for p in cart_poles],
        "controllability": {"rank": co.rank, "det": co.det, "matrix": co.matrix.tolist()},
    }
    with open(out / "derive_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    labelled = [("pendulum", complex(p)) for p in pend_poles]
    labelled += [("cart", complex(p)) for p in cart_poles]
    write_poles_csv(out / "poles.csv", labelled)
    gains = np.concatenate([[0.0], np.geomspace(1e-2, 1e3, 31)])
    write_locus_csv(out / "root_locus.csv", root_locus_sweep(pend_tf, gains))

    _manifest(out, "derive", config, args,
              ["derive_report.json", "poles.csv", "root_locus.csv"])
    return EXIT_OK


def cmd_design_lqr(args) -> int:
    config = _load(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    ss = linearize(config.physical)
    design = design_from_config(config)
    design.to_json(out / DESIGN_FILE)

    eig = design.closed_loop_eigenvalues(ss)
    print("K =", np.round(design.K.ravel(), 6))
    print(f"Riccati residual: {design.riccati_residual(ss):.3e}")
    print("closed-loop eigenvalues:", np.round(eig, 4))
    _manifest(out, "design-lqr", config, args, [DESIGN_FILE])
    return EXIT_OK


def cmd_gen_data(args) -> int:
    config = _load(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    design = LqrDesign.from_json(_require(out / DESIGN_FILE))

    dataset = build_dataset(config, design)
    dataset.to_csv(out / DATASET_FILE)
    with open(out / SPLIT_FILE, "w") as fh:
        json.dump(dataset.split_manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"dataset: {len(dataset.train_indices)} train / {len(dataset.test_indices)} test rows")
    _manifest(out, "gen-data", config, args, [DATASET_FILE, SPLIT_FILE])
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    with open(_require(out / SPLIT_FILE)) as fh:
        split = json.load(fh)
    dataset = Dataset.from_csv(_require(out / DATASET_FILE), split)

    model, history = train_from_config(config, dataset)
    save_model(model, out / MODEL_FILE)
    history.to_csv(out / "rmse_history.csv")
    meta = model.metadata
    print(f"epochs: {meta['epochs']}  final train RMSE: {meta['rmse']['train']:.3e}"
          f"  test RMSE: {meta['rmse']['test']:.3e}"
          f"  ({meta['rmse_pct_of_range']:.4g}% of output range)")
    if history.flags:
        print("flags:", ", ".join(history.flags))
    _manifest(out, "train", config, args, [MODEL_FILE, "rmse_history.csv"])
    return EXIT_OK


def _controller_for(name: str, config: RunConfig, out: Path):
    if name == "none":
        return None
    if name == "lqr":
        return LqrController(LqrDesign.from_json(_require(out / DESIGN_FILE)))
    if name == "pi":
        return PidController(config.pi)
    if name == "pid":
        return PidController(config.pid)
    if name == "tsla":
        from .controllers import AnfisController

        return AnfisController(load_model(_require(out / MODEL_FILE)))
    raise ValueError(f"unknown controller {name!r}")


def cmd_simulate(args) -> int:
    config = _load(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    controller = _controller_for(args.controller, config, out)

    if args.scenario == "impulse":
        spec = config.scenarios.impulse
        sim_cfg = config.sim
        onset = spec.onset
    else:
        from dataclasses import replace

        spec = config.scenarios.noise
        sim_cfg = replace(config.sim, horizon=config.scenarios.noise_horizon)
        onset = 0.0

    series = run_closed_loop(sim_cfg, controller, make_disturbance(spec), config.physical)
    name = f"timeseries_{args.controller}_{args.scenario}.csv"
    series.to_csv(out / name)
    print(f"{len(series)} rows logged to {out / name}")
    if series.diverged:
        print("run diverged before the horizon")
    else:
        from .scenarios import compute_metrics

        m = compute_metrics(series, onset, config.scenarios.bands)
        print(f"settling {m.settling_time:.4g} s, peak theta dev "
              f"{np.degrees(m.peak_theta_dev):.4g} deg, final x {series.x[-1]:.4g} m")
    _manifest(out, "simulate", config, args, [name])
    return EXIT_OK


def cmd_benchmark(args) -> int:
    config = _load(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    if args.auto:
        if not (out / DESIGN_FILE).exists():
            cmd_design_lqr(args)
        if not (out / DATASET_FILE).exists() or not (out / SPLIT_FILE).exists():
            cmd_gen_data(args)
        if not (out / MODEL_FILE).exists():
            cmd_train(args)
    model = load_model(_require(out / MODEL_FILE))

    table = benchmark_from_config(config, model)
    table.to_csv(out / "benchmark.csv")
    text = table.to_text()
    with open(out / "benchmark.txt", "w") as fh:
        fh.write(text)
    print(text, end="")
    _manifest(out, "benchmark", config, args, ["benchmark.csv", "benchmark.txt"])

    diverged = [f"{c.controller}/{c.scenario}" for c in table.cells if c.diverged]
    if diverged:
        print("diverged cells:", ", ".join(diverged))
        return EXIT_DIVERGED_CELLS
    return EXIT_OK


_COMMANDS = {
    "derive": cmd_derive,
    "design-lqr": cmd_design_lqr,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"missing artifact: {exc} (run the earlier pipeline stages or pass --auto)",
              file=sys.stderr)
        return EXIT_USAGE
    except CareError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
