"""Operator surface: ``spikegrad train | verify | gradcheck | energy``.

Runs are configured by a flat ``key=value`` text file (# comments allowed)
overridden by command-line flags; the effective configuration is echoed
into the output directory so any run can be reproduced from its artifacts.
Every subcommand is deterministic under a fixed seed (``--seed`` or the
SPIKE_SEED environment variable).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import metrics as metrics_mod
from .checkpoint import save_checkpoint
from .data import Dataset, gen_synthetic, load_raster
from .model import build_network
from .oracles import brute_force_suite, fd_suite
from .rng import Rng
from .trainer import SGD, TrainConfig, time_major, train_epoch
from .metrics import (
    affine_current_check,
    energy_estimate,
    epoch_rows,
    membrane_check,
    probe_forward,
    reference_energy_table,
    prediction_deviation_summary,
    write_metrics_csv,
    write_summary_json,
)


class ConfigError(ValueError):
    pass


CONFIG_DEFAULTS = {
    "arch": "mlp64",
    "dataset": "gaussian-blobs",
    "n": 512,
    "classes": 4,
    "shape": "4x2x2",
    "separation": 6.0,
    "noise": 0.15,
    "frames": 1,
    "frame_noise": 0.0,
    "seed": 1,
    "epochs": 50,
    "batch_size": 64,
    "lr": 0.1,
    "momentum": 0.9,
    "weight_decay": 1e-4,
    "timesteps": 2,
    "v_th": 0.5,
    "tau_init": 0.2,
    "adaptive_sg": True,
    "trainable_decay": True,
    "sg_family": "rectangular",
    "kappa": 1.0,
    "detach_reset": False,
    "checkpoint_every": 25,
    "out": "run_out",
}

_BOOL_KEYS = {"adaptive_sg", "trainable_decay", "detach_reset"}
_INT_KEYS = {"n", "classes", "seed", "epochs", "batch_size", "timesteps", "checkpoint_every",
             "frames"}
_FLOAT_KEYS = {"separation", "noise", "lr", "momentum", "weight_decay", "v_th", "tau_init",
               "kappa", "frame_noise"}


def parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def coerce(key: str, value):
    if isinstance(value, str):
        try:
            if key in _BOOL_KEYS:
                return parse_bool(value)
            if key in _INT_KEYS:
                return int(value)
            if key in _FLOAT_KEYS:
                return float(value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
    return value


def parse_config_file(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {text!r}")
            key, value = text.split("=", 1)
            key = key.strip()
            if key not in CONFIG_DEFAULTS:
                raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
            out[key] = coerce(key, value.strip())
    return out


def effective_config(args) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    for key in CONFIG_DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = coerce(key, flag)
    if getattr(args, "seed", None) is None and "SPIKE_SEED" in os.environ and \
            (not getattr(args, "config", None) or "seed" not in parse_config_file(args.config)):
        cfg["seed"] = int(os.environ["SPIKE_SEED"])
    return cfg


def echo_config(cfg: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(cfg):
            value = cfg[key]
            if isinstance(value, bool):
                value = "true" if value else "false"
            fh.write(f"{key}={value}\n")


def parse_shape(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ConfigError(f"shape must be CxHxW, got {text!r}")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


def build_dataset(cfg: dict) -> Dataset:
    name = cfg["dataset"]
    if name.startswith("raster:"):
        return load_raster(name.split(":", 1)[1])
    if name in ("gaussian-blobs", "xor-rings"):
        shape = parse_shape(cfg["shape"]) if name == "gaussian-blobs" else None
        return gen_synthetic(name, cfg["n"], cfg["seed"],
                             classes=cfg["classes"] if name == "gaussian-blobs" else None,
                             shape=shape, separation=cfg["separation"], noise=cfg["noise"],
                             frames=cfg["frames"], frame_noise=cfg["frame_noise"])
    raise ConfigError(f"unknown dataset {name!r}")


class OutputLock:
    """Exclusive lock on an output directory (stale runs must be cleaned)."""

    def __init__(self, out_dir: str):
        self.path = os.path.join(out_dir, ".lock")

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"output directory is locked by another run: {self.path}")
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.path)
        except FileNotFoundError:
            pass
        return False


def cmd_train(args) -> int:
    cfg = effective_config(args)
    out_dir = cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    with OutputLock(out_dir):
        echo_config(cfg, os.path.join(out_dir, "config.txt"))
        dataset = build_dataset(cfg)
        train_cfg = TrainConfig(
            epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"],
            momentum=cfg["momentum"], weight_decay=cfg["weight_decay"],
            timesteps=cfg["timesteps"], v_th=cfg["v_th"], tau_init=cfg["tau_init"],
            adaptive_sg=cfg["adaptive_sg"], trainable_decay=cfg["trainable_decay"],
            sg_family=cfg["sg_family"], kappa=cfg["kappa"], detach_reset=cfg["detach_reset"])
        rng = Rng(cfg["seed"])
        net = build_network(cfg["arch"], dataset.input_shape, dataset.classes, rng,
                            v_th=cfg["v_th"], tau_init=cfg["tau_init"])
        optimizer = SGD(momentum=cfg["momentum"], weight_decay=cfg["weight_decay"])
        sg = train_cfg.sg_config()

        probe_n = min(cfg["batch_size"], len(dataset.labels))
        probe = time_major(dataset.samples[:probe_n], cfg["timesteps"])

        # metrics rows record the probe-batch state after N completed epochs,
        # N = 0 (initialization) through cfg[epochs]
        rows: list[str] = []
        epochs_summary = []
        last_tape = None
        if cfg["epochs"] > 0:
            _, tape = probe_forward(net, probe, sg)
            rows.extend(epoch_rows(net, tape, 0))
            last_tape = tape
        for epoch in range(cfg["epochs"]):
            stats = train_epoch(net, dataset.samples, dataset.labels, train_cfg,
                                optimizer, rng, epoch)
            _, tape = probe_forward(net, probe, sg)
            rows.extend(epoch_rows(net, tape, epoch + 1))
            last_tape = tape
            epochs_summary.append({"epoch": epoch, "loss": stats.loss,
                                   "accuracy": stats.accuracy, "lr": stats.lr})
            if cfg["checkpoint_every"] and (epoch + 1) % cfg["checkpoint_every"] == 0:
                save_checkpoint(net.param_dict(), os.path.join(out_dir, f"epoch{epoch + 1}.spkt"))
            print(f"epoch {epoch}: loss {stats.loss:.4f} acc {stats.accuracy:.4f} lr {stats.lr:.5f}")

        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), rows)
        summary = {"config": {k: cfg[k] for k in sorted(cfg)}, "epochs": epochs_summary}
        if last_tape is not None:
            rates = {name: metrics_mod.firing_rate(site)
                     for name, site in net.spiking_sites(last_tape)}
            report = energy_estimate(net.layer_op_counts(), rates, cfg["timesteps"])
            summary["firing_rates"] = rates
            summary["energy"] = report.as_dict()
            summary["op_rows"] = [list(r) for r in net.layer_op_counts()]
            summary["prediction_deviations"] = prediction_deviation_summary(net, last_tape)
        write_summary_json(os.path.join(out_dir, "summary.json"), summary)
        if cfg["epochs"] > 0:
            save_checkpoint(net.param_dict(), os.path.join(out_dir, "final.spkt"))
    return 0


def cmd_verify(args) -> int:
    cfg = effective_config(args)
    draws = args.draws
    samples = args.samples
    if samples < 10_000:
        print(f"warning: {samples} samples gives insufficient statistical power; "
              "running anyway", file=sys.stderr)
    # independent child streams per block: the report of one block never
    # depends on how many draws another consumed
    root = Rng(cfg["seed"])
    failures = 0

    checks = 0
    print("== normalized-current moments (channel-mean prediction) ==")
    for row in affine_current_check(root.spawn(1), n_draws=draws, min_elements=samples,
                                    v_th=cfg["v_th"]):
        ok = row.passes()
        checks += 1
        failures += 0 if ok else 1
        print(f"  {'PASS' if ok else 'FAIL'} {row.label}: mean {row.empirical_mean:+.5f} "
              f"vs {row.predicted_mean:+.5f} ({row.mean_dev_se:.2f} se), "
              f"var {row.empirical_var:.5f} in [{row.var_lo:.5f}, {row.var_hi:.5f}]")

    print("== membrane moments at each timestep (premise population) ==")
    for row in membrane_check(root.spawn(2), n_draws=draws, timesteps=args.timesteps,
                              min_elements=samples, v_th=cfg["v_th"], population="premise"):
        ok = row.passes()
        checks += 1
        failures += 0 if ok else 1
        if not ok or args.verbose:
            print(f"  {'PASS' if ok else 'FAIL'} {row.label}: mean {row.empirical_mean:+.5f} "
                  f"vs {row.predicted_mean:+.5f} ({row.mean_dev_se:.2f} se), "
                  f"var {row.empirical_var:.5f} in [{row.var_lo:.5f}, {row.var_hi:.5f}]")
    print(f"  (premise population: {'all checks pass' if failures == 0 else f'{failures} failures'})")
    if 0 < failures <= max(1, checks // 50):
        print(f"  note: {failures} of {checks} checks exceeded the 3-se tolerance; "
              "isolated exceedances are expected over this many checks - rerun with "
              "another seed or more --samples to distinguish noise from a real defect")

    print("== diagnostic: spike-conditioned population (not gated) ==")
    diag = membrane_check(root.spawn(3), n_draws=min(3, draws), timesteps=args.timesteps,
                          min_elements=samples, v_th=cfg["v_th"], population="conditioned")
    worst = max(diag, key=lambda r: r.mean_dev_se)
    print(f"  conditioning on not-firing truncates the carried membrane: worst mean "
          f"deviation {worst.mean_dev_se:.1f} se ({worst.label})")

    print("verification:", "PASS" if failures == 0 else
          f"FAIL ({failures} check{'s' if failures != 1 else ''})")
    return 0 if failures == 0 else 1


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else int(os.environ.get("SPIKE_SEED", 1))
    worst_fd = 0.0
    probed = 0
    for arch, shape, classes in (("mlp64", (4, 2, 2), 3), ("convs", (2, 6, 6), 3)):
        for t_steps in (1, 2, 4):
            err, count = fd_suite(arch, shape, classes, t_steps, seed + t_steps,
                                  n_params=args.fd_params)
            worst_fd = max(worst_fd, err)
            probed += count
            print(f"finite differences {arch} T={t_steps}: {count} params, max rel err {err:.3e}")
    print(f"relaxed finite-difference total: {probed} params, max rel err {worst_fd:.3e}")

    modes = {"both": (False, True), "off": (False,), "on": (True,)}[args.detach_reset]
    worst_bf = 0.0
    for detach in modes:
        err = brute_force_suite(args.instances, detach_reset=detach, seed0=seed * 1000 + 17)
        worst_bf = max(worst_bf, err)
        print(f"forward-mode oracle (detach_reset={detach}): {args.instances} instances, "
              f"max rel err {err:.3e}")

    ok = worst_fd <= 1e-4 and worst_bf <= 1e-10
    print("gradcheck:", "PASS" if ok else "FAIL",
          f"(fd {worst_fd:.3e} <= 1e-4, oracle {worst_bf:.3e} <= 1e-10)")
    return 0 if ok else 1


def cmd_energy(args) -> int:
    if args.table3_mode:
        rows = reference_energy_table()
        if args.row:
            rows = [r for r in rows if r["row"] == args.row.lower()
                    and (args.row_timesteps is None or r["timesteps"] == args.row_timesteps)]
            if not rows:
                print(f"no reference row named {args.row!r}", file=sys.stderr)
                return 2
        ok = True
        print("row          T  adds(M)   mults(M)  computed(mJ)  published(mJ)  gap       naive(mJ)")
        for r in rows:
            flag = ""
            if abs(r["naive_mj"] - r["expected_mj"]) > 0.005:
                flag = "  [naive reading off by {:+.3f}]".format(r["naive_gap_mj"])
            print(f"{r['row']:<12} {str(r['timesteps'] or '-'):<2} {r['adds_m']:<9.2f} "
                  f"{r['mults_m']:<9.2f} {r['energy_mj']:<13.4f} {r['expected_mj']:<14.2f} "
                  f"{r['gap_mj']:+.4f}   {r['naive_mj']:.4f}{flag}")
            ok = ok and abs(r["gap_mj"]) <= 0.01
        print("energy table:", "PASS (all within 0.01 mJ)" if ok else "FAIL")
        return 0 if ok else 1
    if not args.run:
        print("need --run DIR or --table3-mode", file=sys.stderr)
        return 2
    with open(os.path.join(args.run, "summary.json"), "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    if "firing_rates" not in summary:
        print("run summary has no firing rates (train for at least one epoch)", file=sys.stderr)
        return 2
    op_rows = [tuple(r) for r in summary["op_rows"]]
    report = energy_estimate(op_rows, summary["firing_rates"],
                             summary["config"]["timesteps"])
    print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikegrad",
                                     description="spiking-network training and verification")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, detach: bool = True):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--epochs", type=int)
        p.add_argument("--timesteps", type=int, default=None)
        p.add_argument("--arch")
        p.add_argument("--dataset")
        p.add_argument("--n", type=int)
        p.add_argument("--classes", type=int)
        p.add_argument("--shape")
        p.add_argument("--batch_size", "--batch-size", type=int, dest="batch_size")
        p.add_argument("--lr", type=float)
        p.add_argument("--sg-family", dest="sg_family")
        p.add_argument("--adaptive-sg", dest="adaptive_sg")
        p.add_argument("--trainable-decay", dest="trainable_decay")
        p.add_argument("--kappa", type=float)
        if detach:
            p.add_argument("--detach-reset", dest="detach_reset_flag")

    p_train = sub.add_parser("train", help="run the training loop")
    add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_verify = sub.add_parser("verify", help="statistical checks of the distribution predictions")
    add_common(p_verify)
    p_verify.add_argument("--draws", type=int, default=20)
    p_verify.add_argument("--samples", type=int, default=100_000)
    p_verify.add_argument("--verbose", action="store_true")
    p_verify.set_defaults(func=cmd_verify, timesteps=4)

    p_grad = sub.add_parser("gradcheck", help="gradient oracle suites")
    add_common(p_grad, detach=False)
    p_grad.add_argument("--instances", type=int, default=50)
    p_grad.add_argument("--fd-params", type=int, default=40, dest="fd_params")
    p_grad.add_argument("--detach-reset", dest="detach_reset",
                        choices=("both", "on", "off"), default="both")
    p_grad.set_defaults(func=cmd_gradcheck)

    p_energy = sub.add_parser("energy", help="accumulate/multiply energy accounting")
    p_energy.add_argument("--run", help="run directory with summary.json")
    p_energy.add_argument("--table3-mode", action="store_true", dest="table3_mode",
                          help="evaluate the published reference operation counts")
    p_energy.add_argument("--row", help="restrict to one reference row")
    p_energy.add_argument("--row-timesteps", type=int, dest="row_timesteps")
    p_energy.set_defaults(func=cmd_energy)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "detach_reset_flag", None) is not None and args.command != "gradcheck":
        args.detach_reset = parse_bool(args.detach_reset_flag)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
