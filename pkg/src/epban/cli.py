"""Command-line entry point: ``epban <subcommand> --out DIR [flags]``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
Values come from built-in defaults, then an optional ``--config`` key=value
file, then explicit flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ValidationError
from .evaluation import DEFAULT_RATIOS, ablation_csv, ablation_sweep, correlation_csv, eval_metric, write_text
from .gradsuite import TOLERANCE, format_table, run_suite
from .losses import LossWeights, degeneracy_gradient
from .synth import build_dataset, load_manifest
from .training import (SrConfig, TinySrModel, TrainConfig, downscale2, hr_references, optimize_sr,
                       save_sr_model, train_metric, write_log)

log = logging.getLogger("epban")

# flag dest -> (config key, type); config keys accept dashes or underscores
_KEYS = {
    "seed": int, "alpha": float, "beta": float, "epochs_stage1": int, "epochs_stage2": int,
    "epochs": int, "lr": float, "batch": int, "eps": float, "channels": int, "dtype": str,
    "refs": int, "variants": int, "size": int, "split": str, "ratios": str, "data": str,
    "metric": str, "no_stopgrad": bool,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p, *names):
    p.add_argument("--out", required=True, help="directory for every artifact of this run")
    p.add_argument("--config", help="key=value file; explicit flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--dtype", choices=("f32", "f64"))
    for name in names:
        flag = "--" + name.replace("_", "-")
        if _KEYS[name] is bool:
            p.add_argument(flag, action="store_true", default=None)
        else:
            p.add_argument(flag, type=_KEYS[name])


def build_parser():
    parser = _Parser(prog="epban", description="Efficient-PBAN quality metric and perceptual SR loss.")
    parser.add_argument("--version", action="version", version=f"epban {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    metric_flags = ("epochs_stage1", "epochs_stage2", "lr", "batch", "eps", "channels")
    sr_flags = ("alpha", "beta", "epochs", "lr", "batch", "no_stopgrad")

    _add_common(sub.add_parser("gen-data", help="write the synthetic scored dataset"),
                "refs", "variants", "size")
    _add_common(sub.add_parser("train-metric", help="two-stage metric training"), "data", *metric_flags)
    _add_common(sub.add_parser("eval-metric", help="PLCC/SRCC of a checkpoint on one split"),
                "data", "metric", "split")
    _add_common(sub.add_parser("optimize-sr", help="train the tiny SR network with the mixed loss"),
                "data", "metric", *sr_flags)
    _add_common(sub.add_parser("ablate-weights", help="sweep beta/alpha for SR training"),
                "data", "metric", "ratios", *sr_flags)
    _add_common(sub.add_parser("gradcheck", help="finite-difference gradient suite"))
    return parser


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
        kind = _KEYS[key]
        try:
            if kind is bool:
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                values[key] = value.lower() in ("true", "1", "yes")
            else:
                values[key] = kind(value)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def effective_config(args):
    """Defaults < config file < flags, restricted to what the subcommand accepts."""
    accepted = {k for k in _KEYS if hasattr(args, k)}
    merged = {"seed": 7, "dtype": "f32"}
    if args.command == "gradcheck":
        merged["dtype"] = "f64"
    if args.config:
        file_values = read_config_file(args.config)
        ignored = sorted(set(file_values) - accepted)
        if ignored:
            raise ValidationError(f"{args.config}: keys not used by {args.command}: {ignored}")
        merged.update(file_values)
    for k in accepted:
        v = getattr(args, k)
        if v is not None:
            merged[k] = v
    return {k: merged[k] for k in sorted(merged) if k in accepted or k in ("seed", "dtype")}


def _manifest_path(cfg):
    if "data" not in cfg:
        raise ValidationError("--data (dataset directory or manifest.csv) is required")
    p = Path(cfg["data"])
    return p / "manifest.csv" if p.is_dir() else p


def _need(cfg, key, flag):
    if key not in cfg:
        raise ValidationError(f"{flag} is required for this subcommand")
    return cfg[key]


def train_config(cfg):
    tc = TrainConfig(seed=cfg["seed"], dtype=cfg["dtype"])
    mapping = {"epochs_stage1": "epochs_stage1", "epochs_stage2": "epochs_stage2", "lr": "learning_rate",
               "batch": "batch_size", "eps": "eps", "channels": "channels"}
    return replace(tc, **{mapping[k]: cfg[k] for k in mapping if k in cfg}).validate()


def sr_config(cfg):
    sc = SrConfig(seed=cfg["seed"], dtype=cfg["dtype"], stopgrad=not cfg.get("no_stopgrad", False))
    mapping = {"epochs": "epochs", "lr": "learning_rate", "batch": "batch_size"}
    return replace(sc, **{mapping[k]: cfg[k] for k in mapping if k in cfg}).validate()


def _weights(cfg):
    return LossWeights(cfg.get("alpha", 0.5), cfg.get("beta", 0.5))


# -- subcommands --------------------------------------------------------------------


def cmd_gen_data(cfg, out):
    rows = build_dataset(cfg.get("refs", 20), cfg.get("variants", 12), cfg.get("size", 48), cfg["seed"], out)
    counts = {s: sum(r.split == s for r in rows) for s in ("train", "val", "test")}
    print(f"wrote {len(rows)} pairs to {out / 'manifest.csv'} ({counts['train']}/{counts['val']}/{counts['test']})")


def cmd_train_metric(cfg, out):
    tc = train_config(cfg)
    model, history = train_metric(_manifest_path(cfg), tc)
    save_checkpoint(model, out / "metric.ckpt")
    write_log(out / "train_log.csv", history)
    best = max((float(h["plcc"]) for h in history if h["split"] == "val" and h["plcc"] != ""), default=np.nan)
    print(f"best validation PLCC {best:.4f}; checkpoint {out / 'metric.ckpt'}")


def cmd_eval_metric(cfg, out):
    split = cfg.get("split", "test")
    report = eval_metric(_need(cfg, "metric", "--metric"), _manifest_path(cfg), split)
    write_text(out / "correlation.csv", correlation_csv({split: report}))
    print(f"{split}: n={report.n} PLCC={report.plcc:.4f} SRCC={report.srcc:.4f}")


def _degeneracy(cfg, metric, manifest):
    hr = hr_references(load_manifest(manifest), "val")[:2].astype(np.float64)
    metric_f64 = metric.__class__(**metric.config(), dtype="f64")
    metric_f64.load_state_dict({k: v.astype(np.float64) for k, v in metric.state_dict().items()})
    metric_f64.freeze()
    sr = np.clip(downscale2(hr).repeat(2, axis=-1).repeat(2, axis=-2), 0, 1)
    return degeneracy_gradient(sr, hr, metric_f64, weights=_weights(cfg))


def cmd_optimize_sr(cfg, out):
    sc = sr_config(cfg)
    weights = _weights(cfg)
    manifest = _manifest_path(cfg)
    metric = load_checkpoint(_need(cfg, "metric", "--metric"))
    if not sc.stopgrad and weights.alpha == weights.beta:
        g = _degeneracy(cfg, metric, manifest)
        write_text(out / "degeneracy.txt", f"max_abs_grad {g:.3e}\n")
        print(f"degeneracy diagnostic: literal ratio loss gradient max-abs = {g:.3e}")
        raise ValidationError("alpha == beta with --no-stopgrad is a constant loss; refusing to train")
    model = TinySrModel(seed=sc.seed, dtype=sc.dtype)
    model, history = optimize_sr(model, metric, weights, sc, manifest)
    save_sr_model(model, out / "sr_model.ckpt")
    write_log(out / "sr_log.csv", history)
    first, last = history[0], history[-1]
    print(f"val metric score {float(first['metric_score']):.4f} -> {float(last['metric_score']):.4f}, "
          f"PSNR {float(first['psnr']):.3f} -> {float(last['psnr']):.3f} dB")


def cmd_ablate(cfg, out):
    sc = sr_config(cfg)
    ratios = [r.strip() for r in cfg.get("ratios", ",".join(DEFAULT_RATIOS)).split(",") if r.strip()]
    rows = ablation_sweep(ratios, _need(cfg, "metric", "--metric"), _manifest_path(cfg), sc)
    text = ablation_csv(rows)
    write_text(out / "ablation.csv", text)
    print(text, end="")
    if any(r.failed for r in rows):
        raise RuntimeError("one or more ablation points failed; see the log")


def cmd_gradcheck(cfg, out):
    if cfg["dtype"] != "f64":
        raise ValidationError("gradcheck needs --dtype f64; finite-difference tolerances are unreachable in f32")
    t0 = time.perf_counter()
    rows = run_suite(seed=cfg["seed"])
    table = format_table(rows)
    elapsed = time.perf_counter() - t0
    lines = ["op,max_rel_err,seconds"] + [f"{n},{e:.6e},{s:.3f}" for n, e, s in rows]
    write_text(out / "gradcheck.csv", "\n".join(lines) + "\n")
    print(table)
    print(f"{len(rows)} checks in {elapsed:.1f}s")
    if not all(e < TOLERANCE for _, e, _ in rows):
        raise RuntimeError("gradient check failed")


COMMANDS = {"gen-data": cmd_gen_data, "train-metric": cmd_train_metric, "eval-metric": cmd_eval_metric,
            "optimize-sr": cmd_optimize_sr, "ablate-weights": cmd_ablate, "gradcheck": cmd_gradcheck}


def header_line(command, cfg):
    return json.dumps({"epban": __version__, "command": command, "seed": cfg["seed"], "config": cfg},
                      sort_keys=True)


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = effective_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        header = header_line(args.command, cfg)
        print(header, flush=True)
        (out / "run.log").write_text(header + "\n", encoding="utf-8")
        COMMANDS[args.command](cfg, out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
