"""Command-line surface.

Subcommands
-----------
account         per-epoch accountant comparison curves (CSV)
train           budget-checked DP-SGD run from a JSON config (CSV + summary)
solve-k         decay-rate solving for a target training time
validate-bound  numerical sweep of the sampled-Gaussian moment bound
tune            private schedule selection via the exponential mechanism

Exit codes: 0 success (for ``train``: budget exhausted), 2 usage error,
3 precondition violation or infeasible target, 4 numerical failure,
5 ``train`` stopped at max epochs with budget left.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from . import __version__, accounting, data, dpsgd, nn, renyi, schedules, selection
from .errors import (
    ConfigError,
    DomainError,
    InfeasibleTargetError,
    NumericalError,
    ParseError,
    PreconditionError,
    UsageError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PRECONDITION = 3
EXIT_NUMERICAL = 4
EXIT_MAX_EPOCHS = 5


def _manifest_lines(args: argparse.Namespace, seed: Optional[int]) -> List[str]:
    lines = [
        f"# dpbudget {__version__}",
        f"# command: {' '.join(sys.argv[1:]) if sys.argv[1:] else args.command}",
    ]
    if seed is not None:
        lines.append(f"# seed: {seed}")
    return lines


def _write_csv(path: str, header: List[str], rows: List[List[object]], manifest: List[str]) -> None:
    def fmt(v: object) -> str:
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.6f}"
        return str(v)

    with open(path, "w", encoding="ascii") as fh:
        for line in manifest:
            fh.write(line + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _cmd_account(args: argparse.Namespace) -> int:
    delta = args.delta
    sigma = args.sigma
    q = args.q
    iters = args.iters_per_epoch if args.iters_per_epoch else max(1, round(1.0 / q))

    classic = accounting.classic_gaussian_dp(sigma, delta)
    per_epoch_rho = accounting.gaussian_rho(sigma)
    u_alpha = accounting.rs_order_cap(q, sigma)
    eps_ma = renyi.moments_accountant_curve(q, sigma, iters, args.epochs, delta) if args.epochs else []

    rows: List[List[object]] = []
    for epoch in range(1, args.epochs + 1):
        k = epoch * iters
        eps_rf = accounting.zcdp_to_dp(epoch * per_epoch_rho, delta).eps
        eps_strong = accounting.amplified_strong_composition(classic.eps, delta, q, k, delta).eps
        rho_hat = k * q * q / (sigma * sigma)
        eps_rs = accounting.rs_eps(rho_hat, u_alpha, delta)
        rows.append([epoch, eps_rf, eps_strong, eps_rs, float(eps_ma[epoch - 1])])

    _write_csv(
        args.out,
        ["epoch", "eps_zcdp_rf", "eps_strong", "eps_zcdp_rs", "eps_ma"],
        rows,
        _manifest_lines(args, None),
    )
    print(f"wrote {len(rows)} epochs to {args.out}")
    return EXIT_OK


def _load_dataset(spec: dict) -> data.Dataset:
    kind = spec.get("kind")
    if kind == "cancer":
        return data.load_cancer_csv(spec["path"])
    if kind == "synth":
        return data.synth_blobs(
            n=int(spec["n"]),
            d=int(spec["d"]),
            n_classes=int(spec.get("classes", 2)),
            seed=int(spec.get("seed", 0)),
            separation=float(spec.get("separation", 4.0)),
        )
    raise ConfigError(f"unknown data kind {kind!r} (expected 'cancer' or 'synth')")


def _train_config_from_dict(cfg: dict, schedule: schedules.NoiseSchedule) -> dpsgd.TrainConfig:
    allowed = {
        "clip_norm", "max_epochs", "seed", "batching", "batch_size", "q",
        "iters_per_epoch", "rho_total", "eps_total", "delta", "lr", "lr_end",
        "lr_ramp_epochs", "per_layer_clip",
    }
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown train keys: {sorted(unknown)}")
    return dpsgd.TrainConfig(schedule=schedule, **cfg)


def _cmd_train(args: argparse.Namespace) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    schedule = schedules.NoiseSchedule.from_dict(cfg["schedule"])
    config = _train_config_from_dict(cfg["train"], schedule)

    dataset = _load_dataset(cfg["data"])
    split = cfg.get("split")
    validation = None
    if split:
        train_set, test_set = data.train_test_split(dataset, int(split["n_train"]), int(split.get("seed", 0)))
        n_val = int(split.get("n_validation", 0))
        if n_val:
            train_set, validation = data.train_test_split(train_set, len(train_set) - n_val, int(split.get("seed", 0)) + 1)
    else:
        train_set, test_set = dataset, None

    hidden = cfg.get("model", {}).get("hidden", [10, 20, 10])
    sizes = [train_set.n_features] + list(hidden) + [max(2, train_set.n_classes)]
    model = nn.MlpModel.init(sizes, seed=config.seed)

    report = dpsgd.train(config, train_set, model, test_data=test_set, validation_data=validation)

    manifest = _manifest_lines(args, config.seed)
    rows = [
        [r.epoch, r.sigma, r.train_acc, r.test_acc, r.val_acc, r.cum_rho, r.cum_eps]
        for r in report.records
    ]
    _write_csv(
        args.out + ".csv",
        ["epoch", "sigma", "train_acc", "test_acc", "val_acc", "cum_rho", "cum_eps"],
        rows,
        manifest,
    )
    summary = {
        "manifest": {"version": __version__, "command": sys.argv[1:], "seed": config.seed},
        "epochs_run": report.epochs_run,
        "stop_reason": report.stop_reason,
        "total_rho": report.total_rho,
        "final_eps": report.final_privacy.eps,
        "final_delta": report.final_privacy.delta,
        "final_train_acc": report.records[-1].train_acc if report.records else None,
        "final_test_acc": report.records[-1].test_acc if report.records else None,
    }
    with open(args.out + ".json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    if args.checkpoint:
        nn.save_checkpoint(model, args.checkpoint)
    print(
        f"{report.epochs_run} epochs ({report.stop_reason}), "
        f"rho={report.total_rho:.6f}, eps={report.final_privacy.eps:.4f} at delta={config.delta:g}"
    )
    return EXIT_OK if report.stop_reason == "budget_exhausted" else EXIT_MAX_EPOCHS


def _cmd_solve_k(args: argparse.Namespace) -> int:
    k = schedules.solve_decay_rate(
        args.kind,
        args.sigma0,
        args.rho_total,
        args.target,
        grid=args.grid,
        period=args.period,
        sigma_end=args.sigma_end,
    )
    print(f"{k:.4f}")
    return EXIT_OK


def _cmd_validate_bound(args: argparse.Namespace) -> int:
    if args.point is not None:
        q, sigma = args.point
        report = renyi.validate_moment_bound([sigma], q_step=1.0, q_start=q, alpha_cap=args.alpha_cap)
    else:
        if args.smoke:
            sigma_step, q_step = 1.0, 0.005
        else:
            sigma_step, q_step = args.sigma_step, args.q_step
        n_sigma = int(round((args.sigma_max - args.sigma_min) / sigma_step))
        sigmas = [args.sigma_min + i * sigma_step for i in range(n_sigma + 1)]
        report = renyi.validate_moment_bound(sigmas, q_step=q_step, alpha_cap=args.alpha_cap)

    payload = {
        "manifest": {"version": __version__, "command": sys.argv[1:]},
        "points_checked": report.n_points,
        "violations": [
            {"q": c.q, "sigma": c.sigma, "alpha": c.alpha, "divergence": c.divergence, "bound": c.bound}
            for c in report.violations
        ],
        "worst_slack": report.worst_slack if report.checks else None,
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    print(f"{report.n_points} points checked, {len(report.violations)} violations")
    return EXIT_OK


def _cmd_tune(args: argparse.Namespace) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    dataset = _load_dataset(manifest["data"])
    candidates = [schedules.NoiseSchedule.from_dict(d) for d in manifest["candidates"]]
    base_train = dict(manifest["train"])
    eps = float(manifest["eps"])
    seed = int(manifest.get("seed", 0))
    hidden = manifest.get("model", {}).get("hidden", [10, 20, 10])

    def train_candidate(index: int, portion: data.Dataset):
        config = _train_config_from_dict({**base_train, "seed": seed + 1 + index}, candidates[index])
        sizes = [portion.n_features] + list(hidden) + [max(2, portion.n_classes)]
        model = nn.MlpModel.init(sizes, seed=config.seed)
        dpsgd.train(config, portion, model)
        return lambda features: nn.predict(model, features)

    result = selection.partition_tune(dataset, len(candidates), train_candidate, eps, seed)
    payload = {
        "manifest": {"version": __version__, "command": sys.argv[1:], "seed": seed},
        "selected": result.selected,
        "selected_schedule": candidates[result.selected].to_dict(),
        "z_scores": [s.z for s in result.scores],
        "portion_sizes": result.portion_sizes,
        "selection_rho": selection.selection_rho(eps),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    print(f"selected candidate {result.selected} with z={result.scores[result.selected].z}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpbudget", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("account", help="accountant comparison curves")
    p.add_argument("--q", type=float, default=0.01, help="sampling ratio (default 0.01)")
    p.add_argument("--sigma", type=float, default=6.0, help="noise multiplier (default 6)")
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--iters-per-epoch", type=int, default=0, help="default: round(1/q)")
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_account)

    p = sub.add_parser("train", help="run DP-SGD from a JSON config")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", required=True, help="output prefix (.csv and .json are appended)")
    p.add_argument("--checkpoint", default=None, help="optional model checkpoint path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("solve-k", help="solve a decay rate for a target training time")
    p.add_argument("--kind", required=True, choices=schedules.DECAY_KINDS)
    p.add_argument("--sigma0", type=float, required=True)
    p.add_argument("--rho-total", type=float, required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--grid", type=float, default=1e-4)
    p.add_argument("--period", type=int, default=None)
    p.add_argument("--sigma-end", type=float, default=None)
    p.set_defaults(func=_cmd_solve_k)

    p = sub.add_parser("validate-bound", help="sweep the sampled-Gaussian moment bound")
    p.add_argument("--sigma-min", type=float, default=2.0)
    p.add_argument("--sigma-max", type=float, default=30.0)
    p.add_argument("--sigma-step", type=float, default=0.001)
    p.add_argument("--q-step", type=float, default=0.001)
    p.add_argument("--alpha-cap", type=int, default=200)
    p.add_argument("--smoke", action="store_true", help="coarse grid: sigma step 1.0, q step 0.005")
    p.add_argument("--point", nargs=2, type=float, metavar=("Q", "SIGMA"), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_validate_bound)

    p = sub.add_parser("tune", help="private schedule selection")
    p.add_argument("--manifest", required=True, help="JSON tuning manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tune)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, UsageError, ConfigError, ParseError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PreconditionError, InfeasibleTargetError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except NumericalError as exc:
        print(f"numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
