"""Command-line entry point.

Subcommands: gen-data, train, eval, verify-theory, adaptive-sweep. One INI
config file (all fields optional) plus a seed reproduce any artifact this
tool writes. Exit codes: 0 success, 2 configuration error, 3 I/O error,
4 numeric failure (including theory certification violations).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .data import generate_synthetic, load_dataset, save_dataset, write_manifest
from .errors import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    DomainError,
    NumericError,
    ShapeError,
)
from .expconfig import ExperimentConfig, config_digest, load_experiment_config, resolve_seed
from .model import BackboneConfig, init_model, load_checkpoint, save_checkpoint
from .report import (
    ARTIFACT_VERSION,
    provenance_triple,
    render_history_figure,
    render_score_figure,
    render_sweep_figure,
    write_eval_report,
    write_history,
    write_sweep,
)
from .theory import DeltaErrorSpec, verify_delta_separation, verify_ideal_separation, verify_salvage_gradient
from .training import (
    DecisionMode,
    TrainMode,
    _craft,
    _decision_scores,
    adaptive_sweep,
    baseline_train,
    evaluate,
    select_threshold,
    train,
)

__all__ = ["main"]

_DELTA_GRID = tuple(round(0.1 * i, 1) for i in range(10))  # 0.0 .. 0.9


def _decision_mode(mode: str) -> DecisionMode:
    return DecisionMode.ES if mode == "ADVFAS" else DecisionMode.F_ONLY


def _load_config(args) -> tuple[ExperimentConfig, int, str]:
    cfg = load_experiment_config(args.config)
    if getattr(args, "mode", None):
        cfg = dataclasses.replace(cfg, mode=args.mode.upper())
        if cfg.mode not in ("ADVFAS", "CLEAN", "PGD_AT"):
            raise ConfigError(f"--mode must be ADVFAS, CLEAN or PGD_AT, got {args.mode!r}")
    if getattr(args, "out", None):
        cfg = dataclasses.replace(cfg, report_dir=Path(args.out))
    seed = resolve_seed(args.seed, cfg)
    # one seed drives data, init and batch order; the attack keeps its own
    cfg = dataclasses.replace(
        cfg,
        synthetic=dataclasses.replace(cfg.synthetic, seed=seed),
        train=dataclasses.replace(cfg.train, seed=seed),
    )
    return cfg, seed, config_digest(cfg, seed)


def _load_split(cfg: ExperimentConfig, split: str):
    path = cfg.dataset_path(split)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file missing: {path} (run gen-data first)")
    return load_dataset(path)


def _cmd_gen_data(args) -> int:
    cfg, seed, digest = _load_config(args)
    out_dir = Path(args.out) if args.out else cfg.data_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = generate_synthetic(cfg.synthetic)
    for split, ds in splits.items():
        save_dataset(ds, out_dir / f"{split}.afds")
        write_manifest(out_dir / f"{split}.manifest", split, ds, cfg.synthetic, digest, ARTIFACT_VERSION)
        print(f"wrote {out_dir / (split + '.afds')} ({len(ds)} examples)")
    return 0


def _cmd_train(args) -> int:
    cfg, seed, digest = _load_config(args)
    train_set = _load_split(cfg, "train")
    val_set = _load_split(cfg, "val")
    model = init_model(BackboneConfig(input_dim=train_set.dim, seed=seed))
    mode = TrainMode[cfg.mode]
    if mode is TrainMode.ADVFAS:
        model, history = train(model, train_set, val_set, cfg.train)
    else:
        from .training import _fit

        history = _fit(model, train_set, val_set, cfg.train, mode)
    cfg.checkpoint.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, cfg.checkpoint)
    csv_path = write_history(history, cfg.report_dir, digest, seed, stem=f"history_{cfg.mode.lower()}")
    fig_path = render_history_figure(history, cfg.report_dir, stem=f"history_{cfg.mode.lower()}")
    print(f"checkpoint: {cfg.checkpoint}")
    print(f"history:    {csv_path}")
    print(f"figure:     {fig_path}")
    return 0


def _cmd_eval(args) -> int:
    cfg, seed, digest = _load_config(args)
    model = load_checkpoint(args.checkpoint if args.checkpoint else cfg.checkpoint)
    val_set = _load_split(cfg, "val")
    test_set = _load_split(cfg, "test")
    dm = _decision_mode(cfg.mode)
    threshold, _ = select_threshold(model, val_set, dm)
    report = evaluate(model, test_set, cfg.train.attack, threshold, dm)
    stem = f"eval_{cfg.mode.lower()}"
    json_path = write_eval_report(report, cfg.report_dir, digest, seed, stem=stem)

    labels = test_set.labels.astype(np.int64)
    x = test_set.x.astype(np.float64)
    scores = _decision_scores(model, x, dm)
    adv = _craft(model, x[labels == 0], cfg.train.attack, indices=np.arange(int((labels == 0).sum())))
    fig_path = render_score_figure(
        scores[labels == 1],
        scores[labels == 0],
        _decision_scores(model, adv, dm),
        threshold,
        cfg.report_dir,
        stem=f"scores_{cfg.mode.lower()}",
    )
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    print(f"report: {json_path}")
    print(f"figure: {fig_path}")
    return 0


def _cmd_verify_theory(args) -> int:
    cfg, seed, digest = _load_config(args)
    f_step = g_step = float(args.step)
    results = {}
    ideal = verify_ideal_separation(f_step=f_step)
    results["ideal"] = {"checked": ideal.total_checked, "violations": ideal.violations}
    print(f"ideal corrector:        checked {ideal.total_checked:>9}  violations {ideal.violations}")
    total_violations = ideal.violations
    for delta in _DELTA_GRID:
        rep = verify_delta_separation(DeltaErrorSpec(delta=delta), f_step=f_step, g_step=g_step)
        results[f"delta={delta:.1f}"] = {"checked": rep.total_checked, "violations": rep.violations}
        print(f"delta = {delta:.1f} corrector:  checked {rep.total_checked:>9}  violations {rep.violations}")
        total_violations += rep.violations
    salvage = verify_salvage_gradient()
    results["salvage_gradient"] = {"checked": salvage.total_checked, "violations": salvage.violations}
    print(f"salvage gradient:       checked {salvage.total_checked:>9}  violations {salvage.violations}")
    total_violations += salvage.violations

    out_dir = cfg.report_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"results": results, "total_violations": total_violations, "provenance": provenance_triple(digest, seed)}
    path = out_dir / "theory_certification.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"certification: {path}")
    if total_violations:
        raise NumericError(f"theory certification found {total_violations} violations")
    return 0


def _cmd_adaptive_sweep(args) -> int:
    cfg, seed, digest = _load_config(args)
    model = load_checkpoint(args.checkpoint if args.checkpoint else cfg.checkpoint)
    val_set = _load_split(cfg, "val")
    test_set = _load_split(cfg, "test")
    dm = _decision_mode(cfg.mode)
    threshold, _ = select_threshold(model, val_set, dm)
    rows = adaptive_sweep(model, test_set, cfg.train.attack, list(cfg.eta_grid), threshold, dm)
    csv_path = write_sweep(rows, cfg.report_dir, digest, seed)
    fig_path = render_sweep_figure(rows, cfg.report_dir)
    worst = min(rows, key=lambda r: r.acc_avg)
    print(f"rows: {len(rows)}  worst acc_avg {worst.acc_avg:.2f} at ({worst.objective}, eta={worst.eta:g})")
    print(f"sweep:  {csv_path}")
    print(f"figure: {fig_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advfas", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mode_flag=True, checkpoint_flag=False):
        p.add_argument("--config", default=None, help="INI config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", default=None, help="output directory override")
        if mode_flag:
            p.add_argument("--mode", default=None, help="ADVFAS, CLEAN or PGD_AT")
        if checkpoint_flag:
            p.add_argument("--checkpoint", default=None, help="checkpoint path override")

    p = sub.add_parser("gen-data", help="write the three dataset files plus manifests")
    common(p, mode_flag=False)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write checkpoint, history CSV and figure")
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint: JSON report and score figure")
    common(p, checkpoint_flag=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("verify-theory", help="certify the separation guarantees by grid enumeration")
    common(p, mode_flag=False)
    p.add_argument("--step", type=float, default=1e-3, help="f/g grid step (default 1e-3)")
    p.set_defaults(func=_cmd_verify_theory)

    p = sub.add_parser("adaptive-sweep", help="composed-objective attack grid: CSV and figure")
    common(p, checkpoint_flag=True)
    p.set_defaults(func=_cmd_adaptive_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError, ShapeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, CheckpointError, FileNotFoundError, PermissionError, IsADirectoryError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
