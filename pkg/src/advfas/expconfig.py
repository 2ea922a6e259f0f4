"""Experiment configuration: one INI file drives the whole pipeline.

Sections and defaults:

    [paths]     data_dir, report_dir, checkpoint
    [data]      the SyntheticConfig fields
    [train]     the TrainConfig fields (lam, learning_rate, ...)
    [attack]    eps, steps, step_size, random_start
    [sweep]     eta grid (comma-separated floats)
    [run]       mode, decision threshold source, seed

Every field is optional; a missing section means "use the defaults". The
resolved configuration hashes to a digest that all output artifacts embed,
so a report can always be traced back to the exact settings that made it.

Seed precedence, highest first: --seed on the command line, the [run] seed
key, the ADVFAS_SEED environment variable, and finally 0. The one resolved
seed feeds dataset generation, weight initialization and batch ordering, so
an experiment is reproduced from a config file plus at most one number.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import attacks as attacks_mod
from .data import SyntheticConfig
from .errors import ConfigError
from .training import TrainConfig

__all__ = [
    "ExperimentConfig",
    "load_experiment_config",
    "resolve_seed",
    "config_digest",
]

_ETA_DEFAULT = (0.5, 1.0, 2.0, 5.0, 10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    data_dir: Path = Path("data")
    report_dir: Path = Path("reports")
    checkpoint: Path = Path("checkpoints/model.ckpt")
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eta_grid: tuple[float, ...] = _ETA_DEFAULT
    mode: str = "ADVFAS"
    seed: int | None = None  # None: fall through to env, then 0

    def dataset_path(self, split: str) -> Path:
        return self.data_dir / f"{split}.afds"

    def manifest_path(self, split: str) -> Path:
        return self.data_dir / f"{split}.manifest"


def _get(parser: configparser.ConfigParser, section: str, key: str, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def _parse_eta_grid(raw: str) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError("eta grid is empty")
    return tuple(float(p) for p in parts)


def _parse_freqs(raw: str) -> tuple[int, ...]:
    return tuple(int(p.strip()) for p in raw.split(",") if p.strip())


def load_experiment_config(path: str | Path | None) -> ExperimentConfig:
    """Parse an INI file into an ExperimentConfig; None gives pure defaults."""
    parser = configparser.ConfigParser()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc

    syn_defaults = SyntheticConfig()
    synthetic = SyntheticConfig(
        dim=_get(parser, "data", "dim", int, syn_defaults.dim),
        n_train=_get(parser, "data", "n_train", int, syn_defaults.n_train),
        n_val=_get(parser, "data", "n_val", int, syn_defaults.n_val),
        n_test=_get(parser, "data", "n_test", int, syn_defaults.n_test),
        noise_sigma=_get(parser, "data", "noise_sigma", float, syn_defaults.noise_sigma),
        real_freqs=_get(parser, "data", "real_freqs", _parse_freqs, syn_defaults.real_freqs),
        spoof_freqs=_get(parser, "data", "spoof_freqs", _parse_freqs, syn_defaults.spoof_freqs),
    )

    atk_defaults = attacks_mod.PgdConfig(eps=attacks_mod.EPS_16_255)
    attack = attacks_mod.PgdConfig(
        eps=_get(parser, "attack", "eps", float, atk_defaults.eps),
        steps=_get(parser, "attack", "steps", int, atk_defaults.steps),
        step_size=_get(parser, "attack", "step_size", float, atk_defaults.step_size),
        random_start=_get(parser, "attack", "random_start", lambda s: s.strip().lower() in ("1", "true", "yes"), atk_defaults.random_start),
        seed=_get(parser, "attack", "seed", int, atk_defaults.seed),
    )

    trn_defaults = TrainConfig()
    train = TrainConfig(
        lam=_get(parser, "train", "lam", float, trn_defaults.lam),
        learning_rate=_get(parser, "train", "learning_rate", float, trn_defaults.learning_rate),
        weight_decay=_get(parser, "train", "weight_decay", float, trn_defaults.weight_decay),
        batch_size=_get(parser, "train", "batch_size", int, trn_defaults.batch_size),
        epochs=_get(parser, "train", "epochs", int, trn_defaults.epochs),
        attack=attack,
    )

    mode = _get(parser, "run", "mode", str, "ADVFAS").upper()
    if mode not in ("ADVFAS", "CLEAN", "PGD_AT"):
        raise ConfigError(f"[run] mode must be ADVFAS, CLEAN or PGD_AT, got {mode!r}")

    seed = _get(parser, "run", "seed", int, None)

    return ExperimentConfig(
        data_dir=Path(_get(parser, "paths", "data_dir", str, "data")),
        report_dir=Path(_get(parser, "paths", "report_dir", str, "reports")),
        checkpoint=Path(_get(parser, "paths", "checkpoint", str, "checkpoints/model.ckpt")),
        synthetic=synthetic,
        train=train,
        eta_grid=_get(parser, "sweep", "eta_grid", _parse_eta_grid, _ETA_DEFAULT),
        mode=mode,
        seed=seed,
    )


def resolve_seed(cli_seed: int | None, cfg: ExperimentConfig) -> int:
    """CLI flag beats config key beats ADVFAS_SEED beats 0."""
    if cli_seed is not None:
        return int(cli_seed)
    if cfg.seed is not None:
        return int(cfg.seed)
    env = os.environ.get("ADVFAS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"ADVFAS_SEED must be an integer, got {env!r}") from exc
    return 0


def config_digest(cfg: ExperimentConfig, seed: int) -> str:
    """sha256 over the resolved settings; stable across field ordering."""
    syn, trn, atk = cfg.synthetic, cfg.train, cfg.train.attack
    fields = [
        ("data_dir", str(cfg.data_dir)),
        ("report_dir", str(cfg.report_dir)),
        ("checkpoint", str(cfg.checkpoint)),
        ("dim", syn.dim),
        ("n_train", syn.n_train),
        ("n_val", syn.n_val),
        ("n_test", syn.n_test),
        ("noise_sigma", repr(syn.noise_sigma)),
        ("real_freqs", syn.real_freqs),
        ("spoof_freqs", syn.spoof_freqs),
        ("data_seed", syn.seed),
        ("lam", repr(trn.lam)),
        ("learning_rate", repr(trn.learning_rate)),
        ("weight_decay", repr(trn.weight_decay)),
        ("batch_size", trn.batch_size),
        ("epochs", trn.epochs),
        ("train_seed", trn.seed),
        ("eps", repr(atk.eps)),
        ("steps", atk.steps),
        ("step_size", repr(atk.step_size)),
        ("random_start", atk.random_start),
        ("attack_seed", atk.seed),
        ("eta_grid", tuple(repr(e) for e in cfg.eta_grid)),
        ("mode", cfg.mode),
        ("seed", seed),
    ]
    blob = ";".join(f"{k}={v}" for k, v in fields).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
