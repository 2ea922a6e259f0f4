"""Training loops, threshold selection, evaluation, and the adaptive sweep.

Three training modes share one loop:

    ADVFAS   masked detector loss over clean rows plus lambda times the
             per-case corrector loss over every row (clean and adversarial)
    CLEAN    detector-only loss on clean batches, no adversarial copies
    PGD_AT   detector-only loss where each spoof row is replaced by its
             on-line adversarial copy (labels stay 0)

The spoof branch is computed on the mask-selected row subset through its own
forward pass, so removing masked rows cannot change the loss or its gradient
by even one bit; the corrector branch sees the full assembled batch. Both
branches join in one graph, so a single backward accumulates the combined
gradient. The corrector head never trains in the baseline modes (exact-zero
gradients, and weight decay skips it there, as it does when lambda = 0).

Weight decay is the classic L2 form added to the gradient. Adam keeps
float64 state; parameters round back to their float32 storage after each
step.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import attacks as attacks_mod
from .autodiff import Tensor
from .coupled import corrector_loss_batch, spoof_loss
from .data import ORIGIN_CLEAN_SPOOF, Dataset, TrainBatch, assemble_batch
from .errors import ConfigError, DomainError, NumericError
from .metrics import accuracy, auc_score, select_threshold_scores
from .model import CORRECTOR_HEAD, TwoHeadModel, forward_batch, grads, score_batch

__all__ = [
    "TrainMode",
    "DecisionMode",
    "TrainConfig",
    "TrainHistory",
    "EvalReport",
    "SweepRow",
    "Adam",
    "train",
    "baseline_train",
    "select_threshold",
    "evaluate",
    "adaptive_sweep",
    "history_to_csv",
    "sweep_to_csv",
]


class TrainMode(Enum):
    ADVFAS = "ADVFAS"
    CLEAN = "CLEAN"
    PGD_AT = "PGD_AT"


class DecisionMode(Enum):
    ES = "ES"  # decide on f * g
    F_ONLY = "F_ONLY"  # decide on f alone


def _default_attack() -> attacks_mod.PgdConfig:
    return attacks_mod.PgdConfig(eps=attacks_mod.EPS_16_255)


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1.0
    learning_rate: float = 1e-3
    weight_decay: float = 5e-5
    batch_size: int = 100
    epochs: int = 30
    attack: attacks_mod.PgdConfig | attacks_mod.PatchConfig = field(default_factory=_default_attack)
    betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0.0:
            raise ConfigError(f"lam must be finite and >= 0, got {self.lam!r}")
        if not np.isfinite(self.learning_rate) or self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if not np.isfinite(self.weight_decay) or self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay!r}")
        if int(self.batch_size) < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size!r}")
        if int(self.epochs) < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs!r}")
        b1, b2 = self.betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got {self.betas!r}")


@dataclass
class TrainHistory:
    l_spoof: list[float] = field(default_factory=list)
    l_cor: list[float] = field(default_factory=list)
    l_cs: list[float] = field(default_factory=list)
    val_acc_clean: list[float] = field(default_factory=list)
    val_acc_adv: list[float] = field(default_factory=list)

    def rows(self) -> list[dict[str, float]]:
        return [
            {
                "epoch": i + 1,
                "l_spoof": self.l_spoof[i],
                "l_cor": self.l_cor[i],
                "l_cs": self.l_cs[i],
                "val_acc_clean": self.val_acc_clean[i],
                "val_acc_adv": self.val_acc_adv[i],
            }
            for i in range(len(self.l_cs))
        ]


@dataclass(frozen=True)
class EvalReport:
    """Percentages throughout; auc in [0, 1]."""

    acc_clean: float
    acc_adv: float
    acc_avg: float
    auc: float
    success_rate: float
    threshold: float
    decision_mode: str

    def to_dict(self) -> dict:
        return {
            "acc_clean": self.acc_clean,
            "acc_adv": self.acc_adv,
            "acc_avg": self.acc_avg,
            "auc": self.auc,
            "success_rate": self.success_rate,
            "threshold": self.threshold,
            "decision_mode": self.decision_mode,
        }


@dataclass(frozen=True)
class SweepRow:
    objective: str
    eta: float
    acc_adv: float
    acc_avg: float


class Adam:
    """Adam with per-parameter weight-decay factors (L2 added to the grad)."""

    def __init__(self, names: list[str], lr: float, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = float(lr)
        self.b1, self.b2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.t = 0
        self.m = {n: None for n in names}
        self.v = {n: None for n in names}

    def step(self, params: dict[str, Tensor], gradients: dict[str, np.ndarray], weight_decay: dict[str, float]) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name, tensor in params.items():
            theta = tensor.data.astype(np.float64)
            g = gradients[name] + weight_decay[name] * theta
            if self.m[name] is None:
                self.m[name] = np.zeros_like(theta)
                self.v[name] = np.zeros_like(theta)
            self.m[name] = self.b1 * self.m[name] + (1.0 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1.0 - self.b2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            theta = theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            tensor.data = theta.astype(np.float32)


def _decision_scores(model: TwoHeadModel, x: np.ndarray, mode: DecisionMode) -> np.ndarray:
    f, g = score_batch(model, x)
    return f * g if mode is DecisionMode.ES else f


def _losses_for_batch(model: TwoHeadModel, batch: TrainBatch, train_mode: TrainMode, lam: float):
    """Build the scalar loss graph plus the float terms for the history."""
    clean_sel = batch.masks == 1
    if not clean_sel.any():
        raise DomainError("a training batch needs at least one clean example")
    x_clean = Tensor(batch.x[clean_sel])
    f_clean, _ = forward_batch(model, x_clean)
    l_spoof = spoof_loss(f_clean, batch.labels[clean_sel]).mean()

    if train_mode is not TrainMode.ADVFAS:
        return l_spoof, float(l_spoof.data), 0.0, float(l_spoof.data)

    x_all = Tensor(batch.x)
    f_all, g_all = forward_batch(model, x_all)
    l_cor = corrector_loss_batch(f_all, g_all, batch.labels).mean()
    l_cs = l_spoof + lam * l_cor
    return l_cs, float(l_spoof.data), float(l_cor.data), float(l_cs.data)


def _epoch_perm(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, 2, epoch]).permutation(n)


def _batch_seed(seed: int, epoch: int, batch_index: int) -> int:
    return int(np.random.SeedSequence([seed, 3, epoch, batch_index]).generate_state(1, np.uint64)[0])


def _replace_spoof_rows(batch: TrainBatch) -> TrainBatch:
    """PGD_AT view of an assembled batch: adversarial rows stand in for their
    clean spoof sources; labels stay 0 and every kept row counts as clean."""
    keep = batch.origins != ORIGIN_CLEAN_SPOOF  # keep real rows + adversarial stand-ins
    x = batch.x[keep]
    labels = batch.labels[keep]
    origins = batch.origins[keep]
    masks = np.ones(labels.shape, dtype=np.int64)
    return TrainBatch(x=x, labels=labels, origins=origins, masks=masks)


def _val_accuracies(model: TwoHeadModel, val: Dataset, attack_cfg, mode: DecisionMode, seed: int, epoch: int) -> tuple[float, float]:
    scores = _decision_scores(model, val.x.astype(np.float64), mode)
    acc_clean = accuracy(val.labels.astype(np.int64), (scores >= 0.5).astype(np.int64))
    spoof_sel = val.labels == 0
    x_sp = val.x[spoof_sel].astype(np.float64)
    x_adv = _craft(model, x_sp, attack_cfg, seed=_batch_seed(seed, epoch, 10_000_019), indices=np.arange(x_sp.shape[0]))
    adv_scores = _decision_scores(model, x_adv, mode)
    acc_adv = float(np.mean(adv_scores < 0.5))
    return acc_clean, acc_adv


def _craft(model: TwoHeadModel, x: np.ndarray, attack_cfg, seed: int | None = None, indices: np.ndarray | None = None) -> np.ndarray:
    zero = np.zeros(x.shape[0], dtype=np.int64)
    if isinstance(attack_cfg, attacks_mod.PgdConfig):
        x_adv, _ = attacks_mod.pgd_attack_batch(model, x, zero, attack_cfg, seed=seed, indices=indices)
    elif isinstance(attack_cfg, attacks_mod.PatchConfig):
        x_adv, _ = attacks_mod.patch_attack_batch(model, x, zero, attack_cfg)
    else:
        raise ConfigError(f"unsupported attack config {type(attack_cfg).__name__}")
    return x_adv


def _fit(model: TwoHeadModel, train_set: Dataset, val_set: Dataset, cfg: TrainConfig, train_mode: TrainMode) -> TrainHistory:
    decision_mode = DecisionMode.ES if train_mode is TrainMode.ADVFAS else DecisionMode.F_ONLY
    names = [n for n, _ in model.named_parameters()]
    opt = Adam(names, cfg.learning_rate, cfg.betas)
    decay_corrector = train_mode is TrainMode.ADVFAS and cfg.lam != 0.0
    wd = {
        name: (cfg.weight_decay if (model.group_of(name) != CORRECTOR_HEAD or decay_corrector) else 0.0)
        for name in names
    }
    params = dict(model.named_parameters())
    history = TrainHistory()
    n = len(train_set)
    needs_adversarial = train_mode in (TrainMode.ADVFAS, TrainMode.PGD_AT)
    examples = train_set.examples()
    for epoch in range(int(cfg.epochs)):
        perm = _epoch_perm(cfg.seed, epoch, n)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n, int(cfg.batch_size)):
            rows = perm[start : start + int(cfg.batch_size)]
            clean = [examples[i] for i in rows]
            if needs_adversarial:
                batch = assemble_batch(clean, model, cfg.attack, seed=_batch_seed(cfg.seed, epoch, start))
                if train_mode is TrainMode.PGD_AT:
                    batch = _replace_spoof_rows(batch)
            else:
                x = np.stack([np.asarray(ex.x, dtype=np.float64) for ex in clean])
                labels = np.asarray([int(ex.label) for ex in clean], dtype=np.int64)
                origins = np.asarray([int(ex.origin) for ex in clean], dtype=np.int64)
                batch = TrainBatch(x=x, labels=labels, origins=origins, masks=np.ones(labels.shape, dtype=np.int64))
            loss, v_spoof, v_cor, v_cs = _losses_for_batch(model, batch, train_mode, cfg.lam)
            if not (np.isfinite(v_spoof) and np.isfinite(v_cor) and np.isfinite(v_cs)):
                raise NumericError(
                    f"non-finite loss at epoch {epoch + 1}, batch {batches + 1}: "
                    f"l_spoof={v_spoof!r} l_cor={v_cor!r} l_cs={v_cs!r}"
                )
            gradients = grads(model, loss)
            opt.step(params, gradients, wd)
            sums += (v_spoof, v_cor, v_cs)
            batches += 1
        acc_clean, acc_adv = _val_accuracies(model, val_set, cfg.attack, decision_mode, cfg.seed, epoch)
        history.l_spoof.append(sums[0] / batches)
        history.l_cor.append(sums[1] / batches)
        history.l_cs.append(sums[2] / batches)
        history.val_acc_clean.append(acc_clean)
        history.val_acc_adv.append(acc_adv)
    return history


def train(model: TwoHeadModel, train_set: Dataset, val_set: Dataset, cfg: TrainConfig) -> tuple[TwoHeadModel, TrainHistory]:
    """Coupled training (detector + corrector) with on-line adversarial copies."""
    history = _fit(model, train_set, val_set, cfg, TrainMode.ADVFAS)
    return model, history


def baseline_train(model: TwoHeadModel, train_set: Dataset, val_set: Dataset, cfg: TrainConfig, mode: TrainMode) -> TwoHeadModel:
    """Detector-only reference training: CLEAN or PGD_AT. The corrector head
    comes out bit-identical to its initialization."""
    if mode not in (TrainMode.CLEAN, TrainMode.PGD_AT):
        raise ConfigError(f"baseline mode must be CLEAN or PGD_AT, got {mode!r}")
    _fit(model, train_set, val_set, cfg, mode)
    return model


def select_threshold(model: TwoHeadModel, val_set: Dataset, decision_mode: DecisionMode) -> tuple[float, float]:
    """Balanced-accuracy-optimal decision threshold on the validation split."""
    scores = _decision_scores(model, val_set.x.astype(np.float64), decision_mode)
    return select_threshold_scores(val_set.labels.astype(np.int64), scores)


def evaluate(
    model: TwoHeadModel,
    test_set: Dataset,
    attack_cfg,
    threshold: float,
    decision_mode: DecisionMode,
) -> EvalReport:
    """Clean and adversarial test metrics at a fixed threshold.

    Adversarial copies are crafted from the spoof half of the test split.
    acc_adv is the fraction of them still decided spoof; the AUC pools the
    clean test set with the adversarial copies (labeled spoof).
    """
    labels = test_set.labels.astype(np.int64)
    x = test_set.x.astype(np.float64)
    scores_clean = _decision_scores(model, x, decision_mode)
    decisions_clean = (scores_clean >= threshold).astype(np.int64)
    acc_clean = accuracy(labels, decisions_clean)

    spoof_sel = labels == 0
    x_adv = _craft(model, x[spoof_sel], attack_cfg, indices=np.arange(int(spoof_sel.sum())))
    scores_adv = _decision_scores(model, x_adv, decision_mode)
    decisions_adv = (scores_adv >= threshold).astype(np.int64)
    acc_adv = float(np.mean(decisions_adv == 0))

    pool_labels = np.concatenate([labels, np.zeros(x_adv.shape[0], dtype=np.int64)])
    pool_scores = np.concatenate([scores_clean, scores_adv])
    auc = auc_score(pool_labels, pool_scores)

    acc_clean_pct = 100.0 * acc_clean
    acc_adv_pct = 100.0 * acc_adv
    return EvalReport(
        acc_clean=acc_clean_pct,
        acc_adv=acc_adv_pct,
        acc_avg=(acc_clean_pct + acc_adv_pct) / 2.0,
        auc=auc,
        success_rate=100.0 - acc_adv_pct,
        threshold=float(threshold),
        decision_mode=decision_mode.value,
    )


def adaptive_sweep(
    model: TwoHeadModel,
    test_set: Dataset,
    inner: attacks_mod.PgdConfig,
    eta_values: list[float],
    threshold: float,
    decision_mode: DecisionMode = DecisionMode.ES,
    objectives: tuple[attacks_mod.AttackObjective, ...] = tuple(attacks_mod.AttackObjective),
) -> list[SweepRow]:
    """Grid of composed-objective attacks; one row per (objective, eta)."""
    if not eta_values:
        raise ConfigError("eta_values must be non-empty")
    labels = test_set.labels.astype(np.int64)
    x = test_set.x.astype(np.float64)
    scores_clean = _decision_scores(model, x, decision_mode)
    acc_clean_pct = 100.0 * accuracy(labels, (scores_clean >= threshold).astype(np.int64))
    spoof_sel = labels == 0
    x_spoof = x[spoof_sel]
    zero = np.zeros(x_spoof.shape[0], dtype=np.int64)
    indices = np.arange(x_spoof.shape[0])
    rows: list[SweepRow] = []
    for objective in objectives:
        for eta in eta_values:
            cfg = attacks_mod.AdaptiveConfig(objective=objective, eta=float(eta), inner=inner)
            x_adv, _ = attacks_mod.adaptive_attack_batch(model, x_spoof, zero, cfg, indices=indices)
            scores_adv = _decision_scores(model, x_adv, decision_mode)
            acc_adv_pct = 100.0 * float(np.mean(scores_adv < threshold))
            rows.append(
                SweepRow(
                    objective=objective.value,
                    eta=float(eta),
                    acc_adv=acc_adv_pct,
                    acc_avg=(acc_clean_pct + acc_adv_pct) / 2.0,
                )
            )
    return rows


def history_to_csv(history: TrainHistory, provenance: dict[str, str] | None = None) -> str:
    buf = io.StringIO()
    if provenance:
        buf.write("# " + " ".join(f"{k}={v}" for k, v in provenance.items()) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "l_spoof", "l_cor", "l_cs", "val_acc_clean", "val_acc_adv"])
    for row in history.rows():
        writer.writerow(
            [
                row["epoch"],
                f"{row['l_spoof']:.10f}",
                f"{row['l_cor']:.10f}",
                f"{row['l_cs']:.10f}",
                f"{row['val_acc_clean']:.6f}",
                f"{row['val_acc_adv']:.6f}",
            ]
        )
    return buf.getvalue()


def sweep_to_csv(rows: list[SweepRow], provenance: dict[str, str] | None = None) -> str:
    buf = io.StringIO()
    if provenance:
        buf.write("# " + " ".join(f"{k}={v}" for k, v in provenance.items()) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["objective", "eta", "acc_adv", "acc_avg"])
    for row in rows:
        writer.writerow([row.objective, f"{row.eta:g}", f"{row.acc_adv:.6f}", f"{row.acc_avg:.6f}"])
    return buf.getvalue()
