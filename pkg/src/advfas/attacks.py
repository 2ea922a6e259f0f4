"""Gradient-ascent evasion attacks against the coupled scorer.

All attacks craft spoof-to-real evasions only (label 0 inputs pushed toward a
real decision); the real-to-fake direction is out of scope and rejected.

pgd_attack       iterated L-infinity sign ascent with projection to the
                 eps-ball intersected with the [0,1] box
patch_attack     sign ascent restricted to a rectangular pixel region, each
                 pixel clamped to a value bound; off-region pixels are never
                 written at all
adaptive_attack  PGD on a composed objective base + eta * extra, where the
                 base targets the detector (its BCE against label 0, or f
                 itself) and the extra term targets the coupled surface
                 (f * g) or the corrector alone (g)

Determinism: the random start for example i is drawn from a stream seeded by
(seed, i), so results do not depend on how a batch was assembled. A fixed
(model, x, cfg, seed) triple yields a bit-identical x_adv.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .autodiff import Tensor
from .coupled import bce
from .errors import ConfigError, DomainError, ShapeError
from .model import TwoHeadModel, forward_batch

__all__ = [
    "EPS_8_255",
    "EPS_16_255",
    "PgdConfig",
    "PatchConfig",
    "AttackObjective",
    "AdaptiveConfig",
    "AttackResult",
    "pgd_attack",
    "pgd_attack_batch",
    "patch_attack",
    "patch_attack_batch",
    "adaptive_attack",
    "adaptive_attack_batch",
    "success_rate",
    "within_linf_budget",
]

# the two standard pixel budgets, on the [0, 1] scale
EPS_8_255 = 8.0 / 255.0
EPS_16_255 = 16.0 / 255.0


@dataclass(frozen=True)
class PgdConfig:
    eps: float
    steps: int = 40
    step_size: float | None = None  # None means eps / 10
    random_start: bool = True
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.eps) or self.eps < 0.0:
            raise ConfigError(f"eps must be finite and >= 0, got {self.eps!r}")
        if int(self.steps) < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps!r}")
        if self.step_size is not None:
            if not np.isfinite(self.step_size) or (self.steps > 0 and self.step_size <= 0.0):
                raise ConfigError(f"step_size must be > 0 when steps > 0, got {self.step_size!r}")

    @property
    def resolved_step_size(self) -> float:
        return self.eps / 10.0 if self.step_size is None else self.step_size


@dataclass(frozen=True)
class PatchConfig:
    region: tuple[int, int, int, int] = (0, 0, 2, 2)  # row, col, height, width
    value_bound: tuple[float, float] = (0.0, 1.0)
    steps: int = 40
    step_size: float = 0.05
    seed: int = 0

    def __post_init__(self):
        r, c, h, w = (int(v) for v in self.region)
        if r < 0 or c < 0 or h < 1 or w < 1:
            raise ConfigError(f"region must be a non-empty rectangle, got {self.region!r}")
        lo, hi = self.value_bound
        if not (0.0 <= lo < hi <= 1.0):
            raise ConfigError(f"value_bound must satisfy 0 <= lo < hi <= 1, got {self.value_bound!r}")
        if int(self.steps) < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps!r}")
        if self.steps > 0 and (not np.isfinite(self.step_size) or self.step_size <= 0.0):
            raise ConfigError(f"step_size must be > 0 when steps > 0, got {self.step_size!r}")


class AttackObjective(Enum):
    SPOOF_PLUS_ENS = "spoof_plus_ens"
    SPOOF_PLUS_COR = "spoof_plus_cor"
    DET_PLUS_ENS = "det_plus_ens"
    DET_PLUS_COR = "det_plus_cor"


@dataclass(frozen=True)
class AdaptiveConfig:
    objective: AttackObjective
    eta: float
    inner: PgdConfig

    def __post_init__(self):
        if not isinstance(self.objective, AttackObjective):
            raise ConfigError(f"objective must be an AttackObjective, got {self.objective!r}")
        if not np.isfinite(self.eta) or self.eta < 0.0:
            raise ConfigError(f"eta must be finite and >= 0, got {self.eta!r}")


@dataclass
class AttackResult:
    x_adv: np.ndarray
    success: bool
    steps_used: int
    objective_trace: np.ndarray  # objective at the start iterate and after each step


ObjectiveFn = Callable[[Tensor, Tensor], Tensor]


def _spoof_objective(f: Tensor, g: Tensor) -> Tensor:
    # detector BCE against label 0; ascending it pushes f toward 1
    return bce(f, np.zeros(f.shape))


_BASE_OBJECTIVES: dict[AttackObjective, ObjectiveFn] = {
    AttackObjective.SPOOF_PLUS_ENS: _spoof_objective,
    AttackObjective.SPOOF_PLUS_COR: _spoof_objective,
    AttackObjective.DET_PLUS_ENS: lambda f, g: f,
    AttackObjective.DET_PLUS_COR: lambda f, g: f,
}

_EXTRA_OBJECTIVES: dict[AttackObjective, ObjectiveFn] = {
    AttackObjective.SPOOF_PLUS_ENS: lambda f, g: f * g,
    AttackObjective.SPOOF_PLUS_COR: lambda f, g: g,
    AttackObjective.DET_PLUS_ENS: lambda f, g: f * g,
    AttackObjective.DET_PLUS_COR: lambda f, g: g,
}


def _composed_objective(cfg: AdaptiveConfig) -> ObjectiveFn:
    base = _BASE_OBJECTIVES[cfg.objective]
    extra = _EXTRA_OBJECTIVES[cfg.objective]
    eta = float(cfg.eta)

    def objective(f: Tensor, g: Tensor) -> Tensor:
        return base(f, g) + eta * extra(f, g)

    return objective


def _check_inputs(model: TwoHeadModel, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.config.input_dim:
        raise ShapeError(f"expected [n, {model.config.input_dim}] inputs, got shape {x.shape}")
    if not np.all(np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("attack inputs must lie in [0, 1]")
    labels = np.asarray(labels)
    if np.any(labels != 0):
        raise DomainError("attacks craft spoof-to-real evasions only; every label must be 0")
    return x


def _objective_values(model: TwoHeadModel, x: np.ndarray, objective: ObjectiveFn) -> np.ndarray:
    f, g = forward_batch(model, Tensor(x))
    return np.asarray(objective(f, g).data, dtype=np.float64).copy()


def _ascend(
    model: TwoHeadModel,
    x0: np.ndarray,
    objective: ObjectiveFn,
    steps: int,
    step_size: float,
    project: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
    move_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Shared sign-ascent loop. Returns (x_adv, trace[n, steps + 1])."""
    n = x0.shape[0]
    x = start
    trace = np.zeros((n, steps + 1), dtype=np.float64)
    for t in range(steps):
        xt = Tensor(x, requires_grad=True)
        f, g = forward_batch(model, xt)
        per_example = objective(f, g)
        trace[:, t] = per_example.data
        per_example.sum().backward()
        grad = xt.grad
        for _, p in model.named_parameters():
            p.zero_grad()
        step = step_size * np.sign(grad)
        if move_mask is not None:
            step = step * move_mask
        x = project(x + step)
    trace[:, steps] = _objective_values(model, x, objective)
    return x, trace


def _pgd_core(
    model: TwoHeadModel,
    x0: np.ndarray,
    cfg: PgdConfig,
    objective: ObjectiveFn,
    seed: int,
    indices: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    eps = float(cfg.eps)
    lo = np.maximum(x0 - eps, 0.0)
    hi = np.minimum(x0 + eps, 1.0)

    def project(x: np.ndarray) -> np.ndarray:
        return np.clip(x, lo, hi)

    start = x0.copy()
    if cfg.random_start and eps > 0.0:
        deltas = np.stack(
            [np.random.default_rng([seed, int(i)]).uniform(-eps, eps, x0.shape[1]) for i in indices]
        )
        start = project(x0 + deltas)
    return _ascend(model, x0, objective, int(cfg.steps), cfg.resolved_step_size, project, start)


def _default_success(model: TwoHeadModel, x_adv: np.ndarray) -> np.ndarray:
    f, g = forward_batch(model, Tensor(x_adv))
    return f.data >= 0.5


def pgd_attack_batch(
    model: TwoHeadModel,
    x: np.ndarray,
    labels: np.ndarray,
    cfg: PgdConfig,
    seed: int | None = None,
    indices: np.ndarray | None = None,
    objective: ObjectiveFn | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Craft evasions for a whole batch; returns (x_adv, trace).

    seed defaults to cfg.seed; indices give each example's RNG-stream index
    (defaults to its row number).
    """
    x = _check_inputs(model, x, labels)
    if indices is None:
        indices = np.arange(x.shape[0])
    return _pgd_core(model, x, cfg, objective or _spoof_objective, cfg.seed if seed is None else seed, indices)


def pgd_attack(model: TwoHeadModel, x: np.ndarray, label: int, cfg: PgdConfig, target_loss: ObjectiveFn | None = None) -> AttackResult:
    """Projected sign ascent on one input. label must be 0 (spoof).

    target_loss overrides the default detector-BCE objective; it receives the
    (f, g) score tensors and must return a per-example objective tensor.
    """
    arr = np.asarray(x, dtype=np.float64).reshape(1, -1)
    x_adv, trace = pgd_attack_batch(model, arr, np.asarray([label]), cfg, objective=target_loss)
    return AttackResult(
        x_adv=x_adv[0],
        success=bool(_default_success(model, x_adv)[0]),
        steps_used=int(cfg.steps),
        objective_trace=trace[0],
    )


def _region_indices(dim: int, region: tuple[int, int, int, int]) -> np.ndarray:
    side = math.isqrt(dim)
    if side * side != dim:
        raise ConfigError(f"patch attacks need a square input layout, dim {dim} is not a perfect square")
    r, c, h, w = (int(v) for v in region)
    if r + h > side or c + w > side:
        raise ConfigError(f"region {region!r} exceeds the {side}x{side} grid")
    rows = np.arange(r, r + h)
    cols = np.arange(c, c + w)
    return (rows[:, None] * side + cols[None, :]).reshape(-1)


def patch_attack_batch(
    model: TwoHeadModel,
    x: np.ndarray,
    labels: np.ndarray,
    cfg: PatchConfig,
    seed: int | None = None,
    indices: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Region-restricted sign ascent; off-region pixels stay bit-identical."""
    x = _check_inputs(model, x, labels)
    idxs = _region_indices(model.config.input_dim, cfg.region)
    lo_v, hi_v = cfg.value_bound
    lo = x.copy()
    hi = x.copy()
    lo[:, idxs] = lo_v
    hi[:, idxs] = hi_v
    move_mask = np.zeros(model.config.input_dim)
    move_mask[idxs] = 1.0

    def project(xc: np.ndarray) -> np.ndarray:
        return np.clip(xc, lo, hi)

    # start from x itself; the first projected step pulls region pixels into
    # the value bound, and zero steps stay the exact identity
    return _ascend(model, x, _spoof_objective, int(cfg.steps), float(cfg.step_size), project, x.copy(), move_mask)


def patch_attack(model: TwoHeadModel, x: np.ndarray, label: int, cfg: PatchConfig) -> AttackResult:
    """Patch evasion on one input. label must be 0 (spoof)."""
    arr = np.asarray(x, dtype=np.float64).reshape(1, -1)
    x_adv, trace = patch_attack_batch(model, arr, np.asarray([label]), cfg)
    return AttackResult(
        x_adv=x_adv[0],
        success=bool(_default_success(model, x_adv)[0]),
        steps_used=int(cfg.steps),
        objective_trace=trace[0],
    )


def adaptive_attack_batch(
    model: TwoHeadModel,
    x: np.ndarray,
    labels: np.ndarray,
    cfg: AdaptiveConfig,
    seed: int | None = None,
    indices: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Composed-objective PGD over a batch; shares the plain PGD machinery."""
    x = _check_inputs(model, x, labels)
    if indices is None:
        indices = np.arange(x.shape[0])
    return _pgd_core(
        model,
        x,
        cfg.inner,
        _composed_objective(cfg),
        cfg.inner.seed if seed is None else seed,
        indices,
    )


def adaptive_attack(model: TwoHeadModel, x: np.ndarray, label: int, cfg: AdaptiveConfig) -> AttackResult:
    """Composed-objective evasion on one input. label must be 0 (spoof)."""
    arr = np.asarray(x, dtype=np.float64).reshape(1, -1)
    x_adv, trace = adaptive_attack_batch(model, arr, np.asarray([label]), cfg)
    return AttackResult(
        x_adv=x_adv[0],
        success=bool(_default_success(model, x_adv)[0]),
        steps_used=int(cfg.inner.steps),
        objective_trace=trace[0],
    )


def success_rate(decisions) -> float:
    """Fraction of adversarial decisions that came out REAL (== 1)."""
    arr = np.asarray(decisions)
    if arr.size == 0:
        raise DomainError("success_rate needs at least one decision")
    if np.any((arr != 0) & (arr != 1)):
        raise DomainError("decisions must be 0 (spoof) or 1 (real)")
    return float(np.mean(arr == 1))


def within_linf_budget(x: np.ndarray, x_adv: np.ndarray, eps: float, tol: float = 1e-9) -> bool:
    """Independent budget check: max|x_adv - x| <= eps + tol and box holds."""
    x = np.asarray(x, dtype=np.float64)
    x_adv = np.asarray(x_adv, dtype=np.float64)
    if x.shape != x_adv.shape:
        raise ShapeError("x and x_adv must have matching shapes")
    gap = float(np.max(np.abs(x_adv - x))) if x.size else 0.0
    in_box = bool(np.all(x_adv >= -tol) and np.all(x_adv <= 1.0 + tol))
    return gap <= eps + tol and in_box
