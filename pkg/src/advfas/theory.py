"""Numeric certification of the coupled-scoring guarantees.

The guarantees certified here, each over an explicit finite grid:

1. With an ideal corrector (g equal to its per-case optimum), every correctly
   detected example keeps ES >= 1/2 and every wrongly accepted spoof drops to
   ES = 0, for all f >= 1/2.

2. Definition of a delta-error corrector: |g - g*| <= delta / 2. A corrector
   threshold of 1 / (2 - delta) then separates the cases: for every
   f > 1 / (2 - delta) and every delta-error g,

       ES(correct) = f * g >= f * (1 - delta/2) > 1/2
       ES(wrong)   = f * g <= f * (delta/2)     <= delta/2 < 1/2.

   The verifier checks the endpoint inequalities directly at every grid point,
   so the certificate does not depend on any intermediate algebra.

3. For missed real inputs (f < 1/2) no corrector can push ES to 1, since
   ES <= f. The salvage property is directional instead: the loss BCE(f*g, 1)
   has strictly negative partial derivatives in both f and g wherever
   f * g < 1, so gradient descent raises both scores. Verified by central
   finite differences on random scenarios.

Grids are built from integer indices divided by the inverse step so that
endpoints such as g = 1.0 are hit exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coupled import BCE_EPS, ELabel
from .errors import ConfigError, DomainError, UnreachableOptimumError

__all__ = [
    "DeltaErrorSpec",
    "ScoreScenario",
    "ViolationReport",
    "optimal_corrector",
    "check_delta_error",
    "verify_ideal_separation",
    "verify_delta_separation",
    "verify_salvage_gradient",
]


@dataclass(frozen=True)
class DeltaErrorSpec:
    """Corrector error budget delta in [0, 1): |g - g*| <= delta / 2."""

    delta: float

    def __post_init__(self):
        if not np.isfinite(self.delta) or not (0.0 <= self.delta < 1.0):
            raise DomainError(f"delta must lie in [0, 1), got {self.delta!r}")

    @property
    def induced_threshold(self) -> float:
        """The detector score above which separation is guaranteed."""
        return 1.0 / (2.0 - self.delta)

    @property
    def half_width(self) -> float:
        return self.delta / 2.0


@dataclass(frozen=True)
class ScoreScenario:
    """One grid point: detector score, correctness flag, optimal and actual g."""

    f: float
    correct: bool
    g_star: float
    g: float


@dataclass(frozen=True)
class ViolationReport:
    total_checked: int
    violations: int
    first_violation: Optional[ScoreScenario] = None

    @property
    def passed(self) -> bool:
        return self.violations == 0


def optimal_corrector(e: ELabel, f: float) -> float:
    """The feasible optimum g* = clamp(E_label / f, 0, 1).

    Zero targets are optimal at g* = 0 for any f. Pass-through targets give
    f / f = 1 exactly. A One target with f = 0 has no feasible optimum (the
    unconstrained optimum 1/f diverges) and is reported as unreachable.
    """
    if not isinstance(e, ELabel):
        raise DomainError(f"e must be an ELabel, got {e!r}")
    if not np.isfinite(f) or not (0.0 <= f <= 1.0):
        raise DomainError(f"f must lie in [0, 1], got {f!r}")
    if e.value == 0.0:
        return 0.0
    if e.is_pass_through:
        return 1.0
    if f == 0.0:
        raise UnreachableOptimumError(
            "unreachable optimum: target 1 with f = 0 (unconstrained optimum 1/f exceeds the feasible range)"
        )
    return min(max(e.value / f, 0.0), 1.0)


def check_delta_error(g: float, g_star: float, delta: float) -> bool:
    """Whether g is within the delta-error band |g - g*| <= delta / 2.

    delta = 1 is admitted here (the closed endpoint) because any g in [0, 1]
    sits within 1/2 of any g*; the separation verifier itself requires
    delta < 1.
    """
    if not np.isfinite(delta) or not (0.0 <= delta <= 1.0):
        raise DomainError(f"delta must lie in [0, 1], got {delta!r}")
    for name, val in (("g", g), ("g_star", g_star)):
        if not np.isfinite(val) or not (0.0 <= val <= 1.0):
            raise DomainError(f"{name} must lie in [0, 1], got {val!r}")
    return abs(g - g_star) <= delta / 2.0


def _grid(inv: int, i_lo: int, i_hi: int) -> np.ndarray:
    # inclusive integer range divided by the inverse step; exact at 0, 1/2, 1
    if i_hi < i_lo:
        return np.empty(0, dtype=np.float64)
    return np.arange(i_lo, i_hi + 1, dtype=np.float64) / inv


def _inv_step(step: float) -> int:
    if not np.isfinite(step) or step <= 0.0 or step > 1e-2:
        raise ConfigError(f"grid step must lie in (0, 1e-2], got {step!r}")
    inv = round(1.0 / step)
    if inv <= 0 or abs(inv * step - 1.0) > 1e-9:
        raise ConfigError(f"grid step must divide 1 evenly, got {step!r}")
    return inv


def verify_ideal_separation(f_step: float = 1e-3) -> ViolationReport:
    """Ideal-corrector separation over the grid f in [1/2, 1].

    Correct cases use g = g* = 1 (pass-through of a correct detector is
    optimal at 1), wrong cases g = g* = 0. Checks ES >= 1/2 for correct and
    ES < 1/2 for wrong at every grid point.
    """
    inv = _inv_step(f_step)
    fs = _grid(inv, (inv + 1) // 2, inv)
    es_correct = fs * 1.0
    es_wrong = fs * 0.0
    bad_correct = es_correct < 0.5
    bad_wrong = es_wrong >= 0.5
    total = 2 * fs.size
    violations = int(bad_correct.sum() + bad_wrong.sum())
    first = None
    if violations:
        if bad_correct.any():
            i = int(np.argmax(bad_correct))
            first = ScoreScenario(f=float(fs[i]), correct=True, g_star=1.0, g=1.0)
        else:
            i = int(np.argmax(bad_wrong))
            first = ScoreScenario(f=float(fs[i]), correct=False, g_star=0.0, g=0.0)
    return ViolationReport(total, violations, first)


def verify_delta_separation(spec: DeltaErrorSpec, f_step: float = 1e-3, g_step: float = 1e-3) -> ViolationReport:
    """Certify the delta-error separation on an explicit grid.

    For every grid f strictly above the induced threshold 1/(2 - delta) and
    every grid g within the delta-error band of the case optimum, assert

        correct (g* = 1): f * g > 1/2
        wrong   (g* = 0): f * g < 1/2.
    """
    if not isinstance(spec, DeltaErrorSpec):
        raise DomainError(f"spec must be a DeltaErrorSpec, got {spec!r}")
    f_inv = _inv_step(f_step)
    g_inv = _inv_step(g_step)
    threshold = spec.induced_threshold
    half = spec.half_width

    i_lo = int(np.floor(threshold * f_inv)) + 1
    while i_lo / f_inv <= threshold:
        i_lo += 1
    fs = _grid(f_inv, i_lo, f_inv)

    g_hi = _grid(g_inv, int(np.floor((1.0 - half) * g_inv)), g_inv)
    g_hi = g_hi[np.abs(g_hi - 1.0) <= half]
    g_lo = _grid(g_inv, 0, int(np.ceil(half * g_inv)))
    g_lo = g_lo[np.abs(g_lo - 0.0) <= half]

    total = fs.size * (g_hi.size + g_lo.size)
    violations = 0
    first: Optional[ScoreScenario] = None
    if fs.size:
        es_c = np.outer(fs, g_hi)
        bad_c = es_c <= 0.5
        es_w = np.outer(fs, g_lo)
        bad_w = es_w >= 0.5
        violations = int(bad_c.sum() + bad_w.sum())
        if bad_c.any():
            i, j = np.unravel_index(int(np.argmax(bad_c)), bad_c.shape)
            first = ScoreScenario(f=float(fs[i]), correct=True, g_star=1.0, g=float(g_hi[j]))
        elif bad_w.any():
            i, j = np.unravel_index(int(np.argmax(bad_w)), bad_w.shape)
            first = ScoreScenario(f=float(fs[i]), correct=False, g_star=0.0, g=float(g_lo[j]))
    return ViolationReport(total, violations, first)


def verify_salvage_gradient(samples: int = 1000, seed: int = 0, fd_step: float = 1e-6) -> ViolationReport:
    """Directional salvage property for missed real inputs (f < 1/2).

    Draws random scenarios f in (0, 1/2), g in (0, 1] and checks by central
    finite differences that BCE(f * g, 1) strictly decreases in both f and g
    (partials < 0) wherever f * g < 1. Counterpart fact asserted alongside:
    ES <= f < 1/2, so no corrector can reach ES = 1 pointwise here.
    """
    if samples < 1000:
        raise ConfigError(f"samples must be >= 1000, got {samples!r}")
    if not (0.0 < fd_step <= 1e-4):
        raise ConfigError(f"fd_step must lie in (0, 1e-4], got {fd_step!r}")
    rng = np.random.default_rng(seed)
    f = rng.uniform(1e-3, 0.5 - 1e-9, samples)
    g = rng.uniform(1e-3, 1.0, samples)

    def loss(p):
        return -np.log(np.clip(p, BCE_EPS, 1.0 - BCE_EPS))

    d_f = (loss((f + fd_step) * g) - loss((f - fd_step) * g)) / (2.0 * fd_step)
    d_g = (loss(f * (g + fd_step)) - loss(f * (g - fd_step))) / (2.0 * fd_step)
    pointwise_cap = f * g <= f  # ES can never exceed f
    bad = (d_f >= 0.0) | (d_g >= 0.0) | ~pointwise_cap
    total = samples
    violations = int(bad.sum())
    first = None
    if violations:
        i = int(np.argmax(bad))
        first = ScoreScenario(f=float(f[i]), correct=True, g_star=1.0, g=float(g[i]))
    return ViolationReport(total, violations, first)
