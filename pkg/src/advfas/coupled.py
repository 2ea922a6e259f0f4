"""Coupled detector-corrector scoring: case taxonomy and loss definitions.

The detector emits f in [0,1], the probability the input is a live capture
(label 1 = real, label 0 = spoof). The corrector emits g in [0,1]. The final
decision statistic is the expected score ES = f * g.

Cases partition (label, f) at the f = 1/2 boundary, which counts as a
predicted-real:

    TP: label 1 and f >= 1/2      FN: label 1 and f < 1/2
    FP: label 0 and f >= 1/2      TN: label 0 and f < 1/2

FP and FN are the wrong cases. The corrector's training target per case is

    FP -> 0,   FN -> 1,   TP/TN -> f treated as a constant,

and the corrector loss is BCE(f * g, target) with every occurrence of f
gradient-detached in the correct cases, so those examples never push the
detector head.

All loss formulas are polymorphic over floats, numpy arrays, and autodiff
Tensors: write them once, differentiate when the inputs carry a tape.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .autodiff import Tensor, clip, log
from .errors import DomainError

__all__ = [
    "BCE_EPS",
    "Label",
    "DetectionCase",
    "CoupledScores",
    "ELabel",
    "LossTerms",
    "classify_case",
    "case_masks",
    "expected_score",
    "e_label",
    "bce",
    "corrector_loss",
    "corrector_loss_batch",
    "spoof_loss",
    "pixel_spoof_loss",
    "masked_spoof_loss",
    "masked_mean",
    "combined_loss",
    "decide",
]

# probabilities are clamped to [BCE_EPS, 1 - BCE_EPS] before any log
BCE_EPS = 1e-7


class Label(IntEnum):
    SPOOF = 0
    REAL = 1


class DetectionCase(Enum):
    TP = "TP"
    FP = "FP"
    TN = "TN"
    FN = "FN"

    @property
    def is_wrong(self) -> bool:
        return self in (DetectionCase.FP, DetectionCase.FN)


@dataclass(frozen=True)
class CoupledScores:
    """A (detector, corrector) score pair; es is always exactly f * g."""

    f: float
    g: float

    def __post_init__(self):
        _require_unit("f", self.f)
        _require_unit("g", self.g)

    @property
    def es(self) -> float:
        return self.f * self.g


class _ELabelKind(Enum):
    ZERO = "zero"
    ONE = "one"
    PASS_THROUGH = "pass_through"


@dataclass(frozen=True)
class ELabel:
    """Corrector target: a constant 0, a constant 1, or a detached copy of f."""

    kind: _ELabelKind
    value: float

    @staticmethod
    def zero() -> "ELabel":
        return ELabel(_ELabelKind.ZERO, 0.0)

    @staticmethod
    def one() -> "ELabel":
        return ELabel(_ELabelKind.ONE, 1.0)

    @staticmethod
    def pass_through(f: float) -> "ELabel":
        _require_unit("f", f)
        return ELabel(_ELabelKind.PASS_THROUGH, float(f))

    @property
    def is_pass_through(self) -> bool:
        return self.kind is _ELabelKind.PASS_THROUGH


@dataclass(frozen=True)
class LossTerms:
    l_spoof: float
    l_cor: float
    lam: float

    @property
    def l_cs(self) -> float:
        return self.l_spoof + self.lam * self.l_cor


def _values(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def _require_unit(name: str, x) -> None:
    vals = _values(x)
    if not np.all(np.isfinite(vals)):
        raise DomainError(f"{name} must be finite")
    if np.any(vals < 0.0) or np.any(vals > 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {vals!r}")


def _require_label(label) -> int:
    val = int(label)
    if val not in (0, 1):
        raise DomainError(f"label must be 0 (spoof) or 1 (real), got {label!r}")
    return val


def classify_case(label, f: float) -> DetectionCase:
    """Place one (label, f) pair in the TP/FP/TN/FN partition.

    f = 1/2 counts as predicted-real, so it lands in TP or FP.
    """
    val = _require_label(label)
    _require_unit("f", f)
    predicted_real = f >= 0.5
    if val == 1:
        return DetectionCase.TP if predicted_real else DetectionCase.FN
    return DetectionCase.FP if predicted_real else DetectionCase.TN


def case_masks(labels: np.ndarray, f_values: np.ndarray) -> dict[str, np.ndarray]:
    """Boolean masks of the four cases for a batch; keys TP/FP/TN/FN."""
    labels = np.asarray(labels)
    f_values = np.asarray(f_values, dtype=np.float64)
    predicted_real = f_values >= 0.5
    real = labels == 1
    return {
        "TP": real & predicted_real,
        "FN": real & ~predicted_real,
        "FP": ~real & predicted_real,
        "TN": ~real & ~predicted_real,
    }


def expected_score(f, g):
    """ES = f * g, the coupled decision statistic. Domain-checked on values."""
    _require_unit("f", f)
    _require_unit("g", g)
    return f * g


def e_label(case: DetectionCase, f: float) -> ELabel:
    """The corrector's supervision target for one case.

    Wrong cases get hard targets (FP -> 0, FN -> 1); correct cases pass the
    detector score through as a constant.
    """
    if case is DetectionCase.FP:
        return ELabel.zero()
    if case is DetectionCase.FN:
        return ELabel.one()
    return ELabel.pass_through(float(_values(f)))


def bce(p, t):
    """Binary cross-entropy -(t log p + (1-t) log(1-p)) with p clamped.

    p is clamped to [BCE_EPS, 1 - BCE_EPS] before the logs, so the value is
    finite for every p, t in [0, 1].
    """
    _require_unit("p", p)
    _require_unit("t", t)
    p = clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return -(t * log(p) + (1.0 - t) * log(1.0 - p))


def corrector_loss(f, g, case: DetectionCase):
    """Per-example corrector loss BCE(f * g, E_label).

    For TP/TN every occurrence of f (inside the product and as the target) is
    gradient-detached, so the loss trains only the corrector path there. f and
    g may be floats or scalar Tensors.
    """
    if not isinstance(case, DetectionCase):
        raise DomainError(f"case must be a DetectionCase, got {case!r}")
    _require_unit("f", f)
    _require_unit("g", g)
    if case is DetectionCase.FP:
        return bce(f * g, 0.0)
    if case is DetectionCase.FN:
        return bce(f * g, 1.0)
    f_const = f.detach() if isinstance(f, Tensor) else f
    return bce(f_const * g, f_const)


def corrector_loss_batch(f: Tensor, g: Tensor, labels: np.ndarray) -> Tensor:
    """Vectorized per-example corrector losses for a mixed-case batch.

    Case membership is decided from the forward values of f. Wrong-case rows
    keep f live; correct-case rows see only a detached copy, composed by 0/1
    mask arithmetic so the detached rows contribute exactly zero gradient.
    """
    masks = case_masks(labels, f.data)
    wrong = (masks["FP"] | masks["FN"]).astype(np.float64)
    correct = 1.0 - wrong
    fn_target = masks["FN"].astype(np.float64)
    f_const = f.detach()
    f_eff = f * wrong + f_const * correct
    target = fn_target + f_const * correct
    return bce(f_eff * g, target)


def spoof_loss(f, label):
    """Detector loss BCE(f, label). label may be a scalar or a 0/1 array."""
    lab = _values(label)
    if np.any((lab != 0.0) & (lab != 1.0)):
        raise DomainError(f"label must be 0 (spoof) or 1 (real), got {label!r}")
    return bce(f, lab if lab.ndim else float(lab))


def pixel_spoof_loss(score_map, label):
    """Pixel-wise detector loss: mean BCE of a score map against a constant
    label map. The map's mean plays the role of f elsewhere."""
    val = _require_label(label)
    losses = bce(score_map, float(val))
    return losses.mean() if isinstance(losses, Tensor) else float(np.mean(losses))


def masked_spoof_loss(m, l):
    """Per-example masked loss m * l; m = 0 annihilates the contribution."""
    m_vals = _values(m)
    if np.any((m_vals != 0.0) & (m_vals != 1.0)):
        raise DomainError(f"mask bits must be 0 or 1, got {m_vals!r}")
    return m * l


def masked_mean(losses: np.ndarray, masks: np.ndarray) -> float:
    """Batch reduction of masked losses: sum over unmasked / count unmasked.

    Computed over the selected subset so dropping masked rows cannot change
    the result by even one ulp.
    """
    losses = np.asarray(losses, dtype=np.float64)
    masks = np.asarray(masks)
    if losses.shape != masks.shape:
        raise DomainError("losses and masks must have matching shapes")
    sel = masks == 1
    count = int(sel.sum())
    if count == 0:
        raise DomainError("masked_mean needs at least one unmasked example")
    return float(np.sum(losses[sel]) / count)


def combined_loss(l_spoof, l_cor, lam: float):
    """Total training loss l_spoof + lam * l_cor."""
    if not np.isfinite(lam) or lam < 0:
        raise DomainError(f"lambda must be finite and >= 0, got {lam!r}")
    return l_spoof + lam * l_cor


def decide(es: float, threshold: float) -> Label:
    """Final decision: REAL iff es >= threshold."""
    _require_unit("es", es)
    if not np.isfinite(threshold):
        raise DomainError("threshold must be finite")
    return Label.REAL if es >= threshold else Label.SPOOF
