"""Synthetic texture datasets, the AFDS container format, batch assembly.

Real captures are sums of low-frequency sinusoids, spoofs sums of
high-frequency ones. Each component rides along a random direction (an
axis or a free angle, per its recipe) with a random phase and a random
amplitude, then Gaussian pixel noise is added and the patch is clipped to
[0, 1]. The classes differ in frequency energy, not in mean brightness, so
a detector has to look at structure; each class pairs an easily erased
low-amplitude band with a robust one whose amplitude exceeds any 16/255
perturbation, which is what separates naive from robust training here.

AFDS file layout (little-endian):

    magic    4 bytes  b"AFDS"
    version  u32      currently 1
    count    u32      number of examples
    dim      u32      feature length per example
    features count * dim float32, row-major
    labels   count bytes   (0 spoof, 1 real)
    origins  count bytes   (0 clean_real, 1 clean_spoof, 2 adversarial)

Split sub-seeds are derived from (seed, split code) and recorded in each
split's manifest next to the config digest.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import attacks as attacks_mod
from .errors import ConfigError, DataFormatError, DomainError, ShapeError
from .model import TwoHeadModel

__all__ = [
    "DATASET_MAGIC",
    "DATASET_VERSION",
    "ORIGIN_CLEAN_REAL",
    "ORIGIN_CLEAN_SPOOF",
    "ORIGIN_ADVERSARIAL",
    "ORIGIN_NAMES",
    "Example",
    "Dataset",
    "SyntheticConfig",
    "TrainBatch",
    "generate_synthetic",
    "save_dataset",
    "load_dataset",
    "write_manifest",
    "assemble_batch",
]

log = logging.getLogger(__name__)

DATASET_MAGIC = b"AFDS"
DATASET_VERSION = 1

ORIGIN_CLEAN_REAL = 0
ORIGIN_CLEAN_SPOOF = 1
ORIGIN_ADVERSARIAL = 2
ORIGIN_NAMES = {ORIGIN_CLEAN_REAL: "clean_real", ORIGIN_CLEAN_SPOOF: "clean_spoof", ORIGIN_ADVERSARIAL: "adversarial"}

_SPLIT_CODES = {"train": 0, "val": 1, "test": 2}

# per-frequency component recipe: (amplitude low, amplitude high, chance of
# a free orientation instead of an axis). Amplitudes are drawn uniformly per
# example around the 0.5 mid-gray, before noise and clipping. Listed in the
# order of the class frequency set, cycled if the set is longer.
#
# Each class carries one fragile band and one robust band. The fragile band
# is axis-aligned with amplitude 0.07..0.13, straddling the largest wave a
# 16/255 sign perturbation can add or cancel (4 * eps / pi ~ 0.080); a naive
# detector that leans on it is erasable. The robust band has a random
# orientation and at least 0.16 amplitude, beyond any 16/255 budget, so an
# adversarially trained detector still has signal to stand on.
_REAL_SPECS = ((0.07, 0.13, 0.0), (0.20, 0.40, 1.0))
_SPOOF_SPECS = ((0.16, 0.32, 1.0), (0.07, 0.13, 0.0))

# RNG stream tags inside assemble_batch
_TAG_ATTACK = 0
_TAG_SHUFFLE = 1


@dataclass(frozen=True)
class Example:
    x: np.ndarray
    label: int
    origin: int

    def __post_init__(self):
        if int(self.label) not in (0, 1):
            raise DomainError(f"label must be 0 or 1, got {self.label!r}")
        if int(self.origin) not in ORIGIN_NAMES:
            raise DomainError(f"origin must be one of {sorted(ORIGIN_NAMES)}, got {self.origin!r}")
        _check_label_origin(int(self.label), int(self.origin))


def _check_label_origin(label: int, origin: int) -> None:
    if origin == ORIGIN_ADVERSARIAL and label != 0:
        raise DomainError("adversarial examples must carry label 0")
    if origin == ORIGIN_CLEAN_REAL and label != 1:
        raise DomainError("clean_real examples must carry label 1")
    if origin == ORIGIN_CLEAN_SPOOF and label != 0:
        raise DomainError("clean_spoof examples must carry label 0")


@dataclass
class Dataset:
    """Columnar example storage: features [n, dim] float32 in [0, 1]."""

    x: np.ndarray
    labels: np.ndarray
    origins: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.origins = np.asarray(self.origins, dtype=np.uint8)
        if self.x.ndim != 2:
            raise ShapeError(f"features must be [n, dim], got shape {self.x.shape}")
        n = self.x.shape[0]
        if self.labels.shape != (n,) or self.origins.shape != (n,):
            raise ShapeError("labels and origins must have one entry per row")
        if np.any(self.x < 0.0) or np.any(self.x > 1.0) or not np.all(np.isfinite(self.x)):
            raise DomainError("features must lie in [0, 1]")
        if np.any(self.labels > 1):
            raise DomainError("labels must be 0 or 1")
        if np.any(self.origins > 2):
            raise DomainError("origins must be 0, 1, or 2")
        for label, origin in ((1, ORIGIN_ADVERSARIAL), (0, ORIGIN_CLEAN_REAL), (1, ORIGIN_CLEAN_SPOOF)):
            if np.any((self.origins == origin) & (self.labels == label)):
                raise DomainError(f"origin {ORIGIN_NAMES[origin]} conflicts with label {label}")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def examples(self) -> list[Example]:
        return [Example(self.x[i], int(self.labels[i]), int(self.origins[i])) for i in range(len(self))]

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(self.x[mask], self.labels[mask], self.origins[mask])


@dataclass(frozen=True)
class SyntheticConfig:
    dim: int = 64
    n_train: int = 2000  # per class
    n_val: int = 500
    n_test: int = 1000
    noise_sigma: float = 0.1
    real_freqs: tuple[int, ...] = (1, 2)
    spoof_freqs: tuple[int, ...] = (3, 4)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "real_freqs", tuple(int(k) for k in self.real_freqs))
        object.__setattr__(self, "spoof_freqs", tuple(int(k) for k in self.spoof_freqs))
        side = math.isqrt(int(self.dim))
        if side * side != int(self.dim):
            raise ConfigError(f"dim must be a perfect square, got {self.dim!r}")
        for name in ("n_train", "n_val", "n_test"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)!r}")
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0.0:
            raise ConfigError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma!r}")
        for name, freqs in (("real_freqs", self.real_freqs), ("spoof_freqs", self.spoof_freqs)):
            if not freqs or any(k < 1 or k > side // 2 for k in freqs):
                raise ConfigError(f"{name} must be cycle counts in [1, {side // 2}], got {freqs!r}")

    @property
    def side(self) -> int:
        return math.isqrt(int(self.dim))

    def split_seed(self, split: str) -> list[int]:
        if split not in _SPLIT_CODES:
            raise ConfigError(f"unknown split {split!r}")
        return [int(self.seed), _SPLIT_CODES[split]]


def _gratings(
    rng: np.random.Generator,
    n: int,
    side: int,
    freqs: tuple[int, ...],
    sigma: float,
    specs: tuple[tuple[float, float, float], ...],
) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(side, dtype=np.float64), np.arange(side, dtype=np.float64), indexing="ij")
    coords_i, coords_j = ii.reshape(-1), jj.reshape(-1)
    patch = np.full((n, side * side), 0.5)
    for pos, k in enumerate(freqs):
        amp_lo, amp_hi, orient_mix = specs[pos % len(specs)]
        amps = rng.uniform(amp_lo, amp_hi, n)
        mix = rng.uniform(0.0, 1.0, n)
        theta_axis = rng.integers(0, 2, n) * (np.pi / 2.0)
        theta_free = rng.uniform(0.0, np.pi, n)
        thetas = np.where(mix < orient_mix, theta_free, theta_axis)
        phases = rng.uniform(0.0, 2.0 * np.pi, n)
        proj = np.cos(thetas)[:, None] * coords_i[None, :] + np.sin(thetas)[:, None] * coords_j[None, :]
        patch += amps[:, None] * np.sin(2.0 * np.pi * float(k) * proj / side + phases[:, None])
    noise = rng.normal(0.0, sigma, (n, side * side))
    return np.clip(patch + noise, 0.0, 1.0)


def generate_synthetic(cfg: SyntheticConfig) -> dict[str, Dataset]:
    """Three disjoint splits, each class-balanced; deterministic in cfg."""
    counts = {"train": cfg.n_train, "val": cfg.n_val, "test": cfg.n_test}
    splits: dict[str, Dataset] = {}
    for split, n in counts.items():
        rng = np.random.default_rng(cfg.split_seed(split))
        real = _gratings(rng, n, cfg.side, cfg.real_freqs, cfg.noise_sigma, _REAL_SPECS)
        spoof = _gratings(rng, n, cfg.side, cfg.spoof_freqs, cfg.noise_sigma, _SPOOF_SPECS)
        x = np.concatenate([real, spoof]).astype(np.float32)
        labels = np.concatenate([np.ones(n, dtype=np.uint8), np.zeros(n, dtype=np.uint8)])
        origins = np.concatenate(
            [np.full(n, ORIGIN_CLEAN_REAL, dtype=np.uint8), np.full(n, ORIGIN_CLEAN_SPOOF, dtype=np.uint8)]
        )
        splits[split] = Dataset(x, labels, origins)
    return splits


def save_dataset(ds: Dataset, path) -> None:
    blob = bytearray()
    blob += DATASET_MAGIC
    blob += struct.pack("<I", DATASET_VERSION)
    blob += struct.pack("<I", len(ds))
    blob += struct.pack("<I", ds.dim)
    blob += np.ascontiguousarray(ds.x, dtype="<f4").tobytes(order="C")
    blob += ds.labels.astype(np.uint8).tobytes()
    blob += ds.origins.astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        data = fh.read()

    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise DataFormatError(
                f"truncated dataset at offset {offset}: wanted {n} bytes, file has {len(data)}", offset=offset
            )
        out = data[offset : offset + n]
        offset += n
        return out

    magic = take(4)
    if magic != DATASET_MAGIC:
        raise DataFormatError(f"bad magic: expected {DATASET_MAGIC!r}, got {magic!r}", offset=0)
    version = struct.unpack("<I", take(4))[0]
    if version != DATASET_VERSION:
        raise DataFormatError(f"unsupported version {version}, this build reads {DATASET_VERSION}", offset=4)
    count = struct.unpack("<I", take(4))[0]
    dim = struct.unpack("<I", take(4))[0]
    if count > 0 and dim == 0:
        raise DataFormatError("dim mismatch: zero-length features with nonzero count", offset=12)
    x = np.frombuffer(take(count * dim * 4), dtype="<f4").reshape(count, dim).astype(np.float32)
    labels = np.frombuffer(take(count), dtype=np.uint8).copy()
    origins = np.frombuffer(take(count), dtype=np.uint8).copy()
    if offset != len(data):
        raise DataFormatError(f"trailing bytes after payload: {len(data) - offset}", offset=offset)
    try:
        return Dataset(x, labels, origins)
    except (DomainError, ShapeError) as exc:
        raise DataFormatError(f"invalid dataset payload: {exc}") from exc


def write_manifest(path, split: str, ds: Dataset, cfg: SyntheticConfig, config_digest: str, version: str) -> None:
    lines = [
        f"split={split}",
        f"count={len(ds)}",
        f"count_real={int(np.sum(ds.labels == 1))}",
        f"count_spoof={int(np.sum(ds.labels == 0))}",
        f"dim={ds.dim}",
        f"sub_seed={','.join(str(v) for v in cfg.split_seed(split))}",
        f"config_digest={config_digest}",
        f"seed={cfg.seed}",
        f"artifact_version={version}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class TrainBatch:
    """One assembled batch: clean examples plus on-line adversarial copies.

    masks flag the spoof-loss population: 1 for clean rows, 0 for adversarial
    rows (which exist only for the corrector loss).
    """

    x: np.ndarray
    labels: np.ndarray
    origins: np.ndarray
    masks: np.ndarray

    def examples(self) -> list[Example]:
        return [Example(self.x[i], int(self.labels[i]), int(self.origins[i])) for i in range(self.x.shape[0])]


def assemble_batch(clean: list[Example], model: TwoHeadModel, attack_cfg, seed: int) -> TrainBatch:
    """Clean batch -> clean + adversarial copies of its spoof rows, shuffled.

    Every clean spoof example gets one adversarial copy crafted against the
    current model (per-example RNG stream (seed, tag, row index)). Examples
    whose attack produces non-finite values are skipped with a warning. The
    union is shuffled by a deterministic permutation derived from seed.
    """
    if not clean:
        raise DomainError("assemble_batch needs at least one clean example")
    for ex in clean:
        if int(ex.origin) == ORIGIN_ADVERSARIAL:
            raise DomainError("assemble_batch takes clean examples only")

    x_clean = np.stack([np.asarray(ex.x, dtype=np.float64) for ex in clean])
    labels_clean = np.asarray([int(ex.label) for ex in clean], dtype=np.int64)
    origins_clean = np.asarray([int(ex.origin) for ex in clean], dtype=np.int64)

    spoof_rows = np.flatnonzero(labels_clean == 0)
    parts_x = [x_clean]
    parts_labels = [labels_clean]
    parts_origins = [origins_clean]
    if spoof_rows.size:
        x_sp = x_clean[spoof_rows]
        zero = np.zeros(spoof_rows.size, dtype=np.int64)
        if isinstance(attack_cfg, attacks_mod.PgdConfig):
            x_adv, _ = attacks_mod.pgd_attack_batch(model, x_sp, zero, attack_cfg, seed=_derive(seed, _TAG_ATTACK), indices=spoof_rows)
        elif isinstance(attack_cfg, attacks_mod.PatchConfig):
            x_adv, _ = attacks_mod.patch_attack_batch(model, x_sp, zero, attack_cfg)
        else:
            raise ConfigError(f"unsupported attack config {type(attack_cfg).__name__}")
        finite = np.all(np.isfinite(x_adv), axis=1)
        if not np.all(finite):
            log.warning("dropping %d adversarial copies with non-finite values", int(np.sum(~finite)))
            x_adv = x_adv[finite]
        parts_x.append(x_adv)
        parts_labels.append(np.zeros(x_adv.shape[0], dtype=np.int64))
        parts_origins.append(np.full(x_adv.shape[0], ORIGIN_ADVERSARIAL, dtype=np.int64))

    x_all = np.concatenate(parts_x)
    labels_all = np.concatenate(parts_labels)
    origins_all = np.concatenate(parts_origins)
    perm = np.random.default_rng([_derive(seed, _TAG_SHUFFLE)]).permutation(x_all.shape[0])
    x_all, labels_all, origins_all = x_all[perm], labels_all[perm], origins_all[perm]
    masks = (origins_all != ORIGIN_ADVERSARIAL).astype(np.int64)
    return TrainBatch(x=x_all, labels=labels_all, origins=origins_all, masks=masks)


def _derive(seed: int, tag: int) -> int:
    """Stable child seed for (seed, tag)."""
    return int(np.random.SeedSequence([int(seed), int(tag)]).generate_state(1, np.uint64)[0])
