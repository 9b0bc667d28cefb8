"""Mini-batch training loop with named, isolated random streams.

Every source of randomness in a run is a separate generator derived from the
master seed and a stage label: "shuffle" (batch order), "model" (the model's
own per-batch draws: fill noise, hints, denoising corruption), "augment"
(artificial masks and their fill noise) and "auto_alpha" (the forward-only
probe). The augmentation never touches the model stream, which is what makes
a run with alpha = 0 reproduce the baseline parameter trajectory bit for
bit.

Loss curves are one row per epoch: epoch, l_ori, l_aug, hybrid, with
hybrid = l_ori + alpha * l_aug exactly.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .augment import MisaConfig, hybrid_step, resolve_alpha
from .errors import ConfigError, ShapeError

EPOCHS_SMALL = 2000
EPOCHS_LARGE = 300
SMALL_DATASET_ROWS = 500


def derive_seed(master: int, label: str, index: int = 0) -> int:
    """Stable child seed from a master seed, stage label and index."""
    digest = hashlib.sha256(f"{master}:{label}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(master: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, label, index))


def epochs_for(n: int) -> int:
    """Training budget rule: small datasets get the long schedule."""
    return EPOCHS_SMALL if n < SMALL_DATASET_ROWS else EPOCHS_LARGE


@dataclass(frozen=True)
class TrainPlan:
    """Optimization settings; epochs None defers to the dataset-size rule."""

    epochs: int | None = None
    batch_size: int = 64
    lr: float = 1e-3
    clip_norm: float = 5.0
    seed: int = 0


@dataclass
class LossCurve:
    """Per-epoch training record plus the resolved augmentation weight."""

    rows: list = field(default_factory=list)
    alpha: float = 0.0

    def save_csv(self, path) -> None:
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", "l_ori", "l_aug", "hybrid"])
            for epoch, l_ori, l_aug, hybrid in self.rows:
                writer.writerow([epoch, repr(l_ori), repr(l_aug), repr(hybrid)])

    @classmethod
    def load_csv(cls, path) -> "LossCurve":
        with Path(path).open(newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            if header != ["epoch", "l_ori", "l_aug", "hybrid"]:
                raise ConfigError(f"{path} is not a loss-curve file")
            rows = [(int(e), float(o), float(a), float(h))
                    for e, o, a, h in reader]
        return cls(rows=rows)


def train(model, x: np.ndarray, m: np.ndarray, plan: TrainPlan,
          misa: MisaConfig = MisaConfig()) -> LossCurve:
    """Fit the imputer on observed entries; returns the loss curve.

    The model is updated in place. With misa.enabled the hybrid objective is
    used; otherwise plain baseline training with l_aug recorded as 0.
    """
    x = ad.as_matrix(x, "data")
    m = ad.as_matrix(m, "mask")
    if x.shape != m.shape:
        raise ShapeError(f"data {x.shape} and mask {m.shape} differ")
    n = x.shape[0]
    if n == 0:
        raise ConfigError("cannot train on an empty dataset")

    batch = n if n < plan.batch_size else plan.batch_size
    epochs = plan.epochs if plan.epochs is not None else epochs_for(n)

    shuffle_rng = derive_rng(plan.seed, "shuffle")
    model_rng = derive_rng(plan.seed, "model")
    aug_rng = derive_rng(plan.seed, "augment")
    alpha = resolve_alpha(model, misa, x[:batch], m[:batch],
                          derive_rng(plan.seed, "auto_alpha"))

    opt = ad.Adam(model.params, lr=plan.lr)
    disc_params = getattr(model, "disc_params", None)
    adv_opt = ad.Adam(disc_params, lr=plan.lr) if disc_params else None

    curve = LossCurve(alpha=alpha)
    for epoch in range(epochs):
        perm = shuffle_rng.permutation(n)
        sum_ori = 0.0
        sum_aug = 0.0
        for start in range(0, n, batch):
            idx = perm[start:start + batch]
            l_ori, l_aug = hybrid_step(
                model, x[idx], m[idx], alpha, opt, adv_opt,
                model_rng, aug_rng,
                misa_enabled=misa.enabled,
                backprop_through=misa.backprop_through_imputation,
                max_norm=plan.clip_norm)
            sum_ori += l_ori * idx.size
            sum_aug += l_aug * idx.size
        mean_ori = sum_ori / n
        mean_aug = sum_aug / n
        curve.rows.append((epoch, mean_ori, mean_aug,
                           mean_ori + alpha * mean_aug))
    return curve
