"""Evaluation: masked RMSE, downstream classification, cross-validated runs.

Imputation quality is RMSE over the entries the mask hid, in the scaled
space, so observed entries never influence the score. Downstream utility
trains a small classifier on imputed features and reports test accuracy.

cross_validated_run is the standard scoring protocol: per repeat, one mask
is generated for the whole dataset (on a full-data min-max scaling, since
the conditioned mechanisms need comparable column scales); then each of k
folds holds out its rows, scaling is re-fit on the training rows alone
(test rows clipped), the imputer trains on the training rows' observed
entries and imputes the held-out rows, and the fold scores average into the
repeat score. Reported mean and std are over repeats (population std; with
a single repeat, over folds). Every stage seed derives from the master seed
with a stage label, so a report is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .augment import MisaConfig
from .dataio import Dataset, apply_scale, make_folds, minmax_scale
from .errors import ConfigError, ShapeError
from .missingness import MissSpec, generate_mask
from .models import Mlp, MlpSpec, build_model
from .training import LossCurve, TrainPlan, derive_rng, derive_seed, train

CLASSIFIER_HIDDEN = 64
CLASSIFIER_EPOCHS = 200


def rmse_missing(x_true: np.ndarray, imputed: np.ndarray, m: np.ndarray) -> float:
    """Root mean squared error over masked-out entries only."""
    x_true, imputed, m = (np.asarray(a, dtype=np.float64)
                          for a in (x_true, imputed, m))
    if not (x_true.shape == imputed.shape == m.shape):
        raise ShapeError(f"shapes {x_true.shape}, {imputed.shape}, "
                         f"{m.shape} differ")
    missing = m == 0.0
    if not missing.any():
        raise ConfigError("mask has no missing entries to score")
    diff = x_true[missing] - imputed[missing]
    return math.sqrt(float(np.mean(diff * diff)))


def post_impute_accuracy(x_train: np.ndarray, y_train: np.ndarray,
                         x_test: np.ndarray, y_test: np.ndarray,
                         seed: int = 0, epochs: int = CLASSIFIER_EPOCHS,
                         lr: float = 1e-3, batch_size: int = 64) -> float:
    """Accuracy of a d -> 64 -> C relu classifier trained on imputed data."""
    x_train = ad.as_matrix(x_train, "x_train")
    x_test = ad.as_matrix(x_test, "x_test")
    y_train = np.asarray(y_train, dtype=np.int64)
    y_test = np.asarray(y_test, dtype=np.int64)
    n_classes = int(max(y_train.max(), y_test.max())) + 1
    if n_classes < 2:
        raise ConfigError("classification needs at least two classes")

    net = Mlp(MlpSpec((x_train.shape[1], CLASSIFIER_HIDDEN, n_classes),
                      hidden="relu", output="linear"),
              derive_rng(seed, "clf_init"))
    opt = ad.Adam(net.params, lr=lr)
    shuffle = derive_rng(seed, "clf_shuffle")
    n = x_train.shape[0]
    batch = n if n < batch_size else batch_size
    for _ in range(epochs):
        perm = shuffle.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start:start + batch]
            loss = ad.softmax_xent(net.forward_node(ad.constant(x_train[idx])),
                                   y_train[idx])
            ad.backward(loss)
            ad.clip_global_norm(net.params)
            opt.step()
    logits = net.forward_array(x_test)
    return float((logits.argmax(axis=1) == y_test).mean())


@dataclass
class ScoreReport:
    """Aggregated scores for one configuration."""

    metric: str
    mean: float
    std: float
    per_repeat: list = field(default_factory=list)
    per_fold: list | None = None
    alpha: float = 0.0
    sample_curve: LossCurve | None = None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "mean": self.mean,
            "std": self.std,
            "per_repeat": list(self.per_repeat),
            "per_fold": self.per_fold,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ScoreReport":
        return cls(metric=raw["metric"], mean=raw["mean"], std=raw["std"],
                   per_repeat=list(raw["per_repeat"]),
                   per_fold=raw.get("per_fold"), alpha=raw.get("alpha", 0.0))


def _population_std(values) -> float:
    return float(np.std(np.asarray(values, dtype=np.float64)))


def cross_validated_run(dataset: Dataset, mechanism: str, rate: float,
                        model_kind: str, misa: MisaConfig, repeats: int,
                        master_seed: int, folds: int = 5,
                        observed_fraction: float = 0.3,
                        plan: TrainPlan | None = None) -> ScoreReport:
    """k-fold imputation scoring repeated with fresh masks; see module doc."""
    if repeats < 1:
        raise ConfigError(f"repeats must be positive, got {repeats}")
    plan = plan if plan is not None else TrainPlan()
    X = dataset.X
    n = X.shape[0]
    scaled_full, _ = minmax_scale(X)

    per_fold: list[list[float]] = []
    sample_curve: LossCurve | None = None
    for r in range(repeats):
        mask = generate_mask(scaled_full,
                             MissSpec(mechanism, rate, observed_fraction,
                                      seed=derive_seed(master_seed, "mask", r)))
        assignment = make_folds(n, folds, derive_seed(master_seed, "folds", r))
        fold_scores = []
        for f in range(folds):
            test_rows = assignment == f
            train_rows = ~test_rows
            run_index = r * folds + f
            x_tr, params = minmax_scale(X[train_rows])
            x_te = apply_scale(X[test_rows], params, clip=True)
            m_tr, m_te = mask[train_rows], mask[test_rows]

            model = build_model(model_kind, X.shape[1],
                                derive_seed(master_seed, "init", run_index))
            run_plan = replace(plan, seed=derive_seed(master_seed, "train",
                                                      run_index))
            curve = train(model, x_tr, m_tr, run_plan, misa)
            if sample_curve is None:
                sample_curve = curve
            draws = model.eval_draws(
                derive_rng(master_seed, "evalfill", run_index), x_te.shape)
            imputed = model.imputation_array(x_te, m_te, draws)
            fold_scores.append(rmse_missing(x_te, imputed, m_te))
        per_fold.append(fold_scores)

    per_repeat = [float(np.mean(scores)) for scores in per_fold]
    spread = per_repeat if repeats >= 2 else per_fold[0]
    return ScoreReport(metric="rmse",
                       mean=float(np.mean(per_repeat)),
                       std=_population_std(spread),
                       per_repeat=per_repeat,
                       per_fold=per_fold,
                       alpha=sample_curve.alpha if sample_curve else 0.0,
                       sample_curve=sample_curve)


def utility_run(dataset: Dataset, mechanism: str, rate: float,
                model_kind: str, misa: MisaConfig, seeds,
                observed_fraction: float = 0.3, train_fraction: float = 0.8,
                plan: TrainPlan | None = None,
                classifier_epochs: int = CLASSIFIER_EPOCHS) -> ScoreReport:
    """Downstream-accuracy protocol: per seed, mask the whole dataset, train
    the imputer on all rows, impute, then train a classifier on an 80/20
    split of the imputed data. Masks and splits depend only on the seed, so
    baseline and augmented variants see identical corruption."""
    if dataset.y is None:
        raise ConfigError(f"dataset {dataset.name!r} has no labels")
    plan = plan if plan is not None else TrainPlan()
    scaled, _ = minmax_scale(dataset.X)
    n = scaled.shape[0]
    n_train = int(round(train_fraction * n))
    if n_train < 1 or n_train >= n:
        raise ConfigError(f"train fraction {train_fraction} leaves no split")

    accuracies = []
    sample_curve: LossCurve | None = None
    for s in seeds:
        mask = generate_mask(scaled, MissSpec(mechanism, rate, observed_fraction,
                                              seed=derive_seed(s, "mask")))
        model = build_model(model_kind, scaled.shape[1], derive_seed(s, "init"))
        run_plan = replace(plan, seed=derive_seed(s, "train"))
        curve = train(model, scaled, mask, run_plan, misa)
        if sample_curve is None:
            sample_curve = curve
        draws = model.eval_draws(derive_rng(s, "evalfill"), scaled.shape)
        imputed = model.imputation_array(scaled, mask, draws)

        perm = derive_rng(s, "split").permutation(n)
        tr, te = perm[:n_train], perm[n_train:]
        accuracies.append(post_impute_accuracy(
            imputed[tr], dataset.y[tr], imputed[te], dataset.y[te],
            seed=derive_seed(s, "classifier"), epochs=classifier_epochs))

    return ScoreReport(metric="accuracy",
                       mean=float(np.mean(accuracies)),
                       std=_population_std(accuracies),
                       per_repeat=[float(a) for a in accuracies],
                       per_fold=None,
                       alpha=sample_curve.alpha if sample_curve else 0.0,
                       sample_curve=sample_curve)
