"""Missingness simulators: MCAR, MAR and MNAR mask generation plus fills.

Masks are float64 matrices of 0/1 where 1 marks an observed entry. Every
generator is a pure function of (data, parameters, seed): it builds a fresh
numpy Generator from the seed, so the same call always yields the same mask.

MAR draws a never-missing conditioning subset of columns and makes the
remaining columns missing with probability sigmoid(score + b), where scores
are a random linear map of the conditioning columns and the global intercept
b is fitted by bisection so the mean missing probability hits the target
rate. MNAR is the same construction except the conditioning inputs are first
hidden by an MCAR self-mask at the target rate (zero-filled before scores),
and that self-mask becomes the conditioning columns' rows of the returned
mask, so a column's missingness depends on its own hidden values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

BIAS_BRACKET = 30.0
BIAS_TOL = 1e-4
BIAS_MAX_ITER = 200


@dataclass(frozen=True)
class MissSpec:
    """Mask-generation request: mechanism tag, target missing rate, the
    conditioning-subset fraction for MAR/MNAR, and the seed."""

    mechanism: str
    rate: float
    observed_fraction: float = 0.3
    seed: int = 0


def _check_rate(rate: float) -> None:
    if not 0.0 < rate < 1.0:
        raise ConfigError(f"missing rate must be in (0, 1), got {rate}")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def fit_bias(scores: np.ndarray, target_rate: float) -> float:
    """Fit the intercept b so mean(sigmoid(scores + b)) equals target_rate.

    Bisection on [-30, 30] to within 1e-4 of the target, at most 200
    iterations; raises NumericError when the bracket does not contain a
    solution or the tolerance is not reached.
    """
    _check_rate(target_rate)
    s = np.asarray(scores, dtype=np.float64).ravel()

    def achieved(b: float) -> float:
        return float(_stable_sigmoid(s + b).mean())

    lo, hi = -BIAS_BRACKET, BIAS_BRACKET
    if achieved(lo) > target_rate or achieved(hi) < target_rate:
        raise NumericError(
            f"target rate {target_rate} not bracketed by bias in [{lo}, {hi}]")
    for _ in range(BIAS_MAX_ITER):
        mid = 0.5 * (lo + hi)
        value = achieved(mid)
        if abs(value - target_rate) <= BIAS_TOL and hi - lo <= 1e-10:
            return mid
        if value < target_rate:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    if abs(achieved(mid) - target_rate) <= BIAS_TOL:
        return mid
    raise NumericError(f"bias fit did not reach tolerance {BIAS_TOL} "
                       f"in {BIAS_MAX_ITER} iterations")


def mcar_mask(n: int, d: int, rate: float, seed: int = 0) -> np.ndarray:
    """Mask each entry independently with the given probability."""
    _check_rate(rate)
    if n < 1 or d < 1:
        raise ConfigError(f"mask shape must be positive, got {n} x {d}")
    rng = np.random.default_rng(seed)
    return (rng.random((n, d)) >= rate).astype(np.float64)


def _logistic_mask(X: np.ndarray, rate: float, observed_fraction: float,
                   rng: np.random.Generator, self_mask_rate: float | None):
    """Shared MAR/MNAR core; returns (mask, scores) for white-box tests.

    Draw order: conditioning subset, weights, optional self-mask, then the
    Bernoulli draws for the maskable columns.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"data must be 2-D, got shape {X.shape}")
    _check_rate(rate)
    if not 0.0 < observed_fraction < 1.0:
        raise ConfigError(
            f"observed_fraction must be in (0, 1), got {observed_fraction}")
    n, d = X.shape
    n_cond = math.ceil(observed_fraction * d)
    if n_cond >= d:
        raise ConfigError(
            f"d={d} leaves no maskable columns beside a conditioning "
            f"subset of {n_cond}")

    cond_cols = rng.choice(d, size=n_cond, replace=False)
    maskable = np.setdiff1d(np.arange(d), cond_cols)
    weights = rng.standard_normal((n_cond, maskable.size)) / math.sqrt(n_cond)

    inputs = X[:, cond_cols]
    self_mask = None
    if self_mask_rate is not None:
        self_mask = (rng.random((n, n_cond)) >= self_mask_rate).astype(np.float64)
        inputs = inputs * self_mask

    scores = inputs @ weights
    bias = fit_bias(scores, rate)
    probs = _stable_sigmoid(scores + bias)

    mask = np.ones((n, d))
    mask[:, maskable] = (rng.random((n, maskable.size)) >= probs).astype(np.float64)
    if self_mask is not None:
        mask[:, cond_cols] = self_mask
    return mask, scores


def mar_mask(X: np.ndarray, rate: float, observed_fraction: float = 0.3,
             seed: int = 0) -> np.ndarray:
    """Missing-at-random mask; the conditioning subset is never missing."""
    rng = np.random.default_rng(seed)
    mask, _ = _logistic_mask(X, rate, observed_fraction, rng, None)
    return mask


def mnar_mask(X: np.ndarray, rate: float, observed_fraction: float = 0.3,
              seed: int = 0) -> np.ndarray:
    """Missing-not-at-random mask via self-masked logistic conditioning."""
    rng = np.random.default_rng(seed)
    mask, _ = _logistic_mask(X, rate, observed_fraction, rng, rate)
    return mask


def generate_mask(X: np.ndarray, spec: MissSpec) -> np.ndarray:
    """Dispatch on the mechanism tag."""
    if spec.mechanism == "mcar":
        X = np.asarray(X)
        if X.ndim != 2:
            raise ShapeError(f"data must be 2-D, got shape {X.shape}")
        return mcar_mask(X.shape[0], X.shape[1], spec.rate, spec.seed)
    if spec.mechanism == "mar":
        return mar_mask(X, spec.rate, spec.observed_fraction, spec.seed)
    if spec.mechanism == "mnar":
        return mnar_mask(X, spec.rate, spec.observed_fraction, spec.seed)
    raise ConfigError(f"unknown mechanism {spec.mechanism!r}")


def fill_missing(X: np.ndarray, mask: np.ndarray, kind: str,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Replace masked-out entries: kind 'zeros' or 'uniform' on [0, 0.01)."""
    X = np.asarray(X, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if X.shape != mask.shape:
        raise ShapeError(f"data {X.shape} and mask {mask.shape} differ")
    if kind == "zeros":
        return X * mask
    if kind == "uniform":
        if rng is None:
            raise ConfigError("uniform fill needs a random generator")
        noise = rng.uniform(0.0, 0.01, size=X.shape)
        return X * mask + noise * (1.0 - mask)
    raise ConfigError(f"unknown fill kind {kind!r}")


def save_mask_csv(path, mask: np.ndarray) -> None:
    """Write a mask as comma-separated 0/1 integers."""
    np.savetxt(path, np.asarray(mask, dtype=np.int64), fmt="%d", delimiter=",")


def load_mask_csv(path) -> np.ndarray:
    mask = np.loadtxt(path, delimiter=",", ndmin=2).astype(np.float64)
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ConfigError(f"{path} holds values other than 0/1")
    return mask
