"""Missingness augmentation: re-mask the model's own imputation and demand
the original observations back.

Given a batch with observed mask m and the composed imputation x_G, each
training step draws an artificial mask whose keep probability per row is
that row's observed fraction (rows with little data get re-masked hard),
builds the augmented sample

    x_aug = art .* x_G + (1 - art) .* z

with z following the model's fill convention, reconstructs it with the same
generator, and penalizes squared error on the support of entries that are
truly observed (m = 1) but artificially hidden (art = 0):

    aug_loss = || m .* (1 - art) .* (x_aug_G - x) ||^2

The hybrid objective weights the per-support-entry mean of that penalty
against the model's own loss: l_ori + alpha * l_aug. By default x_G enters
the augmented branch as a constant (no gradient back through the first
imputation); backprop_through_imputation=True keeps the full path on the
tape. The artificial mask and fill noise come from a dedicated RNG stream so
a run with alpha = 0 consumes exactly the same model-stream draws as a
baseline run and reproduces it bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError
from .models import compose_node

DEFAULT_ALPHA = {"dae": 5.0, "gain": 100.0}
ALPHA_GRID = (1.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0)


@dataclass(frozen=True)
class MisaConfig:
    """Augmentation switch: alpha is a weight, "auto" or None for the
    model's default; the backprop flag keeps gradients flowing through the
    first imputation instead of treating it as data."""

    enabled: bool = False
    alpha: float | str | None = None
    backprop_through_imputation: bool = False


def sample_artificial_mask(mask_row: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One artificial mask row; keep probability = the row's observed fraction."""
    row = np.asarray(mask_row, dtype=np.float64)
    if row.ndim != 1 or row.size == 0:
        raise ShapeError(f"mask row must be 1-D and non-empty, got shape {row.shape}")
    if not np.isin(row, (0.0, 1.0)).all():
        raise ConfigError("mask row must be binary 0/1")
    return (rng.random(row.size) < row.mean()).astype(np.float64)


def sample_artificial_masks(m: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Batch version; row i keeps entries with probability mean(m[i]).

    Consumes the generator exactly like row-by-row calls of
    sample_artificial_mask, so the two agree bit for bit on a shared seed.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] == 0:
        raise ShapeError(f"mask must be 2-D with columns, got shape {m.shape}")
    keep_p = m.mean(axis=1, keepdims=True)
    return (rng.random(m.shape) < keep_p).astype(np.float64)


def build_augmented(gen_imputed: np.ndarray, art_mask: np.ndarray,
                    noise: np.ndarray) -> np.ndarray:
    """Augmented input: imputation where kept, fill noise where hidden."""
    if not (gen_imputed.shape == art_mask.shape == noise.shape):
        raise ShapeError(f"shapes {gen_imputed.shape}, {art_mask.shape}, "
                         f"{noise.shape} differ")
    return art_mask * gen_imputed + (1.0 - art_mask) * noise


def augmented_impute(model, aug_filled: np.ndarray, art_mask: np.ndarray) -> ad.Node:
    """Second imputation pass on the augmented sample (tape output)."""
    g = model.generator_node(aug_filled, art_mask)
    return compose_node(aug_filled, art_mask, g)


def augmented_impute_node(model, aug_filled: ad.Node, art_mask: np.ndarray) -> ad.Node:
    """Same with the augmented sample itself on the tape (backprop-through)."""
    g = model.generator_node_input(aug_filled, art_mask)
    kept = ad.mul(ad.constant(art_mask), aug_filled)
    return ad.add(ad.mul(ad.constant(1.0 - art_mask), g), kept)


def aug_loss(aug_imputed: ad.Node, x: np.ndarray, art_mask: np.ndarray,
             m: np.ndarray) -> ad.Node:
    """Squared reconstruction penalty on observed-but-hidden entries."""
    if x.shape != aug_imputed.value.shape or art_mask.shape != x.shape \
            or m.shape != x.shape:
        raise ShapeError(f"shapes {aug_imputed.value.shape}, {x.shape}, "
                         f"{art_mask.shape}, {m.shape} differ")
    support = m * (1.0 - art_mask)
    diff = ad.mul(ad.constant(support), ad.sub(aug_imputed, ad.constant(x)))
    return ad.reduce_sum_squares(diff)


def _aug_fill_noise(model, rng: np.random.Generator, shape) -> np.ndarray:
    """Fill noise for hidden slots, following the model's convention."""
    if model.fill_kind == "zeros":
        return np.zeros(shape)
    if model.fill_kind == "uniform":
        return rng.uniform(0.0, 0.01, size=shape)
    raise ConfigError(f"unknown fill kind {model.fill_kind!r}")


def aug_branch(model, x: np.ndarray, m: np.ndarray, draws: dict,
               aug_rng: np.random.Generator, backprop_through: bool,
               with_grad: bool):
    """Build the augmented branch for one batch.

    Returns (l_aug_node_or_value, support_count). With with_grad=False the
    branch is evaluated in plain arrays (used when alpha = 0, where only the
    recorded value matters). The aug_rng draws are the same either way: the
    artificial mask, then fill noise if the model uses a stochastic fill.
    """
    art = sample_artificial_masks(m, aug_rng)
    noise = _aug_fill_noise(model, aug_rng, x.shape)
    support = m * (1.0 - art)
    count = float(support.sum())

    if not with_grad:
        x_g = model.imputation_array(x, m, draws)
        aug_filled = build_augmented(x_g, art, noise)
        g = model.impute_raw(aug_filled, art)
        aug_imputed = art * aug_filled + (1.0 - art) * g
        value = float((support * (aug_imputed - x) ** 2).sum())
        return value, count

    if backprop_through:
        x_g_node = model.imputation_node(x, m, draws)
        aug_filled = ad.add(ad.mul(ad.constant(art), x_g_node),
                            ad.constant((1.0 - art) * noise))
        aug_imputed = augmented_impute_node(model, aug_filled, art)
    else:
        x_g = model.imputation_array(x, m, draws)
        aug_filled = build_augmented(x_g, art, noise)
        aug_imputed = augmented_impute(model, aug_filled, art)
    return aug_loss(aug_imputed, x, art, m), count


def hybrid_step(model, x: np.ndarray, m: np.ndarray, alpha: float,
                opt: ad.Adam, adv_opt: ad.Adam | None,
                model_rng: np.random.Generator, aug_rng: np.random.Generator,
                misa_enabled: bool = True, backprop_through: bool = False,
                max_norm: float = 5.0) -> tuple[float, float]:
    """One training step of the hybrid objective l_ori + alpha * l_aug.

    Returns (l_ori, l_aug) where l_aug is the per-support-entry mean of the
    squared penalty; the recorded hybrid loss is exactly
    l_ori + alpha * l_aug. With alpha = 0 the augmented branch is evaluated
    off the tape, so the parameter update is bit-identical to a baseline
    step while l_aug is still measured. With misa_enabled=False the aug
    stream is never touched and l_aug is reported as 0.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be non-negative, got {alpha}")
    draws = model.draw_noise(model_rng, x.shape)
    if adv_opt is not None:
        model.adversary_step(x, m, draws, adv_opt, max_norm)
    l_ori_node = model.ori_loss(x, m, draws)

    l_aug = 0.0
    total = l_ori_node
    if misa_enabled:
        branch, count = aug_branch(model, x, m, draws, aug_rng,
                                   backprop_through, with_grad=alpha != 0.0)
        denom = max(count, 1.0)
        if alpha != 0.0:
            l_aug_node = ad.scale(branch, 1.0 / denom)
            l_aug = float(l_aug_node.value)
            total = ad.add(l_ori_node, ad.scale(l_aug_node, alpha))
        else:
            l_aug = branch / denom

    ad.backward(total)
    ad.clip_global_norm(model.params, max_norm)
    opt.step()
    return float(l_ori_node.value), l_aug


def pick_alpha(l_ori: float, l_aug: float) -> float:
    """Grid value closest in log space to the measured loss ratio."""
    if l_aug <= 0.0:
        warnings.warn("augmented loss is zero on the probe batch; "
                      "falling back to alpha = 1", RuntimeWarning, stacklevel=2)
        return 1.0
    if l_ori <= 0.0:
        return ALPHA_GRID[0]
    r = math.log(l_ori / l_aug)
    return min(ALPHA_GRID, key=lambda a: abs(r - math.log(a)))


def auto_alpha(model, x: np.ndarray, m: np.ndarray,
               rng: np.random.Generator, backprop_through: bool = False) -> float:
    """Measure l_ori / l_aug on one batch before any update and pick alpha.

    Forward-only: no parameter changes, and the caller hands in a dedicated
    generator so the training streams stay untouched.
    """
    draws = model.draw_noise(rng, x.shape)
    l_ori = float(model.ori_loss(x, m, draws).value)
    branch, count = aug_branch(model, x, m, draws, rng, backprop_through,
                               with_grad=False)
    return pick_alpha(l_ori, branch / max(count, 1.0))


def resolve_alpha(model, cfg: MisaConfig, x: np.ndarray, m: np.ndarray,
                  probe_rng: np.random.Generator) -> float:
    """Concrete weight for a run: explicit value, model default, or auto."""
    if not cfg.enabled:
        return 0.0
    if cfg.alpha is None:
        return DEFAULT_ALPHA[model.kind]
    if cfg.alpha == "auto":
        return auto_alpha(model, x, m, probe_rng,
                          cfg.backprop_through_imputation)
    value = float(cfg.alpha)
    if value < 0:
        raise ConfigError(f"alpha must be non-negative, got {value}")
    return value
