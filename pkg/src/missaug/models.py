"""Deep generative imputers sharing one forward contract.

Both models consume the filled data concatenated with the mask, [x_filled, m]
of width 2d, and emit a full d-column reconstruction through a sigmoid head,
so every raw output lies in [0, 1]. The final imputation keeps observed
entries untouched:

    imputed = m .* x + (1 - m) .* g_out

DaeImputer is an overcomplete denoising autoencoder: tanh hidden stack of
widths (2d+7, 2d+14, 2d+7), zero fill, and a denoising loss where observed
entries are additionally dropped with probability 0.5; the squared error runs
over the kept entries only, normalized by their count.

GainImputer is a generator/discriminator pair, both relu stacks of hidden
widths (2d, d). The generator fills missing slots with uniform [0, 0.01)
noise; the discriminator receives the composed matrix plus a hint that
reveals the true mask at 90% of entries and 0.5 elsewhere, and its
cross-entropy is averaged over the 0.5 entries only. Training alternates one
discriminator step with one generator step per batch; the generator loss is
the mean of -log D over missing entries plus 100x the mean squared
reconstruction error over observed entries.

Every forward has a tape variant (Nodes, for training) and an array variant
(plain numpy, for evaluation); both compute identical bits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError

DAE_CORRUPT_PROB = 0.5
HINT_REVEAL_PROB = 0.9
GAIN_RECON_WEIGHT = 100.0


def compose_imputation(x: np.ndarray, m: np.ndarray, g_out: np.ndarray) -> np.ndarray:
    """Keep observed entries, take the generator's values elsewhere."""
    x, m, g_out = (np.asarray(a, dtype=np.float64) for a in (x, m, g_out))
    if not (x.shape == m.shape == g_out.shape):
        raise ShapeError(f"compose: shapes {x.shape}, {m.shape}, {g_out.shape} differ")
    return m * x + (1.0 - m) * g_out


def compose_node(x: np.ndarray, m: np.ndarray, g_out: ad.Node) -> ad.Node:
    """Tape version of compose_imputation; x and m are constants."""
    if x.shape != g_out.value.shape or m.shape != g_out.value.shape:
        raise ShapeError(f"compose: shapes {x.shape}, {m.shape}, "
                         f"{g_out.value.shape} differ")
    return ad.add(ad.mul(ad.constant(1.0 - m), g_out), ad.constant(m * x))


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple
    hidden: str
    output: str = "sigmoid"


_NODE_ACTS = {"tanh": ad.tanh, "relu": ad.relu, "sigmoid": ad.sigmoid,
              "linear": lambda n: n}
_ARRAY_ACTS = {
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
    "sigmoid": ad.sigmoid_array,
    "linear": lambda x: x,
}


class Mlp:
    """Dense stack with Glorot-uniform weights and zero biases."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator):
        if len(spec.widths) < 2:
            raise ConfigError(f"mlp needs at least 2 widths, got {spec.widths}")
        self.spec = spec
        self.params: list[ad.Node] = []
        for fan_in, fan_out in zip(spec.widths, spec.widths[1:]):
            self.params.append(ad.param(ad.glorot_uniform(rng, fan_in, fan_out)))
            self.params.append(ad.param(np.zeros((1, fan_out))))

    def _act_name(self, layer: int) -> str:
        last = len(self.params) // 2 - 1
        return self.spec.output if layer == last else self.spec.hidden

    def forward_node(self, x: ad.Node) -> ad.Node:
        h = x
        for i in range(0, len(self.params), 2):
            h = ad.affine(h, self.params[i], self.params[i + 1])
            h = _NODE_ACTS[self._act_name(i // 2)](h)
        return h

    def forward_array(self, x: np.ndarray) -> np.ndarray:
        h = x
        for i in range(0, len(self.params), 2):
            h = h @ self.params[i].value + self.params[i + 1].value
            h = _ARRAY_ACTS[self._act_name(i // 2)](h)
        return h


def _check_pair(x: np.ndarray, m: np.ndarray, d: int) -> None:
    if x.shape != m.shape:
        raise ShapeError(f"data {x.shape} and mask {m.shape} differ")
    if x.ndim != 2 or x.shape[1] != d:
        raise ShapeError(f"expected n x {d} input, got {x.shape}")


class DaeImputer:
    """Denoising autoencoder imputer; zero fill."""

    kind = "dae"
    fill_kind = "zeros"

    def __init__(self, d: int, rng: np.random.Generator):
        if d < 1:
            raise ConfigError(f"feature count must be positive, got {d}")
        self.d = d
        widths = (2 * d, 2 * d + 7, 2 * d + 14, 2 * d + 7, d)
        self.net = Mlp(MlpSpec(widths, hidden="tanh"), rng)

    @property
    def params(self) -> list[ad.Node]:
        return self.net.params

    def generator_node(self, x_filled: np.ndarray, m: np.ndarray) -> ad.Node:
        _check_pair(x_filled, m, self.d)
        stacked = np.concatenate((x_filled, m), axis=1)
        return self.net.forward_node(ad.constant(stacked))

    def generator_node_input(self, x_filled: ad.Node, m: np.ndarray) -> ad.Node:
        """Tape variant whose filled input is itself a Node."""
        _check_pair(x_filled.value, m, self.d)
        return self.net.forward_node(ad.concat_cols(x_filled, ad.constant(m)))

    def impute_raw(self, x_filled: np.ndarray, m: np.ndarray) -> np.ndarray:
        """Raw n x d reconstruction from filled data plus mask."""
        _check_pair(x_filled, m, self.d)
        return self.net.forward_array(np.concatenate((x_filled, m), axis=1))

    def draw_noise(self, rng: np.random.Generator, shape) -> dict:
        """Per-batch training randomness: the denoising keep pattern."""
        return {"keep": (rng.random(shape) >= DAE_CORRUPT_PROB).astype(np.float64)}

    def eval_draws(self, rng: np.random.Generator, shape) -> dict:
        return {}

    def adversary_step(self, x, m, draws, opt, max_norm) -> float | None:
        return None

    def ori_loss(self, x: np.ndarray, m: np.ndarray, draws: dict) -> ad.Node:
        return dae_loss(self, x, m, draws["keep"])

    def fill(self, x: np.ndarray, m: np.ndarray, draws: dict) -> np.ndarray:
        return x * m

    def imputation_array(self, x: np.ndarray, m: np.ndarray, draws: dict) -> np.ndarray:
        return compose_imputation(x, m, self.impute_raw(self.fill(x, m, draws), m))

    def imputation_node(self, x: np.ndarray, m: np.ndarray, draws: dict) -> ad.Node:
        return compose_node(x, m, self.generator_node(self.fill(x, m, draws), m))


def dae_loss(model: DaeImputer, x: np.ndarray, m: np.ndarray,
             keep: np.ndarray) -> ad.Node:
    """Denoising reconstruction loss over kept (observed, undropped) entries.

    Dropped entries are presented to the network as missing: the input mask
    is m .* keep and their values are zeroed. With keep all ones and m all
    ones this is plain mean squared error over every entry.
    """
    _check_pair(x, m, model.d)
    if keep.shape != x.shape:
        raise ShapeError(f"keep {keep.shape} and data {x.shape} differ")
    m_kept = m * keep
    g = model.generator_node(x * m_kept, m_kept)
    diff = ad.mul(ad.constant(m_kept), ad.sub(g, ad.constant(x)))
    count = max(float(m_kept.sum()), 1.0)
    return ad.scale(ad.reduce_sum_squares(diff), 1.0 / count)


def gain_hint(m: np.ndarray, reveal: np.ndarray) -> np.ndarray:
    """Hint matrix: true mask where revealed, 0.5 elsewhere."""
    if m.shape != reveal.shape:
        raise ShapeError(f"mask {m.shape} and reveal {reveal.shape} differ")
    return reveal * m + 0.5 * (1.0 - reveal)


class GainImputer:
    """Generative-adversarial imputer; uniform fill plus hint mechanism."""

    kind = "gain"
    fill_kind = "uniform"

    def __init__(self, d: int, rng: np.random.Generator):
        if d < 1:
            raise ConfigError(f"feature count must be positive, got {d}")
        self.d = d
        widths = (2 * d, 2 * d, d, d)
        # draw order is fixed: generator weights first, then discriminator
        self.gen = Mlp(MlpSpec(widths, hidden="relu"), rng)
        self.disc = Mlp(MlpSpec(widths, hidden="relu"), rng)

    @property
    def params(self) -> list[ad.Node]:
        return self.gen.params

    @property
    def disc_params(self) -> list[ad.Node]:
        return self.disc.params

    def generator_node(self, x_filled: np.ndarray, m: np.ndarray) -> ad.Node:
        _check_pair(x_filled, m, self.d)
        stacked = np.concatenate((x_filled, m), axis=1)
        return self.gen.forward_node(ad.constant(stacked))

    def generator_node_input(self, x_filled: ad.Node, m: np.ndarray) -> ad.Node:
        """Tape variant whose filled input is itself a Node."""
        _check_pair(x_filled.value, m, self.d)
        return self.gen.forward_node(ad.concat_cols(x_filled, ad.constant(m)))

    def impute_raw(self, x_filled: np.ndarray, m: np.ndarray) -> np.ndarray:
        """Raw n x d reconstruction from filled data plus mask."""
        _check_pair(x_filled, m, self.d)
        return self.gen.forward_array(np.concatenate((x_filled, m), axis=1))

    def draw_noise(self, rng: np.random.Generator, shape) -> dict:
        """Per-batch training randomness: fill noise, then hint reveals."""
        return {
            "z": rng.uniform(0.0, 0.01, size=shape),
            "reveal": (rng.random(shape) < HINT_REVEAL_PROB).astype(np.float64),
        }

    def eval_draws(self, rng: np.random.Generator, shape) -> dict:
        return {"z": rng.uniform(0.0, 0.01, size=shape)}

    def fill(self, x: np.ndarray, m: np.ndarray, draws: dict) -> np.ndarray:
        return x * m + draws["z"] * (1.0 - m)

    def adversary_step(self, x, m, draws, opt, max_norm: float = 5.0) -> float:
        """One discriminator update; the composed matrix enters as a constant."""
        x_filled = self.fill(x, m, draws)
        g_val = self.impute_raw(x_filled, m)
        x_hat = compose_imputation(x, m, g_val)
        hint = gain_hint(m, draws["reveal"])
        d_in = np.concatenate((x_hat, hint), axis=1)
        d_prob = self.disc.forward_node(ad.constant(d_in))
        loss = ad.bce_loss(d_prob, m, (hint == 0.5).astype(np.float64))
        ad.backward(loss)
        ad.clip_global_norm(self.disc.params, max_norm)
        opt.step()
        return float(loss.value)

    def ori_loss(self, x: np.ndarray, m: np.ndarray, draws: dict) -> ad.Node:
        return gain_generator_loss(self, x, m, draws)

    def imputation_array(self, x: np.ndarray, m: np.ndarray, draws: dict) -> np.ndarray:
        return compose_imputation(x, m, self.impute_raw(self.fill(x, m, draws), m))

    def imputation_node(self, x: np.ndarray, m: np.ndarray, draws: dict) -> ad.Node:
        return compose_node(x, m, self.generator_node(self.fill(x, m, draws), m))


def gain_discriminator_loss(d_prob: ad.Node, m: np.ndarray,
                            hint: np.ndarray) -> ad.Node:
    """BCE of D's mask estimate against m, over hint = 0.5 entries only."""
    return ad.bce_loss(d_prob, m, (hint == 0.5).astype(np.float64))


def gain_generator_loss(model: GainImputer, x: np.ndarray, m: np.ndarray,
                        draws: dict) -> ad.Node:
    """Adversarial term over missing entries plus weighted reconstruction."""
    _check_pair(x, m, model.d)
    x_filled = model.fill(x, m, draws)
    g = model.generator_node(x_filled, m)
    x_hat = compose_node(x, m, g)
    hint = gain_hint(m, draws["reveal"])
    d_prob = model.disc.forward_node(ad.concat_cols(x_hat, ad.constant(hint)))

    miss = 1.0 - m
    n_miss = max(float(miss.sum()), 1.0)
    adv = ad.scale(ad.reduce_sum(ad.mul(ad.constant(miss), ad.log_clamped(d_prob))),
                   -1.0 / n_miss)
    n_obs = max(float(m.sum()), 1.0)
    rec = ad.scale(ad.reduce_sum_squares(ad.mul(ad.constant(m),
                                                ad.sub(g, ad.constant(x)))),
                   1.0 / n_obs)
    return ad.add(adv, ad.scale(rec, GAIN_RECON_WEIGHT))


def build_model(kind: str, d: int, seed: int):
    """Construct an imputer from its tag with seeded initialization."""
    rng = np.random.default_rng(seed)
    if kind == "dae":
        return DaeImputer(d, rng)
    if kind == "gain":
        return GainImputer(d, rng)
    raise ConfigError(f"unknown model kind {kind!r}")


def save_checkpoint(model, path) -> None:
    """Persist kind, width and every parameter; round-trips bit-exactly."""
    meta = {"kind": model.kind, "d": model.d}
    arrays = {}
    nets = [("g", model.params)]
    if model.kind == "gain":
        nets.append(("a", model.disc_params))
    for tag, params in nets:
        for i, p in enumerate(params):
            arrays[f"{tag}{i}"] = p.value
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)


def load_checkpoint(path):
    with np.load(path) as bundle:
        meta = json.loads(bytes(bundle["meta"]).decode())
        model = build_model(meta["kind"], meta["d"], seed=0)
        for i, p in enumerate(model.params):
            p.value = bundle[f"g{i}"].astype(np.float64)
        if meta["kind"] == "gain":
            for i, p in enumerate(model.disc_params):
                p.value = bundle[f"a{i}"].astype(np.float64)
    return model
