"""Alternating min-max training of generator and discriminator.

One training step = d-steps-per-g-step discriminator updates on a fresh
pair batch followed by one generator update on the same batch. All four
per-pairing loss components are logged every step, even when their
lambdas are zero (evaluation-only logging reads the discriminator but
never writes). The optimal-discriminator phase re-runs the discriminator
side alone with the generator frozen, verified by checksum.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph, Tensor, backward
from .losses import LossBreakdown, LossSpec, d_loss_total, g_loss, l1_loss
from .nets import (
    Discriminator,
    Generator,
    MlpSpec,
    bind_params,
    disc_forward,
    gen_forward,
    params_from_jsonable,
    params_to_jsonable,
)
from .pairing import ConditionalDataset, assemble_pairings, sample_pair_batch

CHECKPOINT_FORMAT_VERSION = 1

METRICS_COLUMNS = (
    "step", "d_real_cond", "d_gen_cond", "d_real_ac", "d_gen_ac", "d_total",
    "g_adv", "g_recon", "g_total", "grad_norm_G", "grad_norm_D",
)

_PHASE_STREAM = 0x0D  # decorrelates the phase rng from the training rng


class TrainingDiverged(RuntimeError):
    """A loss term went non-finite; the offending term is named."""


class FreezeViolation(RuntimeError):
    """Generator parameters changed during a frozen-generator phase."""


class CheckpointError(ValueError):
    """Malformed checkpoint file or unsupported format version."""


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 64
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)
    d_steps_per_g_step: int = 1
    checkpoint_every: int = 0  # steps; 0 disables intermediate checkpoints
    ema_decay: float = 0.0  # 0 disables the parameter EMA
    ac_mode: str = "within_batch"

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.epochs < 0 or self.d_steps_per_g_step < 1:
            raise ValueError("epochs must be >= 0 and d_steps_per_g_step >= 1")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float, beta1: float, beta2: float, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place."""
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} grads")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"param shape {p.shape} vs grad shape {g.shape}")
        m[...] = beta1 * m + (1.0 - beta1) * g
        v[...] = beta2 * v + (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


@dataclass
class TrainState:
    adam_g: AdamState
    adam_d: AdamState
    rng: np.random.Generator
    step: int = 0
    ema_g: list[np.ndarray] | None = None

    @classmethod
    def fresh(cls, gen: Generator, disc: Discriminator, config: TrainConfig) -> "TrainState":
        ema = [p.copy() for p in gen.params] if config.ema_decay > 0 else None
        return cls(adam_g=AdamState.for_params(gen.params),
                   adam_d=AdamState.for_params(disc.params),
                   rng=np.random.default_rng(config.seed), ema_g=ema)


@dataclass
class RunLog:
    rows: list[dict] = field(default_factory=list)
    epoch_snapshots: list[dict] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(METRICS_COLUMNS) + "\n")
            for row in self.rows:
                cells = [str(row["step"])] + [repr(float(row[c])) for c in METRICS_COLUMNS[1:]]
                fh.write(",".join(cells) + "\n")


def params_checksum(params: list[np.ndarray]) -> str:
    h = hashlib.sha256()
    for p in params:
        h.update(str(p.shape).encode())
        h.update(p.tobytes())
    return h.hexdigest()


def _mean_abs_grad(grads: list[np.ndarray]) -> float:
    total = sum(float(np.abs(g).sum()) for g in grads)
    count = sum(g.size for g in grads)
    return total / count


def _draw_noise(gen: Generator, batch_size: int, rng: np.random.Generator):
    if gen.noise_dim == 0:
        return None
    return rng.standard_normal((batch_size, gen.noise_dim))


def _check_finite(value: float, term: str, step: int) -> None:
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite {term} at step {step}")


def _discriminator_update(gen, disc, ds, config, batch, z, adam_d, step):
    x = ds.xs[batch.idx]
    y_g = gen_forward(gen, x, z).values
    pairs = assemble_pairings(ds, batch, y_g)

    graph = Graph()
    d_params = bind_params(disc, graph)
    mode = "logit" if config.loss.is_hinge else "prob"
    outs = [disc_forward(disc, px, py, mode, params=d_params) for px, py in pairs]
    total, breakdown = d_loss_total(*outs, config.loss)
    for name in ("d_real_cond", "d_gen_cond", "d_real_ac", "d_gen_ac", "d_total"):
        _check_finite(getattr(breakdown, name), name, step)

    table = backward(total)
    grads = [table.get(p.node_id, np.zeros_like(p.values)) for p in d_params]
    adam_step(disc.params, grads, adam_d, config.lr, config.beta1, config.beta2)
    return breakdown, _mean_abs_grad(grads)


def _generator_update(gen, disc, ds, config, batch, z, adam_g, step):
    x = ds.xs[batch.idx]
    y_true = ds.ys[batch.idx]

    graph = Graph()
    g_params = bind_params(gen, graph)
    y_g = gen_forward(gen, Tensor(x), Tensor(z) if z is not None else None, params=g_params)
    spec = config.loss
    if spec.is_hinge:
        logit = disc_forward(disc, x, y_g, "logit")
        total = -(logit.mean())
        g_adv = float(total.values)
        g_recon = 0.0
        if spec.recon_weight > 0:
            recon = l1_loss(y_g, Tensor(y_true)) * spec.recon_weight
            g_recon = float(recon.values)
            total = total + recon
    else:
        p = disc_forward(disc, x, y_g, "prob")
        total, g_adv, g_recon = g_loss(p, spec.gen_loss_mode, y_g, Tensor(y_true),
                                       spec.recon_weight)
    _check_finite(g_adv, "g_adv", step)
    _check_finite(g_recon, "g_recon", step)

    table = backward(total)
    grads = [table.get(p.node_id, np.zeros_like(p.values)) for p in g_params]
    adam_step(gen.params, grads, adam_g, config.lr, config.beta1, config.beta2)
    return float(total.values), g_adv, g_recon, _mean_abs_grad(grads)


def _rng_fingerprint(rng: np.random.Generator) -> str:
    return hashlib.sha256(repr(rng.bit_generator.state).encode()).hexdigest()[:16]


def train(gen: Generator, disc: Discriminator, dataset: ConditionalDataset,
          config: TrainConfig, state: TrainState | None = None,
          checkpoint_dir=None) -> tuple[RunLog, TrainState]:
    """Run config.epochs of additional alternating training, in place.

    Pass the state returned by a previous call (or loaded from a
    checkpoint) to resume a run deterministically.
    """
    if state is None:
        state = TrainState.fresh(gen, disc, config)
    steps_per_epoch = len(dataset) // config.batch_size
    if config.epochs > 0 and steps_per_epoch == 0:
        raise ValueError("dataset smaller than one batch")

    log = RunLog()
    for epoch in range(config.epochs):
        for _ in range(steps_per_epoch):
            step = state.step + 1
            batch = sample_pair_batch(dataset, config.batch_size, state.rng, config.ac_mode)
            z = _draw_noise(gen, config.batch_size, state.rng)

            for _ in range(config.d_steps_per_g_step):
                breakdown, gnorm_d = _discriminator_update(
                    gen, disc, dataset, config, batch, z, state.adam_d, step)
            g_total, g_adv, g_recon, gnorm_g = _generator_update(
                gen, disc, dataset, config, batch, z, state.adam_g, step)

            if state.ema_g is not None:
                d = config.ema_decay
                for ema, p in zip(state.ema_g, gen.params):
                    ema[...] = d * ema + (1.0 - d) * p

            state.step = step
            log.rows.append({
                "step": step,
                "d_real_cond": breakdown.d_real_cond,
                "d_gen_cond": breakdown.d_gen_cond,
                "d_real_ac": breakdown.d_real_ac,
                "d_gen_ac": breakdown.d_gen_ac,
                "d_total": breakdown.d_total,
                "g_adv": g_adv,
                "g_recon": g_recon,
                "g_total": g_total,
                "grad_norm_G": gnorm_g,
                "grad_norm_D": gnorm_d,
            })
            if checkpoint_dir is not None and config.checkpoint_every > 0 \
                    and step % config.checkpoint_every == 0:
                save_checkpoint(gen, disc, state, config,
                                f"{checkpoint_dir}/step_{step:08d}.json")
        log.epoch_snapshots.append({
            "epoch": epoch,
            "step": state.step,
            "d_total_mean": float(np.mean([r["d_total"] for r in log.rows[-steps_per_epoch:]])),
            "g_total_mean": float(np.mean([r["g_total"] for r in log.rows[-steps_per_epoch:]])),
            "rng_fingerprint": _rng_fingerprint(state.rng),
        })
    return log, state


def optimal_discriminator_phase(gen: Generator, disc: Discriminator,
                                dataset: ConditionalDataset, config: TrainConfig,
                                epochs: int = 1, plateau_tol: float | None = None,
                                plateau_window: int = 100) -> RunLog:
    """Let the discriminator converge against a frozen generator.

    Default length is one full epoch; with plateau_tol set the phase also
    stops once the windowed moving average of the loss improves by less
    than the tolerance. Any mutation of the generator fails hard.
    """
    before = params_checksum(gen.params)
    rng = np.random.default_rng([config.seed, _PHASE_STREAM])
    adam_d = AdamState.for_params(disc.params)
    steps_per_epoch = len(dataset) // config.batch_size
    if steps_per_epoch == 0:
        raise ValueError("dataset smaller than one batch")

    log = RunLog()
    losses: list[float] = []
    done = False
    for _ in range(epochs):
        for _ in range(steps_per_epoch):
            step = len(losses) + 1
            batch = sample_pair_batch(dataset, config.batch_size, rng, config.ac_mode)
            z = _draw_noise(gen, config.batch_size, rng)
            breakdown, gnorm_d = _discriminator_update(
                gen, disc, dataset, config, batch, z, adam_d, step)
            losses.append(breakdown.d_total)
            log.rows.append({
                "step": step,
                "d_real_cond": breakdown.d_real_cond,
                "d_gen_cond": breakdown.d_gen_cond,
                "d_real_ac": breakdown.d_real_ac,
                "d_gen_ac": breakdown.d_gen_ac,
                "d_total": breakdown.d_total,
                "g_adv": 0.0, "g_recon": 0.0, "g_total": 0.0,
                "grad_norm_G": 0.0, "grad_norm_D": gnorm_d,
            })
            if plateau_tol is not None and len(losses) >= 2 * plateau_window:
                ma_now = float(np.mean(losses[-plateau_window:]))
                ma_prev = float(np.mean(losses[-2 * plateau_window:-plateau_window]))
                if abs(ma_prev - ma_now) < plateau_tol:
                    done = True
                    break
        if done:
            break

    after = params_checksum(gen.params)
    if after != before:
        raise FreezeViolation("generator parameters changed during the frozen phase")
    return log


# -- checkpointing -------------------------------------------------------

def _adam_to_jsonable(state: AdamState) -> dict:
    return {"t": state.t, "m": params_to_jsonable(state.m), "v": params_to_jsonable(state.v)}


def _adam_from_jsonable(d: dict) -> AdamState:
    return AdamState(m=params_from_jsonable(d["m"]), v=params_from_jsonable(d["v"]), t=d["t"])


def save_checkpoint(gen: Generator, disc: Discriminator, state: TrainState,
                    config: TrainConfig, path) -> None:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "step": state.step,
        "seed": config.seed,
        "generator": {
            "spec": gen.spec.to_dict(),
            "noise_dim": gen.noise_dim,
            "params": params_to_jsonable(gen.params),
        },
        "discriminator": {
            "spec": disc.spec.to_dict(),
            "params": params_to_jsonable(disc.params),
        },
        "adam_g": _adam_to_jsonable(state.adam_g),
        "adam_d": _adam_to_jsonable(state.adam_d),
        "ema_g": params_to_jsonable(state.ema_g) if state.ema_g is not None else None,
        "rng_state": state.rng.bit_generator.state,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> tuple[Generator, Discriminator, TrainState, dict]:
    """Rebuild networks and train state; returns (gen, disc, state, meta)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"malformed checkpoint {path}: {e}") from None
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format_version {version!r} unsupported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    gen = Generator(
        spec=MlpSpec.from_dict(doc["generator"]["spec"]),
        params=params_from_jsonable(doc["generator"]["params"]),
        noise_dim=doc["generator"]["noise_dim"],
    )
    disc = Discriminator(
        spec=MlpSpec.from_dict(doc["discriminator"]["spec"]),
        params=params_from_jsonable(doc["discriminator"]["params"]),
    )
    rng = np.random.default_rng()
    rng.bit_generator.state = doc["rng_state"]
    state = TrainState(
        adam_g=_adam_from_jsonable(doc["adam_g"]),
        adam_d=_adam_from_jsonable(doc["adam_d"]),
        rng=rng,
        step=doc["step"],
        ema_g=params_from_jsonable(doc["ema_g"]) if doc.get("ema_g") else None,
    )
    return gen, disc, state, {"seed": doc["seed"], "step": doc["step"]}
