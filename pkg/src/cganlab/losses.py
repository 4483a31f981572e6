"""Adversarial objectives over the four data pairings.

All discriminator losses are written in descent form (the trainer
minimizes them), so the cross-entropy discriminator objective is
``-E[log D(x,y)] - E[log(1 - D(x,G(x)))]`` and the a-contrario extension
adds ``-E[log(1 - D(x_tilde,y))] - E[log(1 - D(x_tilde,G(x)))]``.
Expectations are batch means. Probabilities pass through the clamped log,
so every loss value is finite even at saturation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .autodiff import Tensor, minimum

FORMULATIONS = ("classic", "acontrario", "hinge_classic", "hinge_acontrario")
GEN_LOSS_MODES = ("minmax", "non_saturating")

PAIRING_NAMES = ("real_cond", "gen_cond", "real_ac", "gen_ac")


@dataclass(frozen=True)
class LossSpec:
    """Which adversarial formulation is active, plus its weights."""

    formulation: str = "classic"
    lambdas: tuple[float, float, float, float] = (1.0, 1.0, 0.0, 0.0)
    gen_loss_mode: str = "non_saturating"
    recon_weight: float = 0.0

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.gen_loss_mode not in GEN_LOSS_MODES:
            raise ValueError(f"unknown gen_loss_mode {self.gen_loss_mode!r}")
        lam = tuple(float(v) for v in self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        if len(lam) != 4 or any(v < 0 for v in lam):
            raise ValueError(f"lambdas must be 4 non-negative reals, got {lam}")
        if not any(v > 0 for v in lam):
            raise ValueError("at least one lambda must be positive")
        if self.formulation in ("classic", "hinge_classic") and (lam[2] != 0 or lam[3] != 0):
            raise ValueError(
                f"{self.formulation} ignores the a-contrario terms; "
                f"lambda3 and lambda4 must be 0, got {lam[2]}, {lam[3]}"
            )
        if self.recon_weight < 0:
            raise ValueError("recon_weight must be non-negative")

    @property
    def is_hinge(self) -> bool:
        return self.formulation.startswith("hinge")

    def to_dict(self) -> dict:
        return {
            "formulation": self.formulation,
            "lambdas": list(self.lambdas),
            "gen_loss_mode": self.gen_loss_mode,
            "recon_weight": self.recon_weight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        return cls(d["formulation"], tuple(d["lambdas"]), d["gen_loss_mode"], d["recon_weight"])


@dataclass
class LossBreakdown:
    """Unweighted per-pairing discriminator terms plus the weighted totals."""

    d_real_cond: float = 0.0
    d_gen_cond: float = 0.0
    d_real_ac: float = 0.0
    d_gen_ac: float = 0.0
    d_total: float = 0.0
    g_adv: float = 0.0
    g_recon: float = 0.0
    g_total: float = 0.0


# -- per-pairing terms ---------------------------------------------------

def _bce_true(p: Tensor) -> Tensor:
    """-E[log p]: push p toward 1."""
    return -(p.log().mean())


def _bce_false(p: Tensor) -> Tensor:
    """-E[log(1 - p)]: push p toward 0."""
    return -((1.0 - p).log().mean())


def _hinge_true(logit: Tensor) -> Tensor:
    """-E[min(0, -1 + logit)]: zero once the real margin is met."""
    return -(minimum(Tensor(0.0), logit - 1.0).mean())


def _hinge_false(logit: Tensor) -> Tensor:
    """-E[min(0, -1 - logit)]: zero once the fake margin is met."""
    return -(minimum(Tensor(0.0), -1.0 - logit).mean())


def l1_loss(y_g: Tensor, y_true: Tensor) -> Tensor:
    """Mean absolute deviation, built from relu so it stays differentiable."""
    diff = y_g - y_true
    return (diff.relu() + (-diff).relu()).mean()


def _detach(t: Tensor) -> Tensor:
    return Tensor(t.values)


def d_loss_classic(p_real: Tensor, p_fake: Tensor) -> Tensor:
    """Cross-entropy discriminator loss on the two conditional pairings."""
    return _bce_true(p_real) + _bce_false(p_fake)


def d_loss_acontrario(p_real_ac: Tensor, p_gen_ac: Tensor) -> Tensor:
    """Both a-contrario pairings pushed toward the fake class."""
    return _bce_false(p_real_ac) + _bce_false(p_gen_ac)


def d_loss_total(d_real_cond: Tensor, d_gen_cond: Tensor, d_real_ac: Tensor,
                 d_gen_ac: Tensor, spec: LossSpec) -> tuple[Tensor, LossBreakdown]:
    """Lambda-weighted discriminator loss over the four pairings.

    Inputs are discriminator outputs in the formulation's native scale:
    probabilities for the cross-entropy formulations, raw logits for the
    hinge ones. Terms with a zero lambda are evaluated on detached copies,
    so they are logged but contribute no gradient; the weighted total
    therefore reduces exactly to the classic loss when lambda3=lambda4=0.
    """
    if spec.is_hinge:
        term_fns = (_hinge_true, _hinge_false, _hinge_false, _hinge_false)
    else:
        term_fns = (_bce_true, _bce_false, _bce_false, _bce_false)
    inputs = (d_real_cond, d_gen_cond, d_real_ac, d_gen_ac)

    terms = []
    total = None
    for fn, t, lam in zip(term_fns, inputs, spec.lambdas):
        if lam > 0:
            term = fn(t)
            weighted = term * lam
            total = weighted if total is None else total + weighted
        else:
            term = fn(_detach(t))
        terms.append(float(term.values))

    breakdown = LossBreakdown(
        d_real_cond=terms[0], d_gen_cond=terms[1],
        d_real_ac=terms[2], d_gen_ac=terms[3],
        d_total=float(total.values),
    )
    return total, breakdown


def g_loss(p_fake_cond: Tensor, mode: str = "non_saturating", y_g: Tensor | None = None,
           y_true: Tensor | None = None, recon_weight: float = 0.0):
    """Generator loss: adversarial part plus optional L1 reconstruction.

    Returns (total tensor, adversarial value, reconstruction value).
    """
    if mode not in GEN_LOSS_MODES:
        raise ValueError(f"unknown generator loss mode {mode!r}")
    if mode == "minmax":
        adv = (1.0 - p_fake_cond).log().mean()
    else:
        adv = _bce_true(p_fake_cond)
    total = adv
    recon_value = 0.0
    if recon_weight > 0:
        if y_g is None or y_true is None:
            raise ValueError("recon_weight > 0 requires y_g and y_true")
        recon = l1_loss(y_g, y_true) * recon_weight
        recon_value = float(recon.values)
        total = total + recon
    return total, float(adv.values), recon_value


def hinge_losses(logit_real: Tensor, logit_gen: Tensor, logit_real_ac: Tensor,
                 logit_gen_ac: Tensor, logit_gen_for_g: Tensor) -> tuple[Tensor, Tensor]:
    """Margin-based discriminator and generator losses on raw logits.

    Each of the four discriminator terms is zero once its margin is
    satisfied; the generator part is -E[logit] on the generated-conditional
    pairing.
    """
    d = (
        _hinge_true(logit_real)
        + _hinge_false(logit_gen)
        + _hinge_false(logit_real_ac)
        + _hinge_false(logit_gen_ac)
    )
    g = -(logit_gen_for_g.mean())
    return d, g
