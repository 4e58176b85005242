"""Training objectives: Monte-Carlo compensator, log-likelihood,
next-type cross-entropy, next-time squared error, and the combined loss.

All loss builders return scalar `Tensor`s so gradients flow back through the
model. `outputs` is the list produced by `RGNModel.run_sequence`: outputs[j]
is anchored at t_j, outputs[0] at t_0 = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class MCIntegralConfig:
    n_tau: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_tau < 1:
            raise ValueError(f"n_tau must be >= 1, got {self.n_tau}")


@dataclass
class LossBreakdown:
    nll: float           # L_lambda contribution (negative log-likelihood)
    type_ce: float       # L_y
    time_se: float       # L_t
    total: float
    num_events: int

    @staticmethod
    def combine(nll, type_ce, time_se, num_events, beta_y=1.0, beta_t=100.0):
        return LossBreakdown(nll=nll, type_ce=type_ce, time_se=time_se,
                             total=nll + beta_y * type_ce + beta_t * time_se,
                             num_events=num_events)


def _intervals(seq):
    """(lo, hi, anchor_output_index) covering [0, T]: one per inter-event gap
    plus the tail after the last event."""
    knots = [0.0] + [t for t, _ in seq.events] + [seq.horizon]
    out = []
    for j in range(len(knots) - 1):
        lo, hi = knots[j], knots[j + 1]
        if j < len(seq.events) and hi <= lo:
            raise ValueError(f"non-increasing interval ({lo}, {hi}]")
        if hi > lo:
            out.append((lo, hi, j))
    return out


def mc_compensator(model, outputs, seq, cfg, rng=None):
    """Unbiased Monte-Carlo estimate of int_0^T lambda*(t) dt: per interval,
    n_tau uniform draws of the interval's anchored intensity. Differentiable
    through the intensity values at the fixed draws."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    total = Tensor(0.0)
    for lo, hi, j in _intervals(seq):
        taus = rng.uniform(lo, hi, cfg.n_tau)
        lam = model.intensity(outputs[j], taus)          # (n_tau, |Y|)
        total = ad.add(total, ad.mul(ad.sum_(lam), (hi - lo) / cfg.n_tau))
    return total


def quad_compensator(model, outputs, seq, steps=100):
    """Deterministic composite-trapezoid counterpart of mc_compensator
    (evaluation paths; not differentiated)."""
    total = 0.0
    for lo, hi, j in _intervals(seq):
        grid = np.linspace(lo, hi, steps + 1)
        total += float(np.trapezoid(model.total_intensity_values(outputs[j], grid), grid))
    return total


def event_log_intensity(model, outputs, seq):
    """Sum over events j of log lambda*_{y_j}(t_j), each evaluated with the
    state anchored at t_{j-1} (history strictly before t_j)."""
    total = Tensor(0.0)
    for j, (t, y) in enumerate(seq.events, start=1):
        lam = model.intensity(outputs[j - 1], [t])       # (1, |Y|)
        total = ad.add(total, ad.log_clamped(ad.slice_(lam, (0, y))))
    return total


def log_likelihood(model, outputs, seq, cfg, rng=None):
    """l(S) = sum_j log lambda*_{y_j}(t_j) - Lambda_MC over [0, T]."""
    return ad.sub(event_log_intensity(model, outputs, seq),
                  mc_compensator(model, outputs, seq, cfg, rng=rng))


def log_likelihood_quad(model, outputs, seq, steps=100):
    """Deterministic per-sequence log-likelihood (trapezoid compensator);
    used for evaluation metrics so results are order-independent."""
    with ad.no_grad():
        ev = event_log_intensity(model, outputs, seq).item()
    return ev - quad_compensator(model, outputs, seq, steps=steps)


def type_loss(outputs, seq):
    """Cross-entropy of next-type logits from step j-1 against y_j, j >= 2.
    Single-event sequences contribute 0."""
    total = Tensor(0.0)
    for j in range(2, len(seq.events) + 1):
        y = seq.events[j - 1][1]
        ls = ad.log_softmax(outputs[j - 1].logits)
        total = ad.sub(total, ad.slice_(ls, y))
    return total


def time_loss(outputs, seq):
    """Squared error of next-time predictions from step j-1 vs t_j, j >= 2."""
    total = Tensor(0.0)
    for j in range(2, len(seq.events) + 1):
        t = seq.events[j - 1][0]
        d = ad.sub(outputs[j - 1].t_hat, t)
        total = ad.add(total, ad.mul(d, d))
    return total


def combined_loss(nll, type_ce, time_se, beta_y=1.0, beta_t=100.0):
    """L = L_lambda + beta_y * L_y + beta_t * L_t as a graph scalar."""
    return ad.add(ad.add(nll, ad.mul(type_ce, beta_y)), ad.mul(time_se, beta_t))


def sequence_loss(model, seq, cfg, rng=None, beta_y=1.0, beta_t=100.0, train=False):
    """Full-sequence combined loss (no truncation): returns the graph scalar
    and a LossBreakdown of its parts."""
    outputs, _ = model.run_sequence(seq, train=train)
    ll = log_likelihood(model, outputs, seq, cfg, rng=rng)
    nll = ad.neg(ll)
    ce = type_loss(outputs, seq)
    se = time_loss(outputs, seq)
    total = combined_loss(nll, ce, se, beta_y=beta_y, beta_t=beta_t)
    parts = LossBreakdown.combine(nll.item(), ce.item(), se.item(), len(seq),
                                  beta_y=beta_y, beta_t=beta_t)
    return total, parts
