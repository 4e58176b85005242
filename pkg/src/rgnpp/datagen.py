"""Synthetic point-process generators, exact-likelihood oracles and JSONL I/O.

Sequences are strictly increasing marked event lists on a horizon [0, T].
The Hawkes oracle uses an exponential kernel, whose compensator is closed
form, so oracle likelihoods are exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


@dataclass
class EventSequence:
    events: list          # [(t, y), ...] with strictly increasing t
    horizon: float
    id: str = ""

    def __post_init__(self):
        prev = 0.0
        for j, (t, y) in enumerate(self.events):
            if t <= prev:
                raise ValueError(f"sequence {self.id!r}: event {j} at t={t} not strictly after {prev}")
            prev = t
        if self.events and self.events[-1][0] > self.horizon:
            raise ValueError(f"sequence {self.id!r}: last event {self.events[-1][0]} exceeds horizon {self.horizon}")

    def __len__(self):
        return len(self.events)

    @property
    def times(self):
        return np.array([t for t, _ in self.events])

    @property
    def types(self):
        return np.array([y for _, y in self.events], dtype=int)


@dataclass
class HawkesSpec:
    mu: np.ndarray                 # base rates, (|Y|,)
    excitation: np.ndarray         # A, (|Y|, |Y|): A[y, y'] = influence of y' events on type y
    beta_decay: float              # exponential kernel A * exp(-beta_decay * dt)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.excitation = np.asarray(self.excitation, dtype=np.float64)
        if self.beta_decay <= 0:
            raise ValueError("beta_decay must be positive")
        if np.any(self.mu < 0) or np.any(self.excitation < 0):
            raise ValueError("mu and excitation must be non-negative")

    @property
    def num_types(self):
        return len(self.mu)

    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.excitation / self.beta_decay))))

    def check_stationary(self):
        rho = self.spectral_radius()
        if rho >= 1.0:
            raise ValueError(f"non-stationary Hawkes spec: spectral radius {rho:.4f} >= 1")

    def intensity(self, times, t):
        """Per-type intensity at t given past event (times, types) arrays."""
        ts, ys = times
        mask = ts < t
        lam = self.mu.copy()
        if np.any(mask):
            decay = np.exp(-self.beta_decay * (t - ts[mask]))
            lam = lam + self.excitation[:, ys[mask]] @ decay
        return lam


def derive_seeds(seed, n):
    """Deterministic per-sequence seed streams spawned from the run seed."""
    return np.random.SeedSequence(seed).spawn(n)


def sample_poisson(T, rate=None, rate_fn=None, rate_bound=None, seed=0, seq_id=""):
    """Homogeneous (rate) Poisson via exponential gaps, or inhomogeneous
    (rate_fn with bound rate_bound) via thinning."""
    rng = np.random.default_rng(seed)
    events = []
    if rate_fn is None:
        if rate is None or rate <= 0:
            raise ValueError("homogeneous sampling needs rate > 0")
        t = 0.0
        while True:
            t += rng.exponential(1.0 / rate)
            if t > T:
                break
            events.append((t, 0))
    else:
        if rate_bound is None or rate_bound <= 0:
            raise ValueError("inhomogeneous sampling needs rate_bound > 0")
        t = 0.0
        while True:
            t += rng.exponential(1.0 / rate_bound)
            if t > T:
                break
            lam = rate_fn(t)
            if lam > rate_bound * (1 + 1e-12):
                raise ValueError(f"rate bound {rate_bound} violated at t={t}: rate {lam}")
            if rng.random() < lam / rate_bound:
                events.append((t, 0))
    return EventSequence(events=events, horizon=float(T), id=seq_id)


def sample_hawkes(spec, T, seed=0, seq_id=""):
    """Multivariate exponential-kernel Hawkes via Ogata thinning. The upper
    bound is the current total intensity, recomputed after each candidate
    (valid because the intensity decays between events)."""
    spec.check_stationary()
    rng = np.random.default_rng(seed)
    n = spec.num_types
    mu_total = spec.mu.sum()
    # running excitation state: contribution of past events to each type,
    # valid at time `t_state`, decays as exp(-beta_decay * dt)
    excite = np.zeros(n)
    t = 0.0
    events = []
    while True:
        lam_bar = mu_total + excite.sum()
        w = rng.exponential(1.0 / lam_bar)
        decay = math.exp(-spec.beta_decay * w)
        t = t + w
        excite = excite * decay
        if t > T:
            break
        lam = spec.mu + excite
        lam_total = lam.sum()
        if rng.random() * lam_bar <= lam_total:
            y = int(rng.choice(n, p=lam / lam_total))
            events.append((t, y))
            excite = excite + spec.excitation[:, y]
    return EventSequence(events=events, horizon=float(T), id=seq_id)


def oracle_loglik(model_spec, seq, quad_steps=0):
    """Exact log-likelihood under the generating process.

    model_spec may be a float (homogeneous rate), a HawkesSpec (closed-form
    compensator), or a callable rate function (compensator by composite
    trapezoid with quad_steps subintervals per inter-event interval plus the
    tail; quad_steps must then be > 0)."""
    times = seq.times
    types = seq.types
    T = seq.horizon
    if isinstance(model_spec, (int, float)):
        mu = float(model_spec)
        return len(seq) * math.log(mu) - mu * T
    if isinstance(model_spec, HawkesSpec):
        spec = model_spec
        event_term = 0.0
        excite = np.zeros(spec.num_types)
        prev = 0.0
        for t, y in seq.events:
            excite = excite * math.exp(-spec.beta_decay * (t - prev))
            event_term += math.log(spec.mu[y] + excite[y])
            excite = excite + spec.excitation[:, y]
            prev = t
        comp = spec.mu.sum() * T
        if len(seq):
            col_sums = spec.excitation.sum(axis=0)
            comp += float(np.sum(col_sums[types] / spec.beta_decay * (1.0 - np.exp(-spec.beta_decay * (T - times)))))
        return event_term - comp
    # callable rate function
    if quad_steps <= 0:
        raise ValueError("rate-function oracle needs quad_steps > 0")
    rate_fn = model_spec
    event_term = float(np.sum(np.log([rate_fn(t) for t in times]))) if len(seq) else 0.0
    comp = 0.0
    knots = np.concatenate([[0.0], times, [T]]) if len(seq) else np.array([0.0, T])
    for lo, hi in zip(knots[:-1], knots[1:]):
        if hi <= lo:
            continue
        grid = np.linspace(lo, hi, quad_steps + 1)
        vals = np.array([rate_fn(t) for t in grid])
        comp += float(np.trapezoid(vals, grid))
    return event_term - comp


# ---------------------------------------------------------------------------
# Dataset I/O


def save_dataset(path, sequences):
    with open(path, "w") as f:
        for seq in sequences:
            doc = {"id": seq.id, "T": seq.horizon,
                   "events": [{"t": t, "y": int(y)} for t, y in seq.events]}
            f.write(json.dumps(doc) + "\n")


def load_dataset(path, num_types=None):
    sequences = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                events = [(float(e["t"]), int(e["y"])) for e in doc["events"]]
                seq = EventSequence(events=events, horizon=float(doc["T"]), id=str(doc.get("id", lineno)))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            if num_types is not None:
                for t, y in seq.events:
                    if not (0 <= y < num_types):
                        raise ValueError(f"{path}: line {lineno}: event type {y} outside [0, {num_types})")
            sequences.append(seq)
    return sequences


def split_dataset(sequences, fractions=(0.8, 0.1, 0.1), seed=0):
    """Seeded shuffle then proportional split; sizes are floor-rounded with
    the remainder assigned to the first split."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sequences))
    shuffled = [sequences[i] for i in order]
    n = len(sequences)
    n_val = int(n * fractions[1])
    n_test = int(n * fractions[2])
    n_train = n - n_val - n_test
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]
