"""Recurrent Graph Network over event types.

Each event type owns an LSTM node. An observed event updates only its own
node; stacked multi-head graph-attention layers then mix information across
types for the global history embedding, from which the intensity, next-type
and next-time heads are read. The recurrent state carried to the next event
is the post-LSTM node state, so unobserved types keep their state bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .embedding import EmbeddingConfig, embed_time


@dataclass
class ModelConfig:
    num_types: int
    d_in: int = 32            # node/global width: d_in = d_v = d_u
    d_e: int = 8
    num_heads: int = 2
    num_gat_layers: int = 2
    dropout_p: float = 0.1
    leaky_slope: float = 0.2
    alpha: object = -0.1      # per-type intensity slope, scalar or list
    shared_lstm: bool = False
    tied_payload: bool = True  # payload projection tied to the score projection
    epsilon_t: float = 1e-6

    def __post_init__(self):
        if self.num_types < 1 or self.d_in < 1 or self.d_e < 1:
            raise ValueError("num_types, d_in and d_e must be >= 1")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.num_gat_layers < 0 or self.num_heads < 0:
            raise ValueError("num_gat_layers and num_heads must be >= 0")

    def alpha_vector(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        if a.ndim == 0:
            a = np.full(self.num_types, float(a))
        if a.shape != (self.num_types,):
            raise ValueError(f"alpha must be scalar or length {self.num_types}, got shape {a.shape}")
        return a

    @property
    def gat_enabled(self):
        return self.num_gat_layers >= 1 and self.num_heads >= 1


@dataclass
class NodeState:
    """Per-type LSTM hidden/cell pairs plus the last consumed timestamp."""
    v: list
    c: list
    last_time: float = 0.0


@dataclass
class StepOutput:
    anchor_time: float
    anchor_index: int
    pre_act: Tensor                 # intensity-head pre-activations, (|Y|,)
    logits: Tensor | None = None    # next-type logits, (|Y|,)
    t_hat: Tensor | None = None     # absolute next-time prediction, scalar
    u: Tensor | None = None
    attention: np.ndarray | None = None  # (layers, heads, |Y|, |Y|), rows = receivers

    def detached(self):
        return StepOutput(
            anchor_time=self.anchor_time,
            anchor_index=self.anchor_index,
            pre_act=self.pre_act.detach(),
            logits=None if self.logits is None else self.logits.detach(),
            t_hat=None if self.t_hat is None else self.t_hat.detach(),
            u=None if self.u is None else self.u.detach(),
            attention=self.attention,
        )


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build_params(cfg: ModelConfig, embed_cfg: EmbeddingConfig, seed=0):
    """Fresh ParamStore: weights ~ U(+-1/sqrt(fan_in)), zero biases, LSTM
    forget-gate bias +1."""
    rng = np.random.default_rng(seed)
    store = ad.ParamStore()
    d_v = cfg.d_in
    d_x = embed_cfg.d_in
    lstm_keys = ["shared"] if cfg.shared_lstm else [str(y) for y in range(cfg.num_types)]
    for key in lstm_keys:
        store.add(f"lstm.{key}.W", _uniform(rng, (4 * d_v, d_x), d_x))
        store.add(f"lstm.{key}.U", _uniform(rng, (4 * d_v, d_v), d_v))
        b = np.zeros(4 * d_v)
        b[:d_v] = 1.0  # forget gate
        store.add(f"lstm.{key}.b", b)
    if cfg.gat_enabled:
        for l in range(cfg.num_gat_layers):
            for h in range(cfg.num_heads):
                pre = f"gat.{l}.{h}"
                store.add(f"{pre}.proj", _uniform(rng, (d_v, cfg.d_e), d_v))
                if not cfg.tied_payload:
                    store.add(f"{pre}.proj_payload", _uniform(rng, (d_v, cfg.d_e), d_v))
                store.add(f"{pre}.attn_recv", _uniform(rng, (cfg.d_e,), cfg.d_e))
                store.add(f"{pre}.attn_send", _uniform(rng, (cfg.d_e,), cfg.d_e))
                store.add(f"{pre}.attn_bias", np.zeros(()))
            store.add(f"gat.{l}.node_proj", _uniform(rng, (cfg.num_heads * cfg.d_e, d_v), cfg.num_heads * cfg.d_e))
            store.add(f"gat.{l}.node_bias", np.zeros(d_v))
    store.add("global.W", _uniform(rng, (d_v, cfg.num_types * d_v), cfg.num_types * d_v))
    store.add("global.b", np.zeros(d_v))
    store.add("head_y.W", _uniform(rng, (cfg.num_types, d_v), d_v))
    store.add("head_y.b", np.zeros(cfg.num_types))
    store.add("head_t.w", _uniform(rng, (d_v,), d_v))
    store.add("head_t.b", np.zeros(()))
    store.add("head_lambda.W", _uniform(rng, (cfg.num_types, d_v), d_v))
    store.add("head_lambda.b", np.zeros(cfg.num_types))
    store.add("beta", np.zeros(cfg.num_types))
    return store


class RGNModel:
    def __init__(self, cfg: ModelConfig, embed_cfg: EmbeddingConfig, store=None, seed=0):
        self.cfg = cfg
        self.embed_cfg = embed_cfg
        self.store = store if store is not None else build_params(cfg, embed_cfg, seed=seed)
        self.dropout_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        self.alpha = cfg.alpha_vector()
        self.attention_scores_stored = 0  # running counter of stored attention entries

    # -- state ---------------------------------------------------------

    def init_state(self):
        d_v = self.cfg.d_in
        return NodeState(
            v=[Tensor(np.zeros(d_v)) for _ in range(self.cfg.num_types)],
            c=[Tensor(np.zeros(d_v)) for _ in range(self.cfg.num_types)],
            last_time=0.0,
        )

    def initial_output(self):
        """Pre-first-event anchor: no history embedding yet, so the intensity
        pre-activation is zero and only the learnable base offsets act."""
        return StepOutput(anchor_time=0.0, anchor_index=0, pre_act=Tensor(np.zeros(self.cfg.num_types)))

    def detach_state(self, state):
        return NodeState(
            v=[t.detach() for t in state.v],
            c=[t.detach() for t in state.c],
            last_time=state.last_time,
        )

    # -- building blocks ------------------------------------------------

    def node_lstm_step(self, x, v_prev, c_prev, y, normalize=True):
        if not (0 <= y < self.cfg.num_types):
            raise ValueError(f"unknown event type {y}, expected [0, {self.cfg.num_types})")
        key = "shared" if self.cfg.shared_lstm else str(y)
        s = self.store
        d_v = self.cfg.d_in
        z = ad.add(ad.add(ad.matmul(s[f"lstm.{key}.W"], x), ad.matmul(s[f"lstm.{key}.U"], v_prev)),
                   s[f"lstm.{key}.b"])
        f = ad.sigmoid(ad.slice_(z, slice(0, d_v)))
        i = ad.sigmoid(ad.slice_(z, slice(d_v, 2 * d_v)))
        o = ad.sigmoid(ad.slice_(z, slice(2 * d_v, 3 * d_v)))
        g = ad.tanh(ad.slice_(z, slice(3 * d_v, 4 * d_v)))
        c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
        v = ad.mul(o, ad.tanh(c))
        if normalize:
            v = ad.layer_norm(v)
        return v, c

    def gat_layer(self, layer, H, train):
        """One multi-head attention layer over the fully connected type graph
        (self-loops included), with a residual connection. Returns the updated
        (|Y|, d_v) node matrix and the per-head attention (heads, |Y|, |Y|)."""
        cfg = self.cfg
        s = self.store
        n = cfg.num_types
        Hn = ad.layer_norm(H)
        head_outs = []
        atts = np.empty((cfg.num_heads, n, n))
        for h in range(cfg.num_heads):
            pre = f"gat.{layer}.{h}"
            E = ad.matmul(Hn, s[f"{pre}.proj"])                 # (|Y|, d_e)
            sr = ad.matmul(E, s[f"{pre}.attn_recv"])            # (|Y|,)
            ss = ad.matmul(E, s[f"{pre}.attn_send"])
            scores = ad.add(ad.add(ad.reshape(sr, (n, 1)), ad.reshape(ss, (1, n))),
                            s[f"{pre}.attn_bias"])
            scores = ad.leaky_relu(scores, cfg.leaky_slope)
            A = ad.softmax(scores, axis=1)                      # rows = receivers
            atts[h] = A.data
            self.attention_scores_stored += A.data.size
            if train:
                A = ad.dropout(A, cfg.dropout_p, True, self.dropout_rng)
            B = E if cfg.tied_payload else ad.matmul(Hn, s[f"{pre}.proj_payload"])
            head_outs.append(ad.matmul(A, B))                   # (|Y|, d_e)
        cat = head_outs[0] if cfg.num_heads == 1 else ad.concat(head_outs, axis=1)
        out = ad.add(ad.matmul(cat, s[f"gat.{layer}.node_proj"]), s[f"gat.{layer}.node_bias"])
        if train:
            out = ad.dropout(out, cfg.dropout_p, True, self.dropout_rng)
        return ad.add(H, out), atts

    def global_update(self, H):
        flat = ad.reshape(H, (self.cfg.num_types * self.cfg.d_in,))
        return ad.relu(ad.add(ad.matmul(self.store["global.W"], flat), self.store["global.b"]))

    def heads(self, u, anchor_time):
        s = self.store
        logits = ad.add(ad.matmul(s["head_y.W"], u), s["head_y.b"])
        t_raw = ad.add(ad.matmul(s["head_t.w"], u), s["head_t.b"])
        t_hat = ad.add(ad.softplus(t_raw), anchor_time)
        pre_act = ad.add(ad.matmul(s["head_lambda.W"], u), s["head_lambda.b"])
        return logits, t_hat, pre_act

    # -- full step -------------------------------------------------------

    def step(self, t, y, state, train=False):
        if t < state.last_time:
            raise ValueError(f"out-of-order timestamp {t} < {state.last_time}")
        cfg = self.cfg
        x = Tensor(embed_time(t, self.embed_cfg))
        v_new, c_new = self.node_lstm_step(x, state.v[y], state.c[y], y)
        new_v = list(state.v)
        new_c = list(state.c)
        new_v[y] = v_new
        new_c[y] = c_new
        new_state = NodeState(v=new_v, c=new_c, last_time=float(t))

        H = ad.stack(new_v)  # (|Y|, d_v)
        attention = None
        if cfg.gat_enabled:
            attention = np.empty((cfg.num_gat_layers, cfg.num_heads, cfg.num_types, cfg.num_types))
            for l in range(cfg.num_gat_layers):
                H, attention[l] = self.gat_layer(l, H, train)
        u = self.global_update(H)
        logits, t_hat, pre_act = self.heads(u, float(t))
        out = StepOutput(anchor_time=float(t), anchor_index=-1, pre_act=pre_act,
                         logits=logits, t_hat=t_hat, u=u, attention=attention)
        return new_state, out

    # -- intensity interpolation ------------------------------------------

    def intensity(self, output, ts):
        """Per-type intensity at query times `ts` (array-like), anchored at
        `output.anchor_time`. Returns a (len(ts), |Y|) Tensor; strictly
        positive by the softplus."""
        ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
        a = output.anchor_time
        if np.any(ts < a):
            raise ValueError(f"query time before anchor {a}")
        scale = (ts - a) / max(a, self.cfg.epsilon_t)
        drift = Tensor(np.outer(scale, self.alpha))  # (K, |Y|)
        z = ad.add(ad.add(drift, output.pre_act), self.store["beta"])
        return ad.softplus(z)

    def total_intensity_values(self, output, ts):
        """Plain numpy total intensity for quadrature/evaluation paths."""
        with ad.no_grad():
            lam = self.intensity(output, ts)
        return lam.data.sum(axis=1)

    # -- sequence helpers --------------------------------------------------

    def run_sequence(self, seq, train=False):
        """Forward over all events; returns (outputs, final_state) where
        outputs[j] is anchored at t_j (outputs[0] is the pre-event anchor)."""
        state = self.init_state()
        outputs = [self.initial_output()]
        for j, (t, y) in enumerate(seq.events, start=1):
            state, out = self.step(t, y, state, train=train)
            out.anchor_index = j
            outputs.append(out)
        return outputs, state
