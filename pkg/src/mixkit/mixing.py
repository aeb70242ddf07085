"""Token-mixing and feature-mixing layer variants behind one interface.

Every variant consumes token matrices of shape (..., N, d) — unbatched (N, d)
or batched (B, N, d) — plus an optional validity mask of shape (..., N) with
1.0 at valid positions and 0.0 at padding. Masked positions neither contribute
to nor receive mixing. A layer follows the pre-norm residual structure

    X = X + token_mix(LN(X))
    X = X + feature_mix(LN(X))

with dropout applied to the layer input during training.

Variants:

* ``hypermixer_tied`` / ``hypermixer_untied`` — the mixing-MLP weights W1, W2
  (N x d') are generated per token by a two-layer hypernetwork MLP
  (d -> d' -> d', GELU); tying shares one hypernetwork so W2 = W1.
* ``mlpmixer`` — W1, W2 are free parameters of fixed length n_max.
* ``gmlp`` — spatial gating: half the hidden channels gate the other half
  through a fixed learnable N x N interaction matrix, initialized near
  identity gating.
* ``fnet`` — real part of the DFT along the token axis; no parameters.
* ``attention`` — multi-head self-attention, softmax(QK^T / sqrt(d/h))V.
* ``shared_vector`` — W1, W2 are N copies of single learnable vectors.
* ``identity`` — returns its input unchanged.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from .errors import CapacityError, ConfigError, ShapeError
from .tensor import Tensor

MIXING_KINDS = (
    "hypermixer_tied",
    "hypermixer_untied",
    "mlpmixer",
    "gmlp",
    "fnet",
    "attention",
    "shared_vector",
    "identity",
)
FIXED_LENGTH_KINDS = ("mlpmixer", "gmlp")

MASK_BIAS = 1e9  # additive logit penalty for padded attention columns
FNET_NAIVE_MAX = 64  # above this the token DFT switches from the cosine matrix to an FFT


@dataclass(frozen=True)
class TokenMixingSpec:
    """Configuration selecting one mixing variant and its hyperparameters."""

    kind: str
    d: int
    d_prime: int
    n_max: int | None = None
    heads: int = 4
    reinject_positions: bool = False

    def __post_init__(self):
        if self.kind not in MIXING_KINDS:
            raise ConfigError(f"unknown mixing kind {self.kind!r}; expected one of {MIXING_KINDS}")
        if self.d < 1 or self.d_prime < 1:
            raise ConfigError(f"d and d_prime must be positive, got d={self.d}, d_prime={self.d_prime}")
        fixed = self.kind in FIXED_LENGTH_KINDS
        if fixed and (self.n_max is None or self.n_max < 1):
            raise ConfigError(f"kind {self.kind!r} requires a positive n_max")
        if not fixed and self.n_max is not None:
            raise ConfigError(f"kind {self.kind!r} does not take n_max")
        if self.kind == "attention":
            if self.heads < 1 or self.d % self.heads != 0:
                raise ConfigError(f"attention heads ({self.heads}) must divide d ({self.d})")
        if self.kind == "gmlp" and self.d_prime % 2 != 0:
            raise ConfigError(f"gmlp requires an even d_prime, got {self.d_prime}")
        if self.reinject_positions and self.kind not in ("hypermixer_tied", "hypermixer_untied"):
            raise ConfigError("reinject_positions applies only to hypermixer kinds")


def sinusoidal_positions(n, d, dtype=np.float64):
    """Absolute sin/cos position encodings, shape (n, d)."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    idx = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(idx / 2.0) / d)
    enc = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return enc.astype(dtype)


def _uniform_init(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


class _Mlp:
    """Two-layer perceptron parameters (in -> hidden -> out, GELU between)."""

    def __init__(self, rng, d_in, d_hidden, d_out, dtype, bias):
        self.w1 = _uniform_init(rng, (d_in, d_hidden), d_in, dtype)
        self.b1 = _uniform_init(rng, (d_hidden,), d_in, dtype) if bias else None
        self.w2 = _uniform_init(rng, (d_hidden, d_out), d_hidden, dtype)
        self.b2 = _uniform_init(rng, (d_out,), d_hidden, dtype) if bias else None

    def __call__(self, x):
        h = tc.gelu(_linear(x, self.w1, self.b1))
        return _linear(h, self.w2, self.b2)

    def named_parameters(self, prefix):
        out = [(f"{prefix}.w1", self.w1)]
        if self.b1 is not None:
            out.append((f"{prefix}.b1", self.b1))
        out.append((f"{prefix}.w2", self.w2))
        if self.b2 is not None:
            out.append((f"{prefix}.b2", self.b2))
        return out


def _linear(x, w, b=None):
    out = tc.matmul(x, w)
    if b is not None:
        out = tc.add(out, b)
    return out


class MixingLayerState:
    """Learnable tensors for one layer: token-mixing parameters, layer norms,
    and (unless disabled) the per-token feature-mixing MLP."""

    def __init__(self, spec, rng, dtype=np.float64, bias=True, feature_mixing=True):
        self.spec = spec
        self.bias = bias
        self.feature_mixing = feature_mixing
        d, dp = spec.d, spec.d_prime
        self.ln1_gain = Tensor(np.ones(d, dtype=dtype), requires_grad=True)
        self.ln1_bias = Tensor(np.zeros(d, dtype=dtype), requires_grad=True)

        kind = spec.kind
        if kind == "hypermixer_tied":
            self.hyper1 = _Mlp(rng, d, dp, dp, dtype, bias)
            self.hyper2 = None
        elif kind == "hypermixer_untied":
            self.hyper1 = _Mlp(rng, d, dp, dp, dtype, bias)
            self.hyper2 = _Mlp(rng, d, dp, dp, dtype, bias)
        elif kind == "mlpmixer":
            self.mix_w1 = _uniform_init(rng, (spec.n_max, dp), spec.n_max, dtype)
            self.mix_w2 = _uniform_init(rng, (spec.n_max, dp), spec.n_max, dtype)
        elif kind == "gmlp":
            self.in_w = _uniform_init(rng, (d, dp), d, dtype)
            self.in_b = _uniform_init(rng, (dp,), d, dtype) if bias else None
            # near-identity gating at initialization: T ~ 0, gate bias = 1
            self.gate_t = Tensor(rng.uniform(-1e-3, 1e-3, size=(spec.n_max, spec.n_max)).astype(dtype),
                                 requires_grad=True)
            self.gate_b = Tensor(np.ones(spec.n_max, dtype=dtype), requires_grad=True)
            self.out_w = _uniform_init(rng, (dp // 2, d), dp // 2, dtype)
            self.out_b = _uniform_init(rng, (d,), dp // 2, dtype) if bias else None
        elif kind == "attention":
            self.wq = _uniform_init(rng, (d, d), d, dtype)
            self.bq = _uniform_init(rng, (d,), d, dtype) if bias else None
            self.wk = _uniform_init(rng, (d, d), d, dtype)
            self.bk = _uniform_init(rng, (d,), d, dtype) if bias else None
            self.wv = _uniform_init(rng, (d, d), d, dtype)
            self.bv = _uniform_init(rng, (d,), d, dtype) if bias else None
            self.wo = _uniform_init(rng, (d, d), d, dtype)
            self.bo = _uniform_init(rng, (d,), d, dtype) if bias else None
        elif kind == "shared_vector":
            self.vec_w1 = _uniform_init(rng, (dp,), dp, dtype)
            self.vec_w2 = _uniform_init(rng, (dp,), dp, dtype)
        # fnet and identity have no mixing parameters

        if feature_mixing:
            self.ln2_gain = Tensor(np.ones(d, dtype=dtype), requires_grad=True)
            self.ln2_bias = Tensor(np.zeros(d, dtype=dtype), requires_grad=True)
            self.feat_w1 = _uniform_init(rng, (d, dp), d, dtype)
            self.feat_b1 = _uniform_init(rng, (dp,), d, dtype) if bias else None
            self.feat_w2 = _uniform_init(rng, (dp, d), dp, dtype)
            self.feat_b2 = _uniform_init(rng, (d,), dp, dtype) if bias else None

    def named_parameters(self):
        kind = self.spec.kind
        params = [("ln1.gain", self.ln1_gain), ("ln1.bias", self.ln1_bias)]
        if kind in ("hypermixer_tied", "hypermixer_untied"):
            params += self.hyper1.named_parameters("hyper1")
            if self.hyper2 is not None:
                params += self.hyper2.named_parameters("hyper2")
        elif kind == "mlpmixer":
            params += [("mix.w1", self.mix_w1), ("mix.w2", self.mix_w2)]
        elif kind == "gmlp":
            params.append(("gmlp.in_w", self.in_w))
            if self.in_b is not None:
                params.append(("gmlp.in_b", self.in_b))
            params += [("gmlp.gate_t", self.gate_t), ("gmlp.gate_b", self.gate_b), ("gmlp.out_w", self.out_w)]
            if self.out_b is not None:
                params.append(("gmlp.out_b", self.out_b))
        elif kind == "attention":
            for name in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"):
                t = getattr(self, name)
                if t is not None:
                    params.append((f"attn.{name}", t))
        elif kind == "shared_vector":
            params += [("shared.w1", self.vec_w1), ("shared.w2", self.vec_w2)]
        if self.feature_mixing:
            params += [("ln2.gain", self.ln2_gain), ("ln2.bias", self.ln2_bias), ("feat.w1", self.feat_w1)]
            if self.feat_b1 is not None:
                params.append(("feat.b1", self.feat_b1))
            params.append(("feat.w2", self.feat_w2))
            if self.feat_b2 is not None:
                params.append(("feat.b2", self.feat_b2))
        return params

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def param_count(self):
        return sum(t.size for t in self.parameters())


def count_mixing_params(spec, bias=True):
    """Analytic parameter count of the token-mixing block alone."""
    d, dp = spec.d, spec.d_prime
    b = 1 if bias else 0
    hyper = d * dp + dp * dp + b * 2 * dp
    return {
        "hypermixer_tied": hyper,
        "hypermixer_untied": 2 * hyper,
        "mlpmixer": 2 * spec.n_max * dp if spec.n_max else 0,
        "gmlp": (d * dp + b * dp) + spec.n_max * spec.n_max + spec.n_max + (dp // 2 * d + b * d)
        if spec.n_max
        else 0,
        "attention": 4 * (d * d + b * d),
        "shared_vector": 2 * dp,
        "fnet": 0,
        "identity": 0,
    }[spec.kind]


def count_layer_params(spec, bias=True, feature_mixing=True):
    """Analytic parameter count of a full layer (mixing + norms + feature MLP)."""
    d, dp = spec.d, spec.d_prime
    b = 1 if bias else 0
    total = 2 * d + count_mixing_params(spec, bias)
    if feature_mixing:
        total += 2 * d + (d * dp + b * dp) + (dp * d + b * d)
    return total


# -- core operations -----------------------------------------------------------


def mlp1_forward(w1, w2, x):
    """Mixing MLP applied to every feature column: W1 @ GELU(W2^T @ X).

    W1 and W2 are (..., N, d'); either may carry broadcastable leading batch
    dims (masking batches W2 while W1 stays shared).
    """
    if w1.shape[-2:] != w2.shape[-2:]:
        raise ShapeError(f"W1 shape {w1.shape} != W2 shape {w2.shape}")
    if w1.shape[-2] != x.shape[-2]:
        raise ShapeError(f"weight rows {w1.shape} do not match token count of X {x.shape}")
    hidden = tc.gelu(tc.matmul(tc.swapaxes(w2, -1, -2), x))
    return tc.matmul(w1, hidden)


def hypernet_generate(x, p, state):
    """Generate mixing weights row-wise: row j of W_i is MLP_i(x_j + p_j).

    Returns (W1, W2); the tied kind returns the same tensor twice.
    """
    z = tc.add(x, p) if p is not None else x
    w1 = state.hyper1(z)
    if state.hyper2 is None:
        return w1, w1
    return w1, state.hyper2(z)


def _mask_expand(mask, x):
    m = np.asarray(mask, dtype=x.dtype)
    if m.shape != x.shape[:-1]:
        raise ShapeError(f"mask shape {m.shape} does not match token dims of {x.shape}")
    return Tensor(m[..., None])


def _masked_mlp1(w1, w2, x, mask):
    if mask is None:
        return mlp1_forward(w1, w2, x)
    m = _mask_expand(mask, x)
    # zeroing W2's padded rows removes their contribution to the hidden layer;
    # padded output rows are zeroed afterwards
    out = mlp1_forward(w1, tc.mul(w2, m), x)
    return tc.mul(out, m)


def hypermixer_mix(state, x, mask=None):
    n, d = x.shape[-2], x.shape[-1]
    p = None
    if state.spec.reinject_positions:
        p = Tensor(sinusoidal_positions(n, d, x.dtype))
    w1, w2 = hypernet_generate(x, p, state)
    return _masked_mlp1(w1, w2, x, mask)


def mlpmixer_mix(state, x, mask=None):
    spec = state.spec
    n = x.shape[-2]
    if n > spec.n_max:
        raise CapacityError(f"mlpmixer supports at most n_max={spec.n_max} tokens, got N={n}")
    w1 = tc.narrow(state.mix_w1, 0, 0, n)
    w2 = tc.narrow(state.mix_w2, 0, 0, n)
    if mask is None:
        return mlp1_forward(w1, w2, x)
    m = _mask_expand(mask, x)
    out = mlp1_forward(w1, w2, tc.mul(x, m))  # zero padded columns going in
    return tc.mul(out, m)  # zero padded rows coming out


def shared_vector_mix(state, x, mask=None):
    n = x.shape[-2]
    w1 = tc.repeat_rows(state.vec_w1, n)
    w2 = tc.repeat_rows(state.vec_w2, n)
    return _masked_mlp1(w1, w2, x, mask)


def gmlp_mix(state, x, mask=None):
    spec = state.spec
    n = x.shape[-2]
    if n > spec.n_max:
        raise CapacityError(f"gmlp supports at most n_max={spec.n_max} tokens, got N={n}")
    half = spec.d_prime // 2
    z = tc.gelu(_linear(x, state.in_w, state.in_b))
    z1 = tc.narrow(z, -1, 0, half)
    z2 = tc.narrow(z, -1, half, half)
    if mask is not None:
        z2 = tc.mul(z2, _mask_expand(mask, x))
    t_n = tc.narrow(tc.narrow(state.gate_t, 0, 0, n), 1, 0, n)
    b_n = tc.reshape(tc.narrow(state.gate_b, 0, 0, n), (n, 1))
    gate = tc.mul(z1, tc.add(tc.matmul(t_n, z2), b_n))
    out = _linear(gate, state.out_w, state.out_b)
    if mask is not None:
        out = tc.mul(out, _mask_expand(mask, x))
    return out


def _real_dft(block):
    """Exact real part of the DFT along axis 0 of a (n, d) block."""
    n = block.shape[0]
    if n <= FNET_NAIVE_MAX:
        j = np.arange(n)
        cos = np.cos(2.0 * np.pi * np.outer(j, j) / n).astype(block.dtype)
        return cos @ block
    return np.fft.fft(block, axis=0).real.astype(block.dtype)


def fnet_mix(x, mask=None):
    """Real DFT along the token axis over valid positions only; parameter-free.

    The transform matrix Re(F) is symmetric, so the backward pass applies the
    same transform to the incoming gradient.
    """
    data = x.data
    batched = data.ndim == 3
    arr = data if batched else data[None]
    msk = None if mask is None else np.asarray(mask).reshape(arr.shape[0], arr.shape[1])
    valid = []
    flops = 0
    for b in range(arr.shape[0]):
        idx = None if msk is None else np.nonzero(msk[b] > 0)[0]
        valid.append(idx)
        n = arr.shape[1] if idx is None else idx.size
        d = arr.shape[2]
        flops += 2 * n * n * d if n <= FNET_NAIVE_MAX else int(5 * n * np.ceil(np.log2(max(n, 2))) * d)

    def transform(src):
        out = np.zeros_like(src)
        for b in range(src.shape[0]):
            idx = valid[b]
            if idx is None:
                out[b] = _real_dft(src[b])
            elif idx.size:
                out[b][idx] = _real_dft(src[b][idx])
        return out

    out = transform(arr)
    out = out if batched else out[0]

    def backward(d):
        g = transform(d if batched else d[None])
        return (g if batched else g[0],)

    return tc.apply_op("fnet", flops, out, (x,), backward)


def attention_mix(state, x, mask=None, capture=None):
    """Multi-head self-attention: per head softmax(QK^T / sqrt(d/h) + bias)V."""
    spec = state.spec
    h, d = spec.heads, spec.d
    dh = d // h
    n = x.shape[-2]

    def split_heads(t):
        t = tc.reshape(t, t.shape[:-1] + (h, dh))
        return tc.swapaxes(t, -3, -2)  # (..., h, N, dh)

    q = split_heads(_linear(x, state.wq, state.bq))
    k = split_heads(_linear(x, state.wk, state.bk))
    v = split_heads(_linear(x, state.wv, state.bv))
    scores = tc.matmul(q, tc.swapaxes(k, -1, -2)) * float(1.0 / np.sqrt(dh))
    if mask is not None:
        m = np.asarray(mask, dtype=x.dtype)
        bias = (m - 1.0) * MASK_BIAS  # 0 at valid, -1e9 at padded columns
        bias = bias[..., None, None, :]  # broadcast over heads and query rows
        scores = tc.add(scores, Tensor(bias))
    weights = tc.softmax_rows(scores)
    if capture is not None:
        capture["attention"] = weights.data.mean(axis=-3).copy()  # head-averaged
    ctx = tc.matmul(weights, v)
    ctx = tc.reshape(tc.swapaxes(ctx, -3, -2), x.shape[:-1] + (d,))
    return _linear(ctx, state.wo, state.bo)


def feature_mix(state, x):
    """Per-token two-layer perceptron d -> d' -> d with GELU."""
    h = tc.gelu(_linear(x, state.feat_w1, state.feat_b1))
    return _linear(h, state.feat_w2, state.feat_b2)


def token_mix(spec, state, x, mask=None, capture=None):
    """Dispatch to the configured token-mixing variant."""
    if x.shape[-1] != spec.d:
        raise ShapeError(f"input feature dim {x.shape[-1]} != configured d={spec.d}")
    kind = spec.kind
    if kind == "identity":
        return x
    if kind in ("hypermixer_tied", "hypermixer_untied"):
        return hypermixer_mix(state, x, mask)
    if kind == "mlpmixer":
        return mlpmixer_mix(state, x, mask)
    if kind == "gmlp":
        return gmlp_mix(state, x, mask)
    if kind == "fnet":
        return fnet_mix(x, mask)
    if kind == "attention":
        return attention_mix(state, x, mask, capture)
    if kind == "shared_vector":
        return shared_vector_mix(state, x, mask)
    raise ConfigError(f"unhandled mixing kind {kind!r}")


def layer_forward(state, x, mask=None, training=False, rng=None, dropout_p=0.0, capture=None):
    """One full layer: dropout at the input, then the two residual blocks."""
    if training and dropout_p > 0.0:
        x = tc.dropout(x, dropout_p, training, rng)
    normed = tc.layer_norm(x, state.ln1_gain, state.ln1_bias)
    if capture is not None:
        capture["mix_in"] = normed
    x = tc.add(x, token_mix(state.spec, state, normed, mask, capture))
    if state.feature_mixing:
        x = tc.add(x, feature_mix(state, tc.layer_norm(x, state.ln2_gain, state.ln2_bias)))
    return x
