"""Model assembly: embeddings, stacked mixing layers, pooling, and task heads.

A model is ``embed + positions -> L x (LN -> token_mix -> residual -> LN ->
feature_mix -> residual) -> head`` with dropout at each layer input during
training. Two input modes exist: integer token ids through an embedding table,
and scalar per-position signals through a 1 -> d linear lift (used by the
synthetic task). The classifier head pools the mean over valid tokens; the
regressor head emits one value per token.

Checkpoints are single binary files: the magic ``MIXK1``, a little-endian
uint64 byte length, the canonical-JSON header (config + dtype), then every
parameter tensor in declaration order as little-endian float64. Round-trips
are bit-exact.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as tc
from .errors import ConfigError, DataError
from .mixing import (
    MixingLayerState,
    TokenMixingSpec,
    count_layer_params,
    layer_forward,
    sinusoidal_positions,
)
from .tensor import Tensor

CHECKPOINT_MAGIC = b"MIXK1"

_position_cache = {}


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int
    d: int
    d_prime: int
    token_mixing: TokenMixingSpec
    vocab_size: int | None = None
    dropout_p: float = 0.1
    head: str = "classifier"  # or "regressor"
    num_classes: int | None = None
    pooling: str = "mean_over_valid"  # or "none"
    input_kind: str = "tokens"  # or "scalar"
    feature_mixing: bool = True
    use_positions: bool = True

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.token_mixing.d != self.d or self.token_mixing.d_prime != self.d_prime:
            raise ConfigError("token_mixing dims must match the model's d and d_prime")
        if self.head not in ("classifier", "regressor"):
            raise ConfigError(f"unknown head {self.head!r}")
        if self.head == "classifier":
            if not self.num_classes or self.num_classes < 2:
                raise ConfigError("classifier head needs num_classes >= 2")
            if self.pooling != "mean_over_valid":
                raise ConfigError("classifier head requires mean_over_valid pooling")
        if self.head == "regressor" and self.pooling != "none":
            raise ConfigError("regressor head is per-token; pooling must be 'none'")
        if self.input_kind == "tokens":
            if not self.vocab_size or self.vocab_size < 1:
                raise ConfigError("token input requires a positive vocab_size")
        elif self.input_kind == "scalar":
            if self.vocab_size is not None:
                raise ConfigError("scalar input takes no vocab_size")
        else:
            raise ConfigError(f"unknown input_kind {self.input_kind!r}")


class Model:
    """A built model: config plus its parameter tensors."""

    def __init__(self, config, emb, lift_w, lift_b, layers, head_w, head_b):
        self.config = config
        self.emb = emb
        self.lift_w = lift_w
        self.lift_b = lift_b
        self.layers = layers
        self.head_w = head_w
        self.head_b = head_b

    @classmethod
    def build(cls, config, seed=0, dtype=np.float64, bias=True):
        rng = np.random.default_rng(seed)
        d = config.d
        emb = lift_w = lift_b = None
        if config.input_kind == "tokens":
            bound = 1.0 / np.sqrt(d)
            emb = Tensor(rng.uniform(-bound, bound, size=(config.vocab_size, d)).astype(dtype),
                         requires_grad=True)
        else:
            emb = None
            bound = 1.0
            lift_w = Tensor(rng.uniform(-bound, bound, size=(1, d)).astype(dtype), requires_grad=True)
            lift_b = Tensor(rng.uniform(-bound, bound, size=(d,)).astype(dtype), requires_grad=True)
        layers = [
            MixingLayerState(config.token_mixing, rng, dtype=dtype, bias=bias,
                             feature_mixing=config.feature_mixing)
            for _ in range(config.num_layers)
        ]
        out_dim = config.num_classes if config.head == "classifier" else 1
        bound = 1.0 / np.sqrt(d)
        head_w = Tensor(rng.uniform(-bound, bound, size=(d, out_dim)).astype(dtype), requires_grad=True)
        head_b = Tensor(rng.uniform(-bound, bound, size=(out_dim,)).astype(dtype), requires_grad=True) if bias \
            else Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=False)
        return cls(config, emb, lift_w, lift_b, layers, head_w, head_b)

    @property
    def dtype(self):
        return self.head_w.dtype

    def named_parameters(self):
        params = []
        if self.emb is not None:
            params.append(("embedding", self.emb))
        if self.lift_w is not None:
            params += [("lift.w", self.lift_w), ("lift.b", self.lift_b)]
        for i, layer in enumerate(self.layers):
            params += [(f"layer{i}.{name}", t) for name, t in layer.named_parameters()]
        params.append(("head.w", self.head_w))
        if self.head_b.requires_grad:
            params.append(("head.b", self.head_b))
        return params

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def parameter_names(self):
        return [n for n, _ in self.named_parameters()]

    def param_count(self):
        return sum(t.size for t in self.parameters())

    def _positions(self, n):
        key = (n, self.config.d, np.dtype(self.dtype).name)
        if key not in _position_cache:
            _position_cache[key] = Tensor(sinusoidal_positions(n, self.config.d, self.dtype))
        return _position_cache[key]

    def embed(self, inputs):
        """Map raw inputs (token ids or scalar signals) to (B, N, d) with positions added."""
        cfg = self.config
        arr = np.asarray(inputs)
        if arr.ndim == 1:
            arr = arr[None, :]
        if cfg.input_kind == "tokens":
            if not np.issubdtype(arr.dtype, np.integer):
                raise DataError(f"token input must be integer ids, got dtype {arr.dtype}")
            if arr.min(initial=0) < 0 or arr.max(initial=0) >= cfg.vocab_size:
                raise DataError(
                    f"token id out of range [0, {cfg.vocab_size}): found {int(arr.min())}..{int(arr.max())}"
                )
            x = tc.gather_rows(self.emb, arr)
        else:
            vals = Tensor(arr[..., None].astype(self.dtype))
            x = tc.add(tc.matmul(vals, self.lift_w), self.lift_b)
        if cfg.use_positions:
            x = tc.add(x, self._positions(arr.shape[1]))
        return x

    def forward(self, inputs, mask=None, training=False, rng=None, capture=None):
        """Run the model; returns (B, C) logits or (B, N) per-token outputs."""
        cfg = self.config
        x = self.embed(inputs)
        if mask is not None:
            mask = np.asarray(mask, dtype=self.dtype)
            if mask.ndim == 1:
                mask = mask[None, :]
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            cap = capture if (capture is not None and i == last) else None
            x = layer_forward(layer, x, mask=mask, training=training, rng=rng,
                              dropout_p=cfg.dropout_p, capture=cap)
        if cfg.head == "classifier":
            if mask is None:
                pooled = tc.reduce_sum(x, axis=-2) * float(1.0 / x.shape[-2])
            else:
                m = Tensor(mask[..., None])
                counts = mask.sum(axis=-1, keepdims=True)  # (B, 1), constant
                pooled = tc.mul(tc.reduce_sum(tc.mul(x, m), axis=-2), Tensor(1.0 / counts))
            return tc.add(tc.matmul(pooled, self.head_w), self.head_b)
        out = tc.add(tc.matmul(x, self.head_w), self.head_b)
        return tc.reshape(out, out.shape[:-1])


def count_params(config, bias=True):
    """Analytic parameter count; matches enumeration of a built model exactly."""
    d = config.d
    total = config.vocab_size * d if config.input_kind == "tokens" else 2 * d
    total += config.num_layers * count_layer_params(config.token_mixing, bias=bias,
                                                    feature_mixing=config.feature_mixing)
    out_dim = config.num_classes if config.head == "classifier" else 1
    total += d * out_dim + (out_dim if bias else 0)
    return total


def feature_only_model(config, seed=0, dtype=np.float64):
    """Ablation: identity token mixing, mean pooling over valid tokens.

    Position embeddings are disabled so the model is exactly permutation
    invariant, as a purely per-token architecture should be.
    """
    spec = TokenMixingSpec(kind="identity", d=config.d, d_prime=config.d_prime)
    cfg = replace(config, token_mixing=spec, feature_mixing=True, use_positions=False)
    return Model.build(cfg, seed=seed, dtype=dtype)


def token_only_model(config, seed=0, dtype=np.float64):
    """Ablation: a single hypernetwork-mixing layer with no feature-mixing MLPs."""
    spec = TokenMixingSpec(kind="hypermixer_tied", d=config.d, d_prime=config.d_prime)
    cfg = replace(config, token_mixing=spec, num_layers=1, feature_mixing=False)
    return Model.build(cfg, seed=seed, dtype=dtype)


# -- config (de)serialization ----------------------------------------------------


def config_to_dict(config):
    spec = config.token_mixing
    return {
        "num_layers": config.num_layers,
        "d": config.d,
        "d_prime": config.d_prime,
        "token_mixing": {
            "kind": spec.kind,
            "d": spec.d,
            "d_prime": spec.d_prime,
            "n_max": spec.n_max,
            "heads": spec.heads,
            "reinject_positions": spec.reinject_positions,
        },
        "vocab_size": config.vocab_size,
        "dropout_p": config.dropout_p,
        "head": config.head,
        "num_classes": config.num_classes,
        "pooling": config.pooling,
        "input_kind": config.input_kind,
        "feature_mixing": config.feature_mixing,
        "use_positions": config.use_positions,
    }


def _take(d, keys, where):
    unknown = set(d) - set(keys)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in {where}")
    return {k: d[k] for k in keys if k in d}


def config_from_dict(doc):
    doc = dict(doc)
    spec_doc = doc.pop("token_mixing", None)
    if spec_doc is None:
        raise ConfigError("missing key 'token_mixing' in model config")
    spec_kw = _take(spec_doc, ["kind", "d", "d_prime", "n_max", "heads", "reinject_positions"],
                    "token_mixing")
    spec = TokenMixingSpec(**spec_kw)
    kw = _take(doc, ["num_layers", "d", "d_prime", "vocab_size", "dropout_p", "head",
                     "num_classes", "pooling", "input_kind", "feature_mixing", "use_positions"],
                "model config")
    return ModelConfig(token_mixing=spec, **kw)


def canonical_json(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# -- checkpoint I/O ----------------------------------------------------------------


def save_checkpoint(path, model):
    header = canonical_json({"config": config_to_dict(model.config),
                             "dtype": np.dtype(model.dtype).name}).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(len(header).to_bytes(8, "little"))
        f.write(header)
        for t in model.parameters():
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return path


def load_checkpoint(path):
    with open(path, "rb") as f:
        magic = f.read(5)
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        header_len = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(header_len).decode())
        config = config_from_dict(header["config"])
        dtype = np.dtype(header["dtype"])
        model = Model.build(config, seed=0, dtype=dtype)
        for t in model.parameters():
            raw = f.read(t.size * 8)
            if len(raw) != t.size * 8:
                raise DataError("checkpoint truncated")
            t.data = np.frombuffer(raw, dtype="<f8").reshape(t.shape).astype(dtype)
        trailing = f.read(1)
        if trailing:
            raise DataError("checkpoint has trailing bytes")
    return model
