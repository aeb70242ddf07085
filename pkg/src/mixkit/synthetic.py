"""Synthetic shape-pair regression task and pseudo-attention analysis.

Each length-100 sequence contains two rectangles and two triangles at random
non-overlapping positions (widths 5..10, heights uniform on (1, 10), at least
one empty cell between shapes). The target equals the input with every shape's
height replaced by the mean height of the two shapes of its type, so solving
the task requires attending to the same-shape partner.

``pointwise_floor`` computes the irreducible test MSE for any model without
token interactions: conditioned on everything visible at one position (cell
value, profile fraction, even the shape type), the partner height stays
uniform on (1, 10), leaving variance (profile * (10-1)^2/12 / 2)^2-style
residual; concretely Var = (x/h)^2 * Var(U(1,10)) / 4 per shape cell.

``pseudo_attention`` aggregates the absolute Jacobian of the final
token-mixing block, entry (i, j) = sum_f |d mix_out[i, f] / d mix_in[j, f]|,
rows normalized to sum one. For attention models the softmax weights are also
exported directly as true attention maps.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tc
from .errors import AnalysisError, GenerationError, ParameterError
from .mixing import TokenMixingSpec, token_mix
from .model import Model, ModelConfig
from .tensor import Tape, Tensor
from .training import Adam

SEQUENCE_LENGTH = 100
WIDTH_RANGE = (5, 10)
HEIGHT_RANGE = (1.0, 10.0)
MAX_PLACEMENT_TRIES = 10_000
PAIR_HEIGHT_VARIANCE = (HEIGHT_RANGE[1] - HEIGHT_RANGE[0]) ** 2 / 12.0

TEST_SET_SEED = 990_001
TEST_SET_SIZE = 10_000
VAL_SET_SIZE = 1_000

SYNTH_VARIANTS = ("none", "mlpmixer", "hypermixer", "attention")
_VARIANT_KINDS = {
    "none": "identity",
    "mlpmixer": "mlpmixer",
    "hypermixer": "hypermixer_tied",
    "attention": "attention",
}


@dataclass(frozen=True)
class Shape:
    kind: str  # "rectangle" or "triangle"
    start: int
    width: int
    height: float


@dataclass
class ShapeSequence:
    signal: np.ndarray
    target: np.ndarray
    shapes: tuple | None = None


def _profile(kind, width):
    """Unit-height cell profile of a shape; triangles are symmetric tents."""
    if kind == "rectangle":
        return np.ones(width)
    ramp = 1.0 + np.minimum(np.arange(width), width - 1 - np.arange(width))
    return ramp / ramp.max()


def _render(shapes, heights_by_shape, length):
    out = np.zeros(length)
    for shape, height in zip(shapes, heights_by_shape):
        prof = _profile(shape.kind, shape.width)
        out[shape.start: shape.start + shape.width] = prof * height
    return out


def generate(seed, count, length=SEQUENCE_LENGTH):
    """Deterministic shape sequences; sequence i derives its rng from (seed, i)."""
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    sequences = []
    for index in range(count):
        rng = np.random.default_rng([seed, index])
        kinds = ("rectangle", "rectangle", "triangle", "triangle")
        for attempt in range(MAX_PLACEMENT_TRIES):
            widths = rng.integers(WIDTH_RANGE[0], WIDTH_RANGE[1] + 1, size=4)
            heights = rng.uniform(HEIGHT_RANGE[0], HEIGHT_RANGE[1], size=4)
            starts = np.array([rng.integers(0, length - w + 1) for w in widths])
            intervals = sorted(zip(starts, widths))
            ok = all(a + wa + 1 <= b for (a, wa), (b, _) in zip(intervals, intervals[1:]))
            if ok:
                break
        else:
            raise GenerationError(f"no valid placement after {MAX_PLACEMENT_TRIES} tries (sequence {index})")
        shapes = tuple(Shape(k, int(s), int(w), float(h))
                       for k, s, w, h in zip(kinds, starts, widths, heights))
        mean_rect = (heights[0] + heights[1]) / 2.0
        mean_tri = (heights[2] + heights[3]) / 2.0
        target_heights = [mean_rect, mean_rect, mean_tri, mean_tri]
        signal = _render(shapes, heights, length)
        target = _render(shapes, target_heights, length)
        sequences.append(ShapeSequence(signal=signal, target=target, shapes=shapes))
    return sequences


def pointwise_floor(sequences):
    """Irreducible per-cell MSE for any model without token interactions."""
    total = 0.0
    cells = 0
    for seq in sequences:
        if seq.shapes is None:
            raise ParameterError("pointwise_floor needs shape descriptors")
        for shape in seq.shapes:
            prof = _profile(shape.kind, shape.width)
            total += float((prof**2).sum()) * PAIR_HEIGHT_VARIANCE / 4.0
        cells += seq.signal.size
    return total / cells


def check_target_rule(seq):
    """Descriptor-based oracle: recompute the target from the shape list."""
    by_kind = {}
    for shape in seq.shapes:
        by_kind.setdefault(shape.kind, []).append(shape)
    expect = np.zeros_like(seq.target)
    for kind, shapes in by_kind.items():
        mean = np.mean([s.height for s in shapes])
        for s in shapes:
            expect[s.start: s.start + s.width] = _profile(kind, s.width) * mean
    return np.abs(expect - seq.target).max() == 0.0


# -- dataset cache -------------------------------------------------------------


def save_dataset_csv(path, sequences):
    length = sequences[0].signal.size
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index"] + [f"input_{i}" for i in range(length)]
                        + [f"target_{i}" for i in range(length)])
        for idx, seq in enumerate(sequences):
            writer.writerow([idx] + [f"{v:.9g}" for v in seq.signal] + [f"{v:.9g}" for v in seq.target])
    return path


def load_dataset_csv(path):
    sequences = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        length = (len(header) - 1) // 2
        for row in reader:
            vals = np.array([float(v) for v in row[1:]])
            sequences.append(ShapeSequence(signal=vals[:length], target=vals[length:], shapes=None))
    return sequences


# -- training glue ---------------------------------------------------------------


def synth_model_config(variant, d=64, d_prime=128, num_layers=2, heads=4,
                       length=SEQUENCE_LENGTH):
    if variant not in SYNTH_VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}; expected one of {SYNTH_VARIANTS}")
    kind = _VARIANT_KINDS[variant]
    n_max = length if kind == "mlpmixer" else None
    spec = TokenMixingSpec(kind=kind, d=d, d_prime=d_prime, n_max=n_max, heads=heads)
    return ModelConfig(num_layers=num_layers, d=d, d_prime=d_prime, token_mixing=spec,
                       vocab_size=None, dropout_p=0.0, head="regressor", pooling="none",
                       input_kind="scalar")


def default_epochs(num_examples):
    """Epoch budget shrinking with dataset size, keeping desk-scale runtimes."""
    return max(4, min(20, round(120_000 / num_examples)))


def _as_arrays(sequences, dtype=np.float32):
    x = np.stack([s.signal for s in sequences]).astype(dtype)
    y = np.stack([s.target for s in sequences]).astype(dtype)
    return x, y


def mse_loss(pred, target_arr):
    diff = tc.sub(pred, Tensor(target_arr))
    return tc.reduce_sum(tc.mul(diff, diff)) * float(1.0 / diff.size)


def evaluate_mse(model, sequences, batch_size=200):
    x, y = _as_arrays(sequences, dtype=model.dtype)
    total = 0.0
    for start in range(0, len(x), batch_size):
        xb, yb = x[start: start + batch_size], y[start: start + batch_size]
        pred = model.forward(xb).data
        total += float(((pred - yb) ** 2).sum())
    return total / y.size


@dataclass
class SynthResult:
    variant: str
    num_examples: int
    seed: int
    model: Model
    test_mse: float
    val_mse: float
    best_epoch: int
    history: list = field(default_factory=list)
    wall_seconds: float = 0.0


def train_synthetic(variant, num_examples, seed, epochs=None, learning_rate=1e-3,
                    batch_size=64, d=64, d_prime=128, num_layers=2, heads=4,
                    test_sequences=None, dtype=np.float32, log=None):
    """Train one variant on the shape task; returns model plus held-out test MSE."""
    start = time.perf_counter()
    config = synth_model_config(variant, d=d, d_prime=d_prime, num_layers=num_layers, heads=heads)
    if epochs is None:
        epochs = default_epochs(num_examples)
    train_x, train_y = _as_arrays(generate(seed, num_examples), dtype=dtype)
    val_seqs = generate(seed + 7_777, VAL_SET_SIZE)
    if test_sequences is None:
        test_sequences = generate(TEST_SET_SEED, TEST_SET_SIZE)
    model = Model.build(config, seed=seed, dtype=dtype)
    opt = Adam(model.parameters(), learning_rate)
    shuffle_rng = np.random.default_rng(seed + 1)
    history = []
    best = (np.inf, -1, None)
    for epoch in range(epochs):
        order = shuffle_rng.permutation(num_examples)
        epoch_loss = 0.0
        batches = 0
        for s in range(0, num_examples, batch_size):
            idx = order[s: s + batch_size]
            with Tape() as tape:
                pred = model.forward(train_x[idx], training=True)
                loss = mse_loss(pred, train_y[idx])
                tape.backward(loss)
            opt.step()
            opt.zero_grads()
            epoch_loss += loss.item()
            batches += 1
        val_mse = evaluate_mse(model, val_seqs)
        entry = {"epoch": epoch, "train_mse": epoch_loss / batches, "val_mse": val_mse}
        history.append(entry)
        if log:
            log(entry)
        if val_mse < best[0]:
            best = (val_mse, epoch, [p.data.copy() for p in model.parameters()])
    if best[2] is not None:
        for p, data in zip(model.parameters(), best[2]):
            p.data = data
    test_mse = evaluate_mse(model, test_sequences)
    return SynthResult(variant=variant, num_examples=num_examples, seed=seed, model=model,
                       test_mse=test_mse, val_mse=best[0], best_epoch=best[1],
                       history=history, wall_seconds=time.perf_counter() - start)


# -- attention maps ---------------------------------------------------------------


@dataclass(frozen=True)
class AttentionMap:
    matrix: np.ndarray  # (N, N), row-stochastic
    provenance: str  # "pseudo" or "true_attention"

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParameterError(f"attention map must be square, got {m.shape}")
        if (m < 0).any() or np.abs(m.sum(axis=1) - 1.0).max() > 1e-6:
            raise ParameterError("attention map rows must be nonnegative and sum to 1")
        if self.provenance not in ("pseudo", "true_attention"):
            raise ParameterError(f"unknown provenance {self.provenance!r}")


def _last_block_input(model, sequence):
    capture = {}
    model.forward(sequence.signal[None, :], capture=capture)
    return capture, capture["mix_in"].data[0]


def pseudo_attention(model, sequence):
    """Row-normalized, feature-aggregated absolute Jacobian of the last mixing block."""
    spec = model.config.token_mixing
    if spec.kind == "identity":
        raise AnalysisError("identity mixing has no token-mixing block to analyse")
    _, z = _last_block_input(model, sequence)
    n, d = z.shape
    layer = model.layers[-1]
    jac = np.zeros((n, n), dtype=np.float64)
    with Tape() as tape:
        zt = Tensor(z, requires_grad=True)
        out = token_mix(spec, layer, zt)
        seed = np.zeros(out.shape, dtype=out.dtype.type)
        for i in range(n):
            for f in range(d):
                seed[i, f] = 1.0
                tape.backward(out, seed=seed)
                jac[i] += np.abs(zt.grad[:, f])
                seed[i, f] = 0.0
                tape.zero_grads()
    rows = jac.sum(axis=1, keepdims=True)
    rows[rows == 0] = 1.0
    return AttentionMap(matrix=jac / rows, provenance="pseudo")


def true_attention(model, sequence):
    """Head-averaged softmax weights of the final attention layer."""
    if model.config.token_mixing.kind != "attention":
        raise AnalysisError("true attention maps exist only for the attention variant")
    capture, _ = _last_block_input(model, sequence)
    weights = capture["attention"][0]
    return AttentionMap(matrix=weights.astype(np.float64), provenance="true_attention")


def same_shape_mass(amap, shapes):
    """Mean per-cell map weight on partner-shape cells vs different-type cells.

    For every row inside a shape, 'same' collects weight on the other shape of
    the same type and 'different' on cells of the opposite type.
    """
    cells = {}
    for idx, shape in enumerate(shapes):
        cells[idx] = np.arange(shape.start, shape.start + shape.width)
    same_total, same_cells, diff_total, diff_cells = 0.0, 0, 0.0, 0
    for i, shape in enumerate(shapes):
        partner = [j for j, s in enumerate(shapes) if s.kind == shape.kind and j != i]
        others = [j for j, s in enumerate(shapes) if s.kind != shape.kind]
        for row in cells[i]:
            for j in partner:
                same_total += float(amap.matrix[row, cells[j]].sum())
                same_cells += cells[j].size
            for j in others:
                diff_total += float(amap.matrix[row, cells[j]].sum())
                diff_cells += cells[j].size
    return same_total / same_cells, diff_total / diff_cells


def top1_agreement(map_a, map_b):
    """Fraction of rows whose argmax column coincides."""
    return float((map_a.matrix.argmax(axis=1) == map_b.matrix.argmax(axis=1)).mean())


# -- map export --------------------------------------------------------------------


def export_map(amap, path, fmt):
    if fmt == "csv":
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            for row in amap.matrix:
                writer.writerow([f"{v:.9g}" for v in row])
    elif fmt == "pgm":
        n = amap.matrix.shape[0]
        rows = []
        for row in amap.matrix:
            top = row.max()
            scaled = np.zeros(n, dtype=np.uint8) if top <= 0 else \
                np.round(255.0 * row / top).astype(np.uint8)
            rows.append(scaled)
        with open(path, "wb") as f:
            f.write(f"P5\n{n} {n}\n255\n".encode())
            f.write(np.stack(rows).tobytes())
    else:
        raise ParameterError(f"unknown map format {fmt!r}; expected 'csv' or 'pgm'")
    return path


def load_map_csv(path, provenance="pseudo"):
    with open(path, newline="") as f:
        matrix = np.array([[float(v) for v in row] for row in csv.reader(f)])
    rows = matrix.sum(axis=1, keepdims=True)
    rows[rows == 0] = 1.0
    return AttentionMap(matrix=matrix / rows, provenance=provenance)
