"""Wall-clock measurement of token-mixing forward passes.

Timings are single-threaded (BLAS pools limited to one thread for the timed
region), 32-bit, in evaluation mode with no tape recording, and report robust
statistics (median with p10/p90) over ``reps`` repetitions after a warmup of
``max(10, reps // 10)`` untimed iterations. Inputs and parameters are
allocated before the timed loop. Only orderings and scaling exponents are
meaningful; absolute times are machine-dependent.
"""

import csv
import time
from dataclasses import dataclass, fields

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ParameterError
from .flops import flops_attention, flops_hypermixer, flops_mixing_mlp
from .mixing import MixingLayerState, TokenMixingSpec, token_mix
from .tensor import Tape, Tensor
from . import backend

BENCH_VARIANTS = ("hypermixer_tied", "hypermixer_untied", "mlpmixer", "gmlp", "fnet",
                  "attention", "shared_vector", "identity")


@dataclass
class TimingRecord:
    variant: str
    n: int
    d: int
    d_prime: int
    heads: int
    reps: int
    median_seconds: float
    p10_seconds: float
    p90_seconds: float
    precision: str
    flops: int

    def __post_init__(self):
        if self.reps < 1:
            raise ParameterError("reps must be >= 1")
        assert self.p10_seconds <= self.median_seconds <= self.p90_seconds


def _build_state(variant, n, d, d_prime, heads, dtype, n_max=None):
    if variant in ("mlpmixer", "gmlp"):
        n_max = n_max if n_max is not None else n
    else:
        n_max = None
    spec = TokenMixingSpec(kind=variant, d=d, d_prime=d_prime, n_max=n_max, heads=heads)
    state = MixingLayerState(spec, np.random.default_rng(0), dtype=dtype)
    return spec, state


def closed_form_flops(variant, n, d, d_prime, heads):
    """Closed-form count where one exists; otherwise one instrumented forward."""
    if variant in ("hypermixer_tied", "hypermixer_untied"):
        total = flops_hypermixer(n, d, d_prime)
        if variant == "hypermixer_untied":
            total += n * (2 * d * d_prime + 2 * d_prime * d_prime + 9 * d_prime)
        return total
    if variant == "attention":
        return flops_attention(n, d, heads)
    if variant in ("mlpmixer", "shared_vector"):
        return flops_mixing_mlp(n, d, d_prime)
    if variant == "identity":
        return 0
    spec, state = _build_state(variant, n, d, d_prime, heads, np.float64)
    x = Tensor(np.zeros((n, d)))
    with Tape() as tape:
        token_mix(spec, state, x)
    return tape.total_flops


def time_mixing(variant, n, d=256, d_prime=512, heads=4, reps=25, seed=0,
                dtype=np.float32, n_max=None):
    """Time one token-mixing forward at sequence length n; returns a TimingRecord.

    Fixed-size variants raise CapacityError when n exceeds ``n_max`` (which
    defaults to n itself, i.e. a module sized for the benchmark).
    """
    if variant not in BENCH_VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}; expected one of {BENCH_VARIANTS}")
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    spec, state = _build_state(variant, n, d, d_prime, heads, dtype, n_max=n_max)
    x = Tensor(np.random.default_rng(seed).standard_normal((n, d)).astype(dtype))
    samples = np.empty(reps)
    with threadpool_limits(limits=1):
        for _ in range(max(10, reps // 10)):
            token_mix(spec, state, x)
        for r in range(reps):
            t0 = time.perf_counter()
            token_mix(spec, state, x)
            samples[r] = time.perf_counter() - t0
    return TimingRecord(
        variant=variant,
        n=n,
        d=d,
        d_prime=d_prime,
        heads=heads,
        reps=reps,
        median_seconds=float(np.median(samples)),
        p10_seconds=float(np.percentile(samples, 10)),
        p90_seconds=float(np.percentile(samples, 90)),
        precision=np.dtype(dtype).name,
        flops=closed_form_flops(variant, n, d, d_prime, heads),
    )


def scaling_exponent(records):
    """Least-squares slope of log(median seconds) against log(N)."""
    ns = sorted({r.n for r in records})
    if len(ns) < 4:
        raise ParameterError(f"need >= 4 distinct N values, got {len(ns)}")
    if max(ns) < 8 * min(ns):
        raise ParameterError("N grid must span at least a factor of 8")
    x = np.log([r.n for r in records])
    y = np.log([r.median_seconds for r in records])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


_CSV_FIELDS = [f.name for f in fields(TimingRecord)]


def emit_benchmark_csv(records, path, metadata=None):
    """One CSV row per record; '#'-prefixed metadata comment first."""
    meta = dict(metadata or {})
    meta.setdefault("kernel_backend", backend.backend_name())
    comment = " ".join(f"{k}={v}" for k, v in sorted(meta.items()))
    with open(path, "w", newline="") as f:
        f.write(f"# {comment}\n" if comment else "#\n")
        writer = csv.writer(f)
        writer.writerow(_CSV_FIELDS)
        for r in records:
            row = []
            for name in _CSV_FIELDS:
                v = getattr(r, name)
                row.append(f"{v:.9g}" if isinstance(v, float) else v)
            writer.writerow(row)
    return path


def parse_benchmark_csv(path):
    records = []
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    for doc in csv.DictReader(lines):
        records.append(TimingRecord(
            variant=doc["variant"],
            n=int(doc["n"]),
            d=int(doc["d"]),
            d_prime=int(doc["d_prime"]),
            heads=int(doc["heads"]),
            reps=int(doc["reps"]),
            median_seconds=float(doc["median_seconds"]),
            p10_seconds=float(doc["p10_seconds"]),
            p90_seconds=float(doc["p90_seconds"]),
            precision=doc["precision"],
            flops=int(doc["flops"]),
        ))
    return records


# -- compiled-vs-numpy kernel comparison ------------------------------------------


def compare_kernels(sizes=((4096, 512),), reps=30):
    """Time the compiled and numpy kernel paths on identical inputs.

    Returns a list of dicts (kernel, rows, cols, backend, median_seconds).
    The compiled rows are absent when the extension is not built.
    """
    results = []
    rng = np.random.default_rng(0)
    pairs = [("gelu", "numpy", backend.gelu_fwd_numpy), ("softmax", "numpy", backend.softmax_fwd_numpy)]
    if backend.compiled_available:
        pairs += [("gelu", "compiled", backend.gelu_fwd_compiled),
                  ("softmax", "compiled", backend.softmax_fwd_compiled)]
    with threadpool_limits(limits=1):
        for rows, cols in sizes:
            x = rng.standard_normal((rows, cols)).astype(np.float32)
            for kernel, name, fn in pairs:
                fn(x)
                samples = []
                for _ in range(reps):
                    t0 = time.perf_counter()
                    fn(x)
                    samples.append(time.perf_counter() - t0)
                results.append({
                    "kernel": kernel,
                    "rows": rows,
                    "cols": cols,
                    "backend": name,
                    "median_seconds": float(np.median(samples)),
                })
    return results
