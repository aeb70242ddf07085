"""Closed-form floating-point operation counts for the mixing architectures.

All formulas follow one cost model: a dot product of length d costs 2d, a
bias-free linear layer on a length-d vector costs 2*d*d', GELU costs 9 per
element, softmax over N values costs 3N (exp, divide, and N additions;
stabilization excluded), and transcendentals/divisions count as one operation
each. These counts are cross-checked exactly against the tape instrumentation
in bias-free mode (see tests).

The attention total is implemented with its projection term exactly as the
cost model states it, N-independent; ``corrected_projections=True`` swaps in a
per-token projection cost (3 projections of a d-vector to d dims, over N
tokens) for sensitivity analysis. The corrected variant is never used in
oracle equality tests.
"""

import csv
from dataclasses import dataclass

from .errors import ParameterError


def flops_matmul(n, m, d):
    """(n x d) @ (d x m): 2d per output entry."""
    return (n * m) * 2 * d


def flops_linear(d, d_prime):
    """One vector through a bias-free (d, d') linear layer."""
    return 2 * d * d_prime


def flops_gelu(n, d):
    """GELU over an (n, d) block: 9 per element."""
    return n * d * 9


def flops_softmax(n):
    """Softmax over n values: n exps, n divisions, n additions."""
    return 3 * n


def flops_mlp_equal(d, d_prime):
    """Two-layer MLP with equal input/output size d and hidden d', per vector."""
    return 4 * d * d_prime + d_prime * 9


def flops_mlp_unequal(d, d_prime, d_second):
    """Two-layer MLP d -> d' -> d'', per vector."""
    return 2 * d * d_prime + 2 * (d_prime * d_second) + d_prime * 9


def flops_hypernet_tied(n, d, d_prime):
    """Tied hypernetwork: one d -> d' -> d' MLP applied to each of n tokens."""
    return n * (2 * d * d_prime + 2 * d_prime * d_prime + 9 * d_prime)


def flops_mixing_mlp(n, d, d_prime):
    """Mixing MLP (input/output size n, hidden d') applied to each of d features."""
    return d * (4 * n * d_prime + 9 * d_prime)


def flops_hypermixer(n, d, d_prime):
    """Total HyperMixer token mixing: mixing MLP plus tied hypernetwork."""
    return flops_mixing_mlp(n, d, d_prime) + flops_hypernet_tied(n, d, d_prime)


def flops_attention(n, d, h, corrected_projections=False):
    """Total multi-head self-attention cost.

    Terms: QKV projections, per-head QK^T products, softmax, and the
    weighted average of values.
    """
    if h < 1 or d % h != 0:
        raise ParameterError(f"heads ({h}) must divide d ({d})")
    dh = d // h
    if corrected_projections:
        projections = n * 3 * 2 * d * d
    else:
        projections = h * 3 * 2 * dh * dh
    return projections + h * ((n * n) * 2 * dh) + 3 * n + (n * n * d * 2)


@dataclass(frozen=True)
class FlopReport:
    """Closed-form counts for one (N, d, d', h) configuration, with optional
    instrumented counts from a tape run alongside."""

    n: int
    d: int
    d_prime: int
    heads: int
    matmul: int
    linear: int
    gelu: int
    mlp_eq: int
    mlp_neq: int
    softmax: int
    hypernet_tied: int
    mixing_mlp: int
    hypermixer_total: int
    attention_total: int
    instrumented: dict | None = None

    def __post_init__(self):
        for field in ("matmul", "linear", "gelu", "mlp_eq", "mlp_neq", "softmax",
                      "hypernet_tied", "mixing_mlp", "hypermixer_total", "attention_total"):
            if getattr(self, field) < 0:
                raise ParameterError(f"negative count for {field}")
        assert self.hypermixer_total == self.mixing_mlp + self.hypernet_tied


def flop_report(n, d, d_prime, heads=4, d_second=None, instrumented=None):
    if min(n, d, d_prime) < 1:
        raise ParameterError(f"dimensions must be positive, got n={n}, d={d}, d_prime={d_prime}")
    d2 = d_second if d_second is not None else d
    return FlopReport(
        n=n,
        d=d,
        d_prime=d_prime,
        heads=heads,
        matmul=flops_matmul(n, n, d),
        linear=flops_linear(d, d_prime),
        gelu=flops_gelu(n, d),
        mlp_eq=flops_mlp_equal(d, d_prime),
        mlp_neq=flops_mlp_unequal(d, d_prime, d2),
        softmax=flops_softmax(n),
        hypernet_tied=flops_hypernet_tied(n, d, d_prime),
        mixing_mlp=flops_mixing_mlp(n, d, d_prime),
        hypermixer_total=flops_hypermixer(n, d, d_prime),
        attention_total=flops_attention(n, d, heads),
        instrumented=instrumented,
    )


def emit_complexity_table(n_list, d, d_prime, h, path):
    """Write a CSV of hypermixer vs attention counts per N.

    Columns: N, flops_hypermixer, flops_attention, ratio (attention over
    hypermixer). Counts are exact integers.
    """
    if not n_list:
        raise ParameterError("n_list must be nonempty")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["N", "flops_hypermixer", "flops_attention", "ratio"])
        for n in n_list:
            hm = flops_hypermixer(n, d, d_prime)
            at = flops_attention(n, d, h)
            writer.writerow([n, hm, at, f"{at / hm:.9g}"])
    return path
