"""Finite-difference gradient verification.

The oracle is a central difference at 64-bit precision: for each parameter
element, (f(x+h) - f(x-h)) / 2h with h = 1e-5. Errors are reported as the
max absolute deviation normalized by the larger gradient magnitude, floored
at 1e-2 so near-zero gradients are compared absolutely.
"""

import numpy as np

from .tensor import Tape

FD_STEP = 1e-5
REL_TOLERANCE = 1e-4
ERROR_FLOOR = 1e-2


def max_rel_error(analytic, numeric, floor=ERROR_FLOOR):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(floor, np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def finite_difference_grad(loss_fn, tensor, h=FD_STEP):
    """Central-difference gradient of ``loss_fn()`` w.r.t. one tensor, in place."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn().item()
        flat[i] = orig - h
        down = loss_fn().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def check_gradients(loss_fn, tensors, h=FD_STEP):
    """Compare autodiff gradients against central differences.

    ``loss_fn`` must rebuild the scalar loss from the current contents of
    ``tensors`` (it is re-evaluated many times, deterministically). Returns
    the per-tensor max relative errors, in input order.
    """
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
    analytic = []
    for t in tensors:
        if t.grad is None:
            raise AssertionError(f"no gradient reached tensor of shape {t.shape}")
        analytic.append(t.grad.copy())
        t.grad = None
    errors = []
    for t, a in zip(tensors, analytic):
        numeric = finite_difference_grad(loss_fn, t, h=h)
        errors.append(max_rel_error(a, numeric))
    return errors


def model_gradcheck(kind, num_layers=2, d=4, d_prime=6, n=5, seed=0, h=FD_STEP):
    """End-to-end gradient check of a tiny model with the given mixing kind.

    Builds a 2-sequence batch (one padded position) with a classifier head and
    checks every parameter. Returns a dict mapping parameter names to max
    relative errors.
    """
    from . import model as model_mod
    from .mixing import TokenMixingSpec

    n_max = n + 3 if kind in ("mlpmixer", "gmlp") else None
    heads = 2 if kind == "attention" else 4
    spec = TokenMixingSpec(kind=kind, d=d, d_prime=d_prime, n_max=n_max, heads=heads)
    config = model_mod.ModelConfig(
        num_layers=num_layers,
        d=d,
        d_prime=d_prime,
        token_mixing=spec,
        vocab_size=11,
        dropout_p=0.0,
        head="classifier",
        num_classes=3,
        pooling="mean_over_valid",
    )
    mdl = model_mod.Model.build(config, seed=seed)
    rng = np.random.default_rng(seed + 1)
    tokens = rng.integers(3, 11, size=(2, n))
    mask = np.ones((2, n))
    mask[1, -1] = 0.0  # exercise padding
    labels = rng.integers(0, 3, size=2)

    def loss_fn():
        from .tensor import cross_entropy

        logits = mdl.forward(tokens, mask=mask)
        return cross_entropy(logits, labels)

    names = mdl.parameter_names()
    errors = check_gradients(loss_fn, mdl.parameters(), h=h)
    return dict(zip(names, errors))
