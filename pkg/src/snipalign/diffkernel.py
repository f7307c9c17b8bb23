"""Differentiable numeric primitives.

Every forward op here has an exact analytic gradient companion, and
``check_gradients`` verifies any (value, gradients) pair against central
finite differences.  Conventions:

* batches are 2-D float64 arrays, rows = samples;
* probability and feature rows are 1-D arrays;
* probabilities are clamped to ``[PROB_EPS, 1]`` before any log, so no op
  ever produces ``-inf`` from a zero prediction.

All functions are pure; nothing here holds state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DimensionError, DivergenceError

PROB_EPS = 1e-7

# Floor for the denominator of relative errors, so coordinates where both the
# analytic and numeric gradients are ~0 are not flagged on rounding noise.
REL_ERR_FLOOR = 1e-6


def tensor2(data) -> np.ndarray:
    """Return ``data`` as a finite 2-D float64 array, validating both."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("array contains non-finite entries")
    return arr


# ---------------------------------------------------------------------------
# linear / activation layers


def affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``x @ w + b`` for x (B, p), w (p, q), b (q,)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(
            f"affine: x {x.shape} does not conform with w {w.shape}")
    if b.shape != (w.shape[1],):
        raise DimensionError(f"affine: bias shape {b.shape} != ({w.shape[1]},)")
    return x @ w + b


def affine_vjp(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray):
    """Gradients of ``affine`` wrt (x, w, b) given the upstream grad (B, q)."""
    return grad_out @ w.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_vjp(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return grad_out * (x > 0.0)


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-stable softmax over the last axis (works on 1-D and 2-D input)."""
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_vjp(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Gradient wrt the logits, given softmax output ``p`` and dL/dp."""
    inner = (grad_p * p).sum(axis=-1, keepdims=True)
    return p * (grad_p - inner)


# ---------------------------------------------------------------------------
# probability-row losses


def clamp_probs(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_EPS, 1.0)


def cross_entropy(o: np.ndarray, target: np.ndarray) -> float:
    """``-sum(target * log(o))`` with ``o`` clamped; gradient flows to ``o`` only."""
    if o.shape != target.shape:
        raise DimensionError(
            f"cross_entropy: shapes {o.shape} vs {target.shape}")
    return float(-(target * np.log(clamp_probs(o))).sum())


def cross_entropy_grad(o: np.ndarray, target: np.ndarray) -> np.ndarray:
    g = -target / clamp_probs(o)
    # the clamp saturates below PROB_EPS, so no gradient flows there
    return np.where(o < PROB_EPS, 0.0, g)


def cross_entropy_rows(o: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-row cross entropy for 2-D stacks of probability rows."""
    if o.shape != target.shape:
        raise DimensionError(
            f"cross_entropy_rows: shapes {o.shape} vs {target.shape}")
    return -(target * np.log(clamp_probs(o))).sum(axis=1)


def cross_entropy_rows_grad(o: np.ndarray, target: np.ndarray) -> np.ndarray:
    g = -target / clamp_probs(o)
    return np.where(o < PROB_EPS, 0.0, g)


def entropy(o: np.ndarray) -> float:
    """Shannon entropy of a probability row (clamped)."""
    return cross_entropy(o, o)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) between probability rows.

    Both rows are clamped and renormalized, which keeps the value
    non-negative even when entries sit below the clamp.
    """
    if p.shape != q.shape:
        raise DimensionError(f"kl_divergence: shapes {p.shape} vs {q.shape}")
    ph = clamp_probs(p)
    ph = ph / ph.sum()
    qh = clamp_probs(q)
    qh = qh / qh.sum()
    return float((ph * (np.log(ph) - np.log(qh))).sum())


def kl_divergence_grad_q(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Gradient of ``kl_divergence(p, q)`` wrt ``q`` (p is treated as constant)."""
    ph = clamp_probs(p)
    ph = ph / ph.sum()
    cq = clamp_probs(q)
    zq = cq.sum()
    mask = (q >= PROB_EPS) & (q <= 1.0)
    return np.where(mask, 1.0 / zq - ph / cq, 0.0)


# ---------------------------------------------------------------------------
# geometry


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimensionError(
            f"euclidean_distance: shapes {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


def euclidean_distance_grad(a: np.ndarray, b: np.ndarray):
    """Gradients wrt (a, b); defined as zero vectors when a == b."""
    diff = a - b
    dist = float(np.sqrt((diff ** 2).sum()))
    if dist == 0.0:
        z = np.zeros_like(diff)
        return z, z.copy()
    g = diff / dist
    return g, -g


def convex_mix(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """``lam * a + (1 - lam) * b``; exact at the endpoints."""
    if a.shape != b.shape:
        raise DimensionError(f"convex_mix: shapes {a.shape} vs {b.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ArgumentError(f"convex_mix: lam={lam} outside [0, 1]")
    return lam * a + (1.0 - lam) * b


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class DualValue:
    """A scalar loss together with its gradient per parameter block."""

    value: float
    grads: dict[str, np.ndarray]


@dataclass
class GradCheckReport:
    """Outcome of a finite-difference sweep over every parameter coordinate."""

    max_rel_err: dict[str, float]
    failures: list[tuple[str, int, float, float, float]] = field(
        default_factory=list)
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def worst(self) -> float:
        return max(self.max_rel_err.values(), default=0.0)


def check_gradients(loss_fn, params: dict[str, np.ndarray],
                    step: float = 1e-5,
                    tolerance: float = 1e-4) -> GradCheckReport:
    """Compare ``loss_fn``'s analytic gradients with central differences.

    ``loss_fn`` must be a pure function of ``params`` (a dict of float64
    arrays, perturbed in place during probing) returning a ``DualValue``.
    Relative error uses ``max(|analytic|, |numeric|, REL_ERR_FLOOR)`` as the
    denominator.  A non-finite loss at any probe raises ``DivergenceError``
    naming the offending coordinate.
    """
    center = loss_fn(params)
    if not np.isfinite(center.value):
        raise DivergenceError("loss is non-finite at the unperturbed point")
    max_err: dict[str, float] = {}
    failures: list[tuple[str, int, float, float, float]] = []
    for name, theta in params.items():
        if name not in center.grads:
            raise ArgumentError(f"no analytic gradient for block '{name}'")
        flat = theta.reshape(-1)
        gflat = np.asarray(center.grads[name]).reshape(-1)
        if gflat.size != flat.size:
            raise DimensionError(
                f"gradient for '{name}' has {gflat.size} coords, "
                f"block has {flat.size}")
        worst = 0.0
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            up = loss_fn(params).value
            flat[i] = saved - step
            down = loss_fn(params).value
            flat[i] = saved
            if not (np.isfinite(up) and np.isfinite(down)):
                raise DivergenceError(
                    f"loss non-finite while probing {name}[{i}]")
            numeric = (up - down) / (2.0 * step)
            analytic = float(gflat[i])
            rel = abs(analytic - numeric) / max(
                abs(analytic), abs(numeric), REL_ERR_FLOOR)
            if rel > worst:
                worst = rel
            if rel > tolerance:
                failures.append((name, i, analytic, numeric, rel))
        max_err[name] = worst
    return GradCheckReport(max_err, failures, tolerance)
