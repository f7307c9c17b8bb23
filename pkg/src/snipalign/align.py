"""Snippet-level alignment losses.

A training batch mixes labeled source snippets (one per source video) with
groups of ``r`` snippets per target video.  On top of the joint prediction
loss, four alignment terms act on the encoded snippets:

* prototype alignment — pull source embeddings toward per-class target
  prototypes maintained by an epoch-level exponential moving average;
* cross-snippet consistency — KL from each target snippet's prediction to
  its video's key snippet (correctly classified, lowest entropy);
* snippet distribution loss — interpolation consistency over random snippet
  pairs: the prediction of a mixed embedding must match the mixed
  predictions;
* statistical loss — MMD (Gaussian kernel, median-heuristic bandwidth) or
  CORAL between source and target snippet embeddings.

Per-snippet attention weights (inverse cross-entropy, group-normalized)
rescale target embeddings before the prototype, distribution, and
statistical terms.  Every term reports its exact gradient; ``total_loss``
funnels all of them through one encoder backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffkernel as dk
from . import model as mdl
from .errors import (ArgumentError, ConfigurationError, DimensionError,
                     SequencingError)

ATTENTION_EPS = 1e-4


# ---------------------------------------------------------------------------
# batch containers


@dataclass
class TargetGroupInputs:
    video_id: str
    label: int
    windows: list  # r windows of shape (m, D)


@dataclass
class BatchInputs:
    """Raw snippet windows and labels before encoding."""

    source_windows: list
    source_labels: list
    target_groups: list[TargetGroupInputs]


@dataclass
class TargetGroup:
    video_id: str
    label: int
    rows: np.ndarray  # r row indices into the encoded batch


@dataclass
class BatchSnippets:
    """One encoded mini-batch: source rows then target rows, group by group."""

    enc: mdl.EncodedBatch
    source_rows: np.ndarray
    source_labels: np.ndarray
    groups: list[TargetGroup]

    @property
    def n_source(self) -> int:
        return len(self.source_rows)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def r(self) -> int:
        return len(self.groups[0].rows) if self.groups else 0

    @property
    def n_rows(self) -> int:
        return self.enc.feats.shape[0]

    def target_rows(self) -> np.ndarray:
        if not self.groups:
            return np.array([], dtype=int)
        return np.concatenate([g.rows for g in self.groups])

    def target_labels_per_row(self) -> np.ndarray:
        return np.array([g.label for g in self.groups
                         for _ in g.rows], dtype=int)


def encode_batch(params: mdl.ModelParams, inputs: BatchInputs) -> BatchSnippets:
    """Encode all batch snippets in one pass; row order is source, then groups."""
    windows = list(inputs.source_windows)
    for g in inputs.target_groups:
        windows.extend(g.windows)
    enc = mdl.encode_snippets(params, windows)
    ns = len(inputs.source_windows)
    groups = []
    row = ns
    for g in inputs.target_groups:
        groups.append(TargetGroup(g.video_id, g.label,
                                  np.arange(row, row + len(g.windows))))
        row += len(g.windows)
    return BatchSnippets(enc=enc,
                         source_rows=np.arange(ns),
                         source_labels=np.asarray(inputs.source_labels,
                                                  dtype=int),
                         groups=groups)


# ---------------------------------------------------------------------------
# term plumbing


@dataclass
class TermValue:
    """One loss term: value plus gradients wrt raw embeddings/predictions.

    ``extra`` carries direct parameter-block gradients (the distribution
    loss runs the classifier a second time on mixed embeddings).
    """

    value: float
    d_feats: np.ndarray | None = None
    d_preds: np.ndarray | None = None
    extra: dict[str, np.ndarray] | None = None


def finalize(params: mdl.ModelParams, batch: BatchSnippets,
             weighted_terms) -> dict[str, np.ndarray]:
    """Accumulate weighted term gradients through one encoder backward pass."""
    enc = batch.enc
    d_feats = np.zeros_like(enc.feats)
    d_preds = np.zeros_like(enc.preds)
    for weight, term in weighted_terms:
        if term.d_feats is not None:
            d_feats += weight * term.d_feats
        if term.d_preds is not None:
            d_preds += weight * term.d_preds
    d_logits = dk.softmax_vjp(enc.preds, d_preds)
    grads = mdl.encode_backward(params, enc, d_feats, d_logits)
    for weight, term in weighted_terms:
        if term.extra:
            for name, g in term.extra.items():
                grads[name] = grads[name] + weight * g
    return grads


def term_dual(params: mdl.ModelParams, inputs: BatchInputs,
              term_builder) -> dk.DualValue:
    """Encode ``inputs`` with ``params`` and funnel one term to a DualValue.

    ``term_builder(batch, params) -> TermValue``.  Used by the gradient
    checker, which needs the encoding refreshed at every probe.
    """
    batch = encode_batch(params, inputs)
    term = term_builder(batch, params)
    grads = finalize(params, batch, [(1.0, term)])
    return dk.DualValue(term.value, grads)


def _one_hot(label: int, num_classes: int) -> np.ndarray:
    row = np.zeros(num_classes)
    row[label] = 1.0
    return row


# ---------------------------------------------------------------------------
# prediction loss


def prediction_loss(batch: BatchSnippets) -> TermValue:
    """Mean source cross-entropy plus mean target cross-entropy."""
    if batch.n_source == 0 or batch.n_groups == 0:
        raise ArgumentError("prediction loss needs source and target snippets")
    enc = batch.enc
    num_classes = enc.preds.shape[1]
    d_preds = np.zeros_like(enc.preds)
    ns = batch.n_source
    value = 0.0
    for row, label in zip(batch.source_rows, batch.source_labels):
        target = _one_hot(label, num_classes)
        value += dk.cross_entropy(enc.preds[row], target) / ns
        d_preds[row] += dk.cross_entropy_grad(enc.preds[row], target) / ns
    nt = batch.n_groups * batch.r
    for group in batch.groups:
        target = _one_hot(group.label, num_classes)
        for row in group.rows:
            value += dk.cross_entropy(enc.preds[row], target) / nt
            d_preds[row] += dk.cross_entropy_grad(enc.preds[row], target) / nt
    return TermValue(value, d_preds=d_preds)


# ---------------------------------------------------------------------------
# prototypes


@dataclass
class Prototypes:
    """Per-class target prototype vectors with EMA state."""

    vectors: np.ndarray  # (C, d)
    initialized: bool
    lam_p: float

    @classmethod
    def empty(cls, num_classes: int, dim: int, lam_p: float) -> "Prototypes":
        if not 0.0 <= lam_p <= 1.0:
            raise ArgumentError(f"lam_p={lam_p} outside [0, 1]")
        return cls(np.zeros((num_classes, dim)), False, lam_p)


def compute_prototypes(features: np.ndarray, labels: np.ndarray,
                       num_classes: int,
                       previous: np.ndarray | None = None) -> np.ndarray:
    """Per-class mean feature; classes with no snippets keep ``previous``."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    dim = features.shape[1]
    out = (np.zeros((num_classes, dim)) if previous is None
           else previous.copy())
    for c in range(num_classes):
        mask = labels == c
        if mask.any():
            out[c] = features[mask].mean(axis=0)
    return out


def prototypes_from_sums(sums: np.ndarray, counts: np.ndarray,
                         previous: np.ndarray | None = None) -> np.ndarray:
    """Same as ``compute_prototypes`` but from running per-class sums."""
    out = sums.copy() if previous is None else previous.copy()
    for c in range(len(counts)):
        if counts[c] > 0:
            out[c] = sums[c] / counts[c]
        elif previous is None:
            out[c] = 0.0
    return out


def initialize_prototypes(protos: Prototypes, vectors: np.ndarray) -> None:
    if vectors.shape != protos.vectors.shape:
        raise DimensionError(
            f"prototype shape {vectors.shape} != {protos.vectors.shape}")
    protos.vectors = vectors.copy()
    protos.initialized = True


def update_prototypes(protos: Prototypes, current: np.ndarray) -> None:
    """EMA step: stored <- lam_p * current + (1 - lam_p) * stored."""
    if not protos.initialized:
        raise SequencingError("prototypes not initialized")
    if current.shape != protos.vectors.shape:
        raise DimensionError(
            f"prototype shape {current.shape} != {protos.vectors.shape}")
    protos.vectors = protos.lam_p * current + (1.0 - protos.lam_p) * protos.vectors


def prototype_alignment_loss(batch: BatchSnippets,
                             protos: Prototypes) -> TermValue:
    """Mean Euclidean distance from each source embedding to its class
    prototype; prototypes are constants (no gradient flows into them)."""
    if not protos.initialized:
        raise SequencingError("prototype alignment needs initialized prototypes")
    enc = batch.enc
    ns = batch.n_source
    if ns == 0:
        raise ArgumentError("no source snippets in batch")
    d_feats = np.zeros_like(enc.feats)
    value = 0.0
    for row, label in zip(batch.source_rows, batch.source_labels):
        proto = protos.vectors[label]
        value += dk.euclidean_distance(enc.feats[row], proto) / ns
        ga, _ = dk.euclidean_distance_grad(enc.feats[row], proto)
        d_feats[row] += ga / ns
    return TermValue(value, d_feats=d_feats)


# ---------------------------------------------------------------------------
# cross-snippet consistency


def select_key_snippet(preds: np.ndarray, label: int) -> int:
    """Index of the correctly classified snippet with minimum prediction
    entropy; if none is correct, the minimum-entropy snippet overall."""
    if preds.shape[0] < 1:
        raise ArgumentError("empty snippet group")
    entropies = np.array([dk.entropy(p) for p in preds])
    correct = np.argmax(preds, axis=1) == label
    if correct.any():
        masked = np.where(correct, entropies, np.inf)
        return int(np.argmin(masked))
    return int(np.argmin(entropies))


def group_teachers(batch: BatchSnippets) -> list[tuple[int, np.ndarray]]:
    """Per group: the key snippet index and a copy of its prediction row."""
    enc = batch.enc
    out = []
    for group in batch.groups:
        preds = enc.preds[group.rows]
        key = select_key_snippet(preds, group.label)
        out.append((key, preds[key].copy()))
    return out


def cross_snippet_loss(batch: BatchSnippets,
                       teachers=None) -> TermValue:
    """KL from each target snippet's prediction to its video's key snippet.

    The key prediction is the teacher: it receives no gradient.  Pass
    ``teachers`` (from ``group_teachers``) to hold the detached rows fixed,
    e.g. while probing with finite differences.
    """
    r = batch.r
    if r < 2:
        raise ConfigurationError(
            f"cross-snippet consistency needs r >= 2, got r={r}")
    enc = batch.enc
    if teachers is None:
        teachers = group_teachers(batch)
    d_preds = np.zeros_like(enc.preds)
    norm = 1.0 / (batch.n_groups * (r - 1))
    value = 0.0
    for group, (key, teacher) in zip(batch.groups, teachers):
        for l, row in enumerate(group.rows):
            if l == key:
                continue
            value += dk.kl_divergence(teacher, enc.preds[row]) * norm
            d_preds[row] += dk.kl_divergence_grad_q(teacher,
                                                    enc.preds[row]) * norm
    return TermValue(value, d_preds=d_preds)


# ---------------------------------------------------------------------------
# interpolation consistency / snippet distribution loss


@dataclass
class IctPairResult:
    """One mixed-pair consistency loss with gradients wrt the two embeddings
    and the classifier blocks; the mixed prediction target is a constant."""

    value: float
    d_f_a: np.ndarray
    d_f_b: np.ndarray
    d_wc: np.ndarray
    d_bc: np.ndarray


def ict_pair_loss(f_a: np.ndarray, o_a: np.ndarray, f_b: np.ndarray,
                  o_b: np.ndarray, lam: float,
                  params: mdl.ModelParams) -> IctPairResult:
    """Cross-entropy between the classifier's output on the mixed embedding
    and the (detached) mix of the two predictions."""
    f_mix = dk.convex_mix(f_a, f_b, lam)
    o_mix = dk.convex_mix(o_a, o_b, lam)  # constant target
    logits = f_mix[None, :] @ params.wc + params.bc
    o_hat = dk.softmax(logits)[0]
    value = dk.cross_entropy(o_hat, o_mix)
    d_o_hat = dk.cross_entropy_grad(o_hat, o_mix)
    d_logits = dk.softmax_vjp(o_hat, d_o_hat)[None, :]
    d_wc = f_mix[:, None] @ d_logits
    d_bc = d_logits[0]
    d_f_mix = (d_logits @ params.wc.T)[0]
    return IctPairResult(value, lam * d_f_mix, (1.0 - lam) * d_f_mix,
                         d_wc, d_bc)


def draw_pair_assignments(n: int, alpha_v: float, rng: np.random.Generator):
    """One uniform partner (self excluded) and one Beta(alpha, alpha) mixing
    coefficient per snippet."""
    if n < 2:
        raise ArgumentError("pairing needs at least 2 snippets")
    partners = rng.integers(0, n - 1, size=n)
    partners = partners + (partners >= np.arange(n))
    lams = rng.beta(alpha_v, alpha_v, size=n)
    return partners, lams


def mixed_prediction_targets(batch: BatchSnippets, assignments) -> np.ndarray:
    """Detached interpolation targets: the per-pair mix of raw predictions."""
    partners, lams = assignments
    lam_col = lams[:, None]
    preds = batch.enc.preds
    return lam_col * preds + (1.0 - lam_col) * preds[partners]


def snippet_distribution_loss(batch: BatchSnippets, alpha_v: float,
                              rng: np.random.Generator,
                              params: mdl.ModelParams,
                              row_weights: np.ndarray | None = None,
                              assignments=None,
                              targets: np.ndarray | None = None) -> TermValue:
    """Mean interpolation-consistency loss over one random pair per snippet.

    Pairs are drawn over the union of source and target snippets, so the
    pair count equals the batch snippet count.  ``row_weights`` (attention)
    rescale target embeddings before mixing; the mixed prediction targets
    come from the raw predictions and are constants during backprop (pass
    ``targets`` to keep them fixed across finite-difference probes).
    """
    enc = batch.enc
    n = batch.n_rows
    if n < 2:
        raise ArgumentError("snippet distribution loss needs >= 2 snippets")
    if assignments is None:
        assignments = draw_pair_assignments(n, alpha_v, rng)
    partners, lams = assignments
    w = np.ones(n) if row_weights is None else row_weights
    fw = enc.feats * w[:, None]
    lam_col = lams[:, None]
    f_mix = lam_col * fw + (1.0 - lam_col) * fw[partners]
    o_mix = (mixed_prediction_targets(batch, assignments)
             if targets is None else targets)
    logits = f_mix @ params.wc + params.bc
    o_hat = dk.softmax(logits)
    value = float(dk.cross_entropy_rows(o_hat, o_mix).mean())
    d_o_hat = dk.cross_entropy_rows_grad(o_hat, o_mix) / n
    d_logits = dk.softmax_vjp(o_hat, d_o_hat)
    d_wc = f_mix.T @ d_logits
    d_bc = d_logits.sum(axis=0)
    d_f_mix = d_logits @ params.wc.T
    d_fw = lam_col * d_f_mix
    np.add.at(d_fw, partners, (1.0 - lam_col) * d_f_mix)
    d_feats = d_fw * w[:, None]
    return TermValue(value, d_feats=d_feats,
                     extra={"wc": d_wc, "bc": d_bc})


# ---------------------------------------------------------------------------
# statistical loss


@dataclass
class StatLossResult:
    value: float
    d_source: np.ndarray
    d_target: np.ndarray


def mmd_bandwidth(fs: np.ndarray, ft: np.ndarray) -> float:
    """Median pairwise squared distance over the joint batch (detached)."""
    joint = np.vstack([fs, ft])
    sq = (joint ** 2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * joint @ joint.T, 0.0)
    iu = np.triu_indices(len(joint), k=1)
    bandwidth = float(np.median(d2[iu])) if len(iu[0]) else 0.0
    # all points coincide: any kernel gives MMD = 0
    return bandwidth if bandwidth > 0.0 else 1.0


def _mmd(fs: np.ndarray, ft: np.ndarray,
         bandwidth: float | None = None) -> StatLossResult:
    joint = np.vstack([fs, ft])
    sq = (joint ** 2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * joint @ joint.T, 0.0)
    if bandwidth is None:
        bandwidth = mmd_bandwidth(fs, ft)
    kernel = np.exp(-d2 / bandwidth)
    n, m = len(fs), len(ft)
    s = np.concatenate([np.full(n, 1.0 / n), np.full(m, -1.0 / m)])
    value = float(s @ kernel @ s)
    w = np.outer(s, s) * kernel
    grad = (-4.0 / bandwidth) * (w.sum(axis=1)[:, None] * joint - w @ joint)
    return StatLossResult(max(value, 0.0), grad[:n], grad[n:])


def _coral(fs: np.ndarray, ft: np.ndarray) -> StatLossResult:
    n, m = len(fs), len(ft)
    if n < 2 or m < 2:
        raise ArgumentError("coral needs at least 2 samples per side")
    d = fs.shape[1]
    xs = fs - fs.mean(axis=0)
    xt = ft - ft.mean(axis=0)
    cov_s = xs.T @ xs / (n - 1)
    cov_t = xt.T @ xt / (m - 1)
    diff = cov_s - cov_t
    value = float((diff ** 2).sum() / (4.0 * d * d))
    d_source = xs @ diff / (d * d * (n - 1))
    d_target = -xt @ diff / (d * d * (m - 1))
    return StatLossResult(value, d_source, d_target)


def statistical_loss(source_feats: np.ndarray, target_feats: np.ndarray,
                     metric: str,
                     bandwidth: float | None = None) -> StatLossResult:
    """Distribution discrepancy between two embedding stacks.

    ``mmd``: squared MMD with a Gaussian kernel whose bandwidth is the
    median pairwise squared distance over the joint batch (recomputed each
    call, treated as a constant; pass ``bandwidth`` to pin it).  ``coral``:
    squared Frobenius distance of the unbiased covariances, scaled by
    1/(4 d^2).
    """
    fs = np.asarray(source_feats, dtype=np.float64)
    ft = np.asarray(target_feats, dtype=np.float64)
    if len(fs) == 0 or len(ft) == 0:
        raise ArgumentError("statistical loss needs non-empty batches")
    if fs.shape[1] != ft.shape[1]:
        raise DimensionError(
            f"feature dims differ: {fs.shape[1]} vs {ft.shape[1]}")
    if metric == "mmd":
        return _mmd(fs, ft, bandwidth=bandwidth)
    if metric == "coral":
        return _coral(fs, ft)
    raise ArgumentError(f"unknown statistical metric '{metric}'")


def statistical_term(batch: BatchSnippets, metric: str,
                     row_weights: np.ndarray | None = None,
                     bandwidth: float | None = None) -> TermValue:
    """Statistical loss between raw source embeddings and attention-weighted
    target embeddings, chained back to the raw embeddings."""
    enc = batch.enc
    src = batch.source_rows
    tgt = batch.target_rows()
    w = np.ones(batch.n_rows) if row_weights is None else row_weights
    fs = enc.feats[src]
    ft = enc.feats[tgt] * w[tgt, None]
    res = statistical_loss(fs, ft, metric, bandwidth=bandwidth)
    d_feats = np.zeros_like(enc.feats)
    d_feats[src] += res.d_source
    d_feats[tgt] += res.d_target * w[tgt, None]
    return TermValue(res.value, d_feats=d_feats)


# ---------------------------------------------------------------------------
# snippet attention


@dataclass
class AttentionWeights:
    """Raw and group-normalized per-snippet weights, (G, r) each."""

    raw: np.ndarray
    normalized: np.ndarray


def weights_from_losses(ce_losses: np.ndarray) -> AttentionWeights:
    """Inverse-cross-entropy weights with a residual offset, normalized to
    mean 1 within each group.  ``ce_losses`` is (G, r)."""
    raw = 1.0 + 1.0 / np.maximum(ce_losses, ATTENTION_EPS)
    normalized = raw / raw.mean(axis=1, keepdims=True)
    return AttentionWeights(raw=raw, normalized=normalized)


def attention_weights(batch: BatchSnippets) -> AttentionWeights:
    """Per-snippet weights from each target snippet's cross-entropy against
    its video label.  Constants during backprop."""
    enc = batch.enc
    num_classes = enc.preds.shape[1]
    ce = np.zeros((batch.n_groups, batch.r))
    for gi, group in enumerate(batch.groups):
        target = _one_hot(group.label, num_classes)
        for li, row in enumerate(group.rows):
            ce[gi, li] = dk.cross_entropy(enc.preds[row], target)
    return weights_from_losses(ce)


def unit_attention(batch: BatchSnippets) -> AttentionWeights:
    ones = np.ones((batch.n_groups, batch.r))
    return AttentionWeights(raw=ones, normalized=ones.copy())


def apply_attention(features: np.ndarray,
                    normalized: np.ndarray) -> np.ndarray:
    """Scale each of a group's r feature rows by its normalized weight."""
    if features.shape[0] != normalized.shape[0]:
        raise DimensionError(
            f"{features.shape[0]} features vs {normalized.shape[0]} weights")
    return features * normalized[:, None]


def row_weight_vector(batch: BatchSnippets,
                      attention: AttentionWeights) -> np.ndarray:
    """Per-row weights over the whole batch; source rows stay at 1."""
    w = np.ones(batch.n_rows)
    for gi, group in enumerate(batch.groups):
        w[group.rows] = attention.normalized[gi]
    return w


# ---------------------------------------------------------------------------
# total loss


@dataclass
class LossReport:
    """Per-component loss values and the accumulated parameter gradients."""

    l_pred: float
    l_proto: float
    l_cross: float
    l_sn_dist: float
    l_sn_stat: float
    total: float
    grads: dict[str, np.ndarray]


@dataclass
class DetachedState:
    """Every quantity treated as a constant during backprop, captured once.

    Holding these fixed makes the total loss a plain differentiable function
    of the parameters, which is what finite-difference probing needs.
    """

    attention: AttentionWeights
    teachers: list | None = None
    assignments: tuple | None = None
    ict_targets: np.ndarray | None = None
    mmd_bandwidth: float | None = None


def capture_detached(params: mdl.ModelParams, batch: BatchSnippets,
                     config, rng: np.random.Generator) -> DetachedState:
    """Evaluate all detached quantities for one batch at the current params."""
    attention = (attention_weights(batch) if config.enable_attention
                 else unit_attention(batch))
    weights = row_weight_vector(batch, attention)
    teachers = group_teachers(batch) if config.enable_cross else None
    assignments = None
    ict_targets = None
    if config.enable_sn_dist:
        assignments = draw_pair_assignments(batch.n_rows, config.alpha_v, rng)
        ict_targets = mixed_prediction_targets(batch, assignments)
    bandwidth = None
    if config.enable_sn_stat and config.stat_metric == "mmd":
        tgt = batch.target_rows()
        fs = batch.enc.feats[batch.source_rows]
        ft = batch.enc.feats[tgt] * weights[tgt, None]
        bandwidth = mmd_bandwidth(fs, ft)
    return DetachedState(attention, teachers, assignments, ict_targets,
                         bandwidth)


def total_loss(params: mdl.ModelParams, batch: BatchSnippets,
               protos: Prototypes | None, epoch: int, config,
               rng: np.random.Generator,
               attention: AttentionWeights | None = None,
               frozen: DetachedState | None = None) -> LossReport:
    """Weighted sum of every enabled term, with one shared backward pass.

    ``config`` provides lambda_sem, lambda_stat, alpha_v, stat_metric,
    e_warmup, and the enable_* toggles.  The prototype term contributes 0
    until the warm-up epochs have passed and prototypes exist.  The rng is
    consumed only when the distribution loss is enabled and no frozen
    assignments are supplied.
    """
    if frozen is not None:
        attention = frozen.attention
    elif attention is None:
        attention = (attention_weights(batch) if config.enable_attention
                     else unit_attention(batch))
    weights = row_weight_vector(batch, attention)

    terms: list[tuple[float, TermValue]] = []
    pred = prediction_loss(batch)
    terms.append((1.0, pred))

    l_proto = 0.0
    if (config.enable_proto and epoch > config.e_warmup
            and protos is not None and protos.initialized):
        term = prototype_alignment_loss(batch, protos)
        terms.append((config.lambda_sem, term))
        l_proto = term.value

    l_cross = 0.0
    if config.enable_cross:
        term = cross_snippet_loss(
            batch, teachers=frozen.teachers if frozen else None)
        terms.append((config.lambda_sem, term))
        l_cross = term.value

    l_sn_dist = 0.0
    if config.enable_sn_dist:
        term = snippet_distribution_loss(
            batch, config.alpha_v, rng, params, row_weights=weights,
            assignments=frozen.assignments if frozen else None,
            targets=frozen.ict_targets if frozen else None)
        terms.append((config.lambda_sem, term))
        l_sn_dist = term.value

    l_sn_stat = 0.0
    if config.enable_sn_stat:
        term = statistical_term(
            batch, config.stat_metric, row_weights=weights,
            bandwidth=frozen.mmd_bandwidth if frozen else None)
        terms.append((config.lambda_stat, term))
        l_sn_stat = term.value

    total = (pred.value
             + config.lambda_sem * (l_proto + l_cross + l_sn_dist)
             + config.lambda_stat * l_sn_stat)
    grads = finalize(params, batch, terms)
    return LossReport(pred.value, l_proto, l_cross, l_sn_dist, l_sn_stat,
                      total, grads)
