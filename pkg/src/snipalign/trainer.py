"""End-to-end training loop.

Each step assembles a mixed mini-batch (B_S source videos, one stochastic
snippet each; B_T target videos from a per-epoch shuffled cycle, r
constrained snippets each), evaluates the total alignment loss, and applies
one SGD step with momentum and weight decay.  Prototypes are refreshed once
per epoch from the attention-weighted target snippet features seen during
that epoch, after a warm-up period.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import align, model as mdl, sampler
from .errors import ConfigurationError, DivergenceError

STAT_METRICS = ("mmd", "coral")


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 0.005
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lambda_sem: float = 1.0
    lambda_stat: float = 1.0
    lambda_p: float = 0.6
    alpha_v: float = 0.3
    m: int = 8
    m_hat: int | None = None  # None -> m (non-overlapping snippets)
    r: int = 3
    e_warmup: int = 5
    stat_metric: str = "mmd"
    batch_source: int = 12
    batch_target: int = 4
    hidden_dim: int = 64
    embed_dim: int = 32
    seed: int = 0
    enable_proto: bool = True
    enable_cross: bool = True
    enable_sn_dist: bool = True
    enable_sn_stat: bool = True
    enable_attention: bool = True
    enable_ssa: bool = True

    def resolved_m_hat(self) -> int:
        return self.m if self.m_hat is None else self.m_hat


@dataclass
class OptimizerState:
    """SGD momentum buffers, one per parameter block, zero-initialized."""

    velocity: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: mdl.ModelParams) -> "OptimizerState":
        return cls({name: np.zeros_like(block)
                    for name, block in params.blocks().items()})


@dataclass
class EpochRecord:
    epoch: int
    l_pred: float
    l_proto: float
    l_cross: float
    l_sn_dist: float
    l_sn_stat: float
    total: float
    test_accuracy: float
    seconds: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def to_text(self) -> str:
        cols = ("epoch", "l_pred", "l_proto", "l_cross", "l_sn_dist",
                "l_sn_stat", "total", "test_accuracy", "seconds")
        lines = ["\t".join(cols)]
        for rec in self.records:
            lines.append("\t".join(
                str(getattr(rec, c)) if c == "epoch"
                else repr(float(getattr(rec, c))) for c in cols))
        return "\n".join(lines) + "\n"


def validate_config(config: TrainConfig, source, target_train) -> None:
    """Reject infeasible configurations before any training step."""
    if config.lr <= 0:
        raise ConfigurationError(f"lr must be > 0, got {config.lr}")
    if config.epochs < 0:
        raise ConfigurationError("epochs must be >= 0")
    if config.r < 1:
        raise ConfigurationError("r must be >= 1")
    if config.enable_cross and config.r < 2:
        raise ConfigurationError(
            "cross-snippet consistency needs r >= 2; disable it or raise r")
    if config.stat_metric not in STAT_METRICS:
        raise ConfigurationError(
            f"stat_metric must be one of {STAT_METRICS}")
    if config.batch_source < 1 or config.batch_target < 1:
        raise ConfigurationError("batch sizes must be >= 1")
    if source.num_classes != target_train.num_classes:
        raise ConfigurationError("source/target class counts differ")
    if source.feature_dim != target_train.feature_dim:
        raise ConfigurationError("source/target feature dims differ")
    if len(source.videos) == 0 or len(target_train.videos) == 0:
        raise ConfigurationError("datasets must be non-empty")
    m, m_hat, r = config.m, config.resolved_m_hat(), config.r
    for video in source.videos:
        if video.n_frames < m:
            raise ConfigurationError(
                f"source video {video.id} shorter than m={m}")
    for video in target_train.videos:
        sampler.check_feasible(video.n_frames, m, m_hat, r)
        if not config.enable_ssa and r * m > video.n_frames:
            raise ConfigurationError(
                f"sequential snippets need r*m <= n for video {video.id}")


def sgd_step(params: mdl.ModelParams, grads: dict[str, np.ndarray],
             state: OptimizerState, lr: float, momentum: float,
             weight_decay: float) -> None:
    """v <- momentum*v + (g + wd*theta); theta <- theta - lr*v."""
    for name, theta in params.blocks().items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in block '{name}'")
        g = g + weight_decay * theta
        v = state.velocity[name]
        v *= momentum
        v += g
        theta -= lr * v


def _sequential_refs(video, r: int, m: int) -> list[sampler.SnippetRef]:
    # augmentation disabled: r back-to-back snippets from the first frame
    return [sampler.SnippetRef(video.id, i * m, m) for i in range(r)]


def _window(video, ref: sampler.SnippetRef) -> np.ndarray:
    return video.frames[ref.start:ref.start + ref.length]


def assemble_batch(source, target_train, config: TrainConfig,
                   state: sampler.EpochSamplingState,
                   rng: np.random.Generator, params: mdl.ModelParams,
                   source_indices, target_indices) -> align.BatchSnippets:
    """Sample and encode one mini-batch for the given video index slices."""
    m, r = config.m, config.r
    windows, labels = [], []
    for idx in source_indices:
        video = source.videos[idx]
        ref = sampler.sample_source_snippet(video, m, rng)
        windows.append(_window(video, ref))
        labels.append(video.label)
    groups = []
    for idx in target_indices:
        video = target_train.videos[idx]
        if config.enable_ssa:
            refs = sampler.sample_target_snippets(
                video, r, m, config.resolved_m_hat(), state, rng)
        else:
            refs = _sequential_refs(video, r, m)
        groups.append(align.TargetGroupInputs(
            video.id, video.label, [_window(video, ref) for ref in refs]))
    inputs = align.BatchInputs(windows, labels, groups)
    return align.encode_batch(params, inputs)


def train(source, target_train, target_test, config: TrainConfig):
    """Run the full loop and return (trained params, per-epoch log)."""
    validate_config(config, source, target_train)
    rng = np.random.default_rng(config.seed)
    params = mdl.init_params(config.m, source.feature_dim, config.hidden_dim,
                             config.embed_dim, source.num_classes,
                             seed=config.seed)
    opt = OptimizerState.zeros_like(params)
    protos = align.Prototypes.empty(source.num_classes, config.embed_dim,
                                    config.lambda_p)
    sstate = sampler.EpochSamplingState()
    log = TrainLog()
    n_source, n_target = len(source.videos), len(target_train.videos)
    num_classes, d = source.num_classes, config.embed_dim

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n_source)
        cycle = rng.permutation(n_target)
        cursor = 0
        proto_sums = np.zeros((num_classes, d))
        proto_counts = np.zeros(num_classes)
        sums = np.zeros(6)
        steps = 0
        for lo in range(0, n_source, config.batch_source):
            src_idx = order[lo:lo + config.batch_source]
            tgt_idx = [int(cycle[(cursor + i) % n_target])
                       for i in range(config.batch_target)]
            cursor += config.batch_target
            batch = assemble_batch(source, target_train, config, sstate,
                                   rng, params, src_idx, tgt_idx)
            attention = (align.attention_weights(batch)
                         if config.enable_attention
                         else align.unit_attention(batch))
            report = align.total_loss(params, batch, protos, epoch, config,
                                      rng, attention=attention)
            if not np.isfinite(report.total):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, step {steps}")
            sgd_step(params, report.grads, opt, config.lr, config.momentum,
                     config.weight_decay)
            if config.enable_proto:
                w = align.row_weight_vector(batch, attention)
                for group in batch.groups:
                    feats = align.apply_attention(
                        batch.enc.feats[group.rows], w[group.rows])
                    proto_sums[group.label] += feats.sum(axis=0)
                    proto_counts[group.label] += len(group.rows)
            sums += (report.l_pred, report.l_proto, report.l_cross,
                     report.l_sn_dist, report.l_sn_stat, report.total)
            steps += 1
        if config.enable_proto and epoch >= config.e_warmup:
            current = align.prototypes_from_sums(
                proto_sums, proto_counts,
                previous=protos.vectors if protos.initialized else None)
            if protos.initialized:
                align.update_prototypes(protos, current)
            else:
                align.initialize_prototypes(protos, current)
        sampler.reset_epoch(sstate)
        accuracy = mdl.top1_accuracy(params, target_test, config.m)
        means = sums / max(steps, 1)
        log.records.append(EpochRecord(
            epoch, *(float(v) for v in means), accuracy,
            time.perf_counter() - t0))
    return params, log


@dataclass
class AblationRow:
    name: str
    accuracies: list[float]
    mean_accuracy: float


def run_ablation(source, target_train, target_test, grid, seeds) -> list[AblationRow]:
    """Train every (name, config) in the grid once per seed; report means."""
    rows = []
    for name, config in grid:
        accs = []
        for seed in seeds:
            _, log = train(source, target_train, target_test,
                           replace(config, seed=seed))
            accs.append(log.records[-1].test_accuracy if log.records else 0.0)
        rows.append(AblationRow(name, accs, float(np.mean(accs))))
    return rows
