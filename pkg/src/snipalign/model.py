"""Snippet encoder, shared classifier, and test-time inference.

The encoder consumes the ``m`` frame feature vectors of a snippet
concatenated in temporal order (dimension ``m * D``) and maps them through a
two-layer perceptron to a ``d``-dimensional snippet embedding; a single
linear classifier produces logits over the ``C`` classes.  One parameter set
serves source and target snippets alike.  At test time a video is
represented by ``m`` uniformly spaced frames and classified in one forward
pass.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import diffkernel as dk
from .errors import (ArgumentError, DataFormatError, DimensionError,
                     InferenceError)

BLOCK_NAMES = ("w1", "b1", "w2", "b2", "wc", "bc")

CHECKPOINT_MAGIC = b"FSVM"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIIIII")  # magic, version, m, D, h, d, C


@dataclass
class ModelParams:
    """Encoder (w1, b1, w2, b2) and classifier (wc, bc) weights."""

    m: int
    feature_dim: int
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wc: np.ndarray
    bc: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.w2.shape[1]

    @property
    def num_classes(self) -> int:
        return self.wc.shape[1]

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in BLOCK_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(self.m, self.feature_dim,
                           *(getattr(self, n).copy() for n in BLOCK_NAMES))


@dataclass
class EncodedBatch:
    """Forward-pass cache for a stack of snippets (rows)."""

    x: np.ndarray       # (N, m*D) concatenated frames
    h_pre: np.ndarray   # (N, h) pre-activation
    h: np.ndarray       # (N, h)
    feats: np.ndarray   # (N, d) snippet embeddings
    logits: np.ndarray  # (N, C)
    preds: np.ndarray   # (N, C) softmax rows


@dataclass
class SnippetFeature:
    """Embedding, logits, and prediction of a single snippet."""

    feature: np.ndarray
    logits: np.ndarray
    prediction: np.ndarray


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(m: int, feature_dim: int, hidden_dim: int, embed_dim: int,
                num_classes: int, seed: int) -> ModelParams:
    """Uniform Xavier weights, zero biases, deterministic per seed."""
    if min(m, feature_dim, hidden_dim, embed_dim, num_classes) < 1:
        raise ArgumentError("all model dimensions must be positive")
    rng = np.random.default_rng(seed)
    in_dim = m * feature_dim
    return ModelParams(
        m=m, feature_dim=feature_dim,
        w1=_xavier(rng, in_dim, hidden_dim),
        b1=np.zeros(hidden_dim),
        w2=_xavier(rng, hidden_dim, embed_dim),
        b2=np.zeros(embed_dim),
        wc=_xavier(rng, embed_dim, num_classes),
        bc=np.zeros(num_classes),
    )


# ---------------------------------------------------------------------------
# forward / backward


def encode_flat(params: ModelParams, x: np.ndarray) -> EncodedBatch:
    """Forward pass over pre-flattened snippet rows (N, m*D)."""
    x = np.asarray(x, dtype=np.float64)
    h_pre = dk.affine(x, params.w1, params.b1)
    h = dk.relu(h_pre)
    feats = dk.affine(h, params.w2, params.b2)
    logits = dk.affine(feats, params.wc, params.bc)
    preds = dk.softmax(logits)
    return EncodedBatch(x, h_pre, h, feats, logits, preds)


def flatten_window(params: ModelParams, frames: np.ndarray) -> np.ndarray:
    """Concatenate the m frame vectors of one snippet in temporal order."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape != (params.m, params.feature_dim):
        raise DimensionError(
            f"snippet shape {frames.shape} != "
            f"({params.m}, {params.feature_dim})")
    return frames.reshape(-1)


def encode_snippets(params: ModelParams, windows) -> EncodedBatch:
    """Encode a list of (m, D) snippet windows as one batch."""
    x = np.stack([flatten_window(params, w) for w in windows])
    return encode_flat(params, x)


def encode_snippet(params: ModelParams, frames: np.ndarray) -> SnippetFeature:
    enc = encode_snippets(params, [frames])
    return SnippetFeature(feature=enc.feats[0], logits=enc.logits[0],
                          prediction=enc.preds[0])


def encode_backward(params: ModelParams, enc: EncodedBatch,
                    d_feats: np.ndarray,
                    d_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Backpropagate dL/dfeats and dL/dlogits to every parameter block."""
    d_feats_total, gwc, gbc = _classifier_backward(params, enc, d_logits)
    d_feats_total = d_feats_total + d_feats
    dh, gw2, gb2 = dk.affine_vjp(enc.h, params.w2, d_feats_total)
    dh_pre = dk.relu_vjp(enc.h_pre, dh)
    _, gw1, gb1 = dk.affine_vjp(enc.x, params.w1, dh_pre)
    return {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2, "wc": gwc, "bc": gbc}


def _classifier_backward(params: ModelParams, enc: EncodedBatch,
                         d_logits: np.ndarray):
    d_feats, gwc, gbc = dk.affine_vjp(enc.feats, params.wc, d_logits)
    return d_feats, gwc, gbc


# ---------------------------------------------------------------------------
# inference


def uniform_indices(n: int, m: int) -> np.ndarray:
    """m uniformly spaced frame indices covering an n-frame video."""
    return np.floor(np.arange(m) * n / m).astype(int)


def predict_video(params: ModelParams, video, m: int) -> np.ndarray:
    """Prediction row for one video from m uniformly spaced frames."""
    if video.n_frames < m:
        raise InferenceError(
            f"video {video.id}: {video.n_frames} frames < clip length {m}")
    frames = video.frames[uniform_indices(video.n_frames, m)]
    return encode_snippet(params, frames).prediction


def predict_dataset(params: ModelParams, dataset, m: int) -> np.ndarray:
    """Stacked prediction rows for every video, one shared forward pass."""
    if len(dataset.videos) == 0:
        raise ArgumentError("dataset is empty")
    rows = []
    for video in dataset.videos:
        if video.n_frames < m:
            raise InferenceError(
                f"video {video.id}: {video.n_frames} frames < clip length {m}")
        window = video.frames[uniform_indices(video.n_frames, m)]
        rows.append(np.asarray(window, dtype=np.float64).reshape(-1))
    return encode_flat(params, np.stack(rows)).preds


def top1_accuracy(params: ModelParams, dataset, m: int) -> float:
    """Fraction of videos whose argmax prediction matches the label."""
    preds = predict_dataset(params, dataset, m)
    labels = np.array([v.label for v in dataset.videos])
    return float(np.mean(np.argmax(preds, axis=1) == labels))


# ---------------------------------------------------------------------------
# checkpoints


def save_params(params: ModelParams, path) -> None:
    """Binary checkpoint: dims header then float32 blocks in declared order."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(
            CHECKPOINT_MAGIC, CHECKPOINT_VERSION, params.m,
            params.feature_dim, params.hidden_dim, params.embed_dim,
            params.num_classes))
        for name in BLOCK_NAMES:
            fh.write(getattr(params, name).astype("<f4").tobytes(order="C"))


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _CKPT_HEADER.size:
        raise DataFormatError(f"{path}: truncated checkpoint header")
    magic, version, m, dim, h, d, c = _CKPT_HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    shapes = [(m * dim, h), (h,), (h, d), (d,), (d, c), (c,)]
    expected = _CKPT_HEADER.size + 4 * sum(int(np.prod(s)) for s in shapes)
    if len(raw) != expected:
        raise DataFormatError(f"{path}: size {len(raw)} != {expected}")
    offset = _CKPT_HEADER.size
    blocks = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        blocks.append(arr.reshape(shape).astype(np.float64))
        offset += 4 * count
    return ModelParams(m, dim, *blocks)
