"""Stochastic snippet sampling.

A snippet is a window of ``m`` adjacent frames.  Target videos contribute
``r`` snippets per batch whose start indices are pairwise at least
``m_hat`` apart, and repeated visits to the same video within one epoch
avoid previously used starts until they run out.  Source videos contribute
a single uniformly random snippet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ConfigurationError

_REJECTION_ROUNDS = 100
_GREEDY_ROUNDS = 20


@dataclass(frozen=True)
class SnippetRef:
    """A (video, start, length) window; start is 0-based, start + length <= n."""

    video_id: str
    start: int
    length: int


@dataclass
class EpochSamplingState:
    """Per-video sets of start indices already used this epoch."""

    used: dict[str, set[int]] = field(default_factory=dict)

    def used_for(self, video_id: str) -> set[int]:
        return self.used.setdefault(video_id, set())

    def clear_video(self, video_id: str) -> None:
        self.used.pop(video_id, None)


def snippet_count(n: int, m: int) -> int:
    """Number of length-m windows in an n-frame video: n - m + 1."""
    if n < m:
        raise ArgumentError(f"video has {n} frames, snippet length is {m}")
    return n - m + 1


def check_feasible(n: int, m: int, m_hat: int, r: int) -> None:
    """Raise if r starts with pairwise gap >= m_hat cannot fit in n frames."""
    if n < m:
        raise ConfigurationError(f"video has {n} frames < snippet length {m}")
    gap = max(m_hat, 1)
    if (r - 1) * gap > n - m:
        raise ConfigurationError(
            f"cannot place {r} snippet starts with gap >= {m_hat} in "
            f"[0, {n - m}]")


def sample_source_snippet(video, m: int, rng: np.random.Generator) -> SnippetRef:
    """One uniformly random valid snippet of a source video."""
    hi = snippet_count(video.n_frames, m) - 1
    start = int(rng.integers(0, hi + 1))
    return SnippetRef(video.id, start, m)


def _gaps_ok(starts: np.ndarray, gap: int) -> bool:
    if len(starts) < 2:
        return True
    s = np.sort(starts)
    return bool(np.all(np.diff(s) >= gap))


def _try_draw(rng, hi: int, r: int, gap: int, used: set[int]):
    # unbiased in the common case: accept uniformly drawn tuples
    for _ in range(_REJECTION_ROUNDS):
        cand = rng.integers(0, hi + 1, size=r)
        if used and any(int(c) in used for c in cand):
            continue
        if _gaps_ok(cand, gap):
            return [int(c) for c in cand]
    # randomized greedy sweep over the remaining starts
    pool = np.array([s for s in range(hi + 1) if s not in used], dtype=int)
    for _ in range(_GREEDY_ROUNDS):
        chosen: list[int] = []
        for s in rng.permutation(pool):
            if all(abs(int(s) - c) >= gap for c in chosen):
                chosen.append(int(s))
                if len(chosen) == r:
                    return chosen
    return None


def sample_target_snippets(video, r: int, m: int, m_hat: int,
                           state: EpochSamplingState,
                           rng: np.random.Generator) -> list[SnippetRef]:
    """Draw r distinct snippet starts with pairwise gap >= m_hat.

    Starts avoid this epoch's already-used set for the video while enough
    unused starts remain; once they run out the video's used-set is cleared
    so training never deadlocks on short videos.
    """
    if r < 1:
        raise ArgumentError(f"r must be >= 1, got {r}")
    n = video.n_frames
    check_feasible(n, m, m_hat, r)
    hi = n - m
    gap = max(m_hat, 1)
    used = state.used_for(video.id)
    starts = _try_draw(rng, hi, r, gap, used)
    if starts is None:
        # unused feasible starts exhausted for this video
        state.clear_video(video.id)
        used = state.used_for(video.id)
        starts = _try_draw(rng, hi, r, gap, used)
    if starts is None:
        # guaranteed-feasible lattice with a random offset
        offset = int(rng.integers(0, hi - (r - 1) * gap + 1))
        starts = [offset + i * gap for i in range(r)]
    used.update(starts)
    return [SnippetRef(video.id, s, m) for s in starts]


def reset_epoch(state: EpochSamplingState) -> None:
    """Empty every per-video used-start set (epoch boundary)."""
    state.used.clear()
