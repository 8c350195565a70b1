"""Reproducible per-shot random streams.

Every stream is a Philox4x64 counter-based generator whose 128-bit key is
derived from ``(seed, *keys)`` via :class:`numpy.random.SeedSequence`. A shot
therefore owns its stream regardless of which worker simulates it or in which
order shots are processed.
"""
import numpy as np


def stream_key(seed, *keys):
    words = np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(2, np.uint64)
    return (int(words[0]) << 64) | int(words[1])


def shot_rng(seed, *keys) -> np.random.Generator:
    """Generator for the stream identified by ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *keys)))


def label_id(label: str) -> int:
    """Stable integer for a textual stream label (e.g. a sweep point id)."""
    h = 1469598103934665603
    for b in label.encode():
        h = ((h ^ b) * 1099511628211) & 0xFFFFFFFFFFFFFFFF
    return h
