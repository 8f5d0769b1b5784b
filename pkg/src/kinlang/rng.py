"""Splittable counter-based random streams.

Every Gaussian (and uniform) draw in the library comes from a Philox stream
addressed by the tuple (seed, chain, step, tag):

    key     = [seed, chain]          (128-bit Philox key)
    counter = [0, 0, tag, step]      (256-bit starting counter)

Philox is a block cipher on (counter, key), so distinct tuples yield
independent streams and the draws for any (chain, step) are identical no
matter which order chains or steps are evaluated in, or on how many threads.
Consecutive (step, tag) blocks are 2**128 draws apart in counter space, far
beyond what a single block ever consumes.

``stream`` returns a fresh Generator (safe to hold onto);
``scratch_stream`` rewinds a thread-local Generator instead, which is ~10x
cheaper and is what the inner simulation loops use.  A scratch stream is only
valid until the next ``scratch_stream`` call on the same thread.
"""

import threading

import numpy as np

__all__ = ["stream", "scratch_stream", "Tag"]


class Tag:
    """Variable tags separating the draws made within one step."""

    INIT_X = 0  # chain initial position
    INIT_V = 1  # chain initial velocity
    TRIPLE = 2  # (W, H, K) increment triple
    PAIR = 3  # damped-integral pair over the whole step
    PAIR_LEFT = 4  # damped-integral pair, first half of the step
    PAIR_RIGHT = 5  # damped-integral pair, second half of the step
    MIDPOINT = 6  # randomized-midpoint split structure


def _state(seed: int, chain: int, step: int, tag: int) -> dict:
    key = np.array([seed, chain], dtype=np.uint64)
    counter = np.array([0, 0, tag, step], dtype=np.uint64)
    return {
        "bit_generator": "Philox",
        "state": {"counter": counter, "key": key},
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }


def stream(seed: int, chain: int = 0, step: int = 0, tag: int = 0) -> np.random.Generator:
    """Fresh Generator for the stream addressed by (seed, chain, step, tag)."""
    bg = np.random.Philox(key=np.array([seed, chain], dtype=np.uint64))
    bg.state = _state(seed, chain, step, tag)
    return np.random.Generator(bg)


_local = threading.local()


def scratch_stream(seed: int, chain: int = 0, step: int = 0, tag: int = 0) -> np.random.Generator:
    """Thread-local Generator rewound to (seed, chain, step, tag).

    Draws are bit-identical to ``stream`` with the same address.  The returned
    object is shared per thread: consume it before requesting another scratch
    stream.
    """
    pair = getattr(_local, "pair", None)
    if pair is None:
        bg = np.random.Philox(key=0)
        pair = (bg, np.random.Generator(bg))
        _local.pair = pair
    bg, gen = pair
    bg.state = _state(seed, chain, step, tag)
    return gen
