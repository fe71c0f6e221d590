"""
Deterministic random streams.

Every random decision in the package draws from a PCG64 stream derived from the
run seed and a purpose tag, so adding a new consumer of randomness never shifts the
numbers another consumer sees. Epochs are folded into the stream position with
``PCG64.jumped`` rather than into the seed value, which keeps epoch ``e`` identical
no matter how many epochs are simulated.
"""
import hashlib

import numpy as np

SEED_MAX = 2**64

SHUFFLE = "shuffle"
SIZES = "sizes"
SHARD = "shard"
REPLACEMENT = "replacement"


def validate_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"Seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed < SEED_MAX:
        raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def tag_id(tag: str) -> int:
    # blake2b instead of hash(): str hashing is salted per process
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, tag: str, *keys: int, position: int = 0) -> np.random.Generator:
    """
    Create the generator for one purpose.

    Parameters
    ----------
    seed : int
        The 64-bit run seed.
    tag : str
        Purpose tag, e.g. ``"shuffle"``.
    *keys : int
        Extra non-negative integers identifying the sub-stream (e.g. a worker id).
    position : int, default=0
        Number of ``PCG64`` jumps to apply; used to place epochs on the stream.

    Returns
    -------
    numpy.random.Generator
        A generator whose output depends only on the arguments.
    """
    seed_seq = np.random.SeedSequence(
        validate_seed(seed), spawn_key=(tag_id(tag), *[int(k) for k in keys])
    )
    bit_generator = np.random.PCG64(seed_seq)
    if position:
        bit_generator = bit_generator.jumped(position)
    return np.random.Generator(bit_generator)
