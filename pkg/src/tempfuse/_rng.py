import zlib

import numpy as np

STREAMS = ("init", "negatives", "loader", "dropout", "eval")


def stream_rng(seed: int, stream: str, *keys: int) -> np.random.Generator:
    """Independent generator for a named sub-stream of a root seed.

    ``keys`` (epoch, target index, batch number ...) make every draw
    addressable, so a resumed run reproduces the same numbers.
    """
    return np.random.default_rng([int(seed), zlib.crc32(stream.encode()), *map(int, keys)])
