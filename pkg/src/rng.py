"""Named, counter-based random streams.

All randomness in a run flows from one integer seed through named
sub-streams ("data", "mask", "init", "vat", ...). Streams are built on the
Philox counter-based bit generator and keyed by a CRC32 of each name, so a
component's draws do not shift when another component changes how many
numbers it consumes. No module touches numpy's global RNG.
"""

import zlib

import numpy as np


def _name_key(name: str | int) -> int:
    if isinstance(name, int):
        return name
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, *names: str | int) -> np.random.Generator:
    """Generator for the sub-stream `names` of `seed`.

    stream(7, "mask") and stream(7, "data", "sup") are independent of each
    other and identical across processes and runs.
    """
    seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(_name_key(n) for n in names))
    return np.random.Generator(np.random.Philox(seq))

