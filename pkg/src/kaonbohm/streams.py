"""Counter-based random streams.

Every consumer derives its own Philox generator from the master seed plus
integer keys (event id, purpose tag), so results do not depend on the
order or parallelism in which events or samples are processed.
"""

import numpy as np

# purpose tags keep streams for different jobs apart under the same event id
DECAY = 0
OFFSETS = 1
NOISE = 2
RETRODICTION = 3
KAON_OFFSET = 4


def substream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))
