"""Deterministic seed derivation.

Every component draws its RNG from hash(master seed, component name,
index), so any part of a run can be reproduced in isolation and results
do not depend on scheduling or worker counts.
"""

import hashlib


def derive_seed(master: int, *parts) -> int:
    """Stable 63-bit seed from a master seed and a component path."""
    payload = repr((int(master),) + tuple(parts)).encode()
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little") >> 1
