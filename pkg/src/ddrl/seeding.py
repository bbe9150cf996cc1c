"""Deterministic seed derivation.

All randomness in a run flows from one top-level seed.  Stage- and
task-level seeds are derived by hashing the seed together with stable
string/integer labels, so results never depend on scheduling order,
worker count, or Python's per-process hash randomization.
"""

import hashlib
import json

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(*parts) -> int:
    """Map (seed, label, index, ...) to a stable 64-bit integer seed."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little") & _MASK64


def rng_for(*parts) -> np.random.Generator:
    """A fresh PCG64 generator seeded from `derive_seed(*parts)`."""
    return np.random.default_rng(derive_seed(*parts))


def canonical_json(obj) -> str:
    """Key-sorted compact JSON; the hashing and on-disk config format."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    """Stable 16-hex-digit digest of a JSON-serializable configuration."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]
