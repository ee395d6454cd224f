"""Counter-based random number streams.

Every random quantity in the library is drawn from a stateless stream
addressed by a 64-bit key and a draw index.  Keys are derived from the
master seed through the splitmix64 finalizer, so identical configurations
reproduce bit-identical results no matter how the work is chunked or
parallelised.

Layout conventions (documented, load-bearing for reproducibility):

* ``stream_key(seed, purpose, *tags)`` chains one finalizer application per
  tag: ``k = mix64(k + GOLDEN * (tag + 1))`` starting from
  ``mix64(seed ^ SEED_SALT)``.
* draw ``n`` of stream ``k`` is ``mix64(k + GOLDEN * (n + 1))``.
* uniforms use the top 53 bits, offset by half an ulp so the result lies
  strictly inside (0, 1).
"""

from __future__ import annotations

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
SEED_SALT = 0x5CA1AB1E0DDBA11
_MASK = (1 << 64) - 1

# purpose tags: keep distinct so logically different draws never collide
TAG_NOISE = 1       # Brownian increments, per (replication, player)
TAG_SCENARIO = 2    # correlation-device lottery, per run
TAG_RECOMMEND = 3   # per-player strategy draws, per replication
TAG_INIT = 4        # initial-state sampling, per (replication, player)
TAG_PROBE = 5       # diagnostic probes (Lipschitz validator)

_G = np.uint64(GOLDEN)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)


def mix64(x):
    """splitmix64 finalizer, vectorized over uint64 arrays."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):    # modular wraparound is intended
        z = (z ^ (z >> np.uint64(30))) * _C1
        z = (z ^ (z >> np.uint64(27))) * _C2
    return z ^ (z >> np.uint64(31))


def _mix64_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream_key(seed: int, *tags: int) -> int:
    """Derive a 64-bit stream key from the master seed and integer tags."""
    k = _mix64_int((seed & _MASK) ^ SEED_SALT)
    for t in tags:
        k = _mix64_int((k + GOLDEN * (int(t) + 1)) & _MASK)
    return k


def stream_keys(seed: int, *tags) -> np.ndarray:
    """Vectorized :func:`stream_key`; tags may be arrays and broadcast."""
    k = np.uint64(_mix64_int((seed & _MASK) ^ SEED_SALT))
    with np.errstate(over="ignore"):
        for t in tags:
            t = np.asarray(t, dtype=np.uint64)
            k = mix64(k + _G * (t + np.uint64(1)))
    return k


def raw64(key, index) -> np.ndarray:
    """Draw ``index`` of stream ``key`` as raw uint64 (both broadcast)."""
    key = np.asarray(key, dtype=np.uint64)
    index = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(key + _G * (index + np.uint64(1)))


def uniforms(key, index) -> np.ndarray:
    """Uniform draws strictly inside (0, 1)."""
    bits = raw64(key, index) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def normals(key, index) -> np.ndarray:
    """Standard normal draws via the inverse-CDF of the active backend."""
    from . import backend

    return backend.norm_quantile(uniforms(key, index))
