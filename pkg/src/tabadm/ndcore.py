"""Seeded randomness and the handful of dense linear-algebra helpers used elsewhere.

The generator is Philox4x64-10 (Salmon et al., 2011) as exposed by
``numpy.random.Philox``: a counter-based generator with a 256-bit counter and a
128-bit key.  The 64-bit seed is used directly as the low word of the key and the
counter starts at zero, so a seed maps to one stream on every platform.

Draw accounting (fixed, so streams are reproducible):

* ``uniform``   -- one 64-bit word per entry, top 53 bits, value in [0, 1).
* ``gaussian``  -- Box-Muller on consecutive word pairs.  A pair ``(a, b)`` yields
  ``r*cos(2*pi*v)`` and ``r*sin(2*pi*v)`` with ``u = (a>>11 + 1) * 2**-53`` in (0, 1],
  ``v = (b>>11) * 2**-53`` and ``r = sqrt(-2 ln u)``.  ``ceil(n/2)`` pairs are drawn
  for ``n`` entries; an odd trailing sine value is discarded.
* ``integers``  -- one word per entry, ``low + floor(uniform * (high - low))``.
"""

import numpy as np

from .errors import ShapeError

_TWO_POW_M53 = 1.0 / 9007199254740992.0


class Rng:
    """Single-owner deterministic random stream.

    Parameters
    ----------
    seed : int
        Unsigned 64-bit seed.
    """

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self._bits = np.random.Philox(key=seed)

    @property
    def state(self):
        """Full generator state (counter, key, buffer) as a plain dict."""
        return self._bits.state

    def raw(self, n):
        return self._bits.random_raw(int(n))

    def uniform(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53
        return float(u[0]) if size is None else u.reshape(size)

    def uniform_range(self, low, high, size):
        return low + (high - low) * self.uniform(size)

    def integers(self, low, high, size=None):
        """Integers in ``[low, high)``."""
        if high <= low:
            raise ValueError(f"empty range [{low}, {high})")
        u = self.uniform(1 if size is None else size)
        out = low + np.floor(u * (high - low)).astype(np.int64)
        return int(out.ravel()[0]) if size is None else out

    def gaussian(self, rows, cols):
        return gaussian(self, rows, cols)

    def permutation(self, n):
        # stable argsort of uniforms: ties (probability ~2**-53) resolve by index
        return np.argsort(self.uniform(n), kind="stable")


def gaussian(rng, rows, cols):
    """Return a ``rows x cols`` matrix of i.i.d. standard normal draws."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"gaussian shape must be positive, got ({rows}, {cols})")
    n = rows * cols
    pairs = (n + 1) // 2
    words = rng.raw(2 * pairs).reshape(pairs, 2)
    u = ((words[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_POW_M53
    v = (words[:, 1] >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53
    r = np.sqrt(-2.0 * np.log(u))
    theta = 2.0 * np.pi * v
    z = np.empty((pairs, 2))
    z[:, 0] = r * np.cos(theta)
    z[:, 1] = r * np.sin(theta)
    return z.reshape(-1)[:n].reshape(rows, cols)


# Dense helpers. Thin checked wrappers over numpy float64 arithmetic.

def as_matrix(a):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matvec(a, x):
    a = as_matrix(a)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or a.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec shape mismatch: {a.shape} . {x.shape}")
    return a @ x


def matmul(a, b):
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def axpy(alpha, x, y):
    """Return ``alpha * x + y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"axpy shape mismatch: {x.shape} vs {y.shape}")
    return alpha * x + y
