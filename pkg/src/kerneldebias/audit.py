"""Allocation audit hook.

The estimator and solver paths promise O(n * max(r, D)) peak memory: for large
sample counts no intermediate may ever be a dense n-by-n matrix. Core code
passes every sizable array it allocates through :func:`register`; tests wrap a
pipeline in :func:`allocation_audit` and any registered square n-by-n array
raises immediately.
"""

import threading
from contextlib import contextmanager

from .errors import AllocationAuditError

_state = threading.local()


@contextmanager
def allocation_audit(n_samples: int, threshold: int = 1000):
    """Raise inside the block if an n_samples x n_samples array is registered.

    Square allocations with side <= threshold are tolerated (small-n test
    oracles are allowed to build dense Gram matrices).
    """
    prev = getattr(_state, "active", None)
    _state.active = (int(n_samples), int(threshold))
    try:
        yield
    finally:
        _state.active = prev


def register(arr):
    """Record an allocated intermediate. No-op unless an audit is active."""
    active = getattr(_state, "active", None)
    if active is not None:
        n, threshold = active
        shape = getattr(arr, "shape", ())
        if len(shape) == 2 and shape[0] == shape[1] == n and n > threshold:
            raise AllocationAuditError(
                f"allocated a {shape[0]}x{shape[1]} intermediate during an "
                f"allocation audit (n={n}, threshold={threshold})"
            )
    return arr
