"""Small shared helpers."""

from __future__ import annotations

import logging
from contextlib import contextmanager

logger = logging.getLogger(__name__)


@contextmanager
def thread_limit(n_threads: int | None):
    """Cap BLAS worker threads for the enclosed block, when possible.

    Uses threadpoolctl if it is installed; otherwise the limit is ignored
    with a log message (the solvers are correct either way, this only
    affects reproducibility of timings and bitwise determinism of
    multi-threaded BLAS reductions).
    """
    if n_threads is None:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        logger.warning("threadpoolctl not available; --threads ignored")
        yield
        return
    with threadpool_limits(limits=int(n_threads)):
        yield
