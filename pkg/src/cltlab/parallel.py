"""Thread-count policy: ``CLTLAB_THREADS`` caps parallel map width (default 1)."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigError


def thread_count() -> int:
    raw = os.environ.get("CLTLAB_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CLTLAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"CLTLAB_THREADS must be a positive integer, got {raw!r}")
    return n


def pmap(fn, items) -> list:
    """``[fn(x) for x in items]``, threaded when more than one thread is allowed.

    Order is preserved, so results are identical for every thread count.
    """
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
