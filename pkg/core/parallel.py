"""Chunked, order-preserving parallel map over grid nodes."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List

import numpy as np

import config

logger = logging.getLogger(__name__)


def node_chunks(n: int, chunk: int = 0) -> List[np.ndarray]:
    """Split node indices 0..n-1 into consecutive blocks."""
    size = chunk or config.NODE_CHUNK
    return [np.arange(start, min(start + size, n)) for start in range(0, n, size)]


def map_node_chunks(fn: Callable[[np.ndarray], np.ndarray], n: int) -> np.ndarray:
    """Evaluate ``fn`` on node blocks and concatenate the results in block order.

    Each block is computed independently with a fixed per-node summation
    order, so the output does not depend on the number of worker threads.
    """
    blocks = node_chunks(n)
    workers = min(config.effective_threads(), len(blocks))
    if workers <= 1:
        return np.concatenate([fn(block) for block in blocks])

    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(fn, blocks))
    return np.concatenate(results)
