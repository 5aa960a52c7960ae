"""Concurrent evaluation of independent grid points.

Each point runs in a worker thread; at most settings.threads run at once.
A point that raises is logged and comes back as None, so one bad regulator
value never takes down a whole sweep. Results keep the order of the input grid.
"""

import asyncio
import logging
from typing import Any, Callable, Sequence

from app.config import settings

logger = logging.getLogger(__name__)


async def evaluate_grid(fn: Callable[[Any], Any], points: Sequence[Any], label: str) -> list[Any]:
    semaphore = asyncio.Semaphore(max(1, settings.threads))

    async def _safe_eval(point):
        async with semaphore:
            try:
                return await asyncio.to_thread(fn, point)
            except Exception:
                logger.exception("%s failed at %r", label, point)
                return None

    return list(await asyncio.gather(*[_safe_eval(p) for p in points]))
