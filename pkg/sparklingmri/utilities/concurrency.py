"""SPARKLING MRI: Concurrency Utilities"""
from __future__ import annotations

import asyncio
from collections.abc import Callable, Sequence
import logging
from typing import Any, TypeVar

T = TypeVar("T")

logger = logging.getLogger(__name__)


async def gather_in_threads(
    funcs: Sequence[Callable[[], T]],
    workers: int = 1,
    return_exceptions: bool = False,
) -> list[Any]:
    """Run blocking callables in worker threads, results in input order"""
    semaphore = asyncio.Semaphore(max(1, workers))

    async def _run(func: Callable[[], T]) -> T:
        async with semaphore:
            return await asyncio.to_thread(func)

    logger.debug("Running %s tasks on %s workers", len(funcs), workers)
    return await asyncio.gather(
        *[_run(func) for func in funcs],
        return_exceptions=return_exceptions,
    )


def run_in_threads(
    funcs: Sequence[Callable[[], T]],
    workers: int = 1,
    return_exceptions: bool = False,
) -> list[Any]:
    """Blocking front end for `gather_in_threads`"""
    return asyncio.run(
        gather_in_threads(funcs, workers, return_exceptions=return_exceptions)
    )
