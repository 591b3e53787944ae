import asyncio
import logging
from typing import Any, Callable, List, Sequence

logger = logging.getLogger(__name__)

Job = Callable[[], Any]


async def run_jobs(jobs: Sequence[Job], max_workers: int = 1) -> List[Any]:
    """Run blocking jobs on worker threads, at most ``max_workers`` at once.

    Results come back in job order regardless of completion order; the first
    failure is re-raised after all jobs settle.
    """
    limit = asyncio.Semaphore(max(1, max_workers))

    async def run_one(index: int, job: Job):
        async with limit:
            logger.debug(f"Starting job {index + 1}/{len(jobs)}")
            return await asyncio.to_thread(job)

    results = await asyncio.gather(
        *(run_one(i, job) for i, job in enumerate(jobs)), return_exceptions=True
    )
    for result in results:
        if isinstance(result, BaseException):
            raise result
    return list(results)


def run_parallel(jobs: Sequence[Job], max_workers: int = 1) -> List[Any]:
    """Synchronous entry point; runs jobs inline when ``max_workers`` is 1."""
    if max_workers <= 1:
        return [job() for job in jobs]
    return asyncio.run(run_jobs(jobs, max_workers))
