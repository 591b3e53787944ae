from kconc.workers.pool import run_jobs, run_parallel

__all__ = ["run_jobs", "run_parallel"]
