"""Order-preserving chunk map over forked worker processes.

Work is split into chunks whose boundaries do not depend on the number of
workers, so ``jobs=1`` and ``jobs=k`` produce identical results.  The payload
is handed to workers through a module global before forking, which lets
closures and lambdas (unpicklable) travel with it.
"""
from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor

_PAYLOAD = None


def _run(i):
    fn, args = _PAYLOAD
    return fn(i, *args)


def map_chunks(fn, n_chunks: int, args: tuple = (), jobs: int = 1) -> list:
    global _PAYLOAD
    if jobs <= 1 or n_chunks <= 1 or "fork" not in mp.get_all_start_methods():
        return [fn(i, *args) for i in range(n_chunks)]
    _PAYLOAD = (fn, args)
    try:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=min(jobs, n_chunks), mp_context=ctx) as ex:
            return list(ex.map(_run, range(n_chunks)))
    finally:
        _PAYLOAD = None
