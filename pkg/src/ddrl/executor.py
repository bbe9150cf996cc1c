"""In-process map/reduce with retries, fault injection, and an audit log.

A job is a list of input shards, a pure map function, and a fold over the
intermediates.  Map tasks run on a thread pool; results are folded in
partition-index order, so the output is bitwise independent of worker
count and completion order.  Task seeds derive from (job seed, partition
index), so a retried task reproduces identical work.
"""

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import ConfigError, JobFailedError
from .seeding import derive_seed

DEFAULT_WORKERS = 4
DEFAULT_MAX_RETRIES = 3


class InjectedFault(RuntimeError):
    """Deliberate task failure scheduled by a fault plan."""


@dataclass
class MapReduceJob:
    """partitions[i] feeds map_fn(shard, seed_i); reduce_fn folds in order."""

    partitions: list
    map_fn: object
    reduce_fn: object
    seed: int = 0
    name: str = "job"


@dataclass
class ExecutorConfig:
    """map_tasks fixes the logical shard count of data-parallel jobs; it is
    independent of `workers` so outputs never depend on the pool size."""

    workers: int = DEFAULT_WORKERS
    max_retries: int = DEFAULT_MAX_RETRIES
    map_tasks: int = DEFAULT_WORKERS
    fault_plan: dict = field(default_factory=dict)
    audit_path: str = ""

    def validate(self):
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.map_tasks < 1:
            raise ConfigError(f"map_tasks must be >= 1, got {self.map_tasks}")


def partition_shards(items, m: int):
    """Contiguous order-preserving split into m shards, sizes within 1."""
    if m < 1:
        raise ConfigError(f"shard count must be >= 1, got {m}")
    n = len(items)
    base, extra = divmod(n, m)
    shards, start = [], 0
    for i in range(m):
        size = base + (1 if i < extra else 0)
        shards.append(items[start : start + size])
        start += size
    return shards


class MapReduceExecutor:
    """Runs MapReduceJobs under one ExecutorConfig.

    After each run, `audit` holds one record per task attempt:
    {"job", "task", "attempt", "outcome", "wall_ms"}; records are also
    appended to cfg.audit_path as JSON lines when the path is set.
    """

    def __init__(self, cfg: ExecutorConfig):
        cfg.validate()
        self.cfg = cfg
        self.audit = []
        self._lock = threading.Lock()

    def run(self, job: MapReduceJob):
        if not job.partitions:
            raise ConfigError(f"job {job.name!r} has no partitions")
        faults = dict(self.cfg.fault_plan)
        self.audit = []
        n = len(job.partitions)
        with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
            futures = [
                pool.submit(self._run_task, job, i, faults) for i in range(n)
            ]
            outcomes = [f.result() for f in futures]
        self.audit.sort(key=lambda r: (r["task"], r["attempt"]))
        self._flush_audit()
        for i, (ok, value) in enumerate(outcomes):
            if not ok:
                raise JobFailedError(
                    f"job {job.name!r} task {i} failed after {value} attempts"
                )
        return job.reduce_fn([value for _, value in outcomes])

    def _run_task(self, job, index, faults):
        seed = derive_seed(job.seed, index)
        for attempt in range(self.cfg.max_retries + 1):
            start = time.perf_counter()
            try:
                with self._lock:
                    if faults.get(index, 0) > 0:
                        faults[index] -= 1
                        raise InjectedFault(f"task {index} attempt {attempt}")
                result = job.map_fn(job.partitions[index], seed)
                self._record(job, index, attempt, "ok", start)
                return True, result
            except InjectedFault:
                self._record(job, index, attempt, "injected-fault", start)
            except Exception as exc:  # noqa: BLE001 - retry any task error
                self._record(job, index, attempt, f"error:{type(exc).__name__}", start)
        return False, self.cfg.max_retries + 1

    def _record(self, job, index, attempt, outcome, start):
        record = {
            "job": job.name,
            "task": index,
            "attempt": attempt,
            "outcome": outcome,
            "wall_ms": round((time.perf_counter() - start) * 1000.0, 3),
        }
        with self._lock:
            self.audit.append(record)

    def _flush_audit(self):
        if not self.cfg.audit_path:
            return
        with open(self.cfg.audit_path, "a", encoding="utf-8") as fh:
            for record in self.audit:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def run_job(job: MapReduceJob, cfg: ExecutorConfig):
    """One-shot convenience wrapper."""
    return MapReduceExecutor(cfg).run(job)
