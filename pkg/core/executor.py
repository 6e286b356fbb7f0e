"""Thread pool for independent flow runs."""

from concurrent.futures import Future, ThreadPoolExecutor, wait
from threading import Lock
from typing import Any, Callable, Optional

__all__ = ["RunExecutor"]


class RunExecutor:
    """
    Small wrapper around ThreadPoolExecutor for independent runs.

    Callers keep the returned futures in submission order and collect
    results by index, so the assembled output never depends on which
    worker finished first.
    """

    def __init__(self, max_workers: int = 1, name: str = "run") -> None:
        self._executor = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix=name)
        self._lock = Lock()
        self._closed = False
        self._pending: set[Future] = set()

    def __enter__(self) -> "RunExecutor":
        return self

    def __exit__(self, exc_type: Any, exc: Any, tb: Any) -> None:
        self.shutdown(wait=True, cancel_futures=exc_type is not None)

    def submit(self, task: Callable[..., Any], *args: Any, **kwargs: Any) -> Future:
        """
        Submit a run for asynchronous execution.

        Raises:
            RuntimeError: If acceptance was already closed by drain/shutdown.
        """
        with self._lock:
            if self._closed:
                raise RuntimeError("run executor is shut down")
            future = self._executor.submit(task, *args, **kwargs)
            self._pending.add(future)
        future.add_done_callback(self._forget)
        return future

    def _forget(self, future: Future) -> None:
        with self._lock:
            self._pending.discard(future)

    def drain(self, timeout: Optional[float] = None) -> bool:
        """
        Close acceptance, then wait for already-queued runs to finish.

        The pending set is frozen under the same lock that closes
        acceptance, so late submissions cannot extend the wait.

        Returns:
            True when queued runs finished, False if the timeout ran out.
        """
        with self._lock:
            self._closed = True
            pending = set(self._pending)

        _, not_done = wait(pending, timeout=timeout)
        return not not_done

    def shutdown(self, wait: bool = False, cancel_futures: bool = False) -> None:
        """Stop accepting new work and shut down the executor."""
        with self._lock:
            self._closed = True
        self._executor.shutdown(wait=wait, cancel_futures=cancel_futures)
