"""Tests for the run executor."""

import time
from threading import Event

import pytest

from core.executor import RunExecutor


class TestRunExecutor:
    """Tests for RunExecutor."""

    def test_submit_runs_task_with_arguments(self):
        """Test a submitted run is executed with its arguments."""
        executor = RunExecutor(max_workers=1)

        future = executor.submit(lambda a, b=0: a + b, 2, b=3)
        assert future.result(timeout=1) == 5
        executor.shutdown(wait=True)

    def test_shutdown_stops_accepting_new_tasks(self):
        """Test executor rejects new work after shutdown."""
        executor = RunExecutor(max_workers=1)

        executor.shutdown(wait=False)

        with pytest.raises(RuntimeError):
            executor.submit(lambda: None)

    def test_drain_waits_for_queued_runs_then_refuses_new_work(self):
        """Test drain flushes queued runs and closes acceptance."""
        release = Event()
        finished = []
        executor = RunExecutor(max_workers=2)

        def slow_run(tag):
            release.wait(timeout=5)
            finished.append(tag)

        executor.submit(slow_run, "a")
        executor.submit(slow_run, "b")
        release.set()

        assert executor.drain(timeout=5) is True
        assert sorted(finished) == ["a", "b"]

        with pytest.raises(RuntimeError):
            executor.submit(lambda: finished.append("late"))

        executor.shutdown(wait=True)
        assert sorted(finished) == ["a", "b"]

    def test_drain_returns_false_when_run_outlasts_timeout(self):
        """Test drain reports failure instead of hanging on a stuck run."""
        release = Event()
        executor = RunExecutor(max_workers=1)
        executor.submit(lambda: release.wait(timeout=5))

        try:
            assert executor.drain(timeout=0.1) is False
        finally:
            release.set()
            executor.shutdown(wait=True)

    def test_drain_on_idle_executor_returns_true(self):
        """Test drain completes right away when nothing is queued."""
        executor = RunExecutor(max_workers=1)

        assert executor.drain(timeout=5) is True
        executor.shutdown(wait=True)

    def test_results_collected_by_submission_index(self):
        """Test results keep submission order regardless of finish order."""
        def run(index):
            time.sleep(0.02 * (3 - index))
            return index * index

        with RunExecutor(max_workers=4) as executor:
            futures = [executor.submit(run, i) for i in range(4)]
            results = [f.result(timeout=5) for f in futures]

        assert results == [0, 1, 4, 9]

    def test_context_manager_closes_acceptance(self):
        """Test leaving the context shuts the pool down."""
        with RunExecutor() as executor:
            executor.submit(lambda: None).result(timeout=1)

        with pytest.raises(RuntimeError):
            executor.submit(lambda: None)
