"""
Progress reporting for trajectory ensembles.

Batches complete out of order on the worker pool, so progress is counted in
finished trajectories rather than batch indices. Milestones are logged at
every quarter; a tqdm bar on stderr is optional.
"""
import logging
import sys
import time
from typing import Optional

from tqdm import tqdm

from scripts.core.config import PROGRESS_BAR_ENABLED

logger = logging.getLogger(__name__)

MILESTONES = 4


class ProgressTracker:
    """
    Counts finished work items and reports them.

    Example:
        >>> tracker = ProgressTracker(use_bar=True)
        >>> tracker.start(2000, label="trajectories")
        >>> tracker.update(500)
        >>> tracker.finish()
    """

    def __init__(self, enabled: bool = True, use_bar: Optional[bool] = None):
        self.enabled = enabled
        self.use_bar = PROGRESS_BAR_ENABLED if use_bar is None else use_bar
        self.label = "items"
        self.current_item = 0
        self.total_items = 0
        self._started: Optional[float] = None
        self._bar: Optional[tqdm] = None

    def start(self, total: int, label: str = "items") -> None:
        if not self.enabled:
            return
        self.total_items = total
        self.current_item = 0
        self.label = label
        self._started = time.perf_counter()
        if self.use_bar:
            self._bar = tqdm(total=total, desc=label, file=sys.stderr, leave=False)
        logger.info(f"Running {total} {label}")

    def update(self, increment: int = 1) -> None:
        """Record `increment` finished items; logs once per quarter crossed."""
        if not self.enabled:
            return
        before = self._milestone(self.current_item)
        self.current_item += increment
        if self._bar is not None:
            self._bar.update(increment)
        if self._milestone(self.current_item) > before:
            logger.info(
                f"  Progress: {self.current_item}/{self.total_items} {self.label} "
                f"({100.0 * self.current_item / self.total_items:.0f}%), "
                f"{self.elapsed():.1f}s elapsed, "
                f"~{self.get_estimated_time_remaining():.0f}s left"
            )

    def finish(self) -> None:
        if not self.enabled:
            return
        if self._bar is not None:
            self._bar.close()
            self._bar = None
        logger.info(
            f"Completed {self.current_item}/{self.total_items} {self.label} "
            f"in {self.elapsed():.1f}s"
        )

    def _milestone(self, count: int) -> int:
        if self.total_items <= 0:
            return 0
        return (MILESTONES * count) // self.total_items

    def elapsed(self) -> float:
        return 0.0 if self._started is None else time.perf_counter() - self._started

    def get_estimated_time_remaining(self) -> float:
        """Seconds left at the average rate so far (0 before the first update)."""
        if not self.enabled or self.current_item == 0:
            return 0.0
        elapsed = self.elapsed()
        if elapsed <= 0:
            return 0.0
        rate = self.current_item / elapsed
        return max(self.total_items - self.current_item, 0) / rate
