"""
Tests for progress tracking (scripts/utils/progress.py)
"""

import logging

from scripts.utils.progress import ProgressTracker


class TestProgressTracker:
    """Tests for ProgressTracker."""

    def test_disabled_is_silent(self, caplog):
        """Test a disabled tracker records nothing."""
        tracker = ProgressTracker(enabled=False)
        with caplog.at_level(logging.INFO, logger="scripts.utils.progress"):
            tracker.start(10)
            tracker.update(10)
            tracker.finish()
        assert tracker.current_item == 0
        assert caplog.text == ""

    def test_quarter_milestones(self, caplog):
        """Test one log line per crossed quarter."""
        tracker = ProgressTracker(enabled=True, use_bar=False)
        with caplog.at_level(logging.INFO, logger="scripts.utils.progress"):
            tracker.start(8, label="trajectories")
            for _ in range(8):
                tracker.update(1)
            tracker.finish()
        progress_lines = [r for r in caplog.records if "Progress:" in r.getMessage()]
        assert len(progress_lines) == 4
        assert "Completed 8/8 trajectories" in caplog.text

    def test_large_increment(self, caplog):
        """Test a batch spanning several quarters logs once."""
        tracker = ProgressTracker(enabled=True, use_bar=False)
        with caplog.at_level(logging.INFO, logger="scripts.utils.progress"):
            tracker.start(100)
            tracker.update(60)
        assert sum("Progress:" in r.getMessage() for r in caplog.records) == 1

    def test_bar(self):
        """Test the tqdm bar is opened and closed."""
        tracker = ProgressTracker(enabled=True, use_bar=True)
        tracker.start(4, label="trajectories")
        assert tracker._bar is not None
        tracker.update(4)
        tracker.finish()
        assert tracker._bar is None

    def test_estimated_time_remaining(self):
        """Test the estimate is zero before any progress."""
        tracker = ProgressTracker(enabled=True, use_bar=False)
        tracker.start(10)
        assert tracker.get_estimated_time_remaining() == 0.0
        tracker.update(5)
        assert tracker.get_estimated_time_remaining() >= 0.0
