"""
Clocks for the session engine. Times are UTC milliseconds since the epoch.
"""

import logging
import time

logger = logging.getLogger(__name__)


def now_ms() -> int:
    return int(time.time() * 1000)


class WallClock:
    """Live time."""

    def now_ms(self) -> int:
        return now_ms()


class VirtualClock:
    """
    Replay time. Advances only when told to, so a trace replayed twice
    produces the same timestamps.
    """

    def __init__(self, start_ms: int = 0):
        self._now = int(start_ms)
        logger.debug("VirtualClock initialized at %d", self._now)

    def now_ms(self) -> int:
        return self._now

    def advance_to(self, t_ms: int) -> int:
        """Move forward to t_ms; moving backwards is an error."""
        if t_ms < self._now:
            raise ValueError(f"virtual time cannot go back from {self._now} to {t_ms}")
        self._now = int(t_ms)
        return self._now

    def advance_by(self, delta_ms: int) -> int:
        return self.advance_to(self._now + delta_ms)
