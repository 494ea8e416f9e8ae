"""Study-window arithmetic with a fixed UTC offset.

All bucketing (weeks, days, clock hours, night windows) happens in
"relative local seconds": seconds since local Monday 00:00 of week 1.
With a fixed offset this is simply ``t_utc - start_epoch``, which keeps
every boundary computation integer and timezone-library free.
"""

from __future__ import annotations

import calendar
import datetime as dt
from dataclasses import dataclass

SECONDS_PER_HOUR = 3600
SECONDS_PER_DAY = 86400
SECONDS_PER_WEEK = 7 * SECONDS_PER_DAY


@dataclass(frozen=True)
class StudyWindow:
    start_date: dt.date
    weeks: int
    offset_s: int
    start_epoch: int

    @classmethod
    def create(cls, start_date: str | dt.date, weeks: int, offset_hours: float) -> "StudyWindow":
        if isinstance(start_date, str):
            start_date = dt.date.fromisoformat(start_date)
        if start_date.weekday() != 0:
            raise ValueError(f"study start {start_date} is not a Monday")
        if weeks < 1:
            raise ValueError("week count must be >= 1")
        offset_s = int(round(offset_hours * SECONDS_PER_HOUR))
        # local midnight = UTC midnight of the same date minus the offset
        midnight_utc = calendar.timegm(start_date.timetuple())
        return cls(start_date, int(weeks), offset_s, midnight_utc - offset_s)

    @property
    def t_min(self) -> int:
        return self.start_epoch

    @property
    def t_max(self) -> int:
        return self.start_epoch + self.weeks * SECONDS_PER_WEEK

    def rel(self, t: int) -> int:
        """Seconds since local Monday 00:00 of week 1."""
        return int(t) - self.start_epoch

    def epoch(self, rel: int) -> int:
        return self.start_epoch + int(rel)

    def in_window(self, t: int) -> bool:
        return self.t_min <= t < self.t_max

    def week_of_rel(self, rel: int) -> int:
        """1-based week index; 0 when outside the study window."""
        if rel < 0 or rel >= self.weeks * SECONDS_PER_WEEK:
            return 0
        return rel // SECONDS_PER_WEEK + 1

    def week_bounds_rel(self, week: int) -> tuple[int, int]:
        lo = (week - 1) * SECONDS_PER_WEEK
        return lo, lo + SECONDS_PER_WEEK

    def night_window_rel(
        self, day_index: int, start_hour: int, end_hour: int
    ) -> tuple[int, int]:
        """Night window of a given absolute day, in relative seconds.

        When end_hour <= start_hour the window wraps past midnight into
        the following day (the default 21:00-06:00 case).
        """
        day0 = day_index * SECONDS_PER_DAY
        lo = day0 + start_hour * SECONDS_PER_HOUR
        if end_hour <= start_hour:
            hi = day0 + SECONDS_PER_DAY + end_hour * SECONDS_PER_HOUR
        else:
            hi = day0 + end_hour * SECONDS_PER_HOUR
        return lo, hi
