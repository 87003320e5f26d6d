"""Tick-feed preparation.

Raw exchange records carry a timestamp, a price, and exchange flags;
the model wants per-day arrays of transaction times.  The pipeline is
read -> clean -> durations, with two optional aggregation rules for
second-precision feeds: collapsing every same-second run to one trade,
or collapsing only runs whose prices move monotonically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fscd.model import DurationData

__all__ = [
    "TickRecord",
    "CleanConfig",
    "read_ticks",
    "clean",
    "to_durations",
    "aggregate_same_second",
    "aggregate_gw",
    "descriptive_stats",
    "format_stats",
    "write_durations",
    "read_durations",
]


@dataclass(frozen=True)
class TickRecord:
    """One transaction as reported by the feed."""

    day: str
    timestamp: float  # seconds after midnight
    price: float
    volume: float = 0.0
    session: str = "continuous"
    flag: str = ""

    def __post_init__(self):
        if self.price < 0.0 or self.volume < 0.0:
            raise ValueError("negative price or volume")


@dataclass(frozen=True)
class CleanConfig:
    """Filtering knobs: session whitelist, flag blacklist, and the
    windowed aberrant-price rule

        |p_i - median(window)| > gamma * (mad(window) + floor)

    with the window the k surrounding same-day ticks on each side."""

    sessions: tuple = ("continuous",)
    bad_flags: tuple = ("delayed", "corrected", "canceled", "incorrect")
    k: int = 20
    gamma: float = 10.0
    floor: float = 0.02

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("window length k must be at least 1")
        if self.gamma <= 0.0:
            raise ValueError("threshold multiplier gamma must be positive")


def parse_timestamp(text: str) -> float:
    """Seconds after midnight from 'HH:MM:SS' or a bare number."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad timestamp {text!r}")
        h, m, s = (float(p) for p in parts)
        if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60):
            raise ValueError(f"bad timestamp {text!r}")
        return 3600.0 * h + 60.0 * m + s
    return float(text)


def read_ticks(path, delimiter: str = ",", columns: dict | None = None) -> list[TickRecord]:
    """Parse a delimited tick file with a header row.

    `columns` remaps logical names (day, time, price, volume, session,
    flag) to header names; volume, session, and flag are optional in
    the file.  Malformed rows are reported with their line numbers.
    """
    names = {"day": "day", "time": "time", "price": "price",
             "volume": "volume", "session": "session", "flag": "flag"}
    names.update(columns or {})
    ticks = []
    errors = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        for lineno, row in enumerate(reader, start=2):
            try:
                ticks.append(
                    TickRecord(
                        day=str(row[names["day"]]).strip(),
                        timestamp=parse_timestamp(row[names["time"]]),
                        price=float(row[names["price"]]),
                        volume=float(row.get(names["volume"], 0.0) or 0.0),
                        session=str(row.get(names["session"], "continuous") or "continuous").strip(),
                        flag=str(row.get(names["flag"], "") or "").strip(),
                    )
                )
            except (KeyError, TypeError, ValueError) as e:
                errors.append(f"line {lineno}: {e}")
    if errors:
        shown = "; ".join(errors[:5])
        more = f" (+{len(errors) - 5} more)" if len(errors) > 5 else ""
        raise ValueError(f"malformed tick records: {shown}{more}")
    return ticks


def _price_pass(ticks: list[TickRecord], cfg: CleanConfig) -> list[TickRecord]:
    keep = []
    by_day: dict[str, list[TickRecord]] = {}
    for t in ticks:
        by_day.setdefault(t.day, []).append(t)
    kept_days = {}
    for day, recs in by_day.items():
        p = np.array([r.price for r in recs])
        n = p.size
        ok = np.ones(n, dtype=bool)
        for i in range(n):
            lo, hi = max(0, i - cfg.k), min(n, i + cfg.k + 1)
            nb = np.delete(p[lo:hi], i - lo)
            if nb.size < 2:
                continue
            med = np.median(nb)
            mad = np.median(np.abs(nb - med))
            if abs(p[i] - med) > cfg.gamma * (mad + cfg.floor):
                ok[i] = False
        kept_days[day] = [r for r, k in zip(recs, ok) if k]
    for t in ticks:
        day = kept_days.get(t.day)
        if day and day[0] is t:
            day.pop(0)
            keep.append(t)
    return keep


def clean(ticks: list[TickRecord], cfg: CleanConfig | None = None) -> list[TickRecord]:
    """Session whitelist, flag blacklist, then the windowed price rule
    iterated to a fixed point (so a second clean is a no-op)."""
    cfg = cfg or CleanConfig()
    out = [
        t
        for t in ticks
        if t.session in cfg.sessions and t.flag not in cfg.bad_flags
    ]
    while True:
        nxt = _price_pass(out, cfg)
        if len(nxt) == len(out):
            return nxt
        out = nxt


def to_durations(ticks: list[TickRecord], discrete: bool | None = None) -> DurationData:
    """Per-day time arrays in day order of first appearance.

    The first trade of a day anchors the clock; each later trade adds
    one duration.  Days never share a duration.
    """
    order: list[str] = []
    by_day: dict[str, list[float]] = {}
    for t in ticks:
        if t.day not in by_day:
            order.append(t.day)
            by_day[t.day] = []
        by_day[t.day].append(t.timestamp)
    times = []
    for day in order:
        td = np.array(sorted(by_day[day]), dtype=float)
        times.append(td)
    if discrete is None:
        discrete = all(np.all(t == np.floor(t)) for t in times) and bool(times)
    return DurationData(times, discrete=discrete)


def aggregate_same_second(data: DurationData) -> DurationData:
    """One trade per recorded second; removes every zero duration."""
    return DurationData(
        [np.unique(t) for t in data.times], discrete=data.discrete
    )


def _collapse_run(recs: list[TickRecord]) -> list[TickRecord]:
    """Maximal monotone price subsequences of one same-second run, each
    reduced to its first trade.  Equal prices extend the current run;
    a direction break starts a new one at the breaking trade."""
    out = [recs[0]]
    direction = 0
    last = recs[0].price
    for r in recs[1:]:
        step = np.sign(r.price - last)
        if step == 0 or direction == 0 or step == direction:
            if direction == 0:
                direction = int(step)
        else:
            out.append(r)
            direction = 0
        last = r.price
    return out


def aggregate_gw(ticks: list[TickRecord]) -> DurationData:
    """Durations after collapsing monotone same-second price runs."""
    collapsed: list[TickRecord] = []
    run: list[TickRecord] = []
    for t in ticks:
        if run and t.day == run[0].day and t.timestamp == run[0].timestamp:
            run.append(t)
        else:
            if run:
                collapsed.extend(_collapse_run(run))
            run = [t]
    if run:
        collapsed.extend(_collapse_run(run))
    return to_durations(collapsed)


def descriptive_stats(data: DurationData) -> dict:
    """Trade count, duration moments, and the share recorded at each
    whole second from zero to five."""
    y = np.concatenate([np.diff(t) for t in data.times]) if data.D else np.zeros(0)
    trades = int(sum(t.size for t in data.times))
    out = {"trades": trades}
    if y.size:
        mean = float(y.mean())
        out.update(
            mean=mean,
            std=float(y.std(ddof=1)) if y.size > 1 else 0.0,
            max=float(y.max()),
            cv=float(y.std(ddof=1) / mean) if y.size > 1 and mean > 0 else float("nan"),
        )
        for k in range(6):
            out[f"pct_{k}s"] = float(100.0 * np.mean(y == k))
    else:
        out.update(mean=float("nan"), std=float("nan"), max=float("nan"),
                   cv=float("nan"), **{f"pct_{k}s": float("nan") for k in range(6)})
    return out


def format_stats(stats: dict) -> str:
    cols = ["trades", "mean", "std", "max", "cv"] + [f"pct_{k}s" for k in range(6)]
    hdr = " ".join(f"{c:>9s}" for c in cols)
    row = f"{stats['trades']:>9d} " + " ".join(
        f"{stats[c]:>9.2f}" for c in cols[1:]
    )
    return hdr + "\n" + row


def write_durations(data: DurationData, path) -> None:
    """One row per duration: day index, previous time, duration."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "t_prev", "y"])
        for d, t in enumerate(data.times):
            for i in range(1, t.size):
                w.writerow([d, _fmt(t[i - 1]), _fmt(t[i] - t[i - 1])])


def _fmt(v: float) -> str:
    return f"{int(v)}" if v == int(v) else repr(float(v))


def read_durations(path) -> DurationData:
    """Rebuild per-day time arrays from a duration file."""
    days: dict[int, list[float]] = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                d = int(row["day"])
                t_prev = float(row["t_prev"])
                y = float(row["y"])
            except (KeyError, TypeError, ValueError) as e:
                raise ValueError(f"line {lineno}: {e}") from None
            if y < 0.0:
                raise ValueError(f"line {lineno}: negative duration")
            if d not in days:
                days[d] = [t_prev]
            elif abs(days[d][-1] - t_prev) > 1e-9:
                raise ValueError(f"line {lineno}: rows of day {d} do not chain")
            days[d].append(t_prev + y)
    times = [np.array(days[d]) for d in sorted(days)]
    discrete = all(np.all(t == np.floor(t)) for t in times) and bool(times)
    return DurationData(times, discrete=discrete)
