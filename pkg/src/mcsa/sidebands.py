"""Predicted fault-harmonic frequency grids.

Two families are supported:

* stator flux harmonics ``(k +/- n(1 - s)/p) * f`` for odd harmonic orders k,
* broken-rotor-bar sidebands ``f1 * (1 +/- 2ms)`` for sideband orders m.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable, Sequence

from .errors import CoverageError, DomainError, ScheduleError

if TYPE_CHECKING:
    from .features import FixtureTable

DEFAULT_K_VALUES = tuple(range(1, 22, 2))


class Branch(str, enum.Enum):
    NEGATIVE = "negative"
    POSITIVE = "positive"

    def __str__(self):
        return self.value


class NSchedule(str, enum.Enum):
    """How the slip-term multiplier n is chosen per harmonic order k."""

    FIXED_ONE = "fixed_one"
    HALF_K_PLUS_ONE = "half_k_plus_one"

    @classmethod
    def parse(cls, text: str) -> "NSchedule":
        if isinstance(text, cls):
            return text
        aliases = {"n1": cls.FIXED_ONE, "half": cls.HALF_K_PLUS_ONE}
        return aliases.get(text) or cls(text)


@dataclass(frozen=True)
class GridEntry:
    k: int
    n: int
    branch: Branch
    freq_hz: float
    amplitude: float | None = None
    reflected: bool = False  # raw frequency was negative; freq_hz is its magnitude


@dataclass(frozen=True)
class SidebandGrid:
    case_label: str
    slip: float
    pole_pairs: int
    supply_freq_hz: float
    entries: tuple[GridEntry, ...]

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda e: (e.k, e.branch.value, e.n)))
        keys = [(e.k, e.n, e.branch) for e in entries]
        if len(set(keys)) != len(keys):
            raise DomainError("duplicate (k, n, branch) entries in sideband grid")
        object.__setattr__(self, "entries", entries)

    def lookup(self, k: int, branch: Branch) -> GridEntry | None:
        for e in self.entries:
            if e.k == k and e.branch is branch:
                return e
        return None

    @property
    def layout(self) -> tuple[tuple[int, Branch], ...]:
        return tuple((e.k, e.branch) for e in self.entries)

    def with_amplitudes(self, amplitudes: Sequence[float]) -> "SidebandGrid":
        entries = [replace(e, amplitude=float(a)) for e, a in zip(self.entries, amplitudes)]
        return replace(self, entries=tuple(entries))


def _entry(k, n, branch, raw_hz):
    return GridEntry(k=k, n=n, branch=branch, freq_hz=abs(raw_hz), reflected=raw_hz < 0)


def flux_harmonics(
    slip: float,
    pole_pairs: int,
    supply_freq_hz: float,
    k_values: Iterable[int] = DEFAULT_K_VALUES,
    n_schedule: NSchedule | str = NSchedule.FIXED_ONE,
) -> SidebandGrid:
    """Grid of ``(k +/- n(1 - s)/p) * f`` for each harmonic order k.

    With ``fixed_one`` both branches use n = 1. With ``half_k_plus_one`` the
    positive branch uses n = 1 and the negative branch n = (k + 1) / 2, which
    needs odd k. Negative raw frequencies are folded to their magnitude and
    flagged ``reflected``.
    """
    schedule = NSchedule.parse(n_schedule)
    k_values = list(k_values)
    if not k_values:
        raise DomainError("k_values must not be empty")
    if not 0.0 <= slip < 1.0:
        raise DomainError(f"slip must lie in [0, 1), got {slip}")
    if pole_pairs < 1:
        raise DomainError(f"pole_pairs must be >= 1, got {pole_pairs}")
    if not supply_freq_hz > 0:
        raise DomainError(f"supply frequency must be positive, got {supply_freq_hz}")

    ratio = (1.0 - slip) / pole_pairs
    entries = []
    for k in k_values:
        if k < 1 or int(k) != k:
            raise DomainError(f"harmonic order k must be a positive integer, got {k}")
        if schedule is NSchedule.HALF_K_PLUS_ONE:
            if k % 2 == 0:
                raise ScheduleError(f"half_k_plus_one schedule needs odd k, got {k}")
            n_neg = (k + 1) // 2
        else:
            n_neg = 1
        entries.append(_entry(k, 1, Branch.POSITIVE, (k + ratio) * supply_freq_hz))
        entries.append(_entry(k, n_neg, Branch.NEGATIVE, (k - n_neg * ratio) * supply_freq_hz))
    return SidebandGrid(
        case_label=f"flux:{schedule.value}",
        slip=slip,
        pole_pairs=pole_pairs,
        supply_freq_hz=supply_freq_hz,
        entries=tuple(entries),
    )


def broken_bar_sidebands(
    slip: float, supply_freq_hz: float, orders: Iterable[int] = (1,)
) -> SidebandGrid:
    """Broken-rotor-bar sidebands ``f1 * (1 +/- 2ms)`` for each order m.

    Entries reuse ``k`` for the order m; ``n`` is always 1.
    """
    orders = list(orders)
    if not orders:
        raise DomainError("orders must not be empty")
    if not 0.0 <= slip < 0.5:
        raise DomainError(f"slip must lie in [0, 0.5) for broken-bar sidebands, got {slip}")
    entries = []
    for m in orders:
        if m < 1 or int(m) != m:
            raise DomainError(f"sideband order must be a positive integer, got {m}")
        entries.append(_entry(m, 1, Branch.POSITIVE, supply_freq_hz * (1 + 2 * m * slip)))
        entries.append(_entry(m, 1, Branch.NEGATIVE, supply_freq_hz * (1 - 2 * m * slip)))
    return SidebandGrid(
        case_label="broken_bar",
        slip=slip,
        pole_pairs=1,
        supply_freq_hz=supply_freq_hz,
        entries=tuple(entries),
    )


@dataclass(frozen=True)
class MatchRow:
    k: int
    branch: Branch
    n: int
    predicted_hz: float
    fixture_hz: float
    abs_delta_hz: float
    passed: bool


@dataclass(frozen=True)
class MatchReport:
    case_id: str
    tol_hz: float
    rows: tuple[MatchRow, ...]

    @property
    def pass_count(self) -> int:
        return sum(r.passed for r in self.rows)

    @property
    def all_passed(self) -> bool:
        return self.pass_count == len(self.rows)

    def failures(self) -> list[tuple[int, Branch]]:
        return [(r.k, r.branch) for r in self.rows if not r.passed]

    def to_csv(self) -> str:
        lines = ["k,branch,n,predicted_hz,fixture_hz,abs_delta_hz,pass"]
        for r in self.rows:
            lines.append(
                f"{r.k},{r.branch.value},{r.n},{r.predicted_hz:.6f},"
                f"{_fmt(r.fixture_hz)},{r.abs_delta_hz:.6f},{str(r.passed).lower()}"
            )
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def match_table(grid: SidebandGrid, fixture: "FixtureTable", tol_hz: float) -> MatchReport:
    """Compare predicted frequencies with a fixture table row by row."""
    if not tol_hz > 0:
        raise DomainError(f"tolerance must be positive, got {tol_hz}")
    if not fixture.rows:
        raise CoverageError(f"fixture {fixture.case_id!r} has no rows to match")
    grid_ks = {e.k for e in grid.entries}
    missing = sorted(r.k for r in fixture.rows if r.k not in grid_ks)
    if missing:
        raise CoverageError(f"grid lacks harmonic orders {missing} present in fixture")

    rows = []
    for frow in sorted(fixture.rows, key=lambda r: r.k):
        for branch, fixture_hz in (
            (Branch.NEGATIVE, frow.neg_freq_hz),
            (Branch.POSITIVE, frow.pos_freq_hz),
        ):
            entry = grid.lookup(frow.k, branch)
            if entry is None:
                raise CoverageError(f"grid lacks ({frow.k}, {branch.value})")
            delta = abs(entry.freq_hz - fixture_hz)
            rows.append(
                MatchRow(
                    k=frow.k,
                    branch=branch,
                    n=entry.n,
                    predicted_hz=entry.freq_hz,
                    fixture_hz=fixture_hz,
                    abs_delta_hz=delta,
                    passed=delta <= tol_hz or math.isclose(delta, tol_hz),
                )
            )
    return MatchReport(case_id=fixture.case_id, tol_hz=tol_hz, rows=tuple(rows))


def format_grid(grid: SidebandGrid) -> str:
    lines = ["k,n,branch,freq_hz,reflected"]
    for e in grid.entries:
        lines.append(f"{e.k},{e.n},{e.branch.value},{e.freq_hz:.6f},{str(e.reflected).lower()}")
    return "\n".join(lines) + "\n"
