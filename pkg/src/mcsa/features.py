"""Harmonic-table fixtures and sideband feature vectors."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, NotFoundError, ParseError, ValidationError
from .motor import (
    REFERENCE_MOTOR,
    FaultLabel,
    FaultSignature,
    MotorParams,
    SlipState,
    compute_slip,
    fault_from_tables,
    synthesize,
)
from .sidebands import Branch, GridEntry, NSchedule, SidebandGrid, flux_harmonics
from .spectrum import Spectrum, Window, measure_peak, transform

CASE_IDS = ("thirty_turns", "ten_turns")
DEFAULT_FEATURE_K = (1, 3, 5, 7, 9)
DATASET_N_SAMPLES = 3900
FIXTURE_COLUMNS = "case_id,k,pos_freq_hz,pos_amp,neg_freq_hz,neg_amp"
META_SCHEMA = "# meta case_id f_hz rpm slip kw p"

_PREAMBLE = (
    "# Inter-turn short-circuit sideband tables, 2.2 kW 50 Hz 2-pole motor, no load.\n"
    "# Values are stored exactly as printed, including rows that fit no harmonic rule.\n"
    "# Case ids follow the slip that reconciles each table's frequencies; the caption\n"
    "# printed next to each table names the other case (see the note lines).\n"
)


class Normalize(str, enum.Enum):
    NONE = "none"
    BY_FUNDAMENTAL = "by_fundamental"


def _fmt(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


@dataclass(frozen=True)
class FixtureMeta:
    supply_freq_hz: float
    rotor_speed_rpm: float
    slip: float
    rated_kw: float
    pole_pairs: int


@dataclass(frozen=True)
class FixtureRow:
    k: int
    pos_freq_hz: float
    pos_amplitude: float
    neg_freq_hz: float
    neg_amplitude: float


@dataclass(frozen=True)
class FixtureTable:
    """One printed harmonic table: rows keyed by odd k plus operating data."""

    case_id: str
    meta: FixtureMeta
    rows: tuple[FixtureRow, ...]
    note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        ks = [r.k for r in self.rows]
        if len(set(ks)) != len(ks):
            dup = sorted({k for k in ks if ks.count(k) > 1})
            raise ValidationError(f"duplicate k {dup} in fixture {self.case_id!r}")
        for r in self.rows:
            if r.k % 2 == 0 or r.k < 1:
                raise ValidationError(f"fixture {self.case_id!r}: k must be odd and positive, got {r.k}")
            if r.pos_amplitude < 0 or r.neg_amplitude < 0:
                raise ValidationError(f"fixture {self.case_id!r}: negative amplitude at k={r.k}")

    def row(self, k: int) -> FixtureRow:
        for r in self.rows:
            if r.k == k:
                return r
        raise KeyError(k)

    @property
    def k_values(self) -> tuple[int, ...]:
        return tuple(r.k for r in self.rows)

    def slip_state(self, params: MotorParams = REFERENCE_MOTOR) -> SlipState:
        """Operating point using the stored (reconciling) slip, not the rpm."""
        return SlipState.from_slip(params, self.meta.slip)


def fixture_path() -> Path:
    return Path(str(resources.files("mcsa") / "data" / "sideband_tables.csv"))


def parse_fixtures(text: str) -> list[FixtureTable]:
    metas: dict[str, FixtureMeta] = {}
    notes: dict[str, str] = {}
    rows: dict[str, list[FixtureRow]] = {}
    seen_header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("meta "):
                fields = body.split()[1:]
                if fields[0] == "case_id":
                    continue
                if len(fields) != 6:
                    raise ParseError(f"meta line needs 6 fields, got {len(fields)}", line=lineno)
                try:
                    metas[fields[0]] = FixtureMeta(
                        float(fields[1]), float(fields[2]), float(fields[3]),
                        float(fields[4]), int(fields[5]),
                    )
                except ValueError:
                    raise ParseError(f"bad meta values {fields[1:]}", line=lineno) from None
            elif body.startswith("note "):
                _, case, text_ = body.split(" ", 2)
                notes[case] = text_
            continue
        if line == FIXTURE_COLUMNS:
            seen_header = True
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ParseError(f"expected 6 columns, got {len(parts)}", line=lineno)
        try:
            row = FixtureRow(int(parts[1]), float(parts[2]), float(parts[3]),
                             float(parts[4]), float(parts[5]))
        except ValueError:
            raise ParseError(f"malformed row {line!r}", line=lineno) from None
        if any(r.k == row.k for r in rows.get(parts[0], ())):
            raise ValidationError(f"line {lineno}: duplicate k={row.k} for case {parts[0]!r}")
        rows.setdefault(parts[0], []).append(row)

    if not rows:
        raise ParseError("fixture file holds no rows", line=max(1, len(text.splitlines())))
    if not seen_header:
        raise ParseError(f"missing column header {FIXTURE_COLUMNS!r}", line=1)
    tables = []
    for case_id, case_rows in rows.items():
        if case_id not in metas:
            raise ParseError(f"no meta line for case {case_id!r}")
        tables.append(FixtureTable(case_id, metas[case_id], tuple(case_rows), notes.get(case_id, "")))
    return tables


def format_fixtures(tables: Sequence[FixtureTable]) -> str:
    out = [_PREAMBLE.rstrip("\n"), META_SCHEMA]
    for t in tables:
        m = t.meta
        out.append(
            f"# meta {t.case_id} {_fmt(m.supply_freq_hz)} {_fmt(m.rotor_speed_rpm)} "
            f"{_fmt(m.slip)} {_fmt(m.rated_kw)} {m.pole_pairs}"
        )
        if t.note:
            out.append(f"# note {t.case_id} {t.note}")
    out.append(FIXTURE_COLUMNS)
    for t in tables:
        for r in t.rows:
            out.append(
                f"{t.case_id},{r.k},{_fmt(r.pos_freq_hz)},{_fmt(r.pos_amplitude)},"
                f"{_fmt(r.neg_freq_hz)},{_fmt(r.neg_amplitude)}"
            )
    return "\n".join(out) + "\n"


def load_fixtures(source=None) -> list[FixtureTable]:
    """Load fixture tables; ``None`` loads the shipped file."""
    path = fixture_path() if source is None else Path(source)
    return parse_fixtures(path.read_text())


def fixture_case(tables: Iterable[FixtureTable], case_id: str) -> FixtureTable:
    for t in tables:
        if t.case_id == case_id:
            return t
    raise NotFoundError(f"fixture case {case_id!r} not found")


def grid_from_fixture(table: FixtureTable, k_values: Iterable[int] | None = None) -> SidebandGrid:
    """Grid whose targets are the table's printed frequencies and amplitudes."""
    wanted = set(table.k_values if k_values is None else k_values)
    entries = []
    for r in table.rows:
        if r.k not in wanted:
            continue
        entries.append(GridEntry(r.k, 1, Branch.NEGATIVE, r.neg_freq_hz, r.neg_amplitude))
        entries.append(GridEntry(r.k, 1, Branch.POSITIVE, r.pos_freq_hz, r.pos_amplitude))
    return SidebandGrid(
        case_label=f"fixture:{table.case_id}",
        slip=table.meta.slip,
        pole_pairs=table.meta.pole_pairs,
        supply_freq_hz=table.meta.supply_freq_hz,
        entries=tuple(entries),
    )


# -- feature vectors -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    layout: tuple[tuple[int, Branch], ...]
    label: FaultLabel | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size != len(self.layout):
            raise DomainError(f"{values.size} values do not match a layout of {len(self.layout)}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", tuple((int(k), Branch(b)) for k, b in self.layout))
        if self.label is not None:
            object.__setattr__(self, "label", FaultLabel(self.label))

    def __len__(self):
        return self.values.size


def extract_features(
    s: Spectrum,
    grid: SidebandGrid,
    normalize: Normalize | str = Normalize.BY_FUNDAMENTAL,
    label: FaultLabel | None = None,
    half_width_bins: int = 2,
) -> FeatureVector:
    """Measured sideband amplitudes in grid order.

    With ``by_fundamental`` each amplitude is divided by the amplitude
    measured at the grid's supply frequency; a silent fundamental yields an
    all-zero vector rather than NaN.
    """
    normalize = Normalize(normalize)
    for e in grid.entries:
        if not s.in_band(e.freq_hz):
            raise DomainError(
                f"grid frequency {e.freq_hz:.3f} Hz (k={e.k}, {e.branch.value}) is not below "
                f"the spectrum's Nyquist {s.nyquist_hz} Hz"
            )
    values = np.array([measure_peak(s, e.freq_hz, half_width_bins).amplitude for e in grid.entries])
    if normalize is Normalize.BY_FUNDAMENTAL:
        fundamental = measure_peak(s, grid.supply_freq_hz, half_width_bins).amplitude
        values = values / fundamental if fundamental > 0 else np.zeros_like(values)
    return FeatureVector(values, grid.layout, label)


def reference_cases(
    fixtures: Sequence[FixtureTable] | None = None, params: MotorParams = REFERENCE_MOTOR
) -> list[tuple[FaultSignature, SlipState]]:
    """Healthy, ten-turn and thirty-turn cases built from the fixtures.

    The healthy motor runs at 2650 rpm; faulted cases use the slip stored
    with their table.
    """
    fixtures = load_fixtures() if fixtures is None else fixtures
    cases = [(FaultSignature.healthy(), compute_slip(params, 2650.0))]
    for case_id in ("ten_turns", "thirty_turns"):
        table = fixture_case(fixtures, case_id)
        cases.append((fault_from_tables(case_id, fixtures), table.slip_state(params)))
    return cases


def build_dataset(
    cases: Sequence[tuple[FaultSignature, SlipState]],
    per_case: int,
    noise_sigma: float,
    seed: int,
    *,
    params: MotorParams = REFERENCE_MOTOR,
    k_values: Sequence[int] = DEFAULT_FEATURE_K,
    schedule: NSchedule | str = NSchedule.FIXED_ONE,
    sample_rate_hz: float = 3250.0,
    n_samples: int = DATASET_N_SAMPLES,
    window: Window | str = Window.HANN,
    normalize: Normalize | str = Normalize.BY_FUNDAMENTAL,
) -> list[FeatureVector]:
    """Labelled feature vectors from noisy synthetic captures.

    Each case is synthesized ``per_case`` times, with the noise seed of
    sample i of case c drawn from ``SeedSequence(seed, spawn_key=(c, i))``,
    so any subset can be regenerated independently of ordering. Features are
    measured on the flux-harmonic grid predicted from each case's slip.
    """
    if per_case < 1:
        raise DomainError(f"per_case must be >= 1, got {per_case}")
    if noise_sigma < 0:
        raise DomainError(f"noise_sigma must be >= 0, got {noise_sigma}")
    data = []
    for ci, (fault, slip) in enumerate(cases):
        grid = flux_harmonics(slip.slip, params.pole_pairs, params.supply_freq_hz, k_values, schedule)
        for i in range(per_case):
            sample_seed = int(np.random.SeedSequence(seed, spawn_key=(ci, i)).generate_state(1)[0])
            w = synthesize(params, slip, fault, 1.0, sample_rate_hz, n_samples, noise_sigma, sample_seed)
            data.append(extract_features(transform(w, window), grid, normalize, label=fault.label))
    return data


# -- dataset CSV -----------------------------------------------------------

def format_layout(layout) -> str:
    return ";".join(f"{k}:{Branch(b).value}" for k, b in layout)


def parse_layout(text: str) -> tuple[tuple[int, Branch], ...]:
    out = []
    for item in text.split(";"):
        k, _, b = item.partition(":")
        out.append((int(k), Branch(b)))
    return tuple(out)


def format_dataset(vectors: Sequence[FeatureVector]) -> str:
    if not vectors:
        return "# layout=\nlabel\n"
    layout = vectors[0].layout
    for v in vectors:
        if v.layout != layout:
            raise DomainError("all vectors in a dataset must share one layout")
    lines = [f"# layout={format_layout(layout)}",
             "label," + ",".join(f"v{i + 1}" for i in range(len(layout)))]
    for v in vectors:
        label = "" if v.label is None else v.label.value
        lines.append(label + "," + ",".join(format(float(x), ".17g") for x in v.values))
    return "\n".join(lines) + "\n"


def parse_dataset(text: str) -> list[FeatureVector]:
    layout = None
    vectors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("# layout="):
            body = line[len("# layout="):]
            try:
                layout = parse_layout(body) if body else ()
            except ValueError:
                raise ParseError(f"bad layout {body!r}", line=lineno) from None
            continue
        if line.startswith("#") or line.startswith("label"):
            continue
        if layout is None:
            raise ParseError("data row before '# layout=' header", line=lineno)
        label, *values = line.split(",")
        if len(values) != len(layout):
            raise ParseError(f"expected {len(layout)} values, got {len(values)}", line=lineno)
        try:
            vectors.append(FeatureVector([float(v) for v in values], layout, label or None))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
    if layout is None:
        raise ParseError("missing '# layout=' header", line=1)
    return vectors


def write_dataset(vectors: Sequence[FeatureVector], path) -> None:
    Path(path).write_text(format_dataset(vectors))


def read_dataset(path) -> list[FeatureVector]:
    return parse_dataset(Path(path).read_text())
