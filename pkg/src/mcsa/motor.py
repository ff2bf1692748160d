"""Motor nameplate data, slip arithmetic and stator-current synthesis."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, NotFoundError, ParseError

if TYPE_CHECKING:
    from .features import FixtureTable

DEFAULT_SAMPLE_RATE_HZ = 3250.0
DEFAULT_N_SAMPLES = 390


class FaultLabel(str, enum.Enum):
    HEALTHY = "healthy"
    INTER_TURN_MINOR = "inter_turn_minor"
    INTER_TURN_SEVERE = "inter_turn_severe"
    BROKEN_BAR = "broken_bar"

    def __str__(self):
        return self.value


CASE_LABELS = {
    "ten_turns": FaultLabel.INTER_TURN_MINOR,
    "thirty_turns": FaultLabel.INTER_TURN_SEVERE,
}


@dataclass(frozen=True)
class MotorParams:
    """Nameplate and electrical constants of an induction motor.

    Attributes:
        pole_pairs: Number of pole pairs ``p``.
        supply_freq_hz: Mains frequency ``f`` in Hz.
        sync_speed_rpm: Synchronous speed; must equal ``60 * f / p``.
        rated_kw: Output rating in kW.
        rated_current_a: Rated line current in A.
    """

    pole_pairs: int
    supply_freq_hz: float
    sync_speed_rpm: float
    rated_kw: float
    rated_current_a: float

    def __post_init__(self):
        if int(self.pole_pairs) != self.pole_pairs or self.pole_pairs < 1:
            raise ConfigurationError(f"pole_pairs must be an integer >= 1, got {self.pole_pairs}")
        for name in ("supply_freq_hz", "sync_speed_rpm", "rated_kw", "rated_current_a"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be positive, got {value}")
        expected = 60.0 * self.supply_freq_hz / self.pole_pairs
        if not math.isclose(self.sync_speed_rpm, expected, rel_tol=1e-9):
            raise ConfigurationError(
                f"sync_speed_rpm={self.sync_speed_rpm} inconsistent with "
                f"60*f/p = {expected} (f={self.supply_freq_hz}, p={self.pole_pairs})"
            )

    @classmethod
    def from_nameplate(cls, pole_pairs, supply_freq_hz, rated_kw, rated_current_a):
        return cls(
            pole_pairs=int(pole_pairs),
            supply_freq_hz=float(supply_freq_hz),
            sync_speed_rpm=60.0 * supply_freq_hz / pole_pairs,
            rated_kw=float(rated_kw),
            rated_current_a=float(rated_current_a),
        )


# 2.2 kW, 50 Hz, 2-pole test motor. Nameplate current is not printed; 9 A is
# the larger of the two measured no-load line currents.
REFERENCE_MOTOR = MotorParams.from_nameplate(1, 50.0, 2.2, 9.0)


@dataclass(frozen=True)
class SlipState:
    """Operating point: rotor speed, per-unit slip and slip frequency."""

    rotor_speed_rpm: float
    slip: float
    slip_freq_hz: float

    @classmethod
    def from_slip(cls, params: MotorParams, slip: float) -> "SlipState":
        """Build a state from a given slip (e.g. a fixture override)."""
        if not 0.0 <= slip <= 1.0:
            raise DomainError(f"slip must lie in [0, 1], got {slip}")
        return cls(
            rotor_speed_rpm=params.sync_speed_rpm * (1.0 - slip),
            slip=slip,
            slip_freq_hz=slip * params.supply_freq_hz,
        )


def compute_slip(params: MotorParams, rotor_speed_rpm: float) -> SlipState:
    """Per-unit slip ``(ns - nr) / ns`` at full precision.

    Raises:
        DomainError: for negative or supersynchronous rotor speeds.
    """
    ns = params.sync_speed_rpm
    if not math.isfinite(rotor_speed_rpm) or rotor_speed_rpm < 0:
        raise DomainError(f"rotor speed must be >= 0 rpm, got {rotor_speed_rpm}")
    if rotor_speed_rpm > ns:
        raise DomainError(
            f"rotor speed {rotor_speed_rpm} rpm exceeds synchronous speed {ns} rpm "
            "(supersynchronous operation is not supported)"
        )
    slip = (ns - rotor_speed_rpm) / ns
    return SlipState(
        rotor_speed_rpm=float(rotor_speed_rpm),
        slip=slip,
        slip_freq_hz=slip * params.supply_freq_hz,
    )


@dataclass(frozen=True)
class Component:
    freq_hz: float
    amplitude: float
    phase_rad: float = 0.0

    def __post_init__(self):
        if self.freq_hz < 0 or self.amplitude < 0:
            raise ConfigurationError(
                f"component needs nonnegative frequency and amplitude, got {self}"
            )


@dataclass(frozen=True)
class FaultSignature:
    """A fault condition expressed as injected spectral components."""

    label: FaultLabel
    components: tuple[Component, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "label", FaultLabel(self.label))
        object.__setattr__(self, "components", tuple(self.components))
        if self.label is FaultLabel.HEALTHY and self.components:
            raise ConfigurationError("a healthy signature cannot carry fault components")

    @classmethod
    def healthy(cls) -> "FaultSignature":
        return cls(FaultLabel.HEALTHY)


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled real signal. The sample array is read-only."""

    sample_rate_hz: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise DomainError("a waveform needs a non-empty 1-D sample sequence")
        if not (math.isfinite(self.sample_rate_hz) and self.sample_rate_hz > 0):
            raise DomainError(f"sample rate must be positive, got {self.sample_rate_hz}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return self.sample_rate_hz == other.sample_rate_hz and np.array_equal(
            self.samples, other.samples
        )

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def scaled(self, factor: float) -> "Waveform":
        return Waveform(self.sample_rate_hz, self.samples * factor)


def noise_rng(seed: int) -> np.random.Generator:
    """Noise source: numpy PCG64 seeded through SeedSequence(seed)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def synthesize(
    params: MotorParams,
    slip: SlipState,
    fault: FaultSignature,
    fundamental_amp: float = 1.0,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    n_samples: int = DEFAULT_N_SAMPLES,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> Waveform:
    """Synthesize a stator line current.

    The signal is the supply-frequency fundamental plus every fault component
    as a sine at its phase, plus additive white Gaussian noise of standard
    deviation ``noise_sigma`` drawn from :func:`noise_rng`. ``slip`` is carried
    for provenance only; fault components already encode their frequencies.

    Raises:
        ConfigurationError: if any component sits at or above Nyquist.
    """
    if fundamental_amp < 0 or noise_sigma < 0:
        raise ConfigurationError("fundamental_amp and noise_sigma must be nonnegative")
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be positive, got {n_samples}")
    if not sample_rate_hz > 0:
        raise ConfigurationError(f"sample_rate_hz must be positive, got {sample_rate_hz}")
    nyquist = sample_rate_hz / 2.0
    aliased = [c for c in fault.components if c.freq_hz >= nyquist]
    if aliased:
        freqs = ", ".join(f"{c.freq_hz:g}" for c in sorted(aliased, key=lambda c: -c.freq_hz))
        raise ConfigurationError(
            f"{len(aliased)} fault component(s) not below Nyquist {nyquist:g} Hz "
            f"for fs={sample_rate_hz:g} Hz would alias: {freqs} Hz"
        )
    if params.supply_freq_hz >= nyquist:
        raise ConfigurationError(
            f"supply frequency {params.supply_freq_hz:g} Hz is not below Nyquist {nyquist:g} Hz"
        )

    t = np.arange(n_samples) / sample_rate_hz
    x = fundamental_amp * np.sin(2 * np.pi * params.supply_freq_hz * t)
    for comp in fault.components:
        x = x + comp.amplitude * np.sin(2 * np.pi * comp.freq_hz * t + comp.phase_rad)
    if noise_sigma > 0:
        x = x + noise_rng(seed).normal(0.0, noise_sigma, n_samples)
    return Waveform(sample_rate_hz, x)


def fault_from_tables(case_id: str, fixtures: Iterable["FixtureTable"]) -> FaultSignature:
    """Fault signature holding every (frequency, amplitude) of a fixture case."""
    for table in fixtures:
        if table.case_id == case_id:
            break
    else:
        raise NotFoundError(f"fixture case {case_id!r} not found")
    if case_id not in CASE_LABELS:
        raise NotFoundError(f"no fault label for fixture case {case_id!r}")
    comps = []
    for row in table.rows:
        comps.append(Component(row.pos_freq_hz, row.pos_amplitude))
        comps.append(Component(row.neg_freq_hz, row.neg_amplitude))
    return FaultSignature(CASE_LABELS[case_id], comps)


def sideband_fault(
    label: FaultLabel, freqs: Sequence[float], amplitudes: Sequence[float]
) -> FaultSignature:
    return FaultSignature(label, [Component(f, a) for f, a in zip(freqs, amplitudes)])


# -- WFM-CSV ---------------------------------------------------------------

def format_waveform(w: Waveform) -> str:
    lines = [f"# fs_hz={w.sample_rate_hz!r}"]
    lines.extend(format(float(v), ".17g") for v in w.samples)
    return "\n".join(lines) + "\n"


def parse_waveform(text: str) -> Waveform:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty waveform file", line=1)
    head = lines[0].strip()
    if not head.startswith("# fs_hz="):
        raise ParseError("expected '# fs_hz=<decimal>' header", line=1)
    try:
        fs = float(head[len("# fs_hz="):])
    except ValueError:
        raise ParseError(f"bad sample rate {head!r}", line=1) from None
    values = []
    for lineno, raw in enumerate(lines[1:], start=2):
        raw = raw.strip()
        if not raw or raw.startswith("#"):
            continue
        try:
            values.append(float(raw))
        except ValueError:
            raise ParseError(f"bad sample value {raw!r}", line=lineno) from None
    if not values:
        raise ParseError("waveform file holds no samples", line=len(lines))
    try:
        return Waveform(fs, values)
    except DomainError as exc:
        raise ParseError(str(exc), line=1) from None


def write_waveform(w: Waveform, path) -> None:
    Path(path).write_text(format_waveform(w))


def read_waveform(path) -> Waveform:
    return parse_waveform(Path(path).read_text())
