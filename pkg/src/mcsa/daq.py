"""Behavioural model of the acquisition board and its parallel-port protocol.

Chain per channel: conditioning -> sample-and-hold -> 8-bit ADC -> latch ->
nibble-selecting bus driver -> four status lines of the LPT port. The host
raises the select line (data bit D3) to read the high nibble and lowers it
for the low nibble. Nibble bits 0..2 arrive on status lines S4..S6; bit 3 is
inverted on its way to S7.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, ParseError, ProtocolError
from .motor import Waveform

CAPTURE_HEADER = "# DAQ-CAP v1"


class Channel(str, enum.Enum):
    CURRENT = "current"
    SPEED = "speed"

    @property
    def select_code(self) -> int:
        """Multiplexer address on the (A, B) lines."""
        return {Channel.CURRENT: 0, Channel.SPEED: 1}[self]


@dataclass(frozen=True)
class ConditioningChain:
    """Analog front end of one multiplexer input.

    Current: CT (``ct_ratio`` primary amps per secondary amp) into a burden
    resistor. The CT stage and the following amplifier both invert, so the
    net polarity is positive; ``inverting=True`` models a chain with one
    inversion left over. Speed: tachometer volts per rpm scaled by the
    resistive divider.
    """

    channel: Channel = Channel.CURRENT
    ct_ratio: float = 10 / 4
    burden_ohm: float = 1.0
    speed_divider: float = 1 / 18
    tach_volts_per_rpm: float = 0.06
    inverting: bool = False

    def __post_init__(self):
        object.__setattr__(self, "channel", Channel(self.channel))
        for name in ("ct_ratio", "burden_ohm", "speed_divider", "tach_volts_per_rpm"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class AdcConfig:
    bits: int = 8
    v_min: float = 0.0
    v_max: float = 5.0

    def __post_init__(self):
        if self.bits != 8:
            raise ConfigurationError("only the 8-bit conversion mode is modelled")
        if not self.v_max > self.v_min:
            raise ConfigurationError(f"v_max ({self.v_max}) must exceed v_min ({self.v_min})")

    @property
    def full_scale_code(self) -> int:
        return (1 << self.bits) - 1

    @property
    def lsb_volts(self) -> float:
        return (self.v_max - self.v_min) / self.full_scale_code


@dataclass
class AdcStats:
    """Counts conversions whose input had to be clamped."""

    conversions: int = 0
    saturated: int = 0


def condition(chain: ConditioningChain, physical_value: float) -> float:
    """Volts presented to the multiplexer for amps (current) or rpm (speed)."""
    if not math.isfinite(physical_value):
        raise DomainError(f"physical value must be finite, got {physical_value}")
    if chain.channel is Channel.SPEED:
        return physical_value * chain.tach_volts_per_rpm * chain.speed_divider
    volts = physical_value / chain.ct_ratio * chain.burden_ohm
    return -volts if chain.inverting else volts


def out_of_range(cfg: AdcConfig, volts: float) -> bool:
    return not cfg.v_min <= volts <= cfg.v_max


def sample_hold(w: Waveform, hold_rate_hz: float) -> Waveform:
    """Zero-order hold at ``hold_rate_hz``, resampled back to the input rate.

    Output sample i repeats the input sample taken at the start of the hold
    interval containing i.
    """
    if not hold_rate_hz > 0:
        raise DomainError(f"hold rate must be positive, got {hold_rate_hz}")
    if hold_rate_hz > w.sample_rate_hz:
        raise DomainError(
            f"hold rate {hold_rate_hz} Hz exceeds the waveform's {w.sample_rate_hz} Hz"
        )
    if hold_rate_hz == w.sample_rate_hz:
        return Waveform(w.sample_rate_hz, w.samples)
    ratio = w.sample_rate_hz / hold_rate_hz
    i = np.arange(len(w))
    interval = np.floor(i / ratio + 1e-9)
    source = np.minimum(np.ceil(interval * ratio - 1e-9).astype(int), len(w) - 1)
    return Waveform(w.sample_rate_hz, w.samples[source])


def quantize(cfg: AdcConfig, volts: float, stats: AdcStats | None = None) -> int:
    """8-bit code, round half up after clamping to [v_min, v_max]."""
    clamped = min(max(volts, cfg.v_min), cfg.v_max)
    if stats is not None:
        stats.conversions += 1
        if clamped != volts:
            stats.saturated += 1
    scaled = (clamped - cfg.v_min) / (cfg.v_max - cfg.v_min) * cfg.full_scale_code
    return int(math.floor(scaled + 0.5))


def dequantize(cfg: AdcConfig, code: int) -> float:
    return cfg.v_min + code * cfg.lsb_volts


@dataclass(frozen=True)
class NibbleRead:
    """One status-port read: three straight lines and the inverted S7."""

    select_high: bool
    s4_s6: int
    s7: int

    def __post_init__(self):
        if not 0 <= self.s4_s6 <= 7 or self.s7 not in (0, 1):
            raise ProtocolError(f"line values out of range: {self}")

    @property
    def nibble(self) -> int:
        return self.s4_s6 | ((self.s7 ^ 1) << 3)


def _read(select_high: bool, nibble: int) -> NibbleRead:
    return NibbleRead(select_high, nibble & 0b111, ((nibble >> 3) & 1) ^ 1)


def encode_nibbles(code: int) -> tuple[NibbleRead, NibbleRead]:
    if not 0 <= code <= 0xFF:
        raise DomainError(f"code must be an 8-bit value, got {code}")
    return _read(False, code & 0x0F), _read(True, code >> 4)


def decode_nibbles(low: NibbleRead, high: NibbleRead) -> int:
    if low.select_high or not high.select_high:
        raise ProtocolError(
            f"expected (low, high) reads, got select flags "
            f"({int(low.select_high)}, {int(high.select_high)})"
        )
    return (high.nibble << 4) | low.nibble


@dataclass(frozen=True, eq=False)
class DaqCapture:
    channel_select: int
    sample_rate_hz: float
    codes: tuple[int, ...]
    wire_trace: tuple[NibbleRead, ...] = field(repr=False)
    adc: AdcConfig = AdcConfig()
    saturated: int = 0

    def __post_init__(self):
        if not 0 <= self.channel_select <= 3:
            raise DomainError(f"channel select is a 2-bit code, got {self.channel_select}")
        if any(not 0 <= c <= 0xFF for c in self.codes):
            raise DomainError("capture codes must be 8-bit")
        if len(self.wire_trace) != 2 * len(self.codes):
            raise DomainError("wire trace must hold two reads per code")

    def __eq__(self, other):
        if not isinstance(other, DaqCapture):
            return NotImplemented
        return (self.channel_select, self.sample_rate_hz, self.codes, self.wire_trace, self.adc) == (
            other.channel_select, other.sample_rate_hz, other.codes, other.wire_trace, other.adc,
        )

    def decode_trace(self) -> list[int]:
        return trace_from_reads(self.wire_trace)

    def to_volts(self) -> Waveform:
        return Waveform(self.sample_rate_hz, [dequantize(self.adc, c) for c in self.decode_trace()])


def capture(
    w: Waveform,
    chain: ConditioningChain,
    cfg: AdcConfig = AdcConfig(),
    channel_select: int | None = None,
    hold_rate_hz: float | None = None,
) -> DaqCapture:
    """Run a physical-unit waveform through the whole acquisition chain."""
    select = chain.channel.select_code if channel_select is None else channel_select
    if channel_select is not None and channel_select != chain.channel.select_code:
        raise ConfigurationError(
            f"channel select {channel_select} does not address the {chain.channel.value} input"
        )
    volts = Waveform(w.sample_rate_hz, [condition(chain, v) for v in w.samples])
    held = sample_hold(volts, hold_rate_hz or w.sample_rate_hz)
    stats = AdcStats()
    codes = tuple(quantize(cfg, float(v), stats) for v in held.samples)
    trace = tuple(read for c in codes for read in encode_nibbles(c))
    return DaqCapture(select, w.sample_rate_hz, codes, trace, cfg, stats.saturated)


# -- DAQ-CAP v1 file -------------------------------------------------------

def format_capture(cap: DaqCapture) -> str:
    lines = [
        CAPTURE_HEADER,
        f"# channel={cap.channel_select}",
        f"# fs_hz={cap.sample_rate_hz!r}",
        f"# adc_range={cap.adc.v_min!r},{cap.adc.v_max!r}",
    ]
    t = cap.wire_trace
    for i, code in enumerate(cap.codes):
        low, high = t[2 * i], t[2 * i + 1]
        lines.append(f"{code:02X},{low.s4_s6:03b},{low.s7},{high.s4_s6:03b},{high.s7}")
    return "\n".join(lines) + "\n"


def _bits(text: str, width: int, lineno: int) -> int:
    if len(text) != width or any(ch not in "01" for ch in text):
        raise ParseError(f"expected {width}-bit binary field, got {text!r}", line=lineno)
    return int(text, 2)


def parse_capture(text: str) -> DaqCapture:
    """Read a capture file and cross-check every code against its nibbles.

    A row whose nibble columns do not reproduce its code (for instance low
    and high reads swapped on the wire) is a protocol error.
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != CAPTURE_HEADER:
        raise ParseError(f"expected {CAPTURE_HEADER!r} header", line=1)
    meta: dict[str, str] = {}
    codes, trace = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise ParseError(f"bad header line {line!r}", line=lineno)
            meta[key.strip()] = value.strip()
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", line=lineno)
        try:
            code = int(parts[0], 16)
        except ValueError:
            raise ParseError(f"bad code {parts[0]!r}", line=lineno) from None
        if len(parts[0]) != 2:
            raise ParseError(f"code must be two hex digits, got {parts[0]!r}", line=lineno)
        low = NibbleRead(False, _bits(parts[1], 3, lineno), _bits(parts[2], 1, lineno))
        high = NibbleRead(True, _bits(parts[3], 3, lineno), _bits(parts[4], 1, lineno))
        decoded = decode_nibbles(low, high)
        if decoded != code:
            raise ProtocolError(
                f"line {lineno}: nibbles decode to {decoded:02X} but code is {code:02X} "
                "(reads out of order or corrupted)"
            )
        codes.append(code)
        trace.extend((low, high))
    try:
        channel = int(meta["channel"])
        fs = float(meta["fs_hz"])
        v_min, v_max = (float(v) for v in meta.get("adc_range", "0,5").split(","))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad or missing capture header: {exc}", line=1) from None
    return DaqCapture(channel, fs, tuple(codes), tuple(trace), AdcConfig(8, v_min, v_max))


def write_capture(cap: DaqCapture, path) -> None:
    Path(path).write_text(format_capture(cap))


def read_capture(path) -> DaqCapture:
    return parse_capture(Path(path).read_text())


def trace_from_reads(reads: Sequence[NibbleRead]) -> list[int]:
    """Decode an ordered wire trace read pairwise as (low, high)."""
    if len(reads) % 2:
        raise ProtocolError("wire trace has an odd number of reads")
    return [decode_nibbles(reads[i], reads[i + 1]) for i in range(0, len(reads), 2)]
