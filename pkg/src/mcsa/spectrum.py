"""One-sided amplitude spectra and sideband peak measurement."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError
from .motor import Waveform

DEFAULT_HALF_WIDTH_BINS = 2


class Window(str, enum.Enum):
    RECTANGULAR = "rectangular"
    HANN = "hann"

    @classmethod
    def parse(cls, text: str) -> "Window":
        return cls.RECTANGULAR if text == "rect" else cls(text)

    def __str__(self):
        return self.value


def window_coefficients(window: Window, length: int) -> np.ndarray:
    """Periodic (DFT-even) window, so Hann's coherent gain is exactly 1/2."""
    if Window(window) is Window.RECTANGULAR:
        return np.ones(length)
    i = np.arange(length)
    return 0.5 - 0.5 * np.cos(2 * np.pi * i / length)


def coherent_gain_correction(window: Window) -> float:
    return 1.0 if Window(window) is Window.RECTANGULAR else 2.0


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided amplitude spectrum, corrected for the window's coherent gain.

    ``data_length`` is the number of waveform samples that fed the transform
    (at most ``n_fft``; the rest is zero padding).
    """

    bin_hz: float
    amplitudes: np.ndarray = field(repr=False)
    n_fft: int
    window: Window
    data_length: int

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=float)
        if amps.size != self.n_fft // 2 + 1:
            raise DomainError(
                f"expected {self.n_fft // 2 + 1} amplitudes for n_fft={self.n_fft}, got {amps.size}"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "window", Window(self.window))

    @property
    def sample_rate_hz(self) -> float:
        return self.bin_hz * self.n_fft

    @property
    def nyquist_hz(self) -> float:
        return self.sample_rate_hz / 2.0

    def in_band(self, freq_hz: float) -> bool:
        """True for 0 <= freq < Nyquist, compared in bins so rounding of
        ``bin_hz * n_fft`` cannot admit Nyquist itself."""
        return freq_hz >= 0 and freq_hz / self.bin_hz < self.n_fft / 2 - 1e-9

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.amplitudes.size) * self.bin_hz


def dft(samples, n_fft: int | None = None) -> np.ndarray:
    """Complex DFT of arbitrary length, zero-padded to ``n_fft``."""
    x = np.asarray(samples, dtype=float)
    n = x.size if n_fft is None else n_fft
    return np.fft.fft(x, n=n)


def transform(w: Waveform, window: Window | str = Window.HANN, n_fft: int | None = None) -> Spectrum:
    """Windowed one-sided amplitude spectrum of a waveform.

    Interior bins are scaled by ``2 / N`` and DC (and the Nyquist bin for
    even ``n_fft``) by ``1 / N``, where N is the data length, then multiplied
    by the window's coherent-gain correction.
    """
    window = Window(window)
    x = np.asarray(w.samples, dtype=float)
    if x.size == 0:
        raise DomainError("cannot transform an empty waveform")
    n = x.size if n_fft is None else int(n_fft)
    if n < x.size:
        raise DomainError(f"n_fft={n} is shorter than the waveform ({x.size} samples)")

    spec = dft(x * window_coefficients(window, x.size), n)[: n // 2 + 1]
    scale = np.full(spec.size, 2.0 / x.size)
    scale[0] = 1.0 / x.size
    if n % 2 == 0:
        scale[-1] = 1.0 / x.size
    amps = coherent_gain_correction(window) * scale * np.abs(spec)
    return Spectrum(
        bin_hz=w.sample_rate_hz / n,
        amplitudes=amps,
        n_fft=n,
        window=window,
        data_length=x.size,
    )


@dataclass(frozen=True)
class SamplingPlan:
    n_samples: int
    sample_rate_hz: float
    sample_time_s: float


def sampling_plan(cycles: int, samples_per_cycle: int, cycle_period_s: float) -> SamplingPlan:
    """Record length and sampling rate for whole mains cycles."""
    if cycles < 1 or samples_per_cycle < 1 or not cycle_period_s > 0:
        raise DomainError("cycles, samples_per_cycle and cycle_period_s must be positive")
    ts = cycle_period_s / samples_per_cycle
    return SamplingPlan(cycles * samples_per_cycle, 1.0 / ts, ts)


@dataclass(frozen=True)
class PeakMeasurement:
    target_hz: float
    found_hz: float
    amplitude: float
    bin_offset: int
    bin_index: int


def _equivalent_noise_bandwidth_bins(s: Spectrum) -> float:
    w = window_coefficients(s.window, s.data_length)
    return s.n_fft * float(np.sum(w**2)) / float(np.sum(w)) ** 2


def _lobe_half_width(s: Spectrum) -> int:
    # Hann main lobe spans +/-2 bins of the unpadded length; padding widens it.
    return max(2, math.ceil(2 * s.n_fft / s.data_length))


def measure_peak(
    s: Spectrum, target_hz: float, half_width_bins: int = DEFAULT_HALF_WIDTH_BINS
) -> PeakMeasurement:
    """Strongest spectral peak within ``half_width_bins`` of the target bin.

    Only local maxima qualify, so the shoulder of a stronger neighbouring
    tone is never mistaken for the target; ties go to the bin nearest the
    target. The reported frequency is the bin centre. The amplitude comes
    from the energy of the peak's lobe (squared amplitudes summed down to the
    valleys on either side, at most one main-lobe width, then divided by the
    window's equivalent noise bandwidth). That removes scalloping loss for
    tones falling between bins while reading a bin-centred tone exactly.
    """
    if half_width_bins < 1:
        raise DomainError(f"half_width_bins must be positive, got {half_width_bins}")
    if not s.in_band(target_hz):
        raise DomainError(f"target {target_hz} Hz outside [0, Nyquist={s.nyquist_hz} Hz)")

    amps = s.amplitudes
    last = amps.size - 1
    centre = min(int(round(target_hz / s.bin_hz)), last)
    window = range(max(0, centre - half_width_bins), min(last, centre + half_width_bins) + 1)

    def is_local_max(j):
        left = amps[j - 1] if j > 0 else -np.inf
        right = amps[j + 1] if j < last else -np.inf
        return amps[j] >= left and amps[j] >= right

    candidates = [j for j in window if is_local_max(j)] or list(window)
    best = max(candidates, key=lambda j: (amps[j], -abs(j - centre)))

    lobe = _lobe_half_width(s)
    a = best
    while a > max(0, best - lobe) and amps[a - 1] <= amps[a]:
        a -= 1
    b = best
    while b < min(last, best + lobe) and amps[b + 1] <= amps[b]:
        b += 1
    energy = float(np.sum(amps[a : b + 1] ** 2))
    amplitude = math.sqrt(energy / _equivalent_noise_bandwidth_bins(s))
    return PeakMeasurement(
        target_hz=float(target_hz),
        found_hz=best * s.bin_hz,
        amplitude=amplitude,
        bin_offset=best - centre,
        bin_index=best,
    )


# -- Spectrum CSV ----------------------------------------------------------

def format_spectrum(s: Spectrum) -> str:
    lines = [
        f"# bin_hz={s.bin_hz!r}",
        f"# n_fft={s.n_fft}",
        f"# window={s.window.value}",
        f"# data_length={s.data_length}",
        "bin_index,freq_hz,amplitude",
    ]
    for j, a in enumerate(s.amplitudes):
        lines.append(f"{j},{format(j * s.bin_hz, '.17g')},{format(float(a), '.17g')}")
    return "\n".join(lines) + "\n"


def parse_spectrum(text: str) -> Spectrum:
    meta: dict[str, str] = {}
    amps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        raw = raw.strip()
        if not raw:
            continue
        if raw.startswith("#"):
            key, _, value = raw[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
            continue
        if raw.startswith("bin_index"):
            continue
        parts = raw.split(",")
        if len(parts) != 3:
            raise ParseError(f"expected 3 columns, got {len(parts)}", line=lineno)
        try:
            j, a = int(parts[0]), float(parts[2])
        except ValueError:
            raise ParseError(f"bad spectrum row {raw!r}", line=lineno) from None
        if j != len(amps):
            raise ParseError(f"bin index {j} out of sequence", line=lineno)
        amps.append(a)
    try:
        bin_hz = float(meta["bin_hz"])
        n_fft = int(meta.get("n_fft", 2 * (len(amps) - 1)))
        window = Window(meta.get("window", "rectangular"))
        data_length = int(meta.get("data_length", n_fft))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad or missing spectrum header: {exc}", line=1) from None
    return Spectrum(bin_hz, amps, n_fft, window, data_length)


def write_spectrum(s: Spectrum, path) -> None:
    Path(path).write_text(format_spectrum(s))
