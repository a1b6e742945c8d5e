"""Time-dependent control schedules.

All schedules are sampled on a common strictly increasing time grid and
interpreted with piecewise-linear interpolation between samples, which is
also the convention the CSV round trip preserves exactly.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .phasegeom import WaveVector

CHANNELS = ("omega1", "omega2", "omega_mw", "delta", "delta_cpb")

# STIRAP shape constants, calibrated on the single-molecule Lambda system:
# pulse area 16 pi and delay 1.4 widths give transfer error ~1e-5 with peak
# intermediate-state population ~5e-4 inside a 10-width window.
STIRAP_WIDTH_FRACTION = 0.1
STIRAP_DELAY_WIDTHS = 1.4
STIRAP_AREA = 16 * np.pi

SWEEP_MIN_ENDPOINT_RATIO = 10.0


class AdiabaticityContractError(ValueError):
    """Sweep endpoints are not far enough detuned relative to g_c."""


@dataclass(frozen=True)
class PulseSchedule:
    """Named control channels sampled on one time grid (seconds, rad/s)."""

    t_grid: np.ndarray
    channels: MappingProxyType

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("t_grid must hold at least two samples")
        if not np.all(np.diff(t) > 0):
            raise ValueError("t_grid must be strictly increasing")
        ch = {}
        for name, values in dict(self.channels).items():
            v = np.asarray(values)
            if v.shape != t.shape:
                raise ValueError(f"channel {name} not sampled on the grid")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"channel {name} has non-finite samples")
            v.setflags(write=False)
            ch[name] = v
        t.setflags(write=False)
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "channels", MappingProxyType(ch))

    @property
    def t0(self) -> float:
        return float(self.t_grid[0])

    @property
    def t1(self) -> float:
        return float(self.t_grid[-1])

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    def value(self, name: str, t):
        """Piecewise-linear channel value; missing channels read as zero."""
        if name not in self.channels:
            return np.zeros_like(np.asarray(t, dtype=float))
        return np.interp(t, self.t_grid, self.channels[name])

    def channel_fn(self, name: str):
        return lambda t: self.value(name, t)

    def resample(self, n_samples: int) -> "PulseSchedule":
        t = np.linspace(self.t0, self.t1, n_samples)
        ch = {name: np.interp(t, self.t_grid, v)
              for name, v in self.channels.items()}
        return PulseSchedule(t, ch)

    def with_channels(self, **extra) -> "PulseSchedule":
        ch = dict(self.channels)
        ch.update(extra)
        return PulseSchedule(self.t_grid, ch)

    def reversed(self) -> "PulseSchedule":
        """Time-mirrored schedule on the same grid."""
        ch = {name: v[::-1].copy() for name, v in self.channels.items()}
        return PulseSchedule(self.t_grid, ch)

    # -- serialization ------------------------------------------------------

    def to_csv(self) -> str:
        names = sorted(self.channels)
        lines = [",".join(["t"] + names)]
        for i, t in enumerate(self.t_grid):
            row = [repr(float(t))]
            row += [repr(float(self.channels[n][i])) for n in names]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "PulseSchedule":
        rows = np.genfromtxt(io.StringIO(text), delimiter=",", names=True)
        names = list(rows.dtype.names)
        t = np.atleast_1d(rows["t"])
        ch = {n: np.atleast_1d(rows[n]) for n in names if n != "t"}
        return cls(t, ch)

    def to_json(self) -> str:
        doc = {"t_grid_s": self.t_grid.tolist(),
               "channels_rad_per_s": {n: np.asarray(v).tolist()
                                      for n, v in self.channels.items()}}
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PulseSchedule":
        doc = json.loads(text)
        ch = {n: np.array(v) for n, v in doc["channels_rad_per_s"].items()}
        return cls(np.array(doc["t_grid_s"]), ch)


@dataclass(frozen=True)
class StirapSpec:
    """Counterintuitive Gaussian pulse pair for one storage-shift leg."""

    peak_rabi: float
    pulse_width: float
    pulse_delay: float
    direction: str
    k1: WaveVector
    k2: WaveVector

    def __post_init__(self):
        if self.pulse_width <= 0:
            raise ValueError("pulse_width must be positive")
        if self.direction not in ("forward", "inverted"):
            raise ValueError("direction must be 'forward' or 'inverted'")

    def inverted(self) -> "StirapSpec":
        other = "inverted" if self.direction == "forward" else "forward"
        return StirapSpec(self.peak_rabi, self.pulse_width, self.pulse_delay,
                          other, self.k1, self.k2)


def default_stirap_spec(k1: WaveVector, k2: WaveVector,
                        window: float = 50e-9,
                        direction: str = "forward") -> StirapSpec:
    """Calibrated defaults for a given window length (peak * width = 16 pi)."""
    width = STIRAP_WIDTH_FRACTION * window
    return StirapSpec(
        peak_rabi=STIRAP_AREA / width,
        pulse_width=width,
        pulse_delay=STIRAP_DELAY_WIDTHS * width,
        direction=direction,
        k1=k1,
        k2=k2,
    )


def stirap_schedule(spec: StirapSpec, t0: float, t1: float,
                    n_samples: int = 256) -> PulseSchedule:
    """Gaussian pulse pair; forward order (omega2 before omega1) maps m -> f."""
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    if n_samples < 16:
        raise ValueError("need at least 16 samples")
    if abs(spec.pulse_delay) >= (t1 - t0):
        raise ValueError("pulse_delay must be smaller than the window")
    t = np.linspace(t0, t1, n_samples)
    tc = 0.5 * (t0 + t1)
    c2 = tc - spec.pulse_delay / 2
    c1 = tc + spec.pulse_delay / 2
    if spec.direction == "inverted":
        c1, c2 = c2, c1
    w = spec.pulse_width
    omega1 = spec.peak_rabi * np.exp(-0.5 * ((t - c1) / w) ** 2)
    omega2 = spec.peak_rabi * np.exp(-0.5 * ((t - c2) / w) ** 2)
    return PulseSchedule(t, {"omega1": omega1, "omega2": omega2})


def sweep_schedule(shape: str, delta_far: float, duration: float,
                   n_samples: int = 257, *, g_c: float,
                   steepness: float | None = None,
                   depth: float = 0.0) -> PulseSchedule:
    """Charge-qubit detuning sweep, C1-smooth tanh-ramp parametrization.

    shape='swap': monotone sweep from -delta_far to +delta_far over the first
    half of the window followed by the time-reversed sweep back; each
    monotone segment crosses zero detuning at its midpoint.

    shape='cphase': symmetric excursion from +delta_far down to ``depth``
    (the closest approach to resonance) and back, with equal endpoint values.

    Endpoints must satisfy |delta_far| / g_c >= 10.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if n_samples < 16:
        raise ValueError("need at least 16 samples")
    if g_c <= 0:
        raise ValueError("g_c must be positive")
    if abs(delta_far) / g_c < SWEEP_MIN_ENDPOINT_RATIO:
        raise AdiabaticityContractError(
            f"endpoint ratio |delta_far|/g_c = {abs(delta_far) / g_c:.2f} "
            f"< {SWEEP_MIN_ENDPOINT_RATIO}"
        )
    t = np.linspace(0.0, duration, n_samples)
    u = t / duration
    if shape == "swap":
        s = 2.0 if steepness is None else steepness
        # sum of two smooth ramps: rises -far -> +far on u in [0, 1/2] and
        # mirrors back; affine-normalized so endpoints and turning point hit
        # -delta_far and +delta_far exactly
        raw = np.tanh(s * (4 * u - 1)) - np.tanh(s * (4 * u - 3)) - 1.0
        raw_end = np.tanh(-s) - np.tanh(-3 * s) - 1.0
        raw_top = 2 * np.tanh(s) - 1.0
        delta = -delta_far + 2 * delta_far * (raw - raw_end) / (raw_top - raw_end)
    elif shape == "cphase":
        s = 2.5 if steepness is None else steepness
        if abs(depth) >= abs(delta_far):
            raise ValueError("depth must be closer to resonance than delta_far")
        bump = np.tanh(s * (u - 0.25) / 0.1) - np.tanh(s * (u - 0.75) / 0.1)
        bump = (bump - bump.min()) / (bump.max() - bump.min())
        delta = delta_far - (delta_far - depth) * bump
    else:
        raise ValueError(f"unknown sweep shape {shape!r}")
    return PulseSchedule(t, {"delta_cpb": delta})
