"""Source signal catalogue.

Every signal is cut to zero from ``active_end`` on, so any of them is an
admissible emission with a source-free tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np


@dataclass(frozen=True)
class SignalSpec:
    active_end: float
    kind: ClassVar[str] = ""

    def shape(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t < self.active_end, self.shape(t), 0.0)
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        d.update(self.__dict__)
        return d


@dataclass(frozen=True)
class TanhPulse(SignalSpec):
    """Smoothed box of height ``beta`` between ``t_left`` and ``t_right``."""

    beta: float = 1.0
    t_left: float = 0.0
    t_right: float = 1.0
    width: float = 1.0
    kind: ClassVar[str] = "tanh_pulse"

    def shape(self, t):
        return 0.5 * self.beta * (np.tanh((t - self.t_left) / self.width) - np.tanh((t - self.t_right) / self.width))


@dataclass(frozen=True)
class HalfSine(SignalSpec):
    """``sin(πt / active_end)`` over the active window."""

    kind: ClassVar[str] = "half_sine"

    def shape(self, t):
        return np.sin(np.pi * t / self.active_end)


@dataclass(frozen=True)
class GaussianSum(SignalSpec):
    amplitudes: tuple[float, ...] = ()
    rates: tuple[float, ...] = ()
    centers: tuple[float, ...] = ()
    kind: ClassVar[str] = "gaussian_sum"

    def __post_init__(self):
        if not len(self.amplitudes) == len(self.rates) == len(self.centers):
            raise ValueError("gaussian_sum needs equally many amplitudes, rates and centers")

    def shape(self, t):
        out = np.zeros_like(t, dtype=float)
        for c, a, tau in zip(self.amplitudes, self.rates, self.centers):
            out = out + c * np.exp(-a * (t - tau) ** 2)
        return out


@dataclass(frozen=True)
class Tabulated(SignalSpec):
    """Linear interpolation through ``(times, values)``; zero outside."""

    times: tuple[float, ...] = field(default=())
    values: tuple[float, ...] = field(default=())
    kind: ClassVar[str] = "tabulated"

    def __post_init__(self):
        if len(self.times) != len(self.values) or len(self.times) < 2:
            raise ValueError("tabulated signal needs at least two (time, value) samples")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("tabulated times must be strictly increasing")

    def shape(self, t):
        return np.interp(t, self.times, self.values, left=0.0, right=0.0)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "active_end": self.active_end,
            "times": list(self.times),
            "values": list(self.values),
        }


@dataclass(frozen=True)
class ZeroSignal(SignalSpec):
    kind: ClassVar[str] = "zero"

    def shape(self, t):
        return np.zeros_like(t, dtype=float)


SIGNAL_KINDS = {cls.kind: cls for cls in (TanhPulse, HalfSine, GaussianSum, Tabulated, ZeroSignal)}


def signal_from_dict(d: dict) -> SignalSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in SIGNAL_KINDS:
        raise ValueError(f"unknown signal kind {kind!r}; expected one of {sorted(SIGNAL_KINDS)}")
    for key in ("amplitudes", "rates", "centers", "times", "values"):
        if key in d:
            d[key] = tuple(float(x) for x in d[key])
    return SIGNAL_KINDS[kind](**d)
