"""Domain types shared by the simulator, the finite-key analysis and the planner.

All records are frozen dataclasses. The only "mutation" in the package is
:meth:`GainTally.merge`, which returns a new tally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Literal, Mapping

Basis = Literal["Z", "X"]

TAGS: tuple[str, ...] = ("z", "y", "x", "o")
BASIS_OF: Mapping[str, Basis] = MappingProxyType({"z": "Z", "y": "X", "x": "X", "o": "X"})

#: Ordered intensity pairs kept in a tally: the signal pair plus every X-basis pair.
X_PAIRS: tuple[tuple[str, str], ...] = tuple(
    (l, r) for l in ("y", "x", "o") for r in ("y", "x", "o")
)
SAME_BASIS_PAIRS: tuple[tuple[str, str], ...] = (("z", "z"),) + X_PAIRS


class DataError(ValueError):
    """Input data (tallies, gain tables) violates a documented invariant."""


def transmittance(loss_db: float) -> float:
    """Convert an attenuation in dB into a power transmittance."""
    if loss_db < 0 or math.isnan(loss_db):
        raise ValueError(f"loss must be non-negative, got {loss_db!r} dB")
    return 10.0 ** (-loss_db / 10.0)


def itu_channel_frequency(channel: int) -> float:
    """Centre frequency in THz of a channel on the ITU 100 GHz DWDM grid."""
    if isinstance(channel, bool) or int(channel) != channel or not 1 <= channel <= 72:
        raise ValueError(f"channel must be an integer in [1, 72], got {channel!r}")
    return round(190.0 + 0.1 * int(channel), 10)


@dataclass(frozen=True)
class IntensityClass:
    tag: str
    mu: float
    probability: float

    def __post_init__(self) -> None:
        if self.tag not in TAGS:
            raise ValueError(f"unknown intensity tag {self.tag!r}")
        if not self.mu >= 0:
            raise ValueError(f"mu({self.tag}) must be >= 0, got {self.mu}")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"p({self.tag}) must lie in [0, 1], got {self.probability}")

    @property
    def basis(self) -> Basis:
        return BASIS_OF[self.tag]


@dataclass(frozen=True)
class IntensityProtocol:
    """The four-intensity decoy protocol: signal ``z`` plus decoys ``y``, ``x``, ``o``."""

    classes: tuple[IntensityClass, ...]
    clock_hz: float = 100e6
    n_pulses: float = 3e12

    def __post_init__(self) -> None:
        tags = [c.tag for c in self.classes]
        if sorted(tags) != sorted(TAGS):
            raise ValueError(f"need exactly one class per tag {TAGS}, got {tags}")
        object.__setattr__(
            self, "classes", tuple(sorted(self.classes, key=lambda c: TAGS.index(c.tag)))
        )
        mu = {c.tag: c.mu for c in self.classes}
        if mu["o"] != 0.0:
            raise ValueError("the vacuum class o must have mu = 0")
        if not mu["z"] > mu["y"] > mu["x"] >= 0.0:
            raise ValueError(f"intensities must satisfy z > y > x >= 0, got {mu}")
        total = math.fsum(c.probability for c in self.classes)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"class probabilities sum to {total!r}, not 1")
        if not self.n_pulses > 0 or not self.clock_hz > 0:
            raise ValueError("n_pulses and clock_hz must be positive")

    @classmethod
    def from_values(
        cls,
        z: float,
        y: float,
        x: float,
        p_z: float,
        p_y: float,
        p_x: float,
        p_o: float | None = None,
        *,
        clock_hz: float = 100e6,
        n_pulses: float = 3e12,
    ) -> IntensityProtocol:
        """Build a protocol; ``p_o`` defaults to the probability left over."""
        if p_o is None:
            p_o = 1.0 - p_z - p_y - p_x
        return cls(
            (
                IntensityClass("z", z, p_z),
                IntensityClass("y", y, p_y),
                IntensityClass("x", x, p_x),
                IntensityClass("o", 0.0, p_o),
            ),
            clock_hz=clock_hz,
            n_pulses=n_pulses,
        )

    def __getitem__(self, tag: str) -> IntensityClass:
        return self.classes[TAGS.index(tag)]

    def mu(self, tag: str) -> float:
        return self[tag].mu

    def p(self, tag: str) -> float:
        return self[tag].probability

    def sent(self, l: str, r: str, n_pulses: float | None = None) -> int:
        """Expected number of pulse pairs with intensities ``(l, r)``: ``N p_l p_r``."""
        n = self.n_pulses if n_pulses is None else n_pulses
        return int(round(n * self.p(l) * self.p(r)))

    def replace(self, **values: float) -> IntensityProtocol:
        current = dict(
            z=self.mu("z"), y=self.mu("y"), x=self.mu("x"),
            p_z=self.p("z"), p_y=self.p("y"), p_x=self.p("x"), p_o=self.p("o"),
        )
        extra = {k: values.pop(k) for k in ("clock_hz", "n_pulses") if k in values}
        if {"p_z", "p_y", "p_x"} & values.keys() and "p_o" not in values:
            current.pop("p_o")
            current["p_o"] = None
        current.update(values)
        return IntensityProtocol.from_values(
            **current,
            clock_hz=extra.get("clock_hz", self.clock_hz),
            n_pulses=extra.get("n_pulses", self.n_pulses),
        )


def default_protocol(clock_hz: float = 100e6, n_pulses: float = 3e12) -> IntensityProtocol:
    """Intensities and probabilities optimised for about 30 dB of link loss."""
    return IntensityProtocol.from_values(
        0.636, 0.204, 0.054, 0.754, 0.036, 0.188, 0.022,
        clock_hz=clock_hz, n_pulses=n_pulses,
    )


@dataclass(frozen=True)
class TimeBinQubit:
    basis: Basis
    bit: int
    intensity: str
    amp_early: complex
    amp_late: complex

    @property
    def mean_photon_number(self) -> float:
        return abs(self.amp_early) ** 2 + abs(self.amp_late) ** 2


def encode(basis: Basis, bit: int, mu: float, intensity: str | None = None) -> TimeBinQubit:
    """Prepare a weak coherent time-bin qubit with mean photon number ``mu``.

    Z-basis bit 0 (1) puts the whole pulse in the early (late) bin. X-basis
    states split the pulse evenly, with a relative phase of 0 for bit 0 and
    pi for bit 1.
    """
    if basis not in ("Z", "X"):
        raise ValueError(f"basis must be 'Z' or 'X', got {basis!r}")
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    if not mu >= 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    if intensity is None:
        intensity = "z" if basis == "Z" else "x"
    if basis == "Z":
        amp = complex(math.sqrt(mu))
        early, late = (amp, 0j) if bit == 0 else (0j, amp)
    else:
        half = math.sqrt(mu / 2.0)
        early, late = complex(half), complex(half if bit == 0 else -half)
    return TimeBinQubit(basis, bit, intensity, early, late)


@dataclass(frozen=True)
class LinkModel:
    """One user pair's channel to the relay plus the relay's detectors.

    ``loss_db_*`` are per-arm attenuations; detector efficiency multiplies the
    channel transmittance. ``mode_overlap`` and ``coherence_factor`` both scale
    the interference term, see :attr:`kappa`.
    """

    loss_db_left: float
    loss_db_right: float
    detector_efficiency: float = 1.0
    dark_prob: float = 1e-6
    mode_overlap: float = 1.0
    coherence_factor: float = 1.0
    coincidence_window_s: float = 1e-9
    bin_separation_s: float = 10e-9
    pulse_width_s: float = 0.8e-9

    def __post_init__(self) -> None:
        for name in ("loss_db_left", "loss_db_right"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("detector_efficiency", "dark_prob", "mode_overlap", "coherence_factor"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        for name in ("coincidence_window_s", "bin_separation_s", "pulse_width_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def symmetric(cls, total_loss_db: float, **kwargs: float) -> LinkModel:
        """Split a total pair loss evenly over the two arms."""
        return cls(total_loss_db / 2.0, total_loss_db / 2.0, **kwargs)

    @property
    def transmittance_left(self) -> float:
        return transmittance(self.loss_db_left) * self.detector_efficiency

    @property
    def transmittance_right(self) -> float:
        return transmittance(self.loss_db_right) * self.detector_efficiency

    @property
    def kappa(self) -> float:
        """Fraction of the field amplitude that interferes at the beam splitter."""
        return self.mode_overlap * self.coherence_factor

    def replace(self, **changes: float) -> LinkModel:
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Counts:
    sent: int
    success: int
    error: int | None = None  # None: error gain not recorded for this source

    def __post_init__(self) -> None:
        if self.sent < 0 or self.success < 0 or (self.error is not None and self.error < 0):
            raise DataError(f"counts must be non-negative: {self}")
        if self.success > self.sent:
            raise DataError(f"success {self.success} exceeds sent {self.sent}")
        if self.error is not None and self.error > self.success:
            raise DataError(f"error {self.error} exceeds success {self.success}")

    def __add__(self, other: Counts) -> Counts:
        error = None if self.error is None or other.error is None else self.error + other.error
        return Counts(self.sent + other.sent, self.success + other.success, error)

    @property
    def gain(self) -> float:
        return self.success / self.sent if self.sent else 0.0

    @property
    def qber(self) -> float | None:
        if self.error is None:
            return None
        return self.error / self.success if self.success else 0.0


@dataclass(frozen=True)
class GainTally:
    """Sent / Psi-minus / error counts for same-basis intensity pairs ``(l, r)``."""

    entries: Mapping[tuple[str, str], Counts] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean = {}
        for key, counts in self.entries.items():
            key = (str(key[0]), str(key[1]))
            if key not in SAME_BASIS_PAIRS:
                raise DataError(f"{key} is not a same-basis intensity combination")
            if not isinstance(counts, Counts):
                counts = Counts(*counts)
            clean[key] = counts
        ordered = {k: clean[k] for k in SAME_BASIS_PAIRS if k in clean}
        object.__setattr__(self, "entries", MappingProxyType(ordered))

    def __getitem__(self, pair: tuple[str, str]) -> Counts:
        return self.entries[pair]

    def __contains__(self, pair: object) -> bool:
        return pair in self.entries

    def __iter__(self) -> Iterator[tuple[str, str]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GainTally) and dict(self.entries) == dict(other.entries)

    def __hash__(self) -> int:
        return hash(tuple(self.entries.items()))

    def __add__(self, other: GainTally) -> GainTally:
        return self.merge(other)

    def merge(self, other: GainTally) -> GainTally:
        keys = set(self.entries) | set(other.entries)
        out = {}
        for k in keys:
            a, b = self.entries.get(k), other.entries.get(k)
            out[k] = a + b if a is not None and b is not None else (a or b)
        return GainTally(out)

    @staticmethod
    def reduce(tallies: Iterable[GainTally]) -> GainTally:
        total = GainTally()
        for t in tallies:
            total = total.merge(t)
        return total

    def gain(self, l: str, r: str) -> float:
        return self.entries[(l, r)].gain
