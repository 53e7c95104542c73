"""Physical layer: weak coherent time-bin pulses meeting at a beam-splitter BSM.

Two evaluation modes share one field model:

* analytic -- Psi-minus probabilities are averaged over the relative phase by
  equally spaced quadrature (exact for trigonometric polynomials, spectrally
  accurate for the smooth periodic integrands here) and over the four bit pairs;
* Monte-Carlo -- rounds are drawn from a seeded generator and classified by the
  kernels in :mod:`mdiqn.kernels`.

Detectors are threshold detectors: a mean photon number ``n`` at a detector in
one time bin clicks with probability ``1 - (1 - p_dark) exp(-n)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .model import (
    BASIS_OF,
    SAME_BASIS_PAIRS,
    TAGS,
    Counts,
    GainTally,
    IntensityProtocol,
    LinkModel,
    TimeBinQubit,
)

DEFAULT_PHASE_NODES = 256
_CHUNK = 1 << 18


@dataclass(frozen=True)
class BsmOutcome:
    d1_early: bool
    d1_late: bool
    d2_early: bool
    d2_late: bool

    @property
    def psi_minus(self) -> bool:
        """Exactly one click on each detector, in different time bins."""
        return (self.d1_early and self.d2_late and not self.d1_late and not self.d2_early) or (
            self.d1_late and self.d2_early and not self.d1_early and not self.d2_late
        )


@dataclass(frozen=True)
class HomScanResult:
    points: tuple[tuple[float, float], ...]
    visibility: float
    sigma_s: float


@dataclass(frozen=True)
class SourceModel:
    """A single comb line with a Lorentzian linewidth."""

    linewidth_hz: float
    state_tag: str = "soliton"

    def __post_init__(self) -> None:
        if not self.linewidth_hz >= 0:
            raise ValueError("linewidth must be >= 0")

    def coherence_factor(self, tau_s: float) -> float:
        return coherence_factor(self.linewidth_hz, tau_s)


def coherence_factor(linewidth_hz: float, tau_s: float) -> float:
    """First-order coherence ``|g1(tau)|`` of a Lorentzian line of FWHM ``linewidth_hz``."""
    if linewidth_hz < 0 or tau_s < 0:
        raise ValueError("linewidth and delay must be non-negative")
    return math.exp(-math.pi * linewidth_hz * tau_s)


def kappa_for_visibility(visibility: float) -> float:
    """Interference factor that yields the given weak-pulse HOM visibility (V = kappa^2 / 2)."""
    if not 0.0 <= visibility <= 0.5:
        raise ValueError("phase-randomised coherent pulses cannot exceed V = 0.5")
    return math.sqrt(2.0 * visibility)


def click_probability(mean_count, dark_prob):
    """Threshold detector click probability; accepts scalars or arrays."""
    out = 1.0 - (1.0 - dark_prob) * np.exp(-np.asarray(mean_count, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def mean_detector_counts(
    q_left: TimeBinQubit, q_right: TimeBinQubit, link: LinkModel, phase_rel: float
) -> np.ndarray:
    """Mean photon numbers at the two BSM detectors.

    Returns a ``(2, 2)`` array indexed ``[detector, bin]`` with detector 0 = D1,
    1 = D2 and bin 0 = early, 1 = late.
    """
    kappa = link.kappa
    sl, sr = math.sqrt(link.transmittance_left), math.sqrt(link.transmittance_right)
    rot = complex(math.cos(phase_rel), math.sin(phase_rel))
    out = np.empty((2, 2))
    for k, (al, ar) in enumerate(
        ((q_left.amp_early, q_right.amp_early), (q_left.amp_late, q_right.amp_late))
    ):
        a = sl * al
        b = sr * ar * rot
        base = 0.5 * (abs(a) ** 2 + abs(b) ** 2)
        cross = kappa * (a * b.conjugate()).real
        out[0, k] = base + cross
        out[1, k] = base - cross
    return out


def _bin_amplitudes(basis: str, bit: int, mu: float) -> tuple[float, float]:
    if basis == "Z":
        return (math.sqrt(mu), 0.0) if bit == 0 else (0.0, math.sqrt(mu))
    half = math.sqrt(mu / 2.0)
    return half, half if bit == 0 else -half


def _psi_minus_prob(amps_l, amps_r, link: LinkModel, phases: np.ndarray) -> np.ndarray:
    """Psi-minus probability for real bin amplitudes at each relative phase."""
    sl, sr = math.sqrt(link.transmittance_left), math.sqrt(link.transmittance_right)
    c = np.cos(phases)
    clicks = []
    for al, ar in zip(amps_l, amps_r):
        a, b = sl * al, sr * ar
        base = 0.5 * (a * a + b * b)
        cross = link.kappa * a * b * c
        clicks.append((click_probability(base + cross, link.dark_prob),
                       click_probability(base - cross, link.dark_prob)))
    (d1e, d2e), (d1l, d2l) = clicks
    return d1e * (1 - d1l) * (1 - d2e) * d2l + (1 - d1e) * d1l * d2e * (1 - d2l)


def phase_nodes(n: int = DEFAULT_PHASE_NODES) -> np.ndarray:
    if n < 128:
        raise ValueError("use at least 128 phase nodes")
    return 2.0 * np.pi * np.arange(n) / n


def expected_gains(
    link: LinkModel,
    protocol: IntensityProtocol,
    pair: tuple[str, str],
    n_phase: int = DEFAULT_PHASE_NODES,
) -> tuple[float, float]:
    """Expected Psi-minus gain ``S_lr`` and QBER ``E_lr`` for one intensity pair.

    Anti-correlated bits count as correct in both bases.
    """
    l, r = pair
    if BASIS_OF[l] != BASIS_OF[r]:
        raise ValueError(f"{pair} mixes bases; only same-basis pairs are sifted")
    basis = BASIS_OF[l]
    phases = phase_nodes(n_phase)
    total = 0.0
    wrong = 0.0
    for bl in (0, 1):
        for br in (0, 1):
            p = float(np.mean(_psi_minus_prob(
                _bin_amplitudes(basis, bl, protocol.mu(l)),
                _bin_amplitudes(basis, br, protocol.mu(r)),
                link, phases,
            ))) / 4.0
            total += p
            if bl == br:
                wrong += p
    return total, (wrong / total if total > 0 else 0.0)


def _analytic_tally(link, protocol, n_rounds, seed, poisson) -> GainTally:
    rng = np.random.default_rng(np.random.SeedSequence(seed)) if poisson else None
    out = {}
    for l, r in SAME_BASIS_PAIRS:
        s, e = expected_gains(link, protocol, (l, r))
        sent = protocol.sent(l, r, n_rounds)
        if rng is None:
            success = min(sent, int(round(sent * s)))
            error = min(success, int(round(sent * s * e)))
        else:
            success = min(sent, int(rng.poisson(sent * s)))
            error = int(rng.binomial(success, e))
        out[(l, r)] = Counts(sent, success, error)
    return GainTally(out)


def _mc_shard(args) -> np.ndarray:
    link, protocol, n_rounds, seedseq, backend = args
    rng = np.random.default_rng(seedseq)
    probs = np.array([protocol.p(t) for t in TAGS])
    probs = probs / probs.sum()
    mu = np.array([protocol.mu(t) for t in TAGS])
    is_x = np.array([BASIS_OF[t] == "X" for t in TAGS], dtype=np.int8)
    acc = np.zeros((3, 16), dtype=np.int64)
    done = 0
    while done < n_rounds:
        m = min(_CHUNK, n_rounds - done)
        cls_l = rng.choice(4, size=m, p=probs).astype(np.int8)
        cls_r = rng.choice(4, size=m, p=probs).astype(np.int8)
        bits = rng.integers(0, 2, size=(2, m), dtype=np.int8)
        phase = rng.random(m) * (2.0 * np.pi)
        u = rng.random((m, 4))
        sent, success, error = kernels.tally_rounds(
            cls_l, cls_r, bits[0], bits[1], phase, u, mu, is_x,
            link.transmittance_left, link.transmittance_right, link.kappa, link.dark_prob,
            backend=backend,
        )
        acc[0] += sent
        acc[1] += success
        acc[2] += error
        done += m
    return acc


def shard_plan(n_rounds: int, shards: int) -> list[int]:
    """Split ``n_rounds`` into ``shards`` near-equal parts, larger parts first."""
    if shards < 1:
        raise ValueError("need at least one shard")
    q, rem = divmod(n_rounds, shards)
    return [q + (1 if i < rem else 0) for i in range(shards)]


def simulate_tally(
    link: LinkModel,
    protocol: IntensityProtocol,
    n_rounds: int,
    seed: int,
    mode: str = "montecarlo",
    *,
    shards: int = 1,
    workers: int = 1,
    poisson: bool = False,
    backend: str | None = None,
) -> GainTally:
    """Produce a gain tally for one user pair.

    In ``montecarlo`` mode every round draws intensities, bits, the relative
    phase and four detector uniforms; rounds are split into ``shards`` whose
    generators are spawned from ``seed``, so the tally depends only on
    ``(seed, shards)`` and not on ``workers``. In ``analytic`` mode
    ``n_rounds`` is the total number of pulse pairs and counts are the rounded
    expectations, or Poisson/binomial draws when ``poisson`` is set.
    """
    n_rounds = int(n_rounds)
    if n_rounds <= 0:
        raise ValueError("n_rounds must be positive")
    if mode == "analytic":
        return _analytic_tally(link, protocol, n_rounds, seed, poisson)
    if mode != "montecarlo":
        raise ValueError(f"unknown mode {mode!r}")

    plan = shard_plan(n_rounds, shards)
    children = np.random.SeedSequence(seed).spawn(len(plan))
    jobs = [(link, protocol, n, ss, backend) for n, ss in zip(plan, children) if n > 0]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_mc_shard, jobs))
    else:
        parts = [_mc_shard(j) for j in jobs]
    acc = np.sum(parts, axis=0)
    entries = {}
    for l, r in SAME_BASIS_PAIRS:
        k = 4 * TAGS.index(l) + TAGS.index(r)
        entries[(l, r)] = Counts(int(acc[0, k]), int(acc[1, k]), int(acc[2, k]))
    return GainTally(entries)


def overlap_sigma(link: LinkModel) -> float:
    """Delay scale of the amplitude overlap of two Gaussian pulses.

    A pulse with intensity FWHM ``w`` has intensity standard deviation
    ``w / (2 sqrt(2 ln 2))``; the amplitude overlap of two copies delayed by
    ``tau`` is ``exp(-tau^2 / (2 sigma^2))`` with sigma twice that value.
    """
    return link.pulse_width_s / math.sqrt(2.0 * math.log(2.0))


def _coincidence_prob(link: LinkModel, mu: float, kappa: float, phases: np.ndarray) -> float:
    a = math.sqrt(link.transmittance_left * mu)
    b = math.sqrt(link.transmittance_right * mu)
    base = 0.5 * (a * a + b * b)
    cross = kappa * a * b * np.cos(phases)
    c1 = click_probability(base + cross, link.dark_prob)
    c2 = click_probability(base - cross, link.dark_prob)
    return float(np.mean(c1 * c2))


def hom_scan(
    link: LinkModel,
    mu: float,
    delays: Sequence[float],
    n_phase: int = DEFAULT_PHASE_NODES,
) -> HomScanResult:
    """Phase-averaged two-detector coincidence probability versus relative delay.

    The visibility is ``(C_far - C_zero) / C_far`` where ``C_far`` averages the
    points more than three overlap widths from zero delay and ``C_zero`` is the
    point closest to zero delay.
    """
    delays = [float(d) for d in delays]
    if not delays:
        raise ValueError("need at least one delay")
    if not mu > 0:
        raise ValueError("mu must be positive")
    sigma = overlap_sigma(link)
    phases = phase_nodes(n_phase)
    points = tuple(
        (d, _coincidence_prob(link, mu, link.kappa * math.exp(-d * d / (2 * sigma * sigma)), phases))
        for d in delays
    )
    far = [c for d, c in points if abs(d) > 3 * sigma]
    if not far:
        raise ValueError("no delay lies beyond three overlap widths; cannot normalise")
    c_far = float(np.mean(far))
    c_zero = min(points, key=lambda p: abs(p[0]))[1]
    vis = (c_far - c_zero) / c_far if c_far > 0 else 0.0
    return HomScanResult(points, min(1.0, max(0.0, vis)), sigma)


def hom_coincidence_probability(link: LinkModel, mu: float, delay: float = 0.0,
                                n_phase: int = DEFAULT_PHASE_NODES) -> float:
    sigma = overlap_sigma(link)
    kappa = link.kappa * math.exp(-delay * delay / (2 * sigma * sigma))
    return _coincidence_prob(link, mu, kappa, phase_nodes(n_phase))


def hom_monte_carlo(
    link: LinkModel,
    mu: float,
    delay: float,
    n_rounds: int,
    seed: int,
    backend: str | None = None,
) -> int:
    """Count two-detector coincidences over ``n_rounds`` randomly phased pulse pairs."""
    if n_rounds <= 0:
        raise ValueError("n_rounds must be positive")
    sigma = overlap_sigma(link)
    kappa = link.kappa * math.exp(-delay * delay / (2 * sigma * sigma))
    a = math.sqrt(link.transmittance_left * mu)
    b = math.sqrt(link.transmittance_right * mu)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    count = 0
    done = 0
    while done < n_rounds:
        m = min(_CHUNK, n_rounds - done)
        phase = rng.random(m) * (2.0 * np.pi)
        u = rng.random((m, 2))
        count += kernels.hom_rounds(phase, u, a, b, kappa, link.dark_prob, backend=backend)
        done += m
    return count


def four_fold_count(stream1, stream2, window_s: float = 1e-9, clock_hz: float = 100e6,
                    backend: str | None = None) -> int:
    """Count clock cycles in which both links report a Psi-minus success.

    A coincidence window no longer than one clock period only pairs events
    from the same cycle.
    """
    s1 = np.asarray(stream1, dtype=bool)
    s2 = np.asarray(stream2, dtype=bool)
    if s1.shape != s2.shape:
        raise ValueError(f"stream lengths differ: {s1.shape} vs {s2.shape}")
    if window_s > 1.0 / clock_hz:
        raise ValueError("coincidence window longer than a clock period")
    return kernels.count_joint(s1, s2, backend=backend)
