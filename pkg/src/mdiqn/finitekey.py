"""Finite-key decoy-state analysis for four-intensity MDI-QKD.

Observed gains are turned into expectation intervals with a multiplicative
Chernoff bound. The single-photon-pair yield ``s11`` and phase error
``e11ph`` are then bounded by two linear programs over a photon-number
expansion truncated at ``n_cut`` photons per side:

    S_lr = sum_{n,m <= n_cut} P_n(mu_l) P_m(mu_r) Y_nm + t_lr,
    0 <= t_lr <= 1 - sum_{n,m <= n_cut} P_n(mu_l) P_m(mu_r),

where ``P`` is the Poisson mass and ``t_lr`` absorbs the truncated tail. The
error LP uses the same expansion for error gains ``S_lr E_lr`` with error
yields ``0 <= T_nm <= Y_nm``; a side that emitted vacuum carries no bit
information, so ``T_0m = Y_0m / 2`` and ``T_n0 = Y_n0 / 2``.

The joint-constraint variable

    H = a0 <S_ox> + b0 <S_xo> - a0 b0 <S_oo>,   a0 = b0 = exp(-mu_x)

is pinned to values across its confidence interval and the secure rate is the
minimum over those values.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linprog
from scipy.stats import poisson

from .model import X_PAIRS, DataError, GainTally, IntensityProtocol

EPSILON = 1e-10
EC_EFFICIENCY = 1.16
N_CUT = 7
H_GRID = 21


class InfeasibleError(DataError):
    """The decoy constraints admit no yield model; the tally is inconsistent."""


@dataclass(frozen=True)
class ChernoffBound:
    epsilon: float
    b: float
    delta: float
    observed: float
    lower: float
    upper: float


@dataclass(frozen=True)
class HInterval:
    a0: float
    b0: float
    h_low: float
    h_high: float


@dataclass(frozen=True)
class KeyRateReport:
    s11_lower: float
    e11ph_upper: float
    S_zz: float
    E_zz: float
    f: float
    rate_per_pulse: float
    rate_bps: float
    h_value: float = math.nan
    h_low: float = math.nan
    h_high: float = math.nan
    epsilon: float = EPSILON

    def to_record(self) -> dict[str, float]:
        return asdict(self)


def chernoff_delta(ns: float, epsilon: float) -> float:
    """Relative half-width of the Chernoff interval for an observed count ``ns``."""
    if not ns > 0:
        raise ValueError("observed count must be positive; zero counts use the tail rule")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    b = -math.log(epsilon / 2.0)
    return (b + math.sqrt(b * b + 8.0 * b * ns)) / (2.0 * ns)


def expectation_bounds(success: int, sent: int, epsilon: float = EPSILON) -> ChernoffBound:
    """Interval on the expected gain given ``success`` events out of ``sent``.

    Zero observed events give ``[0, b / sent]``. When the relative width
    reaches 1 the upper bound is capped at probability 1.
    """
    if sent <= 0:
        raise ValueError("sent must be positive")
    if not 0 <= success <= sent:
        raise ValueError(f"need 0 <= success <= sent, got {success} / {sent}")
    b = -math.log(epsilon / 2.0)
    if success == 0:
        return ChernoffBound(epsilon, b, math.inf, 0.0, 0.0, min(1.0, b / sent))
    s = success / sent
    delta = chernoff_delta(success, epsilon)
    upper = s / (1.0 - delta) if delta < 1.0 else 1.0
    return ChernoffBound(epsilon, b, delta, s, s / (1.0 + delta), min(1.0, upper))


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def key_rate(
    s11_lower: float,
    e11ph_upper: float,
    S_zz: float,
    E_zz: float,
    z: float,
    p_z: float,
    f: float = EC_EFFICIENCY,
    clock_hz: float = 100e6,
) -> KeyRateReport:
    """Secure key per pulse pair, clamped at zero, and per second."""
    if f < 1.0:
        raise ValueError("error-correction efficiency must be >= 1")
    for name, v in (("s11_lower", s11_lower), ("S_zz", S_zz), ("E_zz", E_zz), ("p_z", p_z)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} out of range: {v}")
    e = min(max(e11ph_upper, 0.0), 0.5)
    rate = p_z * p_z * (
        z * z * math.exp(-2.0 * z) * s11_lower * (1.0 - binary_entropy(e))
        - f * S_zz * binary_entropy(E_zz)
    )
    rate = max(0.0, rate)
    return KeyRateReport(s11_lower, e, S_zz, E_zz, f, rate, rate * clock_hz)


def _mirrored_equal(tally: GainTally, l: str, r: str) -> bool:
    return (l, r) in tally and (r, l) in tally and abs(tally[(l, r)].sent - tally[(r, l)].sent) <= 1


def h_interval(tally: GainTally, protocol: IntensityProtocol, epsilon: float = EPSILON) -> HInterval:
    """Confidence interval of ``H = a0 <S_ox> + b0 <S_xo> - a0 b0 <S_oo>``.

    When the two mirrored sources have equal pulse counts their sum is bounded
    jointly from the pooled count, which is tighter than two separate bounds.
    """
    missing = [p for p in (("o", "x"), ("x", "o"), ("o", "o")) if p not in tally]
    if missing:
        raise DataError(f"tally lacks {missing} needed for the joint constraint")
    a0 = b0 = math.exp(-protocol.mu("x"))
    oo = expectation_bounds(tally["o", "o"].success, tally["o", "o"].sent, epsilon)
    if _mirrored_equal(tally, "o", "x"):
        ox, xo = tally["o", "x"], tally["x", "o"]
        pooled = expectation_bounds(ox.success + xo.success, ox.sent + xo.sent, epsilon)
        lo, hi = 2 * a0 * pooled.lower, 2 * a0 * pooled.upper
    else:
        ox = expectation_bounds(tally["o", "x"].success, tally["o", "x"].sent, epsilon)
        xo = expectation_bounds(tally["x", "o"].success, tally["x", "o"].sent, epsilon)
        lo = a0 * ox.lower + b0 * xo.lower
        hi = a0 * ox.upper + b0 * xo.upper
    return HInterval(a0, b0, lo - a0 * b0 * oo.upper, hi - a0 * b0 * oo.lower)


def _row_scale(vec: np.ndarray, bound: float) -> float:
    """Row normaliser: the bound itself, or the largest coefficient when the bound is 0.

    Gains near 1e-7 sit at the solver's feasibility tolerance, so rows are
    expressed relative to their own magnitude.
    """
    if bound > 0:
        return bound
    return max(float(np.abs(vec).max()), 1e-300)


@dataclass(frozen=True)
class _Source:
    entries: tuple[tuple[str, str], ...]
    weights: tuple[float, ...]
    lower: float
    upper: float


class DecoyEstimator:
    """The two decoy-state LPs for one tally, built once and re-solved per ``H``.

    ``epsilon=None`` treats observed gains as exact expectations, which is
    only meaningful for synthetic tallies with very large counts.
    """

    def __init__(
        self,
        tally: GainTally,
        protocol: IntensityProtocol,
        epsilon: float | None = EPSILON,
        n_cut: int = N_CUT,
    ) -> None:
        if n_cut < 2:
            raise ValueError("photon-number cutoff must be >= 2")
        missing = [p for p in (("y", "y"), ("x", "x"), ("o", "o"), ("o", "x"), ("x", "o"))
                   if p not in tally]
        if missing:
            raise DataError(f"tally lacks X-basis sources {missing}")
        self.tally = tally
        self.protocol = protocol
        self.epsilon = epsilon
        self.n_cut = n_cut
        k = n_cut + 1
        self._nv = k * k

        self.entries = [p for p in X_PAIRS if p in tally]
        self._row = {}
        self._tail = {}
        for l, r in self.entries:
            pl = poisson.pmf(np.arange(k), protocol.mu(l))
            pr = poisson.pmf(np.arange(k), protocol.mu(r))
            row = np.outer(pl, pr).ravel()
            self._row[(l, r)] = row
            self._tail[(l, r)] = max(0.0, 1.0 - float(row.sum()))

        self.yield_sources = self._sources(errors=False)
        self.error_sources = self._sources(errors=True)
        if epsilon is None:
            hi = HInterval(*self._exact_h())
        else:
            hi = h_interval(tally, protocol, epsilon)
        self.h = hi
        self._h_coef = {("o", "x"): hi.a0, ("x", "o"): hi.b0, ("o", "o"): -hi.a0 * hi.b0}
        self._systems: dict[bool, tuple] = {}

    # -- constraint assembly -------------------------------------------------

    def _bounds(self, success: int, sent: int) -> tuple[float, float]:
        if self.epsilon is None:
            s = success / sent
            return s, s
        cb = expectation_bounds(success, sent, self.epsilon)
        return cb.lower, cb.upper

    def _sources(self, errors: bool) -> list[_Source]:
        out = []
        done = set()
        for l, r in self.entries:
            if (l, r) in done:
                continue
            group = [(l, r)]
            if l != r and (r, l) in self.tally:
                group.append((r, l))
            done.update(group)
            counts = [self.tally[g] for g in group]
            if errors and any(c.error is None for c in counts):
                continue
            sent = sum(c.sent for c in counts)
            if sent == 0:
                continue
            hits = sum((c.error if errors else c.success) for c in counts)
            lo, hi = self._bounds(hits, sent)
            weights = tuple(c.sent / sent for c in counts)
            out.append(_Source(tuple(group), weights, lo, hi))
        return out

    def _exact_h(self) -> tuple[float, float, float, float]:
        a0 = math.exp(-self.protocol.mu("x"))
        g = self.tally.gain
        h = a0 * g("o", "x") + a0 * g("x", "o") - a0 * a0 * g("o", "o")
        return a0, a0, h, h

    def _assemble(self, with_errors: bool):
        """Constraint matrices over ``[Y, (T), s_entries, (s'_entries)]``."""
        nv = self._nv
        ne = len(self.entries)
        eidx = {e: i for i, e in enumerate(self.entries)}
        n_y = nv
        n_t = nv if with_errors else 0
        off_s = n_y + n_t
        off_st = off_s + ne
        nvar = off_st + (ne if with_errors else 0)

        a_ub, b_ub = [], []

        def add_interval(vec, lo, hi):
            scale = 1.0 / _row_scale(vec, hi)
            a_ub.append(vec * scale)
            b_ub.append(hi * scale)
            a_ub.append(-vec * scale)
            b_ub.append(-lo * scale)

        for src in self.yield_sources:
            vec = np.zeros(nvar)
            for e, w in zip(src.entries, src.weights):
                vec[:nv] += w * self._row[e]
                vec[off_s + eidx[e]] += w
            add_interval(vec, src.lower, src.upper)

        a_eq, b_eq = [], []
        if with_errors:
            for src in self.error_sources:
                vec = np.zeros(nvar)
                for e, w in zip(src.entries, src.weights):
                    vec[nv:2 * nv] += w * self._row[e]
                    vec[off_st + eidx[e]] += w
                add_interval(vec, src.lower, src.upper)
            for j in range(nv):  # T_nm <= Y_nm
                vec = np.zeros(nvar)
                vec[nv + j] = 1.0
                vec[j] = -1.0
                a_ub.append(vec)
                b_ub.append(0.0)
            k = self.n_cut + 1
            for n in range(k):
                for m in range(k):
                    if n == 0 or m == 0:
                        vec = np.zeros(nvar)
                        vec[nv + n * k + m] = 1.0
                        vec[n * k + m] = -0.5
                        a_eq.append(vec)
                        b_eq.append(0.0)

        h_vec = np.zeros(nvar)
        for e, c in self._h_coef.items():
            h_vec[:nv] += c * self._row[e]
            h_vec[off_s + eidx[e]] += c

        bounds = [(0.0, 1.0)] * (n_y + n_t)
        bounds += [(0.0, self._tail[e]) for e in self.entries]
        if with_errors:
            bounds += [(0.0, self._tail[e]) for e in self.entries]
        return np.array(a_ub), np.array(b_ub), a_eq, b_eq, h_vec, bounds, nvar

    def _system(self, with_errors: bool) -> tuple:
        if with_errors not in self._systems:
            self._systems[with_errors] = self._assemble(with_errors)
        return self._systems[with_errors]

    def _solve(self, c, with_errors: bool, h: float | None):
        a_ub, b_ub, a_eq, b_eq, h_vec, bounds, nvar = self._system(with_errors)
        h_scale = 1.0 / _row_scale(h_vec, max(abs(self.h.h_low), abs(self.h.h_high)))
        a_eq = list(a_eq)
        b_eq = list(b_eq)
        if h is None:
            a_ub = np.vstack([a_ub, h_vec * h_scale, -h_vec * h_scale])
            b_ub = np.concatenate([b_ub, [self.h.h_high * h_scale, -self.h.h_low * h_scale]])
        else:
            a_eq.append(h_vec * h_scale)
            b_eq.append(h * h_scale)
        res = linprog(
            c,
            A_ub=a_ub,
            b_ub=b_ub,
            A_eq=np.array(a_eq) if a_eq else None,
            b_eq=np.array(b_eq) if b_eq else None,
            bounds=bounds,
            method="highs",
        )
        if res.status == 2:
            raise InfeasibleError("decoy-state constraints are infeasible")
        if res.status != 0:
            raise RuntimeError(f"LP solver failed: {res.message}")
        return res

    # -- public bounds -------------------------------------------------------

    def s11_lower(self, h: float | None = None) -> float:
        k = self.n_cut + 1
        c = np.zeros(self._system(False)[-1])
        c[k + 1] = 1.0
        res = self._solve(c, with_errors=False, h=h)
        return min(1.0, max(0.0, float(res.x[k + 1])))

    def e11_upper(self, s11_lower: float, h: float | None = None) -> float:
        if not s11_lower > 0:
            raise ValueError("s11 lower bound must be positive to bound the phase error")
        k = self.n_cut + 1
        c = np.zeros(self._system(True)[-1])
        c[self._nv + k + 1] = -1.0
        res = self._solve(c, with_errors=True, h=h)
        t11 = max(0.0, float(res.x[self._nv + k + 1]))
        return min(0.5, t11 / s11_lower)


def estimate_s11_lower(
    tally: GainTally,
    protocol: IntensityProtocol,
    epsilon: float | None = EPSILON,
    n_cut: int = N_CUT,
    h: float | None = None,
) -> float:
    """Lower bound on the single-photon-pair yield."""
    return DecoyEstimator(tally, protocol, epsilon, n_cut).s11_lower(h)


def estimate_e11ph_upper(
    tally: GainTally,
    protocol: IntensityProtocol,
    epsilon: float | None = EPSILON,
    n_cut: int = N_CUT,
    s11_lower: float | None = None,
    h: float | None = None,
) -> float:
    """Upper bound on the single-photon-pair phase error, capped at 1/2.

    With ``s11_lower`` given, the largest admissible ``T_11`` is divided by it.
    Otherwise, if ``h`` is not pinned either, the ratio is formed at each
    ``H`` of an ``H_GRID``-point grid and the largest value is returned; the
    true ``H`` lies in the interval, so this stays an upper bound while not
    mixing the extremes of two different ``H`` values.
    """
    est = DecoyEstimator(tally, protocol, epsilon, n_cut)
    if s11_lower is not None or h is not None:
        if s11_lower is None:
            s11_lower = est.s11_lower(h)
        return est.e11_upper(s11_lower, h)
    worst = None
    for value in np.linspace(est.h.h_low, est.h.h_high, H_GRID):
        try:
            s11 = est.s11_lower(float(value))
            e11 = est.e11_upper(s11, float(value)) if s11 > 0 else 0.5
        except InfeasibleError:
            continue
        worst = e11 if worst is None else max(worst, e11)
    if worst is None:
        raise InfeasibleError("no admissible value of the joint-constraint variable")
    return worst


def _golden_min(fn: Callable[[float], float], lo: float, hi: float, iters: int = 12):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = fn(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = fn(d)
    return (c, fc) if fc <= fd else (d, fd)


def finite_key_pipeline(
    tally: GainTally,
    protocol: IntensityProtocol,
    epsilon: float = EPSILON,
    f: float = EC_EFFICIENCY,
    n_cut: int = N_CUT,
    n_grid: int = H_GRID,
    refine: bool = True,
) -> KeyRateReport:
    """Secure key rate of one tally: the minimum of ``R(H)`` over the ``H`` interval.

    ``H`` values at which either LP is infeasible are excluded by the data and
    skipped. Raises :class:`InfeasibleError` when no value is admissible.
    """
    if len(tally) == 0:
        raise DataError("empty tally")
    if ("z", "z") not in tally:
        raise DataError("tally lacks the signal pair (z, z)")
    zz = tally["z", "z"]
    if zz.error is None or zz.sent == 0:
        raise DataError("signal pair needs sent and error counts")
    if n_grid < 2:
        raise ValueError("need at least two grid points")
    S_zz = zz.gain
    E_zz = zz.qber
    z, p_z = protocol.mu("z"), protocol.p("z")

    est = DecoyEstimator(tally, protocol, epsilon, n_cut)
    est.s11_lower()  # raises if the constraints are inconsistent for every H

    cache: dict[float, tuple[float, float, float] | None] = {}

    def evaluate(h: float):
        if h in cache:
            return cache[h]
        try:
            s11 = est.s11_lower(h)
            e11 = est.e11_upper(s11, h) if s11 > 0 else 0.5
        except InfeasibleError:
            cache[h] = None
            return None
        r = key_rate(s11, e11, S_zz, E_zz, z, p_z, f, protocol.clock_hz).rate_per_pulse
        cache[h] = (s11, e11, r)
        return cache[h]

    def objective(h: float) -> float:
        v = evaluate(h)
        return math.inf if v is None else v[2]

    grid = np.linspace(est.h.h_low, est.h.h_high, n_grid)
    values = [objective(float(h)) for h in grid]
    if all(math.isinf(v) for v in values):
        raise InfeasibleError("no admissible value of the joint-constraint variable")
    i = int(np.argmin(values))
    best_h = float(grid[i])
    if refine and est.h.h_high > est.h.h_low:
        lo = float(grid[max(i - 1, 0)])
        hi = float(grid[min(i + 1, n_grid - 1)])
        h_ref, v_ref = _golden_min(objective, lo, hi)
        if v_ref < values[i]:
            best_h = h_ref
    s11, e11, rate = cache[best_h]
    return KeyRateReport(
        s11_lower=s11,
        e11ph_upper=e11,
        S_zz=S_zz,
        E_zz=E_zz,
        f=f,
        rate_per_pulse=rate,
        rate_bps=rate * protocol.clock_hz,
        h_value=best_h,
        h_low=est.h.h_low,
        h_high=est.h.h_high,
        epsilon=epsilon,
    )
