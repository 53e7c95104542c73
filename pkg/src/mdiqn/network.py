"""Fully connected network planning: wavelength colouring and time-division schedules.

The wavelength-division plan gives every user pair its own wavelength channel
and BSM module; channels come from the round-robin (circle method)
1-factorisation of the complete graph, so no user sees one channel twice.

The time-division plan shares ``2^k - 1`` BSM modules (``k = ceil(log2 n)``)
over ``2^k / 2`` time bins. For ``2^k >= 8`` users form ``s = 2^k / 4``
subnets of four (letters A-D). The six pairs ``(u_a, v_b)`` with letters
``u < v`` from subnets ``a`` and ``b`` form a block that occupies six BSM
modules in one bin; the remaining pairs ``(u_a, u_b)`` join equal letters of
different subnets and ride on ``s - 1`` extra modules per bin. Bins run:
internal blocks of the first half of the subnets, then for each round of the
subnet round-robin the blocks ``(a, b)`` and ``(b, a)``, then the internal
blocks of the second half. User counts that are not powers of two are padded
with virtual users whose slots are dropped.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field

from .model import itu_channel_frequency

LETTERS = "ABCD"


def _ceil_log2(n: int) -> int:
    return max(1, (n - 1).bit_length())


def _check_n(n: int) -> int:
    if not isinstance(n, int) or isinstance(n, bool):
        raise TypeError("user count must be an integer")
    if n < 2:
        raise ValueError("a network needs at least two users")
    return n


def round_robin(n: int) -> list[list[tuple[int, int]]]:
    """Circle-method rounds for ``n`` players; odd ``n`` gets a bye each round.

    Returns ``n - 1`` rounds for even ``n`` and ``n`` rounds for odd ``n``,
    each a list of pairs ``(i, j)`` with ``i < j``.
    """
    m = n + (n % 2)
    fixed = m - 1
    rounds = []
    for r in range(m - 1):
        pairs = [(r, fixed)]
        for k in range(1, m // 2):
            pairs.append(((r + k) % (m - 1), (r - k) % (m - 1)))
        rounds.append(sorted(
            (min(a, b), max(a, b)) for a, b in pairs if a < n and b < n
        ))
    return rounds


def _frequency(channel: int) -> float | None:
    return itu_channel_frequency(channel) if channel <= 72 else None


def user_labels(n: int) -> list[str]:
    if n <= 26:
        return list(string.ascii_uppercase[:n])
    return [f"U{i + 1}" for i in range(n)]


@dataclass(frozen=True)
class Topology:
    """Wavelength-division full mesh: one channel per pair colour, one BSM per pair."""

    n_users: int
    users: tuple[str, ...]
    channels: tuple[int, ...]
    edge_color: dict[tuple[str, str], int]
    bsm_assignment: dict[tuple[int, int], str]

    @property
    def bsm_count(self) -> int:
        return len(self.bsm_assignment)

    def pair_bsm(self) -> dict[tuple[str, str], str]:
        by_channel: dict[int, list] = {}
        for pair, ch in self.edge_color.items():
            by_channel.setdefault(ch, []).append(pair)
        return {pair: self.bsm_assignment[(ch, i)]
                for ch, pairs in by_channel.items() for i, pair in enumerate(sorted(pairs))}

    def to_dict(self) -> dict:
        pb = self.pair_bsm()
        return {
            "scheme": "wdm",
            "n_users": self.n_users,
            "users": list(self.users),
            "channels": [{"channel": c, "frequency_thz": _frequency(c)} for c in self.channels],
            "links": [{"pair": list(p), "channel": c, "bsm": pb[p]}
                      for p, c in sorted(self.edge_color.items(), key=lambda kv: (kv[1], kv[0]))],
        }


def plan_full_mesh(n: int) -> Topology:
    """Colour the complete graph on ``n`` users with ``n - 1`` (even) or ``n`` (odd) channels."""
    _check_n(n)
    users = user_labels(n)
    edge_color = {}
    bsm = {}
    count = 0
    for r, pairs in enumerate(round_robin(n)):
        ch = r + 1
        for i, (a, b) in enumerate(pairs):
            edge_color[(users[a], users[b])] = ch
            count += 1
            bsm[(ch, i)] = f"BSM{count}"
    channels = tuple(sorted(set(edge_color.values())))
    return Topology(n, tuple(users), channels, edge_color, bsm)


def tdm_encoders(n: int) -> int:
    k = _ceil_log2(_check_n(n))
    return 3 * k // 2 if k % 2 == 0 else (3 * k - 1) // 2


def resource_counts(n: int, scheme: str = "tdm") -> dict[str, int]:
    """Hardware needed by a fully connected ``n``-user network."""
    _check_n(n)
    if scheme == "wdm":
        wl = n - 1 if n % 2 == 0 else n
        return {"wavelengths": wl, "bsm_modules": n * (n - 1) // 2,
                "time_bins": 1, "encoders_per_user": wl}
    if scheme == "tdm":
        size = 2 ** _ceil_log2(n)
        enc = tdm_encoders(n)
        return {"wavelengths": enc, "bsm_modules": size - 1,
                "time_bins": size // 2, "encoders_per_user": enc}
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class TdmSchedule:
    """Time-division schedule; ``slots`` maps ``(bin, bsm)`` indices to a user pair."""

    n_users: int
    users: tuple[str, ...]
    bins: tuple[str, ...]
    bin_groups: tuple[str, ...]
    slots: dict[tuple[int, int], tuple[str, str]]
    bsm_count: int
    wavelength_count: int
    encoders_per_user: int
    padded_users: int = field(default=0)

    @property
    def duty_cycle(self) -> float:
        """Fraction of the cycle a given pair is active."""
        return 1.0 / len(self.bins)

    def pairs(self) -> list[tuple[str, str]]:
        return list(self.slots.values())

    def user_load(self) -> dict[tuple[int, str], int]:
        """Slots per (bin, user): encoders a user drives at once."""
        load: dict[tuple[int, str], int] = {}
        for (b, _), pair in self.slots.items():
            for u in pair:
                load[(b, u)] = load.get((b, u), 0) + 1
        return load

    def max_load(self) -> int:
        return max(self.user_load().values(), default=0)

    def to_dict(self) -> dict:
        return {
            "scheme": "tdm",
            "n_users": self.n_users,
            "users": list(self.users),
            "bins": list(self.bins),
            "bsm_modules": [f"BSM {i + 1}" for i in range(self.bsm_count)],
            "wavelengths": self.wavelength_count,
            "encoders_per_user": self.encoders_per_user,
            "duty_cycle": self.duty_cycle,
            "slots": [{"bin": self.bins[b], "group": self.bin_groups[b], "bsm": m + 1,
                       "pair": list(p)} for (b, m), p in sorted(self.slots.items())],
        }

    def render_table(self) -> str:
        """Plain-text table: one row per bin, one column per BSM module."""
        header = ["Group", "Bin"] + [f"BSM {i + 1}" for i in range(self.bsm_count)]
        rows = [header]
        for b, name in enumerate(self.bins):
            row = [self.bin_groups[b], name]
            for m in range(self.bsm_count):
                p = self.slots.get((b, m))
                row.append("-".join(p) if p else "")
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        fmt = lambda r: " | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
        sep = "-+-".join("-" * w for w in widths)
        return "\n".join([fmt(rows[0]), sep] + [fmt(r) for r in rows[1:]]) + "\n"


def _slots_small(size: int) -> tuple[list[str], dict]:
    if size == 2:
        return ["Subnet 1"], {(0, 0): (0, 1)}
    a, b, c, d = range(4)
    return ["Subnet 1", "Subnet 1"], {
        (0, 0): (a, b), (0, 1): (a, d), (0, 2): (a, c),
        (1, 0): (c, d), (1, 1): (b, c), (1, 2): (b, d),
    }


def _slots_blocks(size: int) -> tuple[list[str], dict]:
    s = size // 4
    user = lambda letter, sub: 4 * sub + letter
    pattern = [(u, v) for u in range(4) for v in range(u + 1, 4)]
    rounds = round_robin(s)
    bins: list[list[tuple[int, int]]] = [[(a, a) for a in range(s // 2)]]
    groups = ["Subnet " + ",".join(str(a + 1) for a in range(s // 2))]
    for rnd in rounds:
        bins.append([(a, b) for a, b in rnd])
        groups.append("Cross " + ",".join(f"{a + 1}-{b + 1}" for a, b in rnd))
        bins.append([(b, a) for a, b in rnd])
        groups.append("Cross " + ",".join(f"{b + 1}-{a + 1}" for a, b in rnd))
    bins.append([(a, a) for a in range(s // 2, s)])
    groups.append("Subnet " + ",".join(str(a + 1) for a in range(s // 2, s)))

    slots = {}
    for t, blocks in enumerate(bins):
        for lane, (a, b) in enumerate(blocks):
            for k, (u, v) in enumerate(pattern):
                slots[(t, 6 * lane + k)] = (user(u, a), user(v, b))
    diagonal = [(user(u, a), user(u, b)) for rnd in rounds for a, b in rnd for u in range(4)]
    base = 6 * (s // 2)
    per_bin = s - 1
    for i, pair in enumerate(diagonal):
        t, lane = divmod(i, per_bin)
        slots[(t, base + lane)] = pair
    return groups, slots


def build_tdm_schedule(n: int) -> TdmSchedule:
    """Share ``2^k - 1`` BSM modules among all ``n (n - 1) / 2`` pairs over ``2^k / 2`` bins."""
    _check_n(n)
    size = 2 ** _ceil_log2(n)
    groups, raw = _slots_small(size) if size <= 4 else _slots_blocks(size)
    if size >= 8:
        labels = [f"{LETTERS[i % 4]}{i // 4 + 1}" for i in range(size)]
    else:
        labels = list(LETTERS[:size])
    slots = {}
    for key, (i, j) in raw.items():
        if i < n and j < n:
            slots[key] = (labels[i], labels[j])
    res = resource_counts(n, "tdm")
    return TdmSchedule(
        n_users=n,
        users=tuple(labels[:n]),
        bins=tuple(f"t{i + 1}" for i in range(len(groups))),
        bin_groups=tuple(groups),
        slots=slots,
        bsm_count=res["bsm_modules"],
        wavelength_count=res["wavelengths"],
        encoders_per_user=res["encoders_per_user"],
        padded_users=size - n,
    )


def to_json(obj: Topology | TdmSchedule) -> str:
    return json.dumps(obj.to_dict(), indent=2, sort_keys=False) + "\n"
