from itertools import combinations

import pytest

from mdiqn.network import (
    build_tdm_schedule,
    plan_full_mesh,
    resource_counts,
    round_robin,
    tdm_encoders,
)

REFERENCE_8 = [
    "A1-B1 A1-C1 A1-D1 B1-C1 B1-D1 C1-D1 A1-A2",
    "A1-B2 A1-C2 A1-D2 B1-C2 B1-D2 C1-D2 B1-B2",
    "A2-B1 A2-C1 A2-D1 B2-C1 B2-D1 C2-D1 C1-C2",
    "A2-B2 A2-C2 A2-D2 B2-C2 B2-D2 C2-D2 D1-D2",
]


def _pairs_of(n, labels):
    return {frozenset(p) for p in combinations(labels, 2)}


@pytest.mark.parametrize("n", range(2, 65))
def test_wdm_coloring_proper(n):
    topo = plan_full_mesh(n)
    assert len(topo.channels) == (n - 1 if n % 2 == 0 else n)
    assert topo.bsm_count == n * (n - 1) // 2
    assert {frozenset(p) for p in topo.edge_color} == _pairs_of(n, topo.users)
    seen = set()
    for (u, v), ch in topo.edge_color.items():
        for w in (u, v):
            assert (w, ch) not in seen
            seen.add((w, ch))
    assert len(set(topo.pair_bsm().values())) == topo.bsm_count


@pytest.mark.parametrize("n", range(2, 65))
def test_tdm_schedule_invariants(n):
    sched = build_tdm_schedule(n)
    res = resource_counts(n, "tdm")
    pairs = [frozenset(p) for p in sched.pairs()]
    assert len(pairs) == len(set(pairs))
    assert set(pairs) == _pairs_of(n, sched.users)
    assert sched.bsm_count == res["bsm_modules"]
    assert len(sched.bins) == res["time_bins"]
    for b, m in sched.slots:
        assert 0 <= b < len(sched.bins)
        assert 0 <= m < sched.bsm_count
    assert sched.max_load() <= sched.encoders_per_user == res["encoders_per_user"]


def test_eight_users_matches_reference_table():
    sched = build_tdm_schedule(8)
    assert sched.bsm_count == 7 and len(sched.bins) == 4
    for b, row in enumerate(REFERENCE_8):
        assert ["-".join(sched.slots[(b, m)]) for m in range(7)] == row.split()
    assert sched.max_load() == 4
    assert sched.duty_cycle == 0.25


def test_render_table_layout():
    lines = build_tdm_schedule(8).render_table().splitlines()
    assert lines[0].split(" | ")[2:] == [f"BSM {i}" for i in range(1, 8)]
    assert len(lines) == 2 + 4


def test_small_cases():
    s2 = build_tdm_schedule(2)
    assert s2.slots == {(0, 0): ("A", "B")}
    s4 = build_tdm_schedule(4)
    assert len(s4.slots) == 6 and len(s4.bins) == 2 and s4.bsm_count == 3
    assert s4.encoders_per_user == 3
    s5 = build_tdm_schedule(5)
    assert s5.padded_users == 3


def test_wdm_examples():
    four = plan_full_mesh(4)
    assert (len(four.channels), four.bsm_count) == (3, 6)
    five = plan_full_mesh(5)
    assert (len(five.channels), five.bsm_count) == (5, 10)
    two = plan_full_mesh(2)
    assert (len(two.channels), two.bsm_count) == (1, 1)


@pytest.mark.parametrize("n, expected", [
    (2, (1, 1, 1, 1)),
    (4, (3, 3, 2, 3)),
    (8, (4, 7, 4, 4)),
    (16, (6, 15, 8, 6)),
])
def test_tdm_resource_counts(n, expected):
    r = resource_counts(n, "tdm")
    assert (r["wavelengths"], r["bsm_modules"], r["time_bins"], r["encoders_per_user"]) == expected


def test_wdm_resource_counts():
    assert resource_counts(6, "wdm") == {"wavelengths": 5, "bsm_modules": 15,
                                         "time_bins": 1, "encoders_per_user": 5}
    assert resource_counts(7, "wdm")["wavelengths"] == 7


@pytest.mark.parametrize("scheme", ["wdm", "tdm"])
def test_resources_monotone(scheme):
    prev = resource_counts(2, scheme)
    for n in range(3, 129):
        cur = resource_counts(n, scheme)
        assert all(cur[k] >= prev[k] for k in cur)
        prev = cur


def test_encoder_formula():
    # k = 1..6 -> 1, 3, 4, 6, 7, 9
    assert [tdm_encoders(2 ** k) for k in range(1, 7)] == [1, 3, 4, 6, 7, 9]


def test_round_robin_is_one_factorisation():
    for n in (6, 7):
        rounds = round_robin(n)
        flat = [p for r in rounds for p in r]
        assert len(flat) == len(set(flat)) == n * (n - 1) // 2
        for r in rounds:
            users = [u for p in r for u in p]
            assert len(users) == len(set(users))


@pytest.mark.parametrize("bad", [1, 0, -3])
def test_rejects_small_networks(bad):
    for fn in (plan_full_mesh, build_tdm_schedule):
        with pytest.raises(ValueError):
            fn(bad)
    with pytest.raises(ValueError):
        resource_counts(bad)


def test_unknown_scheme():
    with pytest.raises(ValueError):
        resource_counts(8, "cdm")
