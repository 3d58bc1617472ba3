import itertools
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sicta.errors import InvalidOccupancy, RejectedDistribution
from sicta.oracle import compositions
from sicta.splitmodel import CriOutcome, fair, last_counted_slot, make_split_distribution, parse_distribution, pbi
from strategies import rational_dists


def test_fair_two_tails():
    d = make_split_distribution([F(1, 2), F(1, 2)])
    assert d.tail == (1, F(1, 2))
    assert d.exact


def test_three_way_tails():
    assert make_split_distribution([F(1, 2), F(1, 4), F(1, 4)]).tail == (1, F(1, 2), F(1, 4))


@pytest.mark.parametrize(
    "p", [[1, 0], [F(1, 2), F(1, 3)], [F(3, 2), F(-1, 2)], [0.5, 0.6], [1.0]]
)
def test_rejected(p):
    with pytest.raises(RejectedDistribution):
        make_split_distribution(p)


def test_zero_entries_allowed():
    d = make_split_distribution([F(0), F(1, 2), F(1, 2)])
    assert d.tail == (1, 1, F(1, 2))


def test_float_mode_tolerance():
    d = make_split_distribution([0.1, 0.2, 0.7000000000000001])
    assert not d.exact
    with pytest.raises(RejectedDistribution):
        make_split_distribution([0.1, 0.2, 0.7001])


@pytest.mark.parametrize(
    "d,expected",
    [
        (2, (F(1, 2), F(1, 2))),
        (3, (F(1, 2), F(1, 4), F(1, 4))),
        (4, (F(1, 2), F(1, 4), F(1, 8), F(1, 8))),
    ],
)
def test_pbi_values(d, expected):
    assert pbi(d).p == expected


@pytest.mark.parametrize("d", range(2, 17))
def test_pbi_valid(d):
    dist = pbi(d)
    assert sum(dist.p) == 1 and dist.exact


def test_pbi_and_fair_reject_small_d():
    with pytest.raises(RejectedDistribution):
        pbi(1)
    with pytest.raises(RejectedDistribution):
        fair(1)


def test_parse_shorthands():
    assert parse_distribution("pbi:4") == pbi(4)
    assert parse_distribution("fair:3") == fair(3)
    assert parse_distribution("0.3, 0.7").p == (F(3, 10), F(7, 10))
    assert parse_distribution("1/2,1/4,1/4") == pbi(3)
    for bad in ("foo:3", "pbi:x", "1/2,a", "1/0,1"):
        with pytest.raises(RejectedDistribution):
            parse_distribution(bad)


@pytest.mark.parametrize("counts,n,M", [((2, 0), 2, 1), ((0, 2), 2, 2), ((1, 2, 1), 4, 2), ((1, 1), 2, 1)])
def test_last_counted_slot(counts, n, M):
    assert last_counted_slot(counts, n) == M


def test_last_counted_slot_errors():
    with pytest.raises(InvalidOccupancy):
        last_counted_slot((1, 1), 3)
    with pytest.raises(InvalidOccupancy):
        last_counted_slot((1, 0), 1)


def test_at_most_one_packet_right_of_m():
    for d in range(2, 5):
        for n in range(2, 9):
            for counts in compositions(n, d):
                M = last_counted_slot(counts, n)
                assert 1 <= M <= d
                assert sum(counts[M:]) <= 1


def test_cri_outcome_conservation():
    CriOutcome(3, 1, 1, 1)
    with pytest.raises(ValueError):
        CriOutcome(3, 1, 1, 0)


@given(rational_dists(d_max=8, allow_zero=True))
def test_tail_is_complement_of_prefix(dist):
    for k in range(dist.d):
        assert dist.tail[k] == 1 - sum(dist.p[:k])
    assert all(a >= b for a, b in itertools.pairwise(dist.tail))
    assert dist.tail[-1] == dist.p[-1]


@given(st.integers(2, 16))
def test_entropy_of_pbi(d):
    import math

    dist = pbi(d)
    assert dist.entropy() == pytest.approx(sum(math.log(2) * min(i, d - 1) / 2 ** min(i, d - 1) for i in range(1, d + 1)))
