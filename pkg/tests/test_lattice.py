"""Property tests for the product lattice and the majority predicate."""

import itertools

import pytest
from hypothesis import given, strategies as st

from latagree.lattice import (
    ADD,
    REMOVE,
    Configuration,
    LatticeValue,
    ObjectValue,
    VariantMismatch,
    verify_maj,
)

elems = st.frozensets(st.sampled_from([b"a", b"b", b"c", b"d", b"e"]), max_size=5)
growsets = elems.map(ObjectValue.growset)
maxregs = st.integers(min_value=0, max_value=50).map(ObjectValue.maxreg)

pair = st.tuples(st.sampled_from(["r1", "r2", "r3", "r4"]), st.sampled_from([ADD, REMOVE]))
confs = st.frozensets(pair, max_size=8).map(Configuration)

values = st.tuples(growsets, confs).map(lambda t: LatticeValue(*t))


@given(growsets, growsets, growsets)
def test_growset_join_is_semilattice(a, b, c):
    assert a.join(a) == a
    assert a.join(b) == b.join(a)
    assert a.join(b).join(c) == a.join(b.join(c))


@given(maxregs, maxregs)
def test_maxreg_join_is_max(a, b):
    assert a.join(b).level == max(a.level, b.level)


@given(values, values)
def test_leq_agrees_with_join(a, b):
    # a <= b exactly when joining b with a changes nothing
    assert a.leq(b) == (a.join(b) == b)


@given(values, values)
def test_join_is_upper_bound(a, b):
    j = a.join(b)
    assert a.leq(j) and b.leq(j)


def test_variant_mismatch_rejected():
    with pytest.raises(VariantMismatch):
        ObjectValue.growset([b"x"]).join(ObjectValue.maxreg(3))
    with pytest.raises(VariantMismatch):
        ObjectValue("nosuch")


def test_configuration_members_and_cardinality():
    conf = Configuration.of(added=["r1", "r2", "r3"], removed=["r3"])
    assert conf.included == {"r1", "r2", "r3"}
    assert conf.excluded == {"r3"}
    assert conf.members == {"r1", "r2"}
    # cardinality counts pairs, so an add/remove pair counts twice
    assert conf.cardinality == 4
    assert conf.well_formed


def test_configuration_not_well_formed_when_removing_stranger():
    assert not Configuration.of(added=["r1"], removed=["r2"]).well_formed


@given(confs, confs)
def test_configuration_join_is_union(a, b):
    assert a.join(b).pairs == a.pairs | b.pairs
    assert a.leq(a.join(b))


@given(values)
def test_json_roundtrip(v):
    assert LatticeValue.from_json(v.to_json()) == v


@given(values, values)
def test_canonical_bytes_injective_on_samples(a, b):
    if a != b:
        assert a.canonical_bytes != b.canonical_bytes


def _verify_maj_reference(responders, base, pending):
    """Independent re-statement: check the strict majority condition on every
    join-combination of pending configurations over the base."""
    pending = list(pending)
    for k in range(len(pending) + 1):
        for combo in itertools.combinations(pending, k):
            conf = base
            for d in combo:
                conf = conf.join(d)
            members = conf.members
            if len(responders & members) * 2 <= len(members):
                return False
    return True


def test_verify_maj_plain_majority():
    base = Configuration.of(added=["r1", "r2", "r3"])
    assert verify_maj({"r1", "r2"}, base, set())
    assert not verify_maj({"r1"}, base, set())


def test_verify_maj_needs_majority_in_every_combination():
    base = Configuration.of(added=["r1", "r2", "r3"])
    grown = Configuration.of(added=["r1", "r2", "r3", "r4", "r5"])
    # {r1, r2} is a majority of 3 but not of 5
    assert not verify_maj({"r1", "r2"}, base, {grown})
    assert verify_maj({"r1", "r2", "r3"}, base, {grown})


def test_verify_maj_with_removal_combination():
    base = Configuration.of(added=["r1", "r2", "r3", "r4"])
    evict = Configuration.of(added=["r4"], removed=["r4"])
    # after eviction only 3 members remain, so 2 of {r1,r2,r3} still suffice,
    # but a set leaning on r4 does not
    assert verify_maj({"r1", "r2", "r3"}, base, {evict})
    assert not verify_maj({"r3", "r4"}, base, {evict})


@given(
    st.frozensets(st.sampled_from(["r1", "r2", "r3", "r4", "r5"]), max_size=5),
    confs,
    st.frozensets(confs, max_size=3),
)
def test_verify_maj_matches_reference(responders, base, pending):
    assert verify_maj(responders, base, pending) == _verify_maj_reference(responders, base, pending)
