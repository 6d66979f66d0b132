"""Ledger algebra, canonical encodings, and envelope signatures."""

from latagree.crypto import Signature, SignatureOracle
from latagree.lattice import Configuration, LatticeValue, ObjectValue
from latagree.messages import (
    Ack,
    Decision,
    Ledger,
    Nack,
    Proposal,
    SignedMessage,
    SignedValue,
    body_from_json,
    extract_ledger,
    join_ledger_values,
    sign_message,
    sign_value,
    validate_ledger,
)


def make_oracle():
    return SignatureOracle(11)


def test_ledger_union_and_diff_operate_on_entries():
    oracle = make_oracle()
    h1, h2 = oracle.handle("c1"), oracle.handle("c2")
    e1 = sign_value(h1, ObjectValue.growset([b"x"]))
    e2 = sign_value(h2, ObjectValue.growset([b"x"]))  # same value, different signer
    a = Ledger.of([e1])
    b = Ledger.of([e2])
    assert a.union(b).entries == {e1, e2}
    assert a.union(b).diff(a).entries == {e2}
    assert a.by_proposer("c1") == {e1}
    assert a.union(b).proposers() == {"c1", "c2"}


def test_validate_ledger_flags_forged_entry():
    oracle = make_oracle()
    good = sign_value(oracle.handle("c1"), ObjectValue.growset([b"x"]))
    forged = SignedValue("c1", ObjectValue.growset([b"evil"]), Signature("c1", 0, "00" * 32, "plain", "00" * 32))
    ledger = Ledger.of([good, forged])
    assert validate_ledger(ledger, oracle) == [forged]
    value, bad = extract_ledger(ledger, Ledger(), oracle, "growset")
    assert value is None and bad == [forged]


def test_extract_joins_all_entries():
    oracle = make_oracle()
    h = oracle.handle("c1")
    obj_l = Ledger.of([sign_value(h, ObjectValue.growset([b"x"])), sign_value(h, ObjectValue.growset([b"y"]))])
    conf_l = Ledger.of([sign_value(h, Configuration.of(added=["r1"]))])
    value, bad = extract_ledger(obj_l, conf_l, oracle, "growset")
    assert bad == []
    assert value.obj.elems == {b"x", b"y"}
    assert value.conf.included == {"r1"}
    assert value == join_ledger_values(obj_l, conf_l, "growset")


def test_signed_message_verify_and_tamper():
    oracle = make_oracle()
    body = Ack("ab" * 32, LatticeValue.bottom(), frozenset(), 0)
    msg = sign_message(oracle.handle("r1"), body, fs_timestamp=2)
    assert msg.verify(oracle)
    tampered = SignedMessage("r2", msg.body, msg.sig)
    assert not tampered.verify(oracle)


def test_message_json_roundtrips():
    oracle = make_oracle()
    h = oracle.handle("c1")
    entry = sign_value(h, ObjectValue.growset([b"x"]))
    conf_entry = sign_value(h, Configuration.of(added=["r1", "r2"]))
    last_dec = LatticeValue(ObjectValue.growset([b"x"]), Configuration.of(added=["r1"]))
    ack = sign_message(oracle.handle("r1"), Ack("cd" * 32, last_dec, frozenset([last_dec.conf]), 1), fs_timestamp=1)
    bodies = [
        Proposal(Ledger.of([entry]), Ledger.of([conf_entry]), last_dec, 3),
        Ack("ab" * 32, last_dec, frozenset([last_dec.conf]), 2),
        Nack("ab" * 32, Ledger.of([entry]), Ledger(), 2),
        Decision(Ledger.of([entry]), Ledger.of([conf_entry]), (("r1", ack),)),
    ]
    for body in bodies:
        msg = sign_message(h, body)
        again = SignedMessage.from_json(msg.to_json())
        assert again == msg
        assert again.canonical_bytes == msg.canonical_bytes
        assert again.verify(oracle)


def test_canonical_bytes_order_independent():
    oracle = make_oracle()
    h = oracle.handle("c1")
    e1 = sign_value(h, ObjectValue.growset([b"x"]))
    e2 = sign_value(h, ObjectValue.growset([b"y"]))
    assert Ledger.of([e1, e2]).canonical_bytes == Ledger.of([e2, e1]).canonical_bytes


def test_body_from_json_rejects_unknown_type():
    import pytest

    with pytest.raises(ValueError):
        body_from_json({"type": "BOGUS"})
