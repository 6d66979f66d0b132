"""Replica transition tests: ACK/NACK branches, key forwarding, guards."""

import pytest

from latagree.crypto import DowngradeRefused, SignatureOracle
from latagree.lattice import Configuration, LatticeValue, ObjectValue
from latagree.messages import Ack, Ledger, Nack, Proposal, sign_message, sign_value
from latagree.replica import GUARD_LITERAL, Replica


INIT = Configuration.of(added=["r1", "r2", "r3"])


def make(rid="r1", guard_mode="conf-strict"):
    oracle = SignatureOracle(5)
    return oracle, Replica(rid, INIT, oracle, "growset", guard_mode)


def proposal_from(oracle, cid, values, conf=INIT, last_dec=None, prop_nb=0):
    h = oracle.handle(cid)
    obj_l = Ledger.of([sign_value(h, ObjectValue.growset(values))])
    conf_l = Ledger.of([sign_value(h, conf)])
    last = last_dec if last_dec is not None else LatticeValue(ObjectValue.bottom("growset"), INIT)
    return sign_message(h, Proposal(obj_l, conf_l, last, prop_nb))


def test_fresh_proposal_is_acked_with_conf_cardinality_timestamp():
    oracle, rep = make()
    msg = proposal_from(oracle, "c1", [b"x"])
    out, accepted = rep.on_message("c1", msg)
    assert accepted
    [(dest, reply)] = out
    assert dest == "c1"
    assert isinstance(reply.body, Ack)
    # the ACK signature timestamp must equal the acked configuration's cardinality
    assert reply.sig.timestamp == INIT.cardinality
    assert rep.rep_v.obj.elems == {b"x"}
    assert INIT in reply.body.pend_conf


def test_ack_forwards_keys_destroying_old_ones():
    oracle, rep = make()
    bigger = INIT.join(Configuration.of(added=["r4"]))
    rep.on_message("c1", proposal_from(oracle, "c1", [b"x"], conf=bigger))
    assert rep.t_r == bigger.cardinality
    with pytest.raises(DowngradeRefused):
        rep.handle.fs_sign(b"m", INIT.cardinality)


def test_stale_proposal_gets_nack_with_missing_entries():
    oracle, rep = make()
    rep.on_message("c1", proposal_from(oracle, "c1", [b"x", b"y"]))
    out, accepted = rep.on_message("c2", proposal_from(oracle, "c2", [b"z"]))
    assert accepted
    [(_, reply)] = out
    assert isinstance(reply.body, Nack)
    # the delta ledgers carry exactly what the proposer was missing
    delta_obj = reply.body.d_obj_ledger.joined_value
    assert delta_obj.elems == {b"x", b"y"}
    assert rep.rep_v.obj.elems == {b"x", b"y", b"z"}  # joined, not replaced


def test_guard_skips_proposals_with_older_configuration():
    oracle, rep = make()
    grown = INIT.join(Configuration.of(added=["r4"]))
    rep.last_dec = LatticeValue(ObjectValue.bottom("growset"), grown)
    out, accepted = rep.on_message("c1", proposal_from(oracle, "c1", [b"x"]))
    assert not accepted and out == []


def test_literal_guard_also_skips_equal_configuration():
    oracle, rep = make(guard_mode=GUARD_LITERAL)
    rep.last_dec = LatticeValue(ObjectValue.bottom("growset"), INIT)
    out, accepted = rep.on_message("c1", proposal_from(oracle, "c1", [b"x"]))
    assert not accepted


def test_forged_ledger_entry_dropped_silently():
    from latagree.crypto import Signature
    from latagree.messages import SignedValue

    oracle, rep = make()
    h = oracle.handle("c1")
    forged = SignedValue("c9", ObjectValue.growset([b"evil"]), Signature("c9", 0, "00" * 32, "plain", "00" * 32))
    body = Proposal(Ledger.of([forged]), Ledger.of([sign_value(h, INIT)]), LatticeValue.bottom("growset"), 0)
    out, accepted = rep.on_message("c1", sign_message(h, body))
    assert not accepted and out == []
    assert rep.obj_ledger.entries == frozenset()


def test_monotonicity_checked_across_transitions():
    oracle, rep = make()
    rep.on_message("c1", proposal_from(oracle, "c1", [b"x"]))
    rep.on_message("c2", proposal_from(oracle, "c2", [b"x", b"y"]))
    assert rep.monotonicity_violations == []
