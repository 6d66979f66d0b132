"""Client state machine tests driven without the simulator."""

from latagree.client import BROADCAST, PROPOSING, WAITING, Client
from latagree.crypto import SignatureOracle
from latagree.lattice import Configuration, LatticeValue, ObjectValue
from latagree.messages import Ack, Decision, Proposal, sign_message
from latagree.replica import Replica

INIT = Configuration.of(added=["r1", "r2", "r3"])


def setup():
    oracle = SignatureOracle(8)
    client = Client("c1", INIT, oracle, "growset")
    replicas = {rid: Replica(rid, INIT, oracle, "growset") for rid in ("r1", "r2", "r3")}
    return oracle, client, replicas


def pump(client, replicas, outbound):
    """Hand-deliver client messages to replicas, return their replies."""
    replies = []
    for dest, msg in outbound:
        targets = replicas.values() if dest == BROADCAST else [replicas[dest]]
        for rep in targets:
            out, _ = rep.on_message(client.id, msg)
            replies.extend(out)
    return replies


def test_propose_targets_included_minus_excluded():
    oracle, client, _ = setup()
    client.enqueue_input(ObjectValue.growset([b"x"]), None)
    outbound = client.poll()
    assert client.status == PROPOSING
    assert client.active_prop_nb == 0
    assert {dest for dest, _ in outbound} == {"r1", "r2", "r3"}
    assert all(isinstance(m.body, Proposal) for _, m in outbound)


def test_majority_of_acks_decides():
    oracle, client, replicas = setup()
    client.enqueue_input(ObjectValue.growset([b"x"]), None)
    replies = pump(client, replicas, client.poll())
    decision_out = []
    for _, reply in replies[:2]:  # two of three is a strict majority
        out, accepted = client.on_message(reply.sender, reply)
        assert accepted
        decision_out.extend(out)
    assert client.status == WAITING
    assert len(client.out_v) == 1
    assert client.out_v[0].obj.elems == {b"x"}
    assert client.last_dec == client.out_v[0]
    [(dest, msg)] = decision_out
    assert dest == BROADCAST and isinstance(msg.body, Decision)


def test_ack_with_wrong_timestamp_rejected():
    oracle, client, replicas = setup()
    client.enqueue_input(ObjectValue.growset([b"x"]), None)
    (dest0, prop), *_ = client.poll()
    rep = replicas[dest0]
    (_, ack), = rep.on_message("c1", prop)[0]
    # re-sign the same ACK body at a higher timestamp: guard must reject it
    forged = sign_message(rep.handle, ack.body, fs_timestamp=rep.t_r + 1)
    out, accepted = client.on_message(rep.id, forged)
    assert not accepted
    assert rep.id not in client.resp_set


def test_ack_missing_pending_configuration_raises_accusation():
    oracle, client, replicas = setup()
    client.enqueue_input(ObjectValue.growset([b"x"]), None)
    (dest0, prop), *_ = client.poll()
    rep = replicas[dest0]
    (_, honest_ack), = rep.on_message("c1", prop)[0]
    stripped = Ack(honest_ack.body.prop_digest, honest_ack.body.last_dec, frozenset(), honest_ack.body.prop_nb)
    forged = sign_message(rep.handle, stripped, fs_timestamp=rep.t_r)
    out, accepted = client.on_message(rep.id, forged)
    assert accepted
    assert rep.id in client.accusation.accused
    assert any(isinstance(m.body.accusation, object) for _, m in out)


def test_nack_merges_and_reproposes():
    oracle, client, replicas = setup()
    # r1 already holds y, so it will NACK the bare-x proposal
    other = Client("c2", INIT, oracle, "growset")
    other.enqueue_input(ObjectValue.growset([b"y"]), None)
    for dest, msg in other.poll():
        replicas[dest].on_message("c2", msg)

    client.enqueue_input(ObjectValue.growset([b"x"]), None)
    replies = pump(client, replicas, client.poll())
    nacks = [(s, m) for s, m in [(m.sender, m) for _, m in replies]]
    reproposed = []
    for sender, msg in nacks:
        out, _ = client.on_message(sender, msg)
        reproposed.extend(out)
    # after a majority with at least one NACK the client proposes the join
    assert client.status == PROPOSING
    assert client.prop_v.obj.elems == {b"x", b"y"}
    assert client.active_prop_nb == 1
    assert any(isinstance(m.body, Proposal) for _, m in reproposed)


def test_remote_decision_is_joined():
    oracle, client, replicas = setup()
    other = Client("c2", INIT, oracle, "growset")
    other.enqueue_input(ObjectValue.growset([b"y"]), None)
    replies = pump(other, replicas, other.poll())
    decision = None
    for _, reply in replies:
        for dest, msg in other.on_message(reply.sender, reply)[0]:
            if isinstance(msg.body, Decision):
                decision = msg
    assert decision is not None
    out, accepted = client.on_message("c2", decision)
    assert accepted
    assert client.last_dec.obj.elems == {b"y"}


def test_own_decisions_are_monotone():
    oracle, client, replicas = setup()
    for value in ([b"x"], [b"x", b"y"]):
        client.enqueue_input(ObjectValue.growset(value), None)
        replies = pump(client, replicas, client.poll())
        for _, reply in replies:
            client.on_message(reply.sender, reply)
    assert len(client.out_v) == 2
    assert client.out_v[0].leq(client.out_v[1])
