"""One-shot lattice agreement that tolerates Byzantine clients.

The configuration is static (N replicas, plain signatures, no key rotation).
Every input travels inside a signed ledger, so a client that proposes two
different values leaves two entries under its own signature: any party holding
both has an irrefutable proof.  Decisions carry the quorum of signed ACKs that
justified them, which lets receivers audit fake decisions and equivocating
replicas.
"""

from __future__ import annotations

import hashlib

from .accountability import Accusation, EvidenceItem, violations_for
from .lattice import ObjectValue
from .messages import (
    A1Ack,
    A1Decision,
    A1Nack,
    A1Proposal,
    AccusationMsg,
    Ledger,
    SignedMessage,
    sign_message,
    sign_value,
)

PASSIVE = "passive"
ACTIVE = "active"

BROADCAST = "*"


def a1_threshold(n_replicas: int) -> int:
    return (n_replicas + 2) // 2  # ceil((N+1)/2)


def a1_extract(ledger: Ledger, verifier, obj_kind: str):
    """Join a one-shot input ledger.

    Returns (value, bad_entries, double_proposers).  A proposer with two
    distinct signed values is reported rather than joined blindly.
    """
    value = ObjectValue.bottom(obj_kind)
    bad = []
    doubles: dict[str, list] = {}
    for entry in sorted(ledger.entries, key=lambda e: e.sig.tag):
        if not isinstance(entry.value, ObjectValue) or not verifier.verify(
            entry.signing_preimage(), entry.sig, entry.signer
        ):
            bad.append(entry)
            continue
        doubles.setdefault(entry.signer, []).append(entry)
        value = value.join(entry.value)
    doubles = {m: entries for m, entries in doubles.items() if len({e.value for e in entries}) > 1}
    return value, bad, doubles


class A1Client:
    def __init__(self, cid: str, replica_ids, oracle, obj_kind: str, init_value: ObjectValue | None = None):
        self.id = cid
        self.oracle = oracle
        self.handle = oracle.handle(cid)
        self.obj_kind = obj_kind
        self.replica_ids = tuple(sorted(replica_ids))
        self.threshold = a1_threshold(len(self.replica_ids))

        self.status = PASSIVE
        self.ack_cnt = 0
        self.nack_cnt = 0
        self.active_prop_nb = -1
        self.prop_v = ObjectValue.bottom(obj_kind)
        self.in_ledger = Ledger()
        self.ack_ledger: dict[str, SignedMessage] = {}
        self.responded: set[str] = set()
        self.out_v: ObjectValue | None = None
        self.accusation = Accusation.empty()
        self.init_v = init_value
        self.started = False
        self.propose_count = 0

    # -- proposing -------------------------------------------------------------

    def poll(self):
        if self.started or self.init_v is None:
            return []
        self.started = True
        self.in_ledger = self.in_ledger.union(Ledger.of([sign_value(self.handle, self.init_v)]))
        return self._propose()

    def _propose(self):
        value, bad, doubles = a1_extract(self.in_ledger, self.oracle, self.obj_kind)
        if doubles:
            out = self._accuse_doubles(doubles)
            self.status = PASSIVE
            return out
        self.prop_v = value
        self.status = ACTIVE
        self.active_prop_nb += 1
        self.propose_count += 1
        self.ack_cnt = 0
        self.nack_cnt = 0
        self.ack_ledger = {}
        self.responded = set()
        msg = sign_message(self.handle, A1Proposal(self.in_ledger, self.active_prop_nb))
        return [(r, msg) for r in self.replica_ids]

    def _accuse_doubles(self, doubles):
        for m, entries in sorted(doubles.items()):
            items = [EvidenceItem.of_entry(e) for e in entries]
            self.accusation = self.accusation.with_evidence(m, items)
            assert violations_for(m, self.accusation.items_for(m), self.oracle)
        return [(BROADCAST, sign_message(self.handle, AccusationMsg(self.accusation)))]

    # -- message handlers --------------------------------------------------------

    def on_message(self, sender: str, msg: SignedMessage):
        if not msg.verify(self.oracle):
            return [], False
        body = msg.body
        if isinstance(body, A1Ack):
            return self.on_ack(sender, msg)
        if isinstance(body, A1Nack):
            return self.on_nack(sender, msg)
        if isinstance(body, A1Decision):
            return self.on_decision(sender, msg)
        if isinstance(body, AccusationMsg):
            return self.on_accusation(sender, msg)
        return [], False

    def on_ack(self, r: str, msg: SignedMessage):
        ack: A1Ack = msg.body
        if (
            self.status != ACTIVE
            or r not in self.replica_ids
            or r in self.responded
            or ack.prop_nb != self.active_prop_nb
        ):
            return [], False
        # a mismatched ACK is dropped: on its own it proves nothing irrefutable
        if ack.value != self.prop_v:
            return [], False
        self.responded.add(r)
        self.ack_cnt += 1
        self.ack_ledger[r] = msg
        return self._evaluate(), True

    def on_nack(self, r: str, msg: SignedMessage):
        nack: A1Nack = msg.body
        if (
            self.status != ACTIVE
            or r not in self.replica_ids
            or r in self.responded
            or nack.prop_nb != self.active_prop_nb
        ):
            return [], False
        value, bad, doubles = a1_extract(nack.d_ledger, self.oracle, self.obj_kind)
        if bad:
            return [], False
        if doubles:
            return self._accuse_doubles(doubles), True
        if value.leq(self.prop_v):
            return [], False
        self.in_ledger = self.in_ledger.union(nack.d_ledger)
        self.responded.add(r)
        self.nack_cnt += 1
        return self._evaluate(), True

    def _evaluate(self):
        if self.status != ACTIVE or self.ack_cnt + self.nack_cnt < self.threshold:
            return []
        if self.nack_cnt > 0:
            return self._propose()
        self.out_v = self.prop_v
        self.status = PASSIVE
        acks = tuple(sorted(self.ack_ledger.items()))
        body = A1Decision(self.out_v, acks, len(self.replica_ids))
        return [(BROADCAST, sign_message(self.handle, body))]

    def on_decision(self, q: str, msg: SignedMessage):
        decision: A1Decision = msg.body
        remote_acks = decision.acks()
        fake = any(
            not isinstance(a.body, A1Ack) or a.body.value != decision.out_value
            for a in remote_acks.values()
        )
        if fake:
            self.accusation = self.accusation.with_evidence(q, [EvidenceItem.of_message(msg)])
            assert violations_for(q, self.accusation.items_for(q), self.oracle)
            self.status = PASSIVE
            return [(BROADCAST, sign_message(self.handle, AccusationMsg(self.accusation)))], True
        remote_v = decision.out_value
        if remote_v.leq(self.prop_v) or self.prop_v.leq(remote_v):
            return [], False
        common = set(self.ack_ledger) & set(remote_acks)
        if not common:
            return [], False
        for b in sorted(common):
            items = [
                EvidenceItem.of_message(self.ack_ledger[b]),
                EvidenceItem.of_message(remote_acks[b]),
            ]
            self.accusation = self.accusation.with_evidence(b, items)
            assert violations_for(b, self.accusation.items_for(b), self.oracle)
        self.status = PASSIVE
        return [(BROADCAST, sign_message(self.handle, AccusationMsg(self.accusation)))], True

    def on_accusation(self, sender: str, msg: SignedMessage):
        incoming: Accusation = msg.body.accusation
        changed = False
        for accused, items in incoming.proofs:
            if items <= self.accusation.items_for(accused):
                continue
            if violations_for(accused, items, self.oracle):
                self.accusation = self.accusation.with_evidence(accused, items)
                changed = True
        return [], changed

    def state_digest(self) -> str:
        parts = (
            self.status,
            str(self.active_prop_nb),
            self.prop_v.canonical_bytes.hex(),
            self.out_v.canonical_bytes.hex() if self.out_v is not None else "-",
            str(len(self.in_ledger.entries)),
            str(self.ack_cnt),
            str(self.nack_cnt),
            ",".join(sorted(self.accusation.accused)),
        )
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


class A1Replica:
    def __init__(self, rid: str, oracle, obj_kind: str):
        self.id = rid
        self.oracle = oracle
        self.handle = oracle.handle(rid)
        self.obj_kind = obj_kind
        self.in_ledger = Ledger()
        self.rep_v = ObjectValue.bottom(obj_kind)
        self.accusation = Accusation.empty()
        self.rep_v_history = [self.rep_v]

    def on_message(self, sender: str, msg: SignedMessage):
        if not msg.verify(self.oracle):
            return [], False
        if isinstance(msg.body, A1Proposal):
            return self.on_proposal(sender, msg.body)
        return [], False

    def on_proposal(self, q: str, prop: A1Proposal):
        value, bad, doubles = a1_extract(prop.in_ledger, self.oracle, self.obj_kind)
        if bad:
            return [], False
        if doubles:
            for m, entries in sorted(doubles.items()):
                self.accusation = self.accusation.with_evidence(
                    m, [EvidenceItem.of_entry(e) for e in entries]
                )
                assert violations_for(m, self.accusation.items_for(m), self.oracle)
            return [], True
        merged = self.in_ledger.union(prop.in_ledger)
        if self.rep_v.leq(value):
            self.in_ledger = merged
            self.rep_v = value
            self.rep_v_history.append(self.rep_v)
            reply = A1Ack(value, prop.prop_nb)
        else:
            delta = self.in_ledger.diff(prop.in_ledger)
            self.in_ledger = merged
            self.rep_v = self.rep_v.join(value)
            self.rep_v_history.append(self.rep_v)
            reply = A1Nack(delta, prop.prop_nb)
        return [(q, sign_message(self.handle, reply))], True

    def state_digest(self) -> str:
        parts = (
            self.rep_v.canonical_bytes.hex(),
            str(len(self.in_ledger.entries)),
            ",".join(sorted(self.accusation.accused)),
        )
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]
