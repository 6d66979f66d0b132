"""Client state machine for the long-lived protocol.

The client drains externally supplied inputs into its signed ledgers, proposes
their join, gathers ACK/NACK responses until the responders hold a majority in
every pending configuration combination, and then decides or refines.  Remote
decisions are merged; incomparable ones are scanned for common ackers, which
yields verifiable accusations.
"""

from __future__ import annotations

import hashlib
from collections import deque

from .accountability import Accusation, EvidenceItem, violations_for
from .crypto import KIND_FS
from .lattice import Configuration, LatticeValue, ObjectValue, verify_maj
from .messages import (
    Ack,
    AccusationMsg,
    Decision,
    Ledger,
    Nack,
    Proposal,
    SignedMessage,
    extract_ledger,
    sign_message,
    sign_value,
)

WAITING = "waiting"
PROPOSING = "proposing"

BROADCAST = "*"


class Client:
    def __init__(self, cid: str, initial_conf: Configuration, oracle, obj_kind: str):
        self.id = cid
        self.oracle = oracle
        self.handle = oracle.handle(cid)
        self.obj_kind = obj_kind
        self.initial_conf = initial_conf

        self.status = WAITING
        self.dest: frozenset = frozenset()
        self.nack_bool = False
        self.active_prop_nb = -1
        self.active_out_nb = 0
        self.prop_v = LatticeValue.bottom(obj_kind)
        self.obj_ledger = Ledger()
        self.conf_ledger = Ledger.of([sign_value(self.handle, initial_conf)])
        self.ack_ledger: dict[int, dict[str, SignedMessage]] = {}
        self.pend_conf: set[Configuration] = set()
        self.resp_set: set[str] = set()
        self.last_dec = LatticeValue(ObjectValue.bottom(obj_kind), initial_conf)
        self.out_v: list[LatticeValue] = []
        self.accusation = Accusation.empty()
        self.in_buffer: deque = deque()

        # bookkeeping for trace checkers, not part of the protocol state
        self.own_input_log: list[tuple[int, object]] = []  # (out index at drain, value)
        self.decided_log: list[dict] = []
        self.propose_count = 0

    # -- inputs --------------------------------------------------------------

    def enqueue_input(self, obj_value: ObjectValue | None, conf_value: Configuration | None):
        self.in_buffer.append((obj_value, conf_value))

    def poll(self):
        """Drain buffered inputs and start a proposal; only enabled while waiting."""
        if self.status != WAITING or not self.in_buffer:
            return []
        while self.in_buffer:
            obj_value, conf_value = self.in_buffer.popleft()
            if obj_value is not None and not obj_value.is_bottom():
                self.obj_ledger = self.obj_ledger.union(Ledger.of([sign_value(self.handle, obj_value)]))
                self.own_input_log.append((self.active_out_nb, obj_value))
            if conf_value is not None and conf_value.pairs:
                self.conf_ledger = self.conf_ledger.union(Ledger.of([sign_value(self.handle, conf_value)]))
                self.own_input_log.append((self.active_out_nb, conf_value))
        return self._propose()

    # -- proposing and deciding -----------------------------------------------

    def _propose(self):
        self.prop_v = self._extract_own()
        self.pend_conf.add(self.prop_v.conf)
        self.status = PROPOSING
        self.active_prop_nb += 1
        self.propose_count += 1
        self.ack_ledger[self.active_out_nb] = {}
        self.resp_set = set()
        self.nack_bool = False
        self.dest = self.prop_v.conf.included - self.last_dec.conf.excluded
        body = Proposal(self.obj_ledger, self.conf_ledger, self.last_dec, self.active_prop_nb)
        msg = sign_message(self.handle, body)
        return [(r, msg) for r in sorted(self.dest)]

    def _extract_own(self) -> LatticeValue:
        # own ledgers only ever hold entries that were verified on adoption
        from .messages import join_ledger_values

        return join_ledger_values(self.obj_ledger, self.conf_ledger, self.obj_kind)

    def _maybe_finish(self):
        if self.status != PROPOSING:
            return []
        if not verify_maj(self.resp_set, self.last_dec.conf, self.pend_conf):
            return []
        if self.nack_bool:
            return self._propose()
        return self._decide()

    def _decide(self):
        value = self.prop_v
        assert self.last_dec.leq(value), "decided value must extend the last decision"
        self.decided_log.append(
            {
                "index": self.active_out_nb,
                "value": value,
                "last_dec_before": self.last_dec,
                "pend_conf_before": frozenset(self.pend_conf),
            }
        )
        acks = tuple(sorted(self.ack_ledger[self.active_out_nb].items()))
        body = Decision(self.obj_ledger, self.conf_ledger, acks)
        self.out_v.append(value)
        self.last_dec = value
        self.pend_conf = set()
        self.active_out_nb += 1
        self.status = WAITING
        return [(BROADCAST, sign_message(self.handle, body))]

    # -- accusation helpers ----------------------------------------------------

    def _accuse(self, accused: str, items):
        """Adopt new evidence; the caller must supply genuinely violating items."""
        candidate = self.accusation.with_evidence(accused, items)
        assert violations_for(accused, candidate.items_for(accused), self.oracle), (
            f"evidence against {accused} does not verify"
        )
        self.accusation = candidate
        return [(BROADCAST, sign_message(self.handle, AccusationMsg(self.accusation)))]

    # -- message handlers --------------------------------------------------------

    def on_message(self, sender: str, msg: SignedMessage):
        if not msg.verify(self.oracle):
            return [], False
        if sender in self.accusation.accused:
            return [], False
        body = msg.body
        if isinstance(body, Ack):
            return self.on_ack(sender, msg)
        if isinstance(body, Nack):
            return self.on_nack(sender, msg)
        if isinstance(body, Decision):
            return self.on_decision(sender, msg)
        if isinstance(body, AccusationMsg):
            return self.on_accusation(sender, msg)
        return [], False

    def on_ack(self, r: str, msg: SignedMessage):
        ack: Ack = msg.body
        if (
            self.status != PROPOSING
            or r not in self.dest
            or r in self.ack_ledger[self.active_out_nb]
            or ack.prop_nb != self.active_prop_nb
            or ack.prop_digest != self.prop_v.digest
            or msg.sig.kind != KIND_FS
            or msg.sig.timestamp != self.prop_v.conf.cardinality
        ):
            return [], False
        if self.prop_v.conf in ack.pend_conf:
            self.ack_ledger[self.active_out_nb][r] = msg
            for conf in ack.pend_conf:
                if not conf.leq(self.last_dec.conf):
                    self.pend_conf.add(conf)
            self.resp_set.add(r)
            return self._maybe_finish(), True
        item = EvidenceItem.of_message(msg, preimages=[(self.prop_v.digest, self.prop_v)])
        return self._accuse(r, [item]), True

    def on_nack(self, r: str, msg: SignedMessage):
        nack: Nack = msg.body
        if (
            self.status != PROPOSING
            or r not in self.dest
            or nack.prop_nb != self.active_prop_nb
            or nack.prop_digest != self.prop_v.digest
            or msg.sig.kind != KIND_FS
            or msg.sig.timestamp < self.last_dec.conf.cardinality
        ):
            return [], False
        nack_v, bad = extract_ledger(nack.d_obj_ledger, nack.d_conf_ledger, self.oracle, self.obj_kind)
        if bad:
            return self._accuse(r, [EvidenceItem.of_message(msg)]), True
        if nack_v.leq(self.prop_v):
            return [], False
        self.obj_ledger = self.obj_ledger.union(nack.d_obj_ledger)
        self.conf_ledger = self.conf_ledger.union(nack.d_conf_ledger)
        self.nack_bool = True
        self.resp_set.add(r)
        return self._maybe_finish(), True

    def on_decision(self, sender: str, msg: SignedMessage):
        decision: Decision = msg.body
        out_remote, bad = extract_ledger(decision.obj_ledger, decision.conf_ledger, self.oracle, self.obj_kind)
        if bad:
            return self._accuse(sender, [EvidenceItem.of_message(msg)]), True
        last_dec_old = self.last_dec
        self.last_dec = self.last_dec.join(out_remote)
        self.pend_conf = {c for c in self.pend_conf if not c.leq(self.last_dec.conf)}
        self.obj_ledger = self.obj_ledger.union(decision.obj_ledger)
        self.conf_ledger = self.conf_ledger.union(decision.conf_ledger)

        outbound = []
        remote_acks = decision.acks()
        newly_accused = False
        for i, local_value in enumerate(self.out_v):
            if local_value.leq(out_remote) or out_remote.leq(local_value):
                continue
            common = (set(self.ack_ledger.get(i, {})) & set(remote_acks)) - self.accusation.accused
            for m in sorted(common):
                local_ack = self.ack_ledger[i][m]
                remote_ack = remote_acks[m]
                if remote_ack.body.prop_digest != out_remote.digest:
                    continue
                items = [
                    EvidenceItem.of_message(local_ack, preimages=[(local_value.digest, local_value)]),
                    EvidenceItem.of_message(remote_ack, preimages=[(out_remote.digest, out_remote)]),
                ]
                self.accusation = self.accusation.with_evidence(m, items)
                assert violations_for(m, self.accusation.items_for(m), self.oracle)
                newly_accused = True
        if newly_accused:
            outbound.append((BROADCAST, sign_message(self.handle, AccusationMsg(self.accusation))))

        if not self.last_dec.conf.leq(last_dec_old.conf) or not out_remote.leq(self.prop_v):
            outbound = self._propose() + outbound
        else:
            outbound = self._maybe_finish() + outbound
        return outbound, True

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

    # -- observability -------------------------------------------------------

    def state_digest(self) -> str:
        parts = (
            self.status,
            str(self.active_prop_nb),
            str(self.active_out_nb),
            self.prop_v.digest,
            self.last_dec.digest,
            str(len(self.obj_ledger.entries)),
            str(len(self.conf_ledger.entries)),
            ",".join(sorted(self.resp_set)),
            ",".join(sorted(self.accusation.accused)),
            ",".join(sorted(c.canonical_bytes.hex() for c in self.pend_conf)),
            ",".join(v.digest for v in self.out_v),
            "1" if self.nack_bool else "0",
        )
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]
