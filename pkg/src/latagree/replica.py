"""Replica state machine for the long-lived protocol.

Replicas passively serve client proposals: they ACK a proposal that contains
everything they have seen, forwarding their signing key to the proposal's
configuration cardinality first, or NACK with the ledger entries the proposer
is missing.  Decisions are absorbed by joining.
"""

from __future__ import annotations

from .lattice import Configuration, LatticeValue, ObjectValue
from .messages import (
    Ack,
    Decision,
    Ledger,
    Nack,
    Proposal,
    SignedMessage,
    extract_ledger,
    sign_message,
)

# How to read the proposal guard that skips clients with stale knowledge.
# "conf-strict" serves a proposer whose last decided configuration equals the
# replica's (the normal case) and skips only strictly older configurations;
# "literal" also skips the equal case.
GUARD_CONF_STRICT = "conf-strict"
GUARD_LITERAL = "literal"


class Replica:
    def __init__(self, rid: str, initial_conf: Configuration, oracle, obj_kind: str,
                 guard_mode: str = GUARD_CONF_STRICT):
        self.id = rid
        self.oracle = oracle
        self.handle = oracle.handle(rid)
        self.obj_kind = obj_kind
        self.guard_mode = guard_mode
        self.obj_ledger = Ledger()
        self.conf_ledger = Ledger()
        self.rep_v = LatticeValue.bottom(obj_kind)
        self.pend_conf: set[Configuration] = set()
        self.last_dec = LatticeValue.bottom(obj_kind)
        self.t_r = initial_conf.cardinality
        self.monotonicity_violations: list[str] = []

    # -- helpers -----------------------------------------------------------

    def _sign(self, body) -> SignedMessage:
        return sign_message(self.handle, body, fs_timestamp=self.t_r)

    def _snapshot(self):
        return self.rep_v, self.last_dec, frozenset(self.pend_conf)

    def _check_monotone(self, before, where: str):
        rep_v, last_dec, pend = before
        if not rep_v.leq(self.rep_v):
            self.monotonicity_violations.append(f"{where}: repV decreased")
        if not last_dec.leq(self.last_dec):
            self.monotonicity_violations.append(f"{where}: lastDec decreased")
        for conf in pend - set(self.pend_conf):
            # entries may only leave pendConf by being absorbed into lastDec
            if not conf.leq(self.last_dec.conf):
                self.monotonicity_violations.append(f"{where}: pendConf lost an unabsorbed entry")

    def state_digest(self) -> str:
        import hashlib

        parts = (
            self.rep_v.digest,
            self.last_dec.digest,
            str(self.t_r),
            str(len(self.obj_ledger.entries)),
            str(len(self.conf_ledger.entries)),
            ",".join(sorted(c.canonical_bytes.hex() for c in self.pend_conf)),
        )
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]

    # -- handlers ----------------------------------------------------------

    def on_message(self, sender: str, msg: SignedMessage):
        """Returns (outbound, accepted): outbound is a list of (dest, SignedMessage)."""
        if not msg.verify(self.oracle):
            return [], False
        body = msg.body
        if isinstance(body, Proposal):
            return self.on_proposal(sender, body)
        if isinstance(body, Decision):
            return self.on_decision(sender, body)
        return [], False  # replicas ignore ACK/NACK/ACCUSATION traffic

    def _guard_skips(self, last_dec_remote: LatticeValue) -> bool:
        if self.guard_mode == GUARD_LITERAL:
            return last_dec_remote.leq(self.last_dec)
        return (
            last_dec_remote.conf.leq(self.last_dec.conf)
            and last_dec_remote.conf != self.last_dec.conf
        )

    def on_proposal(self, sender: str, body: Proposal):
        if self._guard_skips(body.last_dec):
            return [], False
        before = self._snapshot()
        self.last_dec = self.last_dec.join(body.last_dec)
        prop_v, bad = extract_ledger(body.obj_ledger, body.conf_ledger, self.oracle, self.obj_kind)
        if bad:
            self._check_monotone(before, "proposal")
            return [], False
        self.obj_ledger = self.obj_ledger.union(body.obj_ledger)
        self.conf_ledger = self.conf_ledger.union(body.conf_ledger)
        if self.rep_v.leq(prop_v):
            self.rep_v = prop_v
            self.pend_conf.add(prop_v.conf)
            self.t_r = self.rep_v.conf.cardinality
            self.handle.update_fs_keys(self.t_r)
            reply = Ack(prop_v.digest, self.last_dec, frozenset(self.pend_conf), body.prop_nb)
        else:
            self.rep_v = self.rep_v.join(prop_v)
            reply = Nack(
                prop_v.digest,
                self.obj_ledger.diff(body.obj_ledger),
                self.conf_ledger.diff(body.conf_ledger),
                body.prop_nb,
            )
        self._check_monotone(before, "proposal")
        return [(sender, self._sign(reply))], True

    def on_decision(self, sender: str, body: Decision):
        before = self._snapshot()
        value, bad = extract_ledger(body.obj_ledger, body.conf_ledger, self.oracle, self.obj_kind)
        if bad:
            return [], False
        self.last_dec = self.last_dec.join(value)
        self.pend_conf = {c for c in self.pend_conf if not c.leq(self.last_dec.conf)}
        self.obj_ledger = self.obj_ledger.union(body.obj_ledger)
        self.conf_ledger = self.conf_ledger.union(body.conf_ledger)
        self._check_monotone(before, "decision")
        return [], True
