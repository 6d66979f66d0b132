"""Accusations: evidence bundles, merging, and third-party proof verification.

An accusation pairs a set of accused process ids with, per accused, a bundle
of evidence items.  Each item wraps either a full signed message or a signed
ledger entry, both verifiable by anyone holding the model verification keys.
Because ACK messages carry only a digest of the acknowledged value, evidence
items embed the preimage lattice values needed to recompute comparability.

``verify_proof`` is a pure function: an accusation verifies iff every accused
process has at least one item set exhibiting a genuine protocol violation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from math import ceil
from typing import Optional

from .lattice import Configuration, LatticeValue, length_prefixed, verify_maj
from .messages import (
    Ledger,
    SignedMessage,
    SignedValue,
    validate_ledger,
)

KIND_MESSAGE = "message"
KIND_ENTRY = "entry"


@dataclass(frozen=True)
class EvidenceItem:
    """One piece of evidence against an accused process.

    ``preimages`` maps value digests to the lattice values behind them, so the
    hashed fields of ACK/NACK messages can be checked for comparability.
    ``pend_conf``/``last_dec`` carry the decider's context for quorum checks
    on DECISION evidence.
    """

    kind: str
    message: Optional[SignedMessage] = None
    entry: Optional[SignedValue] = None
    preimages: tuple = ()  # of (digest-hex, LatticeValue)
    pend_conf: frozenset = frozenset()  # of Configuration
    last_dec: Optional[LatticeValue] = None

    @classmethod
    def of_message(cls, msg: SignedMessage, preimages=(), pend_conf=(), last_dec=None) -> "EvidenceItem":
        return cls(
            KIND_MESSAGE,
            message=msg,
            preimages=tuple(sorted(preimages, key=lambda p: p[0])),
            pend_conf=frozenset(pend_conf),
            last_dec=last_dec,
        )

    @classmethod
    def of_entry(cls, entry: SignedValue) -> "EvidenceItem":
        return cls(KIND_ENTRY, entry=entry)

    @cached_property
    def canonical_bytes(self) -> bytes:
        parts = [b"I", self.kind.encode()]
        if self.message is not None:
            parts.append(length_prefixed(self.message.canonical_bytes))
        if self.entry is not None:
            parts.append(length_prefixed(self.entry.canonical_bytes))
        for digest, value in self.preimages:
            parts.append(length_prefixed(bytes.fromhex(digest)) + length_prefixed(value.canonical_bytes))
        for conf in sorted(self.pend_conf, key=lambda c: c.canonical_bytes):
            parts.append(length_prefixed(conf.canonical_bytes))
        if self.last_dec is not None:
            parts.append(length_prefixed(self.last_dec.canonical_bytes))
        return b"".join(parts)

    def subject(self) -> str:
        return self.message.sender if self.message is not None else self.entry.signer

    def to_json(self):
        out = {"kind": self.kind}
        if self.message is not None:
            out["message"] = self.message.to_json()
        if self.entry is not None:
            out["entry"] = self.entry.to_json()
        if self.preimages:
            out["preimages"] = [[d, v.to_json()] for d, v in self.preimages]
        if self.pend_conf:
            out["pendConf"] = sorted((c.to_json() for c in self.pend_conf), key=lambda d: d["pairs"])
        if self.last_dec is not None:
            out["lastDec"] = self.last_dec.to_json()
        return out

    @classmethod
    def from_json(cls, obj) -> "EvidenceItem":
        return cls(
            obj["kind"],
            message=SignedMessage.from_json(obj["message"]) if "message" in obj else None,
            entry=SignedValue.from_json(obj["entry"]) if "entry" in obj else None,
            preimages=tuple((d, LatticeValue.from_json(v)) for d, v in obj.get("preimages", [])),
            pend_conf=frozenset(Configuration.from_json(c) for c in obj.get("pendConf", [])),
            last_dec=LatticeValue.from_json(obj["lastDec"]) if "lastDec" in obj else None,
        )


@dataclass(frozen=True)
class Accusation:
    """Accused process ids with their evidence bundles; an immutable value."""

    proofs: tuple = ()  # sorted tuple of (accused-id, frozenset[EvidenceItem])

    @classmethod
    def empty(cls) -> "Accusation":
        return cls(())

    @classmethod
    def single(cls, accused: str, items) -> "Accusation":
        return cls(((accused, frozenset(items)),))

    @cached_property
    def accused(self) -> frozenset:
        return frozenset(b for b, _ in self.proofs)

    def items_for(self, accused: str) -> frozenset:
        for b, items in self.proofs:
            if b == accused:
                return items
        return frozenset()

    def with_evidence(self, accused: str, items) -> "Accusation":
        merged = {b: set(existing) for b, existing in self.proofs}
        merged.setdefault(accused, set()).update(items)
        return Accusation(tuple(sorted((b, frozenset(v)) for b, v in merged.items())))

    def merge(self, other: "Accusation") -> "Accusation":
        result = self
        for b, items in other.proofs:
            result = result.with_evidence(b, items)
        return result

    def restricted_to(self, accused: str) -> "Accusation":
        return Accusation.single(accused, self.items_for(accused))

    def __bool__(self) -> bool:
        return bool(self.proofs)

    @cached_property
    def canonical_bytes(self) -> bytes:
        parts = [b"A"]
        for b, items in self.proofs:
            body = b"".join(length_prefixed(x) for x in sorted(i.canonical_bytes for i in items))
            parts.append(length_prefixed(b.encode()) + length_prefixed(body))
        return b"".join(parts)

    def to_json(self):
        return {
            "proofs": [
                [b, sorted((i.to_json() for i in items), key=lambda d: json.dumps(d, sort_keys=True))]
                for b, items in self.proofs
            ]
        }

    @classmethod
    def from_json(cls, obj) -> "Accusation":
        return cls(
            tuple(
                sorted(
                    (b, frozenset(EvidenceItem.from_json(i) for i in items))
                    for b, items in obj["proofs"]
                )
            )
        )


# ---------------------------------------------------------------------------
# Proof verification


def _valid_items(accused: str, items, verifier):
    """Discard items not genuinely signed by the accused."""
    kept = []
    for item in items:
        if item.kind == KIND_MESSAGE:
            msg = item.message
            if msg is not None and msg.sender == accused and msg.verify(verifier):
                kept.append(item)
        elif item.kind == KIND_ENTRY:
            entry = item.entry
            if (
                entry is not None
                and entry.signer == accused
                and verifier.verify(entry.signing_preimage(), entry.sig, accused)
            ):
                kept.append(item)
    return kept


def _ack_preimages(item):
    """Resolve an ACK item's acknowledged value from its bundled preimages."""
    ack = item.message.body
    for digest, value in item.preimages:
        if digest == ack.prop_digest and value.digest == digest:
            return value
    return None


def violations_for(accused: str, items, verifier) -> list:
    """All protocol violations exhibited by the (already validated) items.

    Each violation is a short reason string; an empty list means the evidence
    is consistent with benign behavior.
    """
    valid = _valid_items(accused, items, verifier)
    found = []

    # (a) incomparable acknowledged values, recomputed from preimages
    acked = []
    for item in valid:
        if item.kind == KIND_MESSAGE and item.message.body.type == "ACK":
            value = _ack_preimages(item)
            if value is not None:
                acked.append((item, value))
                # (d) an honest replica registers the acknowledged configuration
                # as pending before responding
                if item.message.body.pend_conf and value.conf not in item.message.body.pend_conf:
                    found.append("ack-missing-pending-configuration")
                if not item.message.body.pend_conf:
                    found.append("ack-missing-pending-configuration")
        if item.kind == KIND_MESSAGE and item.message.body.type == "A1ACK":
            acked.append((item, item.message.body.value))
    for i in range(len(acked)):
        for j in range(i + 1, len(acked)):
            a, b = acked[i][1], acked[j][1]
            if not (a.leq(b) or b.leq(a)):
                found.append("incomparable-acks")

    # (b) ledger entries attributed to a process without its valid signature
    for item in valid:
        if item.kind != KIND_MESSAGE:
            continue
        body = item.message.body
        ledgers = []
        if body.type == "PROPOSAL":
            ledgers = [body.obj_ledger, body.conf_ledger]
        elif body.type == "NACK":
            ledgers = [body.d_obj_ledger, body.d_conf_ledger]
        elif body.type == "A1PROPOSAL":
            ledgers = [body.in_ledger]
        elif body.type == "A1NACK":
            ledgers = [body.d_ledger]
        for ledger in ledgers:
            if validate_ledger(ledger, verifier):
                found.append("forged-ledger-entry")
                break

    # (c) decisions without a supporting set of matching signed ACKs
    for item in valid:
        if item.kind != KIND_MESSAGE:
            continue
        body = item.message.body
        if body.type == "A1DECISION":
            good = 0
            for replica, ack_msg in body.ack_ledger:
                if not (ack_msg.sender == replica and ack_msg.verify(verifier)):
                    found.append("decision-with-invalid-ack")
                    continue
                if ack_msg.body.type != "A1ACK" or ack_msg.body.value != body.out_value:
                    found.append("decision-ack-value-mismatch")
                    continue
                good += 1
            if good < ceil((body.n_replicas + 1) / 2):
                found.append("decision-without-quorum")
        elif body.type == "DECISION" and item.last_dec is not None:
            decided = None
            for digest, value in item.preimages:
                if value.digest == digest:
                    decided = value
            ackers = set()
            for replica, ack_msg in body.ack_ledger:
                if (
                    ack_msg.sender == replica
                    and ack_msg.verify(verifier)
                    and ack_msg.body.type == "ACK"
                    and decided is not None
                    and ack_msg.body.prop_digest == decided.digest
                ):
                    ackers.add(replica)
            if not verify_maj(ackers, item.last_dec.conf, item.pend_conf):
                found.append("decision-without-quorum")

    # (e) two distinct input values signed by the same process (one-shot rule)
    entries = [item.entry for item in valid if item.kind == KIND_ENTRY]
    distinct = {e.value for e in entries}
    if len(distinct) > 1:
        found.append("double-proposed-inputs")

    return found


def verify_proof(accusation: Accusation, verifier) -> bool:
    """True iff every accused process has verifiable evidence of a violation.

    Vacuously true for an empty accusation; never raises on malformed input.
    """
    try:
        for accused, items in accusation.proofs:
            if not violations_for(accused, items, verifier):
                return False
        return True
    except Exception:
        return False


# ---------------------------------------------------------------------------
# Bundle files: accusation + model verification keys, as canonical JSON


def bundle_to_json(accusation: Accusation, oracle) -> str:
    owners = set(accusation.accused)
    for _, items in accusation.proofs:
        for item in items:
            if item.message is not None:
                owners.add(item.message.sender)
                body = item.message.body
                for ledger_attr in ("obj_ledger", "conf_ledger", "d_obj_ledger", "d_conf_ledger", "in_ledger", "d_ledger"):
                    ledger = getattr(body, ledger_attr, None)
                    if isinstance(ledger, Ledger):
                        owners.update(e.signer for e in ledger.entries)
                for _, ack_msg in getattr(body, "ack_ledger", ()):
                    owners.add(ack_msg.sender)
            if item.entry is not None:
                owners.add(item.entry.signer)
    doc = {
        "version": 1,
        "secrets": {owner: oracle.secret_for(owner).hex() for owner in sorted(owners)},
        "accusation": accusation.to_json(),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def bundle_from_json(text: str):
    """Returns (accusation, verifier); raises ValueError on undecodable input."""
    from .crypto import BundleVerifier

    try:
        doc = json.loads(text)
        accusation = Accusation.from_json(doc["accusation"])
        verifier = BundleVerifier({k: bytes.fromhex(v) for k, v in doc["secrets"].items()})
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ValueError(f"undecodable evidence bundle: {exc}") from exc
    return accusation, verifier
