"""Wire-level messages and ledgers shared by clients and replicas.

A ledger is a set of signed (proposer, value) entries; indexing by proposer
yields that process's signed values.  Ledger algebra (union, diff) operates on
entries, not on lattice elements.  ``extract_ledger`` validates every entry
signature and joins the values; callers decide what to do on rejection.

Every message travels inside a ``SignedMessage`` envelope whose canonical byte
encoding is both the simulator wire format and the signing preimage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

from .crypto import Signature
from .lattice import (
    Configuration,
    LatticeValue,
    ObjectValue,
    digest_hex,
    length_prefixed,
)


@dataclass(frozen=True)
class SignedValue:
    """One ledger entry: a value bound to its original proposer's signature."""

    signer: str
    value: Union[ObjectValue, Configuration]
    sig: Signature

    @cached_property
    def canonical_bytes(self) -> bytes:
        return (
            b"E"
            + length_prefixed(self.signer.encode())
            + length_prefixed(self.value.canonical_bytes)
            + length_prefixed(self.sig.tag.encode())
        )

    def signing_preimage(self) -> bytes:
        # what the proposer signed: its id bound to the value bytes
        return entry_preimage(self.signer, self.value)

    def to_json(self):
        kind = "conf" if isinstance(self.value, Configuration) else "obj"
        return {"signer": self.signer, "vkind": kind, "value": self.value.to_json(), "sig": self.sig.to_json()}

    @classmethod
    def from_json(cls, obj) -> "SignedValue":
        value = Configuration.from_json(obj["value"]) if obj["vkind"] == "conf" else ObjectValue.from_json(obj["value"])
        return cls(obj["signer"], value, Signature.from_json(obj["sig"]))


def entry_preimage(signer: str, value) -> bytes:
    return b"V" + length_prefixed(signer.encode()) + length_prefixed(value.canonical_bytes)


def sign_value(handle, value) -> SignedValue:
    """Client-side helper: bind a value to its proposer with a plain signature."""
    return SignedValue(handle.owner, value, handle.plain_sign(entry_preimage(handle.owner, value)))


@dataclass(frozen=True)
class Ledger:
    entries: frozenset = frozenset()

    @classmethod
    def of(cls, entries) -> "Ledger":
        return cls(frozenset(entries))

    def union(self, other: "Ledger") -> "Ledger":
        return Ledger(self.entries | other.entries)

    def diff(self, other: "Ledger") -> "Ledger":
        return Ledger(self.entries - other.entries)

    def by_proposer(self, proposer: str) -> frozenset:
        return frozenset(e for e in self.entries if e.signer == proposer)

    def proposers(self) -> frozenset:
        return frozenset(e.signer for e in self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    @cached_property
    def joined_value(self):
        """Join of all entry values; None for the empty ledger."""
        value = None
        for entry in self.entries:
            value = entry.value if value is None else value.join(entry.value)
        return value

    @cached_property
    def canonical_bytes(self) -> bytes:
        body = b"".join(length_prefixed(b) for b in sorted(e.canonical_bytes for e in self.entries))
        return b"G" + length_prefixed(body)

    def to_json(self):
        return sorted((e.to_json() for e in self.entries), key=lambda d: (d["signer"], d["sig"]["tag"]))

    @classmethod
    def from_json(cls, obj) -> "Ledger":
        return cls(frozenset(SignedValue.from_json(e) for e in obj))


def validate_ledger(ledger: Ledger, verifier) -> list:
    """Entries whose signature does not verify against the proposer and value bytes."""
    bad = []
    cache = getattr(verifier, "_entry_cache", None)
    for entry in ledger.entries:
        if cache is not None and entry in cache:
            continue
        if verifier.verify(entry.signing_preimage(), entry.sig, entry.signer):
            if cache is not None:
                cache.add(entry)
        else:
            bad.append(entry)
    return bad


def join_ledger_values(obj_ledger: Ledger, conf_ledger: Ledger, obj_kind: str) -> LatticeValue:
    obj = obj_ledger.joined_value
    if obj is None:
        obj = ObjectValue.bottom(obj_kind)
    conf = conf_ledger.joined_value
    if conf is None:
        conf = Configuration.bottom()
    return LatticeValue(obj, conf)


def extract_ledger(obj_ledger: Ledger, conf_ledger: Ledger, verifier, obj_kind: str):
    """Validate all entry signatures and join the values.

    Returns ``(value, bad_entries)``; the value is None when any entry is
    rejected.  The caller owns the accusation path (clients accuse the sender,
    replicas drop silently).
    """
    bad = validate_ledger(obj_ledger, verifier) + validate_ledger(conf_ledger, verifier)
    if bad:
        return None, bad
    return join_ledger_values(obj_ledger, conf_ledger, obj_kind), []


# ---------------------------------------------------------------------------
# Message bodies


@dataclass(frozen=True)
class Proposal:
    obj_ledger: Ledger
    conf_ledger: Ledger
    last_dec: LatticeValue
    prop_nb: int

    type = "PROPOSAL"

    @cached_property
    def canonical_bytes(self) -> bytes:
        return (
            b"M\x01"
            + length_prefixed(self.obj_ledger.canonical_bytes)
            + length_prefixed(self.conf_ledger.canonical_bytes)
            + length_prefixed(self.last_dec.canonical_bytes)
            + self.prop_nb.to_bytes(8, "big", signed=True)
        )

    def to_json(self):
        return {
            "type": self.type,
            "objL": self.obj_ledger.to_json(),
            "confL": self.conf_ledger.to_json(),
            "lastDec": self.last_dec.to_json(),
            "propNb": self.prop_nb,
        }


@dataclass(frozen=True)
class Ack:
    prop_digest: str  # hash of the canonical encoding of the acknowledged LatticeValue
    last_dec: LatticeValue
    pend_conf: frozenset  # of Configuration
    prop_nb: int

    type = "ACK"

    @cached_property
    def canonical_bytes(self) -> bytes:
        pend = b"".join(length_prefixed(b) for b in sorted(c.canonical_bytes for c in self.pend_conf))
        return (
            b"M\x02"
            + length_prefixed(bytes.fromhex(self.prop_digest))
            + length_prefixed(self.last_dec.canonical_bytes)
            + length_prefixed(pend)
            + self.prop_nb.to_bytes(8, "big", signed=True)
        )

    def to_json(self):
        return {
            "type": self.type,
            "propDigest": self.prop_digest,
            "lastDec": self.last_dec.to_json(),
            "pendConf": sorted((c.to_json() for c in self.pend_conf), key=lambda d: d["pairs"]),
            "propNb": self.prop_nb,
        }


@dataclass(frozen=True)
class Nack:
    prop_digest: str
    d_obj_ledger: Ledger
    d_conf_ledger: Ledger
    prop_nb: int

    type = "NACK"

    @cached_property
    def canonical_bytes(self) -> bytes:
        return (
            b"M\x03"
            + length_prefixed(bytes.fromhex(self.prop_digest))
            + length_prefixed(self.d_obj_ledger.canonical_bytes)
            + length_prefixed(self.d_conf_ledger.canonical_bytes)
            + self.prop_nb.to_bytes(8, "big", signed=True)
        )

    def to_json(self):
        return {
            "type": self.type,
            "propDigest": self.prop_digest,
            "dObjL": self.d_obj_ledger.to_json(),
            "dConfL": self.d_conf_ledger.to_json(),
            "propNb": self.prop_nb,
        }


@dataclass(frozen=True)
class Decision:
    obj_ledger: Ledger
    conf_ledger: Ledger
    ack_ledger: tuple  # sorted tuple of (replica-id, SignedMessage-of-Ack)

    type = "DECISION"

    @cached_property
    def canonical_bytes(self) -> bytes:
        acks = b"".join(
            length_prefixed(r.encode()) + length_prefixed(m.canonical_bytes) for r, m in self.ack_ledger
        )
        return (
            b"M\x04"
            + length_prefixed(self.obj_ledger.canonical_bytes)
            + length_prefixed(self.conf_ledger.canonical_bytes)
            + length_prefixed(acks)
        )

    def acks(self) -> dict:
        return dict(self.ack_ledger)

    def to_json(self):
        return {
            "type": self.type,
            "objL": self.obj_ledger.to_json(),
            "confL": self.conf_ledger.to_json(),
            "ackL": [[r, m.to_json()] for r, m in self.ack_ledger],
        }


@dataclass(frozen=True)
class AccusationMsg:
    # payload is kept opaque here; the accountability module owns its shape
    accusation: object

    type = "ACCUSATION"

    @cached_property
    def canonical_bytes(self) -> bytes:
        return b"M\x05" + length_prefixed(self.accusation.canonical_bytes)

    def to_json(self):
        return {"type": self.type, "accusation": self.accusation.to_json()}


# A1LA (one-shot) bodies: static lattice, no configurations, no hashes on ACKs.


@dataclass(frozen=True)
class A1Proposal:
    in_ledger: Ledger
    prop_nb: int

    type = "A1PROPOSAL"

    @cached_property
    def canonical_bytes(self) -> bytes:
        return b"M\x11" + length_prefixed(self.in_ledger.canonical_bytes) + self.prop_nb.to_bytes(8, "big", signed=True)

    def to_json(self):
        return {"type": self.type, "inL": self.in_ledger.to_json(), "propNb": self.prop_nb}


@dataclass(frozen=True)
class A1Ack:
    value: ObjectValue
    prop_nb: int

    type = "A1ACK"

    @cached_property
    def canonical_bytes(self) -> bytes:
        return b"M\x12" + length_prefixed(self.value.canonical_bytes) + self.prop_nb.to_bytes(8, "big", signed=True)

    def to_json(self):
        return {"type": self.type, "value": self.value.to_json(), "propNb": self.prop_nb}


@dataclass(frozen=True)
class A1Nack:
    d_ledger: Ledger
    prop_nb: int

    type = "A1NACK"

    @cached_property
    def canonical_bytes(self) -> bytes:
        return b"M\x13" + length_prefixed(self.d_ledger.canonical_bytes) + self.prop_nb.to_bytes(8, "big", signed=True)

    def to_json(self):
        return {"type": self.type, "dL": self.d_ledger.to_json(), "propNb": self.prop_nb}


@dataclass(frozen=True)
class A1Decision:
    out_value: ObjectValue
    ack_ledger: tuple  # sorted tuple of (replica-id, SignedMessage-of-A1Ack)
    n_replicas: int

    type = "A1DECISION"

    @cached_property
    def canonical_bytes(self) -> bytes:
        acks = b"".join(
            length_prefixed(r.encode()) + length_prefixed(m.canonical_bytes) for r, m in self.ack_ledger
        )
        return (
            b"M\x14"
            + length_prefixed(self.out_value.canonical_bytes)
            + length_prefixed(acks)
            + self.n_replicas.to_bytes(4, "big")
        )

    def acks(self) -> dict:
        return dict(self.ack_ledger)

    def to_json(self):
        return {
            "type": self.type,
            "outV": self.out_value.to_json(),
            "ackL": [[r, m.to_json()] for r, m in self.ack_ledger],
            "n": self.n_replicas,
        }


Body = Union[Proposal, Ack, Nack, Decision, AccusationMsg, A1Proposal, A1Ack, A1Nack, A1Decision]


@dataclass(frozen=True)
class SignedMessage:
    sender: str
    body: Body
    sig: Signature

    @cached_property
    def canonical_bytes(self) -> bytes:
        return (
            b"S"
            + length_prefixed(self.sender.encode())
            + length_prefixed(self.body.canonical_bytes)
            + length_prefixed(self.sig.tag.encode())
        )

    def signing_preimage(self) -> bytes:
        return message_preimage(self.sender, self.body)

    @cached_property
    def digest(self) -> str:
        return digest_hex(self.canonical_bytes)

    def verify(self, verifier) -> bool:
        return verifier.verify(self.signing_preimage(), self.sig, self.sender)

    def to_json(self):
        return {"sender": self.sender, "body": self.body.to_json(), "sig": self.sig.to_json()}

    @classmethod
    def from_json(cls, obj) -> "SignedMessage":
        return cls(obj["sender"], body_from_json(obj["body"]), Signature.from_json(obj["sig"]))


def message_preimage(sender: str, body: Body) -> bytes:
    return b"P" + length_prefixed(sender.encode()) + length_prefixed(body.canonical_bytes)


def sign_message(handle, body: Body, fs_timestamp: Optional[int] = None) -> SignedMessage:
    """Wrap a body in a signed envelope; forward-secure when a timestamp is given."""
    preimage = message_preimage(handle.owner, body)
    if fs_timestamp is None:
        sig = handle.plain_sign(preimage)
    else:
        sig = handle.fs_sign(preimage, fs_timestamp)
    return SignedMessage(handle.owner, body, sig)


def body_from_json(obj) -> Body:
    from .accountability import Accusation  # local import: avoids a module cycle

    t = obj["type"]
    if t == "PROPOSAL":
        return Proposal(
            Ledger.from_json(obj["objL"]),
            Ledger.from_json(obj["confL"]),
            LatticeValue.from_json(obj["lastDec"]),
            int(obj["propNb"]),
        )
    if t == "ACK":
        return Ack(
            obj["propDigest"],
            LatticeValue.from_json(obj["lastDec"]),
            frozenset(Configuration.from_json(c) for c in obj["pendConf"]),
            int(obj["propNb"]),
        )
    if t == "NACK":
        return Nack(
            obj["propDigest"],
            Ledger.from_json(obj["dObjL"]),
            Ledger.from_json(obj["dConfL"]),
            int(obj["propNb"]),
        )
    if t == "DECISION":
        return Decision(
            Ledger.from_json(obj["objL"]),
            Ledger.from_json(obj["confL"]),
            tuple((r, SignedMessage.from_json(m)) for r, m in obj["ackL"]),
        )
    if t == "ACCUSATION":
        return AccusationMsg(Accusation.from_json(obj["accusation"]))
    if t == "A1PROPOSAL":
        return A1Proposal(Ledger.from_json(obj["inL"]), int(obj["propNb"]))
    if t == "A1ACK":
        return A1Ack(ObjectValue.from_json(obj["value"]), int(obj["propNb"]))
    if t == "A1NACK":
        return A1Nack(Ledger.from_json(obj["dL"]), int(obj["propNb"]))
    if t == "A1DECISION":
        return A1Decision(
            ObjectValue.from_json(obj["outV"]),
            tuple((r, SignedMessage.from_json(m)) for r, m in obj["ackL"]),
            int(obj["n"]),
        )
    raise ValueError(f"unknown message type: {t!r}")
