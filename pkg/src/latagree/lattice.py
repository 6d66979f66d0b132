"""Join-semilattice value types: object lattices, configurations, and their product.

Two concrete object lattices are provided: a grow-only set of opaque byte
strings and a max-register over non-negative integers.  A configuration is a
set of (replica-id, +/-) pairs ordered by inclusion.  Every value type carries
a canonical byte encoding that serves as the hashing and signing preimage
throughout the system.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

GROWSET = "growset"
MAXREG = "maxreg"

ADD = "+"
REMOVE = "-"


class VariantMismatch(TypeError):
    """Raised when joining or comparing values from different object lattices."""


class MalformedPair(ValueError):
    """Raised for configuration pairs that are not (replica-id, '+' | '-')."""


def length_prefixed(data: bytes) -> bytes:
    """4-byte big-endian length prefix followed by the payload."""
    return len(data).to_bytes(4, "big") + data


def digest_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class ObjectValue:
    """An element of one of the two supported object lattices.

    ``kind`` selects the lattice: GROWSET uses ``elems`` (join = union),
    MAXREG uses ``level`` (join = max).  The unused field stays at its
    bottom value so equality and hashing work across constructors.
    """

    kind: str
    elems: frozenset = frozenset()
    level: int = 0

    def __post_init__(self):
        if self.kind not in (GROWSET, MAXREG):
            raise VariantMismatch(f"unknown object lattice variant: {self.kind!r}")
        if self.level < 0:
            raise ValueError("max-register level must be non-negative")

    @classmethod
    def growset(cls, elems=()) -> "ObjectValue":
        return cls(GROWSET, elems=frozenset(e.encode() if isinstance(e, str) else bytes(e) for e in elems))

    @classmethod
    def maxreg(cls, level: int) -> "ObjectValue":
        return cls(MAXREG, level=level)

    @classmethod
    def bottom(cls, kind: str) -> "ObjectValue":
        return cls(kind)

    def is_bottom(self) -> bool:
        return not self.elems and self.level == 0

    def join(self, other: "ObjectValue") -> "ObjectValue":
        self._check_variant(other)
        if self.kind == GROWSET:
            return ObjectValue(GROWSET, elems=self.elems | other.elems)
        return ObjectValue(MAXREG, level=max(self.level, other.level))

    def leq(self, other: "ObjectValue") -> bool:
        self._check_variant(other)
        if self.kind == GROWSET:
            return self.elems <= other.elems
        return self.level <= other.level

    def _check_variant(self, other: "ObjectValue"):
        if self.kind != other.kind:
            raise VariantMismatch(f"cannot combine {self.kind} with {other.kind}")

    @cached_property
    def canonical_bytes(self) -> bytes:
        if self.kind == GROWSET:
            body = b"".join(length_prefixed(e) for e in sorted(self.elems))
            return b"O\x01" + length_prefixed(body)
        return b"O\x02" + self.level.to_bytes(8, "big")

    def to_json(self):
        if self.kind == GROWSET:
            return {"kind": GROWSET, "elems": sorted(e.hex() for e in self.elems)}
        return {"kind": MAXREG, "level": self.level}

    @classmethod
    def from_json(cls, obj) -> "ObjectValue":
        if obj["kind"] == GROWSET:
            return cls.growset(bytes.fromhex(e) for e in obj["elems"])
        return cls.maxreg(int(obj["level"]))


@dataclass(frozen=True)
class Configuration:
    """A finite set of (replica-id, '+' | '-') pairs ordered by inclusion."""

    pairs: frozenset = frozenset()

    def __post_init__(self):
        for pair in self.pairs:
            if (
                not isinstance(pair, tuple)
                or len(pair) != 2
                or not isinstance(pair[0], str)
                or pair[1] not in (ADD, REMOVE)
            ):
                raise MalformedPair(f"bad configuration pair: {pair!r}")

    @classmethod
    def of(cls, added=(), removed=()) -> "Configuration":
        pairs = {(r, ADD) for r in added} | {(r, REMOVE) for r in removed}
        return cls(frozenset(pairs))

    @classmethod
    def bottom(cls) -> "Configuration":
        return cls(frozenset())

    @cached_property
    def included(self) -> frozenset:
        return frozenset(r for r, s in self.pairs if s == ADD)

    @cached_property
    def excluded(self) -> frozenset:
        return frozenset(r for r, s in self.pairs if s == REMOVE)

    @cached_property
    def members(self) -> frozenset:
        return self.included - self.excluded

    @property
    def cardinality(self) -> int:
        # counts pairs, not members
        return len(self.pairs)

    @cached_property
    def well_formed(self) -> bool:
        return self.excluded <= self.included

    def join(self, other: "Configuration") -> "Configuration":
        return Configuration(self.pairs | other.pairs)

    def leq(self, other: "Configuration") -> bool:
        return self.pairs <= other.pairs

    @cached_property
    def canonical_bytes(self) -> bytes:
        body = b"".join(length_prefixed(r.encode() + s.encode()) for r, s in sorted(self.pairs))
        return b"K" + length_prefixed(body)

    def to_json(self):
        return {"pairs": sorted([r, s] for r, s in self.pairs)}

    @classmethod
    def from_json(cls, obj) -> "Configuration":
        return cls(frozenset((r, s) for r, s in obj["pairs"]))


@dataclass(frozen=True)
class LatticeValue:
    """An element of the product lattice: object state paired with a configuration."""

    obj: ObjectValue
    conf: Configuration = field(default_factory=Configuration.bottom)

    @classmethod
    def bottom(cls, kind: str = GROWSET) -> "LatticeValue":
        return cls(ObjectValue.bottom(kind), Configuration.bottom())

    def join(self, other: "LatticeValue") -> "LatticeValue":
        return LatticeValue(self.obj.join(other.obj), self.conf.join(other.conf))

    def leq(self, other: "LatticeValue") -> bool:
        return self.obj.leq(other.obj) and self.conf.leq(other.conf)

    def comparable(self, other: "LatticeValue") -> bool:
        return self.leq(other) or other.leq(self)

    @cached_property
    def canonical_bytes(self) -> bytes:
        return b"L" + length_prefixed(self.obj.canonical_bytes) + length_prefixed(self.conf.canonical_bytes)

    @cached_property
    def digest(self) -> str:
        return digest_hex(self.canonical_bytes)

    def to_json(self):
        return {"obj": self.obj.to_json(), "conf": self.conf.to_json()}

    @classmethod
    def from_json(cls, obj) -> "LatticeValue":
        return cls(ObjectValue.from_json(obj["obj"]), Configuration.from_json(obj["conf"]))


def conf_views(conf: Configuration):
    """The four derived views of a configuration."""
    return conf.included, conf.excluded, conf.members, conf.cardinality


def verify_maj(responders, base: Configuration, pending) -> bool:
    """True iff ``responders`` holds a strict member-majority of every join
    combination of ``base`` with a subset of ``pending``.

    Brute-force over all subsets; pending sets stay small in practice.
    """
    from itertools import combinations

    responders = frozenset(responders)
    pending = list(pending)
    for k in range(len(pending) + 1):
        for subset in combinations(pending, k):
            combined = base
            for conf in subset:
                combined = combined.join(conf)
            members = combined.members
            if len(responders & members) * 2 <= len(members):
                return False
    return True
