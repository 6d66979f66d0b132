"""Modeled signatures: a forward-secure oracle plus plain signatures and hashing.

Signatures are modeled by a deterministic in-process oracle rather than real
asymmetric cryptography.  Each process owns a secret derived from the oracle
seed; a signature is an HMAC-style tag over (kind, timestamp, message digest).
Unforgeability holds in-model because only the oracle computes tags and
adversarial code is handed key handles for its own identity only.

Forward security: the oracle keeps a monotone per-owner timestamp floor.
Raising the floor models destroying old keys - signing below the floor fails
permanently, even for a handle captured by an adversary afterwards.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

T_MAX = 2**63

KIND_FS = "fs"
KIND_PLAIN = "plain"


class DowngradeRefused(Exception):
    """Signing was attempted below the owner's current timestamp floor."""


class TimestampOutOfRange(Exception):
    """A timestamp above the scheme bound was requested."""


@dataclass(frozen=True)
class Signature:
    signer: str
    timestamp: int
    digest: str  # sha256 hex of the canonical message bytes
    kind: str
    tag: str

    def to_json(self):
        return {
            "signer": self.signer,
            "timestamp": self.timestamp,
            "digest": self.digest,
            "kind": self.kind,
            "tag": self.tag,
        }

    @classmethod
    def from_json(cls, obj) -> "Signature":
        return cls(obj["signer"], int(obj["timestamp"]), obj["digest"], obj["kind"], obj["tag"])


def _tag(secret: bytes, kind: str, timestamp: int, digest: str) -> str:
    msg = kind.encode() + timestamp.to_bytes(8, "big") + bytes.fromhex(digest)
    return hmac.new(secret, msg, hashlib.sha256).hexdigest()


def _verify_with_secret(secret: bytes, message: bytes, sig: Signature, signer: str) -> bool:
    if sig.signer != signer:
        return False
    if hashlib.sha256(message).hexdigest() != sig.digest:
        return False
    return hmac.compare_digest(_tag(secret, sig.kind, sig.timestamp, sig.digest), sig.tag)


class KeyHandle:
    """A process's signing capability; the timestamp floor lives in the oracle."""

    def __init__(self, oracle: "SignatureOracle", owner: str):
        self._oracle = oracle
        self.owner = owner

    @property
    def current_timestamp(self) -> int:
        return self._oracle.floor(self.owner)

    def update_fs_keys(self, t: int) -> None:
        self._oracle.update_floor(self.owner, t)

    def fs_sign(self, message: bytes, t: int) -> Signature:
        return self._oracle._sign(self.owner, message, t, KIND_FS)

    def plain_sign(self, message: bytes) -> Signature:
        return self._oracle._sign(self.owner, message, 0, KIND_PLAIN)


class SignatureOracle:
    """Deterministic signing oracle shared by one simulated run.

    Also usable as a standalone verifier: any object exposing
    ``secret_for(owner)`` can verify signatures (see ``BundleVerifier``).
    """

    def __init__(self, seed: int = 0):
        self._root = hashlib.sha256(b"latagree-oracle" + seed.to_bytes(8, "big", signed=True)).digest()
        self._floors: dict[str, int] = {}
        self._entry_cache: set = set()  # ledger entries already verified good
        self.downgrade_attempts: list[tuple[str, int, int]] = []  # (owner, requested t, floor)

    def secret_for(self, owner: str) -> bytes:
        return hashlib.sha256(self._root + owner.encode()).digest()

    def handle(self, owner: str) -> KeyHandle:
        self._floors.setdefault(owner, 0)
        return KeyHandle(self, owner)

    def floor(self, owner: str) -> int:
        return self._floors.get(owner, 0)

    def update_floor(self, owner: str, t: int) -> None:
        if t > T_MAX:
            raise TimestampOutOfRange(f"timestamp {t} exceeds bound {T_MAX}")
        if t > self._floors.get(owner, 0):
            self._floors[owner] = t

    def _sign(self, owner: str, message: bytes, t: int, kind: str) -> Signature:
        if t > T_MAX:
            raise TimestampOutOfRange(f"timestamp {t} exceeds bound {T_MAX}")
        if kind == KIND_FS and t < self._floors.get(owner, 0):
            self.downgrade_attempts.append((owner, t, self._floors[owner]))
            raise DowngradeRefused(f"{owner}: cannot sign at {t} < floor {self._floors[owner]}")
        digest = hashlib.sha256(message).hexdigest()
        return Signature(owner, t, digest, kind, _tag(self.secret_for(owner), kind, t, digest))

    def verify(self, message: bytes, sig: Signature, signer: str) -> bool:
        return _verify_with_secret(self.secret_for(signer), message, sig, signer)

    def fs_verify(self, message: bytes, t: int, sig: Signature, signer: str) -> bool:
        return sig.kind == KIND_FS and sig.timestamp == t and self.verify(message, sig, signer)


class BundleVerifier:
    """Verifier reconstructed from exported per-owner secrets.

    Evidence bundles carry the model secrets of the processes they mention so
    a third party (or the CLI) can re-check signatures offline.  This is a
    modeling artifact: a real forward-secure scheme would ship public keys.
    """

    def __init__(self, secrets: dict[str, bytes]):
        self._secrets = dict(secrets)

    def secret_for(self, owner: str) -> bytes:
        return self._secrets.get(owner, b"")

    def verify(self, message: bytes, sig: Signature, signer: str) -> bool:
        secret = self._secrets.get(signer)
        if secret is None:
            return False
        return _verify_with_secret(secret, message, sig, signer)
