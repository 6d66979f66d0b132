"""Signing oracle tests: forward-secure floors, downgrades, tampering."""

import pytest
from hypothesis import given, strategies as st

from latagree.crypto import (
    T_MAX,
    BundleVerifier,
    DowngradeRefused,
    SignatureOracle,
    TimestampOutOfRange,
)


def test_plain_sign_and_verify():
    oracle = SignatureOracle(1)
    h = oracle.handle("p1")
    sig = h.plain_sign(b"hello")
    assert oracle.verify(b"hello", sig, "p1")
    assert not oracle.verify(b"hellO", sig, "p1")
    assert not oracle.verify(b"hello", sig, "p2")


def test_fs_sign_respects_floor():
    oracle = SignatureOracle(1)
    h = oracle.handle("r1")
    sig = h.fs_sign(b"m", 3)
    assert oracle.fs_verify(b"m", 3, sig, "r1")
    h.update_fs_keys(5)
    # old keys destroyed: same timestamp now refused
    with pytest.raises(DowngradeRefused):
        h.fs_sign(b"m", 3)
    assert oracle.downgrade_attempts == [("r1", 3, 5)]
    # signing at or above the floor still works
    h.fs_sign(b"m", 5)
    h.fs_sign(b"m", 9)


def test_floor_is_monotone():
    oracle = SignatureOracle(0)
    h = oracle.handle("r1")
    h.update_fs_keys(7)
    h.update_fs_keys(2)  # lowering is ignored
    assert h.current_timestamp == 7


def test_timestamp_bound():
    oracle = SignatureOracle(0)
    h = oracle.handle("r1")
    with pytest.raises(TimestampOutOfRange):
        h.fs_sign(b"m", T_MAX + 1)
    with pytest.raises(TimestampOutOfRange):
        h.update_fs_keys(T_MAX + 1)
    h.fs_sign(b"m", T_MAX)  # the bound itself is allowed


def test_signatures_bound_to_signer_and_kind():
    oracle = SignatureOracle(3)
    fs = oracle.handle("r1").fs_sign(b"m", 2)
    # a plain verification context must not accept the same tag re-labelled
    forged = type(fs)(fs.signer, fs.timestamp, fs.digest, "plain", fs.tag)
    assert not oracle.verify(b"m", forged, "r1")


def test_different_seeds_give_different_secrets():
    a = SignatureOracle(1).secret_for("p")
    b = SignatureOracle(2).secret_for("p")
    assert a != b


def test_bundle_verifier_matches_oracle():
    oracle = SignatureOracle(9)
    sig = oracle.handle("p1").plain_sign(b"payload")
    verifier = BundleVerifier({"p1": oracle.secret_for("p1")})
    assert verifier.verify(b"payload", sig, "p1")
    assert not verifier.verify(b"payload", sig, "unknown")
    assert not BundleVerifier({}).verify(b"payload", sig, "p1")


@given(st.binary(max_size=64), st.integers(min_value=0, max_value=1000))
def test_fs_roundtrip_property(message, t):
    oracle = SignatureOracle(4)
    sig = oracle.handle("r").fs_sign(message, t)
    assert oracle.fs_verify(message, t, sig, "r")
    assert not oracle.fs_verify(message, t + 1, sig, "r")
