"""Self-certifying group identities and source admission.

A group controller derives ``G = sha256(K_pub || u64be(counter))`` from its
Ed25519 key. Packets carry the signer's public key so any router or
receiver can check the group binding and the signature without contacting
anybody. Extra sources present a controller-issued certificate.

Wire layouts (all integers big-endian)::

    packet = "NMC1" u16 uri_len uri G[32] u64 seq u32 payload_len payload
             u8 has_cert [cert] signer_pub[32] u8 counter_present [u64 counter]
             sig[64]
    cert   = S[32] G[32] u8 has_lifetime [u64 not_before u64 not_after]
             issuer_pub[32] u64 issuer_counter sig[64]

The packet signature covers every byte before it. The certificate carries
its issuer key and counter so the chain can be checked from the packet
alone.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .bloom import encode_b64
from .errors import CertMismatch, MalformedPacket, MalformedUri, WeakSeed
from .naming import canonicalize, parse

MAGIC = b"NMC1"
KEY_MAGIC = b"NMK1"
MIN_SEED_BYTES = 32
KEY_LEN = 32
SIG_LEN = 64
DIGEST_LEN = 32
_CERT_DOMAIN = b"NMC1-cert\x00"
_U64_MAX = (1 << 64) - 1


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def group_id_for(pub_key: bytes, counter: int) -> bytes:
    return digest(pub_key + counter.to_bytes(8, "big"))


def source_id_for(pub_key: bytes) -> bytes:
    return digest(pub_key)


def group_credential(group_id: bytes) -> str:
    """Text for the ``/sec-credentials`` slot of a group URI."""
    return encode_b64(group_id)


def _raw_pub(private: Ed25519PrivateKey) -> bytes:
    return private.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )


def _sign(sec_key: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(sec_key).sign(message)


def _valid_sig(pub_key: bytes, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(pub_key).verify(signature, message)
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


def _key_from_seed(seed: bytes) -> tuple[bytes, bytes]:
    if len(seed) < MIN_SEED_BYTES:
        raise WeakSeed(f"seed has {len(seed)} bytes, need at least {MIN_SEED_BYTES}")
    sec = digest(seed)
    return _raw_pub(Ed25519PrivateKey.from_private_bytes(sec)), sec


@dataclass(frozen=True)
class SourceKeys:
    pub_key: bytes
    sec_key: bytes = field(repr=False)

    @classmethod
    def from_seed(cls, seed: bytes) -> SourceKeys:
        return cls(*_key_from_seed(seed))

    @property
    def source_id(self) -> bytes:
        return source_id_for(self.pub_key)


@dataclass(frozen=True)
class GroupIdentity:
    pub_key: bytes
    sec_key: bytes = field(repr=False)
    counter: int = 0
    group_id: bytes = b""

    def __post_init__(self) -> None:
        if not self.group_id:
            object.__setattr__(self, "group_id", group_id_for(self.pub_key, self.counter))

    @property
    def credential(self) -> str:
        return group_credential(self.group_id)


def create_group_identity(seed: bytes, counter: int = 0) -> GroupIdentity:
    if not 0 <= counter <= _U64_MAX:
        raise ValueError("counter must fit in 64 bits")
    pub, sec = _key_from_seed(seed)
    return GroupIdentity(pub, sec, counter)


def verify_group_binding(pub_key: bytes, counter: int, group_id: bytes) -> bool:
    return group_id_for(pub_key, counter) == group_id


# -- certificates --------------------------------------------------------------

@dataclass(frozen=True)
class SourceCertificate:
    source_id: bytes
    group_id: bytes
    lifetime: tuple[int, int] | None
    issuer_pub: bytes
    issuer_counter: int
    signature: bytes = b""

    def body(self) -> bytes:
        out = [self.source_id, self.group_id]
        if self.lifetime is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01" + struct.pack(">QQ", *self.lifetime))
        out.append(self.issuer_pub + struct.pack(">Q", self.issuer_counter))
        return b"".join(out)

    def encode(self) -> bytes:
        return self.body() + self.signature

    def signature_valid(self) -> bool:
        return _valid_sig(self.issuer_pub, self.signature, _CERT_DOMAIN + self.body())

    def chain_valid(self, group_id: bytes) -> bool:
        """Issued for ``group_id`` by the key that group id was derived from."""
        return (
            self.group_id == group_id
            and group_id_for(self.issuer_pub, self.issuer_counter) == group_id
            and self.signature_valid()
        )

    def in_lifetime(self, now: float) -> bool:
        if self.lifetime is None:
            return True
        not_before, not_after = self.lifetime
        return not_before <= now <= not_after


def issue_certificate(
    controller: GroupIdentity,
    source_pub: bytes,
    lifetime: tuple[int, int] | None = None,
) -> SourceCertificate:
    if lifetime is not None:
        nb, na = lifetime
        if not 0 <= nb <= na <= _U64_MAX:
            raise ValueError(f"bad lifetime {lifetime}")
        lifetime = (int(nb), int(na))
    unsigned = SourceCertificate(
        source_id_for(source_pub),
        controller.group_id,
        lifetime,
        controller.pub_key,
        controller.counter,
    )
    return replace(unsigned, signature=_sign(controller.sec_key, _CERT_DOMAIN + unsigned.body()))


# -- packets -------------------------------------------------------------------

class Verdict(str, enum.Enum):
    ACCEPTED = "Accepted"
    BAD_GROUP_BINDING = "BadGroupBinding"
    BAD_SIGNATURE = "BadSignature"
    BAD_CERTIFICATE = "BadCertificate"
    EXPIRED = "Expired"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SignedPacket:
    group_uri: str
    group_id: bytes
    seq: int
    payload: bytes
    signer_pub: bytes
    counter: int | None
    certificate: SourceCertificate | None
    signature: bytes = b""

    def signed_bytes(self) -> bytes:
        uri = self.group_uri.encode("utf-8")
        out = [
            MAGIC,
            struct.pack(">H", len(uri)),
            uri,
            self.group_id,
            struct.pack(">QI", self.seq, len(self.payload)),
            self.payload,
        ]
        if self.certificate is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01" + self.certificate.encode())
        out.append(self.signer_pub)
        if self.counter is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01" + struct.pack(">Q", self.counter))
        return b"".join(out)

    def encode(self) -> bytes:
        return self.signed_bytes() + self.signature


def sign_packet(
    signer: GroupIdentity | SourceKeys,
    cert: SourceCertificate | None,
    group_uri: str,
    seq: int,
    payload: bytes,
) -> SignedPacket:
    uri = canonicalize(group_uri)
    if cert is not None:
        if cert.source_id != source_id_for(signer.pub_key):
            raise CertMismatch("certificate names a different source key")
        group_id, counter = cert.group_id, None
    elif isinstance(signer, GroupIdentity):
        group_id, counter = signer.group_id, signer.counter
    else:
        raise CertMismatch("a non-controller source must present a certificate")
    if not _credential_matches(uri, group_id):
        raise CertMismatch("URI credential names a different group id")
    unsigned = SignedPacket(uri, group_id, seq, bytes(payload), signer.pub_key, counter, cert)
    return replace(unsigned, signature=_sign(signer.sec_key, unsigned.signed_bytes()))


def _credential_matches(group_uri: str, group_id: bytes) -> bool:
    """A credential that spells out a 32-byte id must equal ``group_id``;
    any other credential text is an opaque reference and is not checked."""
    cred = parse(group_uri).sec_credentials
    if cred is None or len(cred) != 43:
        return True
    return cred == group_credential(group_id)


def verify_packet(pkt: SignedPacket, now: float) -> Verdict:
    """Judge a packet using nothing but its own contents and ``now``."""
    try:
        return _verify(pkt, now)
    except (ValueError, TypeError, struct.error, AttributeError, OverflowError):
        return Verdict.BAD_SIGNATURE


def _verify(pkt: SignedPacket, now: float) -> Verdict:
    cert = pkt.certificate
    if cert is None:
        if pkt.counter is None or not verify_group_binding(pkt.signer_pub, pkt.counter, pkt.group_id):
            return Verdict.BAD_GROUP_BINDING
    else:
        if not cert.chain_valid(pkt.group_id):
            return Verdict.BAD_CERTIFICATE
        if cert.source_id != source_id_for(pkt.signer_pub):
            return Verdict.BAD_CERTIFICATE
    try:
        if not _credential_matches(pkt.group_uri, pkt.group_id):
            return Verdict.BAD_GROUP_BINDING
    except MalformedUri:
        return Verdict.BAD_GROUP_BINDING
    if not _valid_sig(pkt.signer_pub, pkt.signature, pkt.signed_bytes()):
        return Verdict.BAD_SIGNATURE
    if cert is not None and not cert.in_lifetime(now):
        return Verdict.EXPIRED
    return Verdict.ACCEPTED


# -- decoding ------------------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedPacket("truncated input")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def flag(self) -> bool:
        (b,) = self.unpack(">B")
        if b > 1:
            raise MalformedPacket(f"flag byte must be 0 or 1, got {b}")
        return bool(b)


def _read_cert(r: _Reader) -> SourceCertificate:
    source_id = r.take(DIGEST_LEN)
    group_id = r.take(DIGEST_LEN)
    lifetime = r.unpack(">QQ") if r.flag() else None
    issuer_pub = r.take(KEY_LEN)
    (issuer_counter,) = r.unpack(">Q")
    return SourceCertificate(source_id, group_id, lifetime, issuer_pub, issuer_counter, r.take(SIG_LEN))


def decode_certificate(data: bytes) -> SourceCertificate:
    r = _Reader(data)
    cert = _read_cert(r)
    if r.pos != len(data):
        raise MalformedPacket("trailing bytes after certificate")
    return cert


def decode_packet(data: bytes) -> SignedPacket:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise MalformedPacket("bad magic")
    (uri_len,) = r.unpack(">H")
    try:
        uri = r.take(uri_len).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedPacket("group URI is not UTF-8") from exc
    group_id = r.take(DIGEST_LEN)
    seq, payload_len = r.unpack(">QI")
    payload = r.take(payload_len)
    cert = _read_cert(r) if r.flag() else None
    signer_pub = r.take(KEY_LEN)
    counter = r.unpack(">Q")[0] if r.flag() else None
    signature = r.take(SIG_LEN)
    if r.pos != len(data):
        raise MalformedPacket("trailing bytes after packet")
    return SignedPacket(uri, group_id, seq, payload, signer_pub, counter, cert, signature)


def verify_bytes(data: bytes, now: float) -> Verdict:
    """Decode then verify; undecodable input raises ``MalformedPacket``."""
    return verify_packet(decode_packet(data), now)


# -- key files -----------------------------------------------------------------

def write_key(path: str | Path, key: bytes) -> None:
    if len(key) != KEY_LEN:
        raise ValueError("keys are 32 bytes")
    Path(path).write_bytes(KEY_MAGIC + key)


def read_key(path: str | Path) -> bytes:
    data = Path(path).read_bytes()
    if len(data) != 4 + KEY_LEN or data[:4] != KEY_MAGIC:
        raise MalformedPacket(f"{path} is not a key file")
    return data[4:]


def public_from_secret(sec_key: bytes) -> bytes:
    return _raw_pub(Ed25519PrivateKey.from_private_bytes(sec_key))
