"""Key management: PUF key -> 256-bit PUF-based key -> positional keystreams.

The keystream is SHA-256 in counter mode with a domain tag, so any byte range
can be produced without generating what precedes it::

    block_i = sha256(key || tag || u64le(i))
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from dataclasses import dataclass

from .puf import PufKey

BLOCK = 32
KEYSTREAM_LIMIT = 1 << 32


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class KeystreamDomain(enum.Enum):
    CODE = b"COD"
    SIGNATURE = b"SIG"

    @property
    def tag(self) -> bytes:
        return self.value


@dataclass(frozen=True)
class PufBasedKey:
    bytes: bytes

    def __post_init__(self) -> None:
        if len(self.bytes) != 32:
            raise ValueError(f"PUF-based key must be 32 bytes, got {len(self.bytes)}")

    @classmethod
    def from_hex(cls, text: str) -> "PufBasedKey":
        text = text.strip()
        if len(text) != 64:
            raise ValueError("key must be 64 hex characters")
        try:
            return cls(bytes.fromhex(text))
        except ValueError:
            raise ValueError("key must be 64 hex characters") from None

    def hex(self) -> str:
        return self.bytes.hex()

    def __repr__(self) -> str:
        return "PufBasedKey(<256 bits>)"


def derive_master_key(puf_key: PufKey, context: bytes = b"") -> PufBasedKey:
    return PufBasedKey(sha256(puf_key.to_bytes() + bytes(context)))


def _block(key: PufBasedKey, domain: KeystreamDomain, index: int) -> bytes:
    return hashlib.sha256(key.bytes + domain.tag + struct.pack("<Q", index)).digest()


def keystream_bytes(key: PufBasedKey, domain: KeystreamDomain, offset: int, length: int) -> bytes:
    """Bytes ``[offset, offset + length)`` of the keystream for ``domain``."""
    if offset < 0 or length < 0 or offset + length > KEYSTREAM_LIMIT:
        raise ValueError(f"keystream range [{offset}, {offset + length}) outside [0, 2**32)")
    if length == 0:
        return b""
    first, last = offset // BLOCK, (offset + length - 1) // BLOCK
    stream = b"".join(_block(key, domain, i) for i in range(first, last + 1))
    start = offset - first * BLOCK
    return stream[start:start + length]


class KeystreamReader:
    """Random-access keystream view that keeps the most recent block.

    Equivalent to repeated ``keystream_bytes`` calls; it only avoids rehashing
    when consecutive reads fall in the same 32-byte block.
    """

    def __init__(self, key: PufBasedKey, domain: KeystreamDomain) -> None:
        self._key = key
        self._domain = domain
        self._index = -1
        self._cached = b""

    def read(self, offset: int, length: int) -> bytes:
        if offset < 0 or length < 0 or offset + length > KEYSTREAM_LIMIT:
            raise ValueError(f"keystream range [{offset}, {offset + length}) outside [0, 2**32)")
        out = bytearray()
        pos, end = offset, offset + length
        while pos < end:
            index = pos // BLOCK
            if index != self._index:
                self._cached = _block(self._key, self._domain, index)
                self._index = index
            start = pos - index * BLOCK
            take = min(BLOCK - start, end - pos)
            out += self._cached[start:start + take]
            pos += take
        return bytes(out)


def bind_metadata(key: PufBasedKey, metadata: bytes) -> bytes:
    """Keyed 32-byte tag over the package metadata (header, descriptors, map).

    Folded into the encrypted signature so that a metadata field that does not
    influence decryption (device id, isa, flags) still cannot change unnoticed.
    """
    return hmac.new(key.bytes, b"HDR" + metadata, hashlib.sha256).digest()


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("xor operands differ in length")
    return (int.from_bytes(a, "little") ^ int.from_bytes(b, "little")).to_bytes(len(a), "little")
