"""Device-side decryption engine: stream-decrypt, re-sign, validate.

The decryptor walks the ciphertext one parcel at a time.  Encrypted parcels
hide their length bits, so for each mapped parcel the first halfword is
decrypted first, the length is read from the recovered low bits, and only then
is the rest of the parcel handled.  This works because the keystream is
addressed by code offset, not by how much of it has been consumed.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .errors import FormatError, MapExhausted, TruncatedParcel
from .keys import KeystreamDomain, KeystreamReader, PufBasedKey, derive_master_key
from .package import Mode, SealedPackage, metadata_bytes, parse
from .puf import Challenge, DeviceModel, generate_puf_key
from .riscv import classify_word, parcel_length
from .sealer import compressed_field_mask, decrypt_signature, field_masks

FULL_CHUNK = 4096


class RejectReason(enum.Enum):
    SIGNATURE_MISMATCH = "signature_mismatch"
    MALFORMED_PACKAGE = "malformed_package"


@dataclass(frozen=True)
class TrustedImage:
    code: bytes = field(repr=False)
    signature: bytes
    device_id: int

    def __post_init__(self) -> None:
        if hashlib.sha256(self.code).digest() != self.signature:
            raise ValueError("trusted image does not match its signature")


@dataclass(frozen=True)
class ValidationOutcome:
    image: TrustedImage | None = None
    reason: RejectReason | None = None

    @property
    def accepted(self) -> bool:
        return self.image is not None

    @classmethod
    def accept(cls, image: TrustedImage) -> "ValidationOutcome":
        return cls(image=image)

    @classmethod
    def reject(cls, reason: RejectReason) -> "ValidationOutcome":
        return cls(reason=reason)


def iter_decrypt(pkg: SealedPackage, key: PufBasedKey) -> Iterator[bytes]:
    """Yield candidate plaintext in code order, one parcel (or chunk) at a time."""
    h = pkg.header
    ct = pkg.ciphertext
    n = len(ct)
    ks = KeystreamReader(key, KeystreamDomain.CODE)

    if h.mode == Mode.FULL:
        for off in range(0, n, FULL_CHUNK):
            chunk = ct[off:off + FULL_CHUNK]
            pad = ks.read(off, len(chunk))
            yield (int.from_bytes(chunk, "little") ^ int.from_bytes(pad, "little")).to_bytes(len(chunk), "little")
        return

    emap = pkg.map
    count = h.instruction_count
    if h.mode == Mode.FIELD_LEVEL:
        always, by_class = field_masks(pkg.descriptors)
        head_mask = always & 0xFFFF
        tail_mask = always >> 16
        short_mask = compressed_field_mask(always)
    else:
        always, by_class = 0, {}
        head_mask = tail_mask = short_mask = 0xFFFF

    off = k = 0
    while off < n:
        if k >= count:
            raise MapExhausted(f"map exhausted at code offset {off:#x}")
        if not emap[k]:
            length = parcel_length(ct[off])
            if off + length > n:
                raise TruncatedParcel(f"image ends inside a parcel at offset {off:#x}")
            yield ct[off:off + length]
        else:
            if off + 2 > n:
                raise TruncatedParcel(f"image ends inside a parcel at offset {off:#x}")
            pad = int.from_bytes(ks.read(off, 2), "little")
            head = int.from_bytes(ct[off:off + 2], "little") ^ (pad & head_mask)
            length = parcel_length(head & 0xFF)
            if off + length > n:
                raise TruncatedParcel(f"image ends inside a parcel at offset {off:#x}")
            if length == 2:
                word = head ^ (pad & (short_mask ^ head_mask))
            else:
                hi_pad = int.from_bytes(ks.read(off + 2, 2), "little")
                hi = int.from_bytes(ct[off + 2:off + 4], "little") ^ (hi_pad & tail_mask)
                word = head | (hi << 16)
                if h.mode == Mode.FIELD_LEVEL:
                    # opcode bits are plaintext now: class-filtered ranges never cover them
                    extra = by_class.get(classify_word(word), 0) & ~always
                    if extra:
                        word ^= (pad | (hi_pad << 16)) & extra
            yield word.to_bytes(length, "little")
        off += length
        k += 1
    if k != count:
        raise MapExhausted(f"{count - k} map bits left after the last parcel")


def decrypt_stream(pkg: SealedPackage, key: PufBasedKey) -> bytes:
    return b"".join(iter_decrypt(pkg, key))


def validate(pkg_bytes: bytes, key: PufBasedKey) -> ValidationOutcome:
    """Parse, decrypt and check a package against an already-derived key."""
    try:
        pkg = parse(pkg_bytes)
    except FormatError:
        return ValidationOutcome.reject(RejectReason.MALFORMED_PACKAGE)

    digest = hashlib.sha256()
    quarantine = bytearray()
    try:
        for piece in iter_decrypt(pkg, key):
            digest.update(piece)
            quarantine += piece
    except (MapExhausted, TruncatedParcel):
        return ValidationOutcome.reject(RejectReason.SIGNATURE_MISMATCH)

    computed = digest.digest()
    packaged = decrypt_signature(pkg.encrypted_signature, key, metadata_bytes(pkg))
    if not hmac.compare_digest(computed, packaged):
        return ValidationOutcome.reject(RejectReason.SIGNATURE_MISMATCH)
    return ValidationOutcome.accept(TrustedImage(bytes(quarantine), computed, pkg.header.device_id))


def device_key(model: DeviceModel, challenge_set: Sequence[Challenge], context: bytes = b"") -> PufBasedKey:
    return derive_master_key(generate_puf_key(model, challenge_set), context)


def unseal(
    pkg_bytes: bytes,
    model: DeviceModel,
    challenge_set: Sequence[Challenge],
    context: bytes = b"",
) -> ValidationOutcome:
    return validate(pkg_bytes, device_key(model, challenge_set, context))
