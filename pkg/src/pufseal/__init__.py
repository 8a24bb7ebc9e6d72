"""Seal RISC-V code images to simulated arbiter-PUF devices.

Typical flow::

    model = synthesize_device(seed)
    key = device_key(model, challenges)            # provisioning, out of band
    blob = serialize(seal(code, key, FULL))        # software source
    outcome = unseal(blob, model, challenges)      # target device
"""

from .hde import RejectReason, TrustedImage, ValidationOutcome, decrypt_stream, device_key, unseal, validate
from .keys import KeystreamDomain, PufBasedKey, derive_master_key, keystream_bytes, sha256
from .package import EncryptionMap, FieldDescriptor, FieldFilter, Isa, Mode, SealedPackage, parse, serialize
from .puf import Challenge, DeviceModel, PufKey, generate_puf_key, respond, synthesize_device
from .riscv import InstrClass, InstrParcel, classify, field_bits, iterate_instructions
from .sealer import (
    FULL,
    EncryptionPolicy,
    SelectAll,
    SelectClasses,
    SelectExplicit,
    SelectRandom,
    encrypt_code,
    parse_policy,
    seal,
    select_instructions,
    sign_program,
)

__version__ = "0.1.0"
