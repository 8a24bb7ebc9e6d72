"""Measurements over sealed code: entropy, size overhead, tamper detection, throughput."""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInput
from .hde import RejectReason, device_key, validate
from .package import Mode, SealedPackage, serialize
from .puf import Challenge, DeviceModel


def entropy(data: bytes) -> float:
    """Shannon entropy of the byte histogram, in bits per byte."""
    if not data:
        raise EmptyInput("entropy of an empty input is undefined")
    total = len(data)
    h = -sum(c / total * math.log2(c / total) for c in Counter(bytes(data)).values())
    return max(0.0, h)  # never -0.0


@dataclass(frozen=True)
class OverheadReport:
    original_bytes: int
    package_bytes: int
    delta_percent: float
    mode: Mode
    instruction_count: int

    @property
    def delta_bytes(self) -> int:
        return self.package_bytes - self.original_bytes

    def lines(self) -> list[str]:
        return [
            f"mode={self.mode.name.lower()}",
            f"instruction_count={self.instruction_count}",
            f"original_bytes={self.original_bytes}",
            f"package_bytes={self.package_bytes}",
            f"delta_bytes={self.delta_bytes}",
            f"delta_percent={self.delta_percent:.4f}",
        ]


def overhead_report(original: bytes, pkg: SealedPackage) -> OverheadReport:
    orig = len(original)
    size = len(serialize(pkg))
    delta = 100.0 * (size - orig) / orig if orig else math.inf
    return OverheadReport(orig, size, delta, pkg.header.mode, pkg.header.instruction_count)


@dataclass(frozen=True)
class TamperReport:
    trials: int
    detected: int
    rate: float
    signature_mismatch: int = 0
    malformed_package: int = 0

    def lines(self) -> list[str]:
        return [
            f"trials={self.trials}",
            f"detected={self.detected}",
            f"rate={self.rate:.6f}",
            f"signature_mismatch={self.signature_mismatch}",
            f"malformed_package={self.malformed_package}",
        ]


def flip_bit(data: bytes, bit: int) -> bytes:
    out = bytearray(data)
    out[bit >> 3] ^= 1 << (bit & 7)
    return bytes(out)


def tamper_sweep(
    pkg: bytes,
    trials: int,
    seed: int,
    model: DeviceModel,
    challenge_set: Sequence[Challenge],
    context: bytes = b"",
    bit_range: tuple[int, int] | None = None,
) -> TamperReport:
    """Flip one uniformly chosen bit per trial and count rejections.

    ``bit_range`` restricts flips to package bits ``[lo, hi)``.  With zero
    trials nothing can go undetected, so the rate is reported as 1.0.
    """
    key = device_key(model, challenge_set, context)
    lo, hi = bit_range if bit_range is not None else (0, 8 * len(pkg))
    positions = np.random.default_rng(seed).integers(lo, hi, size=trials)
    reasons: Counter = Counter()
    for bit in positions:
        outcome = validate(flip_bit(pkg, int(bit)), key)
        reasons[outcome.reason] += 1
    detected = trials - reasons[None]
    return TamperReport(
        trials=trials,
        detected=detected,
        rate=detected / trials if trials else 1.0,
        signature_mismatch=reasons[RejectReason.SIGNATURE_MISMATCH],
        malformed_package=reasons[RejectReason.MALFORMED_PACKAGE],
    )


def throughput(func, nbytes: int, repeat: int = 3) -> float:
    """Best-of-``repeat`` MiB/s for ``func()`` processing ``nbytes``."""
    best = math.inf
    for _ in range(repeat):
        start = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - start)
    return nbytes / (1 << 20) / best if best > 0 else math.inf
