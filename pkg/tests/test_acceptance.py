"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""

import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

import codegen
import reference
from conftest import ELF_FIXTURES, text_of
from pufseal import analysis, distribution, hde, keys, puf
from pufseal.package import Mode, PackageHeader, overhead_bytes, parse, serialize
from pufseal.riscv import iterate_instructions
from pufseal.sealer import FULL, EncryptionPolicy, parse_policy, seal

RESULTS: dict[int, str] = {}

POLICIES = {
    "full": FULL,
    "partial-0": parse_policy("mode partial\nfraction 0\nseed 11"),
    "partial-0.3": parse_policy("mode partial\nfraction 0.3\nseed 12"),
    "partial-1": parse_policy("mode partial\nfraction 1.0\nseed 13"),
    "fields-ldst-imm": parse_policy(
        "mode fields\nfield loads 20..31\nfield stores 25..31\nfield stores 7..11\n"
    ),
}

STEALTH_POLICIES = {
    "ldst-imm": POLICIES["fields-ldst-imm"],
    "all-above-opcode": parse_policy("mode fields\nfield all 7..31"),
    "branch-jump": parse_policy("mode fields\nfield branches 7..31\nfield jumps 12..31"),
    "mixed": parse_policy("mode fields\nfield all 15..19\nfield loads 20..31\nfield jumps 7..11"),
}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def device():
    model = puf.synthesize_device(0x5EA1)
    challenge_set = puf.random_challenge_set(99)
    return model, challenge_set, hde.device_key(model, challenge_set)


def corpus_images(count: int = 100, seed: int = 2024) -> list[bytes]:
    rng = np.random.default_rng(seed)
    sizes = [64, 65536] + [
        2 * int(round(2 ** rng.uniform(5, 15))) for _ in range(count - 2)
    ]
    mixes = (0.0, 0.3, 0.6)
    return [codegen.random_code(rng, size, compressed=mixes[i % 3]) for i, size in enumerate(sizes)]


@pytest.fixture(scope="module")
def corpus():
    return corpus_images()


@pytest.fixture(scope="module")
def roundtrip(device, corpus):
    """Run criterion 1 once; later criteria reuse its packages."""
    model, challenge_set, key = device
    start = time.perf_counter()
    blobs, failures = [], []
    for i, code in enumerate(corpus):
        for name, policy in POLICIES.items():
            blob = serialize(seal(code, key, policy))
            outcome = hde.unseal(blob, model, challenge_set)
            if not outcome.accepted or outcome.image.code != code:
                failures.append((i, name, outcome.reason))
            blobs.append((name, code, blob))
    return blobs, failures, time.perf_counter() - start


def test_c01_roundtrip_identity(corpus, roundtrip):
    blobs, failures, elapsed = roundtrip
    sizes = [len(c) for c in corpus]
    ok = (
        len(corpus) >= 100 and min(sizes) == 64 and max(sizes) == 65536
        and not failures and elapsed < 60.0
    )
    report(1, ok, f"{len(corpus)} images x {len(POLICIES)} modes, {len(blobs)} round trips, "
                  f"{len(failures)} failures, {elapsed:.1f}s (limit 60s)")


def test_c02_two_way_authentication():
    challenge_set = puf.random_challenge_set(4321)
    rng = np.random.default_rng(77)
    code = codegen.random_code(rng, 256)
    wrong = 0
    for p in range(1000):
        sealer_dev = puf.synthesize_device(2 * p + 1000)
        other_dev = puf.synthesize_device(2 * p + 1001)
        blob = serialize(seal(code, hde.device_key(sealer_dev, challenge_set), FULL))
        wrong += hde.unseal(blob, other_dev, challenge_set).accepted

    key = hde.device_key(puf.synthesize_device(1000), challenge_set)
    forged = 0
    for i in range(1000):
        n = int(rng.integers(1, 512)) * 4
        header = PackageHeader(mode=Mode.FULL, isa=0, flags=0, device_id=i, code_length=n,
                               instruction_count=n // 4, map_length=0, field_count=0)
        body = rng.bytes(n + 32)
        forged += hde.validate(header.pack() + body, key).accepted
    report(2, wrong == 0 and forged == 0,
           f"wrong-device acceptances {wrong}/1000, random-body acceptances {forged}/1000")


def test_c03_tamper_detection(device):
    model, challenge_set, key = device
    policies = [POLICIES["full"], POLICIES["partial-0.3"], POLICIES["fields-ldst-imm"]]
    combos = [(p, path) for path in ELF_FIXTURES for p in policies]
    per = -(-10_000 // len(combos))
    trials = detected = 0
    for i, (policy, path) in enumerate(combos):
        blob = serialize(seal(text_of(path), key, policy))
        r = analysis.tamper_sweep(blob, per, seed=i, model=model, challenge_set=challenge_set)
        trials += r.trials
        detected += r.detected
    report(3, trials >= 10_000 and detected == trials,
           f"{detected}/{trials} single-bit flips rejected over {len(ELF_FIXTURES)} fixtures x 3 modes")


def test_c04_overhead_arithmetic(device):
    _, _, key = device
    mismatches = []
    partial = EncryptionPolicy(Mode.PER_INSTRUCTION)
    for path in ELF_FIXTURES:
        code = text_of(path)
        n = len(iterate_instructions(code))
        for policy, expect in ((FULL, 64), (partial, 64 + -(-n // 8))):
            delta = len(serialize(seal(code, key, policy))) - len(code)
            if delta != expect or delta != overhead_bytes(policy.mode, n):
                mismatches.append((path.name, policy.mode.name, delta, expect))
    rng = np.random.default_rng(10)
    code = b"".join(codegen.word32(rng).to_bytes(4, "little") for _ in range(2560))
    pct = analysis.overhead_report(code, seal(code, key, partial)).delta_percent
    ok = not mismatches and len(code) == 10240 and abs(pct - 3.75) < 1e-9
    report(4, ok, f"{2 * len(ELF_FIXTURES)} fixture checks, {len(mismatches)} mismatches; "
                  f"10 KiB mode-1 delta {pct:.4f}% (expect 3.7500%)")


def test_c05_puf_statistics():
    start = time.perf_counter()
    challenge_set = puf.random_challenge_set(5)
    dists = []
    for p in range(200):
        a = puf.generate_puf_key(puf.synthesize_device(10_000 + 2 * p), challenge_set)
        b = puf.generate_puf_key(puf.synthesize_device(10_001 + 2 * p), challenge_set)
        dists.append(a.hamming(b))
    mean_hd = float(np.mean(dists))

    bits = np.random.default_rng(2024).integers(0, 2, size=(1000, puf.N_STAGES))
    chain_bias = float(puf.respond_many(puf.synthesize_device(7), 0, bits).mean())
    all_bias = np.array([
        [puf.respond_many(puf.synthesize_device(10_000 + d), c, bits).mean() for c in range(puf.N_CHAINS)]
        for d in range(200)
    ])
    mean_bias = float(all_bias.mean())
    in_range = float(((all_bias >= 0.3) & (all_bias <= 0.7)).mean())
    elapsed = time.perf_counter() - start
    ok = 13 <= mean_hd <= 19 and 0.3 <= chain_bias <= 0.7 and 0.3 <= mean_bias <= 0.7 and elapsed < 10
    report(5, ok, f"mean inter-device HD {mean_hd:.2f} over 200 pairs; chain bias (seed 7, chain 0) "
                  f"{chain_bias:.3f}; mean bias {mean_bias:.3f}; chains in [0.3,0.7] {in_range:.1%} "
                  f"(informational); {elapsed:.1f}s")


def test_c06_sha256_vectors():
    vectors = [
        (b"", "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
        (b"abc", "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
        (b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
         "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"),
        (b"a" * 1_000_000, "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0"),
    ]
    bad = [v[0][:8] for v in vectors if keys.sha256(v[0]).hex() != v[1]]
    report(6, not bad, f"{len(vectors) - len(bad)}/{len(vectors)} published vectors match")


def test_c07_streaming_equals_reference(device, roundtrip):
    _, _, key = device
    blobs, _, _ = roundtrip
    diffs = sum(
        hde.decrypt_stream(parse(blob), key) != reference.reference_decrypt(parse(blob), key.bytes)
        for _, _, blob in blobs
    )
    report(7, diffs == 0, f"{len(blobs) - diffs}/{len(blobs)} packages: streaming == whole-buffer reference")


def test_c08_entropy(device):
    _, _, key = device
    lines, ok = [], True
    big = [p for p in ELF_FIXTURES if len(text_of(p)) >= 4096]
    for path in big:
        code = text_of(path)
        h_ct = analysis.entropy(seal(code, key, FULL).ciphertext)
        h_pt = analysis.entropy(code)
        ok &= h_ct >= 7.8 and h_ct > h_pt
        lines.append(f"{path.stem} {h_pt:.2f}->{h_ct:.3f}")
    report(8, ok and len(big) > 0, f"{len(big)} fixtures >= 4 KiB: " + ", ".join(lines))


def test_c09_wire_fidelity(tmp_path, device):
    _, _, key = device
    store = distribution.PackageStore(tmp_path)
    rng = np.random.default_rng(9)
    names = []
    for i in range(100):
        code = codegen.random_code(rng, 2 * int(rng.integers(32, 8192)))
        policy = list(POLICIES.values())[i % len(POLICIES)]
        store.put(i % 4, f"pkg{i}", serialize(seal(code, key, policy, device_id=i % 4)))
        names.append((i % 4, f"pkg{i}"))
    server = distribution.serve_in_background("127.0.0.1:0", store)
    try:
        with ThreadPoolExecutor(16) as pool:
            fetched = list(pool.map(lambda k: distribution.fetch(server.address, *k), names))
    finally:
        server.shutdown()
        server.server_close()
    same = sum(got == store.path_for(*k).read_bytes() for got, k in zip(fetched, names))
    report(9, same == 100, f"{same}/100 packages byte-identical via 16 concurrent clients")


def test_c10_stealth(device, corpus):
    _, _, key = device
    images = list(corpus[:30]) + [text_of(p) for p in ELF_FIXTURES]
    parcels = leaks = 0
    for policy in STEALTH_POLICIES.values():
        for code in images:
            ct = seal(code, key, policy).ciphertext
            for ins in iterate_instructions(code):
                c = int.from_bytes(ct[ins.offset:ins.offset + ins.length], "little")
                keep = 0x7F if ins.length == 4 else 0xE003  # RVC opcode: bits 0-1 and 13-15
                parcels += 1
                leaks += (c ^ ins.word) & keep != 0
    report(10, leaks == 0, f"{parcels} parcels under {len(STEALTH_POLICIES)} field policies, "
                           f"{leaks} with changed opcode bits")
