"""Regenerate the shipped `standard` group parameters.

Deterministic: q and the cofactor are derived from SHA-256 counters over a
fixed label, so anyone can re-run this and check the constants.
"""

import hashlib
import json
import sys

import gmpy2

LABEL = b"ST/v1/standard"


def _stream(tag: bytes, nbits: int, counter: int) -> int:
    out = b""
    block = 0
    while len(out) * 8 < nbits:
        out += hashlib.sha256(LABEL + b"/" + tag + counter.to_bytes(4, "big") + block.to_bytes(4, "big")).digest()
        block += 1
    return int.from_bytes(out, "big") >> (len(out) * 8 - nbits)


def generate(pbits: int = 2048, qbits: int = 256) -> dict:
    q = gmpy2.next_prime(_stream(b"q", qbits, 0) | (1 << (qbits - 1)))
    assert q.bit_length() == qbits
    counter = 0
    while True:
        c = _stream(b"c", pbits - qbits - 1, counter) | (1 << (pbits - qbits - 2))
        p = 2 * q * c + 1
        if p.bit_length() == pbits and gmpy2.is_prime(p, 64):
            break
        counter += 1
    h = 2
    while True:
        g = gmpy2.powmod(h, 2 * c, p)
        if g != 1:
            break
        h += 1
    assert gmpy2.powmod(g, q, p) == 1
    return {"name": "standard", "p": format(int(p), "x"), "q": format(int(q), "x"), "g": format(int(g), "x")}


if __name__ == "__main__":
    json.dump(generate(), sys.stdout, indent=2)
    sys.stdout.write("\n")
