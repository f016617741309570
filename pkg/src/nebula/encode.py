"""Client-side data preparation: sub-randomness, key share, ciphertext, tag.

From the 32 bytes of oblivious randomness ``r`` obtained for a value, the
client derives three independent sub-values: a key seed (r1), a polynomial
seed (r2), and a tag (r3).  The symmetric key is a pseudorandom expansion of
the share-field encoding of r1, so recovering the shared field secret is
enough to decrypt; the original r1 rides in the plaintext header and is
re-checked against the field secret on recovery.

Ciphertexts are deliberately deterministic (fixed all-zero nonce): clients
holding the same value derive the same key and plaintext and therefore emit
byte-identical ciphertexts, which the aggregation side uses as a group
consistency check.  Equality of submissions is already visible through tags,
so no additional leakage is introduced.

No client identity enters any field: the share's evaluation point is a fresh
random field element per submission.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Optional

from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from . import sharing
from .params import DpParams

DST_SUBRAND = b"nebula:v1:sub-randomness"
DST_PRG_KEY = b"nebula:v1:prg-key"

TAG_SIZE = 32
ZERO_NONCE = bytes(12)
AEAD_OVERHEAD = 16
# Plaintext layout: 32-byte key-seed header, then the value.
HEADER_SIZE = 32
MAX_VALUE_SIZE = 256
# tag + share (x, y) + u32 ciphertext length prefix.
_FIXED_PREFIX = TAG_SIZE + 2 * sharing.FIELD_BYTES + 4


@dataclass(frozen=True)
class SubRandomness:
    r1: bytes  # key seed
    r2: bytes  # share-polynomial seed
    r3: bytes  # tag


@dataclass(frozen=True)
class KeyShare:
    x_coord: int
    y_coord: int
    # Threshold the polynomial was built for; advisory, not serialized.
    degree_hint: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class Submission:
    """One client message: ciphertext, key share, 32-byte tag."""

    ciphertext: bytes
    share: KeyShare
    tag: bytes

    def to_bytes(self) -> bytes:
        return b"".join(
            (
                self.tag,
                sharing.encode_element(self.share.x_coord),
                sharing.encode_element(self.share.y_coord),
                struct.pack("<I", len(self.ciphertext)),
                self.ciphertext,
            )
        )

    @staticmethod
    def from_bytes(data: bytes) -> "Submission":
        if len(data) < _FIXED_PREFIX:
            raise ValueError("submission too short")
        tag = data[:TAG_SIZE]
        x = sharing.decode_element(data[TAG_SIZE : TAG_SIZE + sharing.FIELD_BYTES])
        y = sharing.decode_element(
            data[TAG_SIZE + sharing.FIELD_BYTES : TAG_SIZE + 2 * sharing.FIELD_BYTES]
        )
        (ct_len,) = struct.unpack_from("<I", data, TAG_SIZE + 2 * sharing.FIELD_BYTES)
        body = data[_FIXED_PREFIX:]
        if len(body) != ct_len:
            raise ValueError("submission ciphertext length mismatch")
        return Submission(ciphertext=bytes(body), share=KeyShare(x, y), tag=bytes(tag))


def parse_randomness(r: bytes) -> SubRandomness:
    """Split the oblivious randomness into three domain-separated values."""
    parts = []
    for index in (1, 2, 3):
        h = hashlib.sha256()
        h.update(len(DST_SUBRAND).to_bytes(2, "big"))
        h.update(DST_SUBRAND)
        h.update(r)
        h.update(bytes([index]))
        parts.append(h.digest())
    return SubRandomness(r1=parts[0], r2=parts[1], r3=parts[2])


def encryption_key(r1: bytes) -> bytes:
    """Symmetric key expanded from the share-field encoding of the key seed."""
    secret = sharing.secret_from_key_seed(r1)
    h = hashlib.sha256()
    h.update(len(DST_PRG_KEY).to_bytes(2, "big"))
    h.update(DST_PRG_KEY)
    h.update(sharing.encode_element(secret))
    return h.digest()


def key_from_field_secret(secret: int) -> bytes:
    """Same key derivation, starting from an interpolated field secret."""
    h = hashlib.sha256()
    h.update(len(DST_PRG_KEY).to_bytes(2, "big"))
    h.update(DST_PRG_KEY)
    h.update(sharing.encode_element(secret))
    return h.digest()


def make_share(r1: bytes, r2: bytes, threshold: int, rng) -> KeyShare:
    """Evaluate the seed-derived polynomial at a fresh random nonzero point.

    The zero point would expose the constant term directly and is excluded.
    """
    coeffs = sharing.polynomial_from_seeds(r1, r2, threshold)
    x = sharing.random_nonzero_element(rng)
    return KeyShare(x_coord=x, y_coord=sharing.polynomial_eval(coeffs, x),
                    degree_hint=threshold)


def encrypt_value(r1: bytes, value: bytes, max_value_size: int = MAX_VALUE_SIZE) -> bytes:
    """Authenticated encryption of (key-seed header, value) under the derived key.

    The all-zero nonce is safe here: a given key only ever encrypts this one
    plaintext (same r1 implies same value by construction).
    """
    if len(value) > max_value_size:
        raise ValueError(f"value exceeds {max_value_size} bytes")
    aead = ChaCha20Poly1305(encryption_key(r1))
    return aead.encrypt(ZERO_NONCE, r1 + value, None)


def decrypt_with_key(key: bytes, ciphertext: bytes) -> tuple[bytes, bytes]:
    """Inverse of encrypt_value given the symmetric key: (r1, value).

    Raises cryptography.exceptions.InvalidTag when the key is wrong or the
    ciphertext was tampered with.
    """
    plaintext = ChaCha20Poly1305(key).decrypt(ZERO_NONCE, ciphertext, None)
    if len(plaintext) < HEADER_SIZE:
        raise ValueError("plaintext shorter than key-seed header")
    return plaintext[:HEADER_SIZE], plaintext[HEADER_SIZE:]


def participate(p_s: float, rng) -> bool:
    """Bernoulli participation test with success probability exactly p_s."""
    if not 0 <= p_s <= 1:
        raise ValueError("p_s must lie in [0, 1]")
    return rng.random() < p_s


def build_submission(x: bytes, r: bytes, params: DpParams, rng) -> Submission:
    """Assemble the tagged submission for value ``x`` from its randomness."""
    sub = parse_randomness(r)
    share = make_share(sub.r1, sub.r2, params.threshold, rng)
    ciphertext = encrypt_value(sub.r1, x)
    return Submission(ciphertext=ciphertext, share=share, tag=sub.r3)


def submission_wire_size(value_size: int) -> int:
    """Serialized size of a submission carrying a value of the given length."""
    return _FIXED_PREFIX + AEAD_OVERHEAD + HEADER_SIZE + value_size
