"""Registry of QUIC AEAD suites and header-protection mask algorithms.

Four AEAD suites are available (the three QUIC v1 suites that matter in
practice plus a NOOP stand-in) and four header-protection choices.  The
pairing between an AEAD suite and its mask algorithm is an argument, never
a hard link, so every combination can be exercised.

The primitives themselves come from ``cryptography`` (OpenSSL); this module
only adds the QUIC framing around them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, ChaCha20Poly1305

from .errors import AuthFailure, KeyLengthMismatch, TooShort, UnknownSuite

IV_LEN = 12
TAG_LEN = 16
SAMPLE_LEN = 16
MASK_LEN = 5

_ZERO_TAG = bytes(TAG_LEN)
_ZERO_MASK = bytes(MASK_LEN)


class SuiteId(str, enum.Enum):
    AES_128_GCM = "AES_128_GCM"
    AES_256_GCM = "AES_256_GCM"
    CHACHA20_POLY1305 = "CHACHA20_POLY1305"
    NOOP = "NOOP"


class HpId(str, enum.Enum):
    AES_ECB = "AES_ECB"
    CHACHA20_RAW = "CHACHA20_RAW"
    NOOP_HP = "NOOP_HP"
    OFF = "OFF"


@dataclass(frozen=True)
class CipherSuite:
    id: SuiteId
    key_len: int
    default_hp_alg: HpId
    iv_len: int = IV_LEN
    tag_len: int = TAG_LEN
    hash_name: str = "sha256"
    code: int = 0

    @property
    def name(self) -> str:
        return self.id.value


@dataclass(frozen=True)
class HpAlg:
    id: HpId
    code: int = 0

    @property
    def name(self) -> str:
        return self.id.value

    @property
    def enabled(self) -> bool:
        return self.id is not HpId.OFF

    def hp_key_len(self, suite: CipherSuite) -> int:
        """Length of the ``hp`` key this algorithm consumes next to ``suite``.

        AES-ECB follows the suite's AES strength (16 or 32 bytes), raw
        ChaCha20 always takes 32, NOOP_HP mirrors the suite key length so the
        derived triple looks like a real one, and OFF derives nothing.
        """
        if self.id is HpId.AES_ECB:
            return 16 if suite.key_len == 16 else 32
        if self.id is HpId.CHACHA20_RAW:
            return 32
        if self.id is HpId.NOOP_HP:
            return suite.key_len
        return 0


SUITES: dict[SuiteId, CipherSuite] = {
    SuiteId.AES_128_GCM: CipherSuite(SuiteId.AES_128_GCM, 16, HpId.AES_ECB, code=0),
    SuiteId.AES_256_GCM: CipherSuite(SuiteId.AES_256_GCM, 32, HpId.AES_ECB, code=1),
    SuiteId.CHACHA20_POLY1305: CipherSuite(
        SuiteId.CHACHA20_POLY1305, 32, HpId.CHACHA20_RAW, code=2
    ),
    # NOOP keeps the AES-128-GCM layout (16-byte key, 16-byte tag) so packet
    # geometry is identical and only compute cost changes.
    SuiteId.NOOP: CipherSuite(SuiteId.NOOP, 16, HpId.OFF, code=3),
}

HP_ALGS: dict[HpId, HpAlg] = {
    HpId.AES_ECB: HpAlg(HpId.AES_ECB, code=0),
    HpId.CHACHA20_RAW: HpAlg(HpId.CHACHA20_RAW, code=1),
    HpId.NOOP_HP: HpAlg(HpId.NOOP_HP, code=2),
    HpId.OFF: HpAlg(HpId.OFF, code=3),
}

SuiteLike = Union[CipherSuite, SuiteId, str]
HpLike = Union[HpAlg, HpId, str]


def suite_params(suite_id: SuiteLike) -> CipherSuite:
    if isinstance(suite_id, CipherSuite):
        return suite_id
    try:
        return SUITES[SuiteId(suite_id)]
    except ValueError:
        raise UnknownSuite(f"unknown cipher suite {suite_id!r}") from None


def hp_params(hp_id: HpLike) -> HpAlg:
    if isinstance(hp_id, HpAlg):
        return hp_id
    try:
        return HP_ALGS[HpId(hp_id)]
    except ValueError:
        raise UnknownSuite(f"unknown header protection algorithm {hp_id!r}") from None


@lru_cache(maxsize=256)
def _aead(suite_id: SuiteId, key: bytes):
    if suite_id is SuiteId.CHACHA20_POLY1305:
        return ChaCha20Poly1305(key)
    return AESGCM(key)


def _check_key(suite: CipherSuite, key: bytes, nonce: bytes) -> None:
    if len(key) != suite.key_len:
        raise KeyLengthMismatch(
            f"{suite.name} needs a {suite.key_len}-byte key, got {len(key)}"
        )
    if len(nonce) != suite.iv_len:
        raise KeyLengthMismatch(f"nonce must be {suite.iv_len} bytes, got {len(nonce)}")


def aead_seal(
    suite: SuiteLike, key: bytes, nonce: bytes, aad: bytes, plaintext: bytes
) -> bytes:
    """Return ``ciphertext || tag``; NOOP echoes the plaintext with a zero tag."""
    suite = suite_params(suite)
    _check_key(suite, key, nonce)
    if suite.id is SuiteId.NOOP:
        return bytes(plaintext) + _ZERO_TAG
    return _aead(suite.id, bytes(key)).encrypt(nonce, bytes(plaintext), bytes(aad))


def aead_open(
    suite: SuiteLike, key: bytes, nonce: bytes, aad: bytes, sealed: bytes
) -> bytes:
    suite = suite_params(suite)
    _check_key(suite, key, nonce)
    if len(sealed) < suite.tag_len:
        raise TooShort(f"sealed data is {len(sealed)} bytes, shorter than the tag")
    if suite.id is SuiteId.NOOP:
        # any tag is accepted
        return bytes(sealed[: len(sealed) - suite.tag_len])
    try:
        return _aead(suite.id, bytes(key)).decrypt(nonce, bytes(sealed), bytes(aad))
    except InvalidTag:
        raise AuthFailure(f"{suite.name} tag verification failed") from None


def hp_mask(alg: HpLike, hp_key: bytes, sample: bytes) -> bytes:
    """Five-byte header-protection mask computed from a ciphertext sample."""
    alg = hp_params(alg)
    if len(sample) != SAMPLE_LEN:
        raise ValueError(f"sample must be {SAMPLE_LEN} bytes, got {len(sample)}")
    if alg.id is HpId.AES_ECB:
        if len(hp_key) not in (16, 32):
            raise KeyLengthMismatch(f"AES_ECB needs a 16 or 32-byte key, got {len(hp_key)}")
        enc = Cipher(algorithms.AES(bytes(hp_key)), modes.ECB()).encryptor()
        return enc.update(bytes(sample))[:MASK_LEN]
    if alg.id is HpId.CHACHA20_RAW:
        if len(hp_key) != 32:
            raise KeyLengthMismatch(f"CHACHA20_RAW needs a 32-byte key, got {len(hp_key)}")
        # cryptography's 16-byte nonce is counter(LE32) || nonce(12), which is
        # exactly how QUIC splits the sample
        enc = Cipher(algorithms.ChaCha20(bytes(hp_key), bytes(sample)), mode=None).encryptor()
        return enc.update(_ZERO_MASK)
    return _ZERO_MASK
