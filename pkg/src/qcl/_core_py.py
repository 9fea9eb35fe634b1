"""Pure-Python protection kernel; same interface as the compiled ``_core``.

Used when the extension is not built (or ``QCL_PURE=1``).  Per-packet
interpreter overhead dominates here, so stage shares measured with this
backend are not comparable to the compiled one.
"""

from __future__ import annotations

import time

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, ChaCha20Poly1305

from .errors import AuthFailure, KeyLengthMismatch, MalformedHeader, PayloadTooShortForSample
from .packet_protection import compute_nonce, pn_decode

BACKEND = "pure"

TAG_LEN = 16
SAMPLE_LEN = 16
_ZERO_TAG = bytes(TAG_LEN)
_ZERO_MASK = bytes(5)

S_AES128, S_AES256, S_CHACHA, S_NOOP = range(4)
H_AES, H_CHACHA, H_NOOP, H_OFF = range(4)

_KEY_LEN = {S_AES128: 16, S_AES256: 32, S_CHACHA: 32, S_NOOP: None}


class Protector:
    """One direction's protection state for a (suite, hp_alg) pair."""

    def __init__(self, suite: int, hp: int, key: bytes, iv: bytes, hp_key: bytes):
        if suite not in _KEY_LEN:
            raise ValueError(f"unknown suite code {suite}")
        if hp not in (H_AES, H_CHACHA, H_NOOP, H_OFF):
            raise ValueError(f"unknown hp code {hp}")
        if len(iv) != 12:
            raise KeyLengthMismatch("iv must be 12 bytes")
        want = _KEY_LEN[suite]
        if want is not None and len(key) != want:
            raise KeyLengthMismatch(f"suite {suite} needs a {want}-byte key")
        self.suite = suite
        self.hp = hp
        self._iv = bytes(iv)
        self._aead = None
        if suite == S_CHACHA:
            self._aead = ChaCha20Poly1305(key)
        elif suite != S_NOOP:
            self._aead = AESGCM(key)
        self._ecb = None
        self._hp_key = bytes(hp_key)
        if hp == H_AES:
            if len(hp_key) not in (16, 32):
                raise KeyLengthMismatch("AES_ECB needs a 16 or 32-byte key")
            self._ecb = Cipher(algorithms.AES(self._hp_key), modes.ECB()).encryptor()
        elif hp == H_CHACHA and len(hp_key) != 32:
            raise KeyLengthMismatch("CHACHA20_RAW needs a 32-byte key")

    def _seal(self, pn: int, aad: bytes, pt: bytes) -> bytes:
        if self._aead is None:
            return pt + _ZERO_TAG
        return self._aead.encrypt(compute_nonce(self._iv, pn), pt, aad)

    def _open(self, pn: int, aad: bytes, ct: bytes) -> bytes:
        if self._aead is None:
            return ct[:-TAG_LEN]
        try:
            return self._aead.decrypt(compute_nonce(self._iv, pn), ct, aad)
        except InvalidTag:
            raise AuthFailure("tag verification failed") from None

    def _mask(self, sample: bytes) -> bytes:
        if self._ecb is not None:
            return self._ecb.update(sample)[:5]
        if self.hp == H_CHACHA:
            c = Cipher(algorithms.ChaCha20(self._hp_key, sample), mode=None).encryptor()
            return c.update(_ZERO_MASK)
        return _ZERO_MASK

    def _protect_header(self, pkt: bytearray, pn_offset: int, pn_len: int) -> None:
        mask = self._mask(bytes(pkt[pn_offset + 4 : pn_offset + 4 + SAMPLE_LEN]))
        pkt[0] ^= mask[0] & (0x0F if pkt[0] & 0x80 else 0x1F)
        for i in range(pn_len):
            pkt[pn_offset + i] ^= mask[1 + i]

    def _unprotect_header(self, pkt: bytearray, pn_offset: int) -> int:
        if self.hp == H_OFF:
            return (pkt[0] & 0x03) + 1
        mask = self._mask(bytes(pkt[pn_offset + 4 : pn_offset + 4 + SAMPLE_LEN]))
        pkt[0] ^= mask[0] & (0x0F if pkt[0] & 0x80 else 0x1F)
        pn_len = (pkt[0] & 0x03) + 1
        for i in range(pn_len):
            pkt[pn_offset + i] ^= mask[1 + i]
        return pn_len

    def seal(self, header: bytes, pn: int, pn_len: int, payload: bytes) -> bytes:
        if self.hp != H_OFF and pn_len + len(payload) + TAG_LEN < 4 + SAMPLE_LEN:
            raise PayloadTooShortForSample("payload too short for a header-protection sample")
        aad = bytes(header) + (pn & ((1 << (8 * pn_len)) - 1)).to_bytes(pn_len, "big")
        out = bytearray(aad + self._seal(pn, aad, bytes(payload)))
        if self.hp != H_OFF:
            self._protect_header(out, len(header), pn_len)
        return bytes(out)

    def open(self, wire: bytes, pn_offset: int, largest_acked: int = -1, end: int = -1):
        n = len(wire) if end < 0 else end
        if n > len(wire):
            raise MalformedHeader("packet end beyond buffer")
        if self.hp != H_OFF and n < pn_offset + 4 + SAMPLE_LEN:
            raise PayloadTooShortForSample("packet too short to contain a header-protection sample")
        pkt = bytearray(wire[:n])
        pn_len = self._unprotect_header(pkt, pn_offset)
        if n < pn_offset + pn_len + TAG_LEN:
            raise MalformedHeader("packet shorter than packet number plus tag")
        truncated = int.from_bytes(pkt[pn_offset : pn_offset + pn_len], "big")
        pn = pn_decode(truncated, pn_len, largest_acked)
        aad = bytes(pkt[: pn_offset + pn_len])
        plain = self._open(pn, aad, bytes(pkt[pn_offset + pn_len :]))
        if pkt[0] & (0x0C if pkt[0] & 0x80 else 0x18):
            raise MalformedHeader("reserved header bits are set after unmasking")
        return bytes(pkt[:pn_offset]), pn, pn_len, plain


def run_stream(tx, rx, sizes, pattern, dcid_len, pn_len, count_seal, do_open, batch, first_pn=0):
    """Same batch-staged loop as the compiled kernel, in Python."""
    clock = time.perf_counter_ns
    pattern = bytes(pattern)
    if not pattern:
        raise ValueError("pattern must not be empty")
    npk = len(sizes)
    if npk and max(sizes) > len(pattern):
        raise ValueError("packet payload larger than kernel buffers")
    if tx.hp != H_OFF and npk and pn_len + max(sizes) + TAG_LEN < 4 + SAMPLE_LEN:
        raise PayloadTooShortForSample("payload too short for a header-protection sample")
    hlen = 1 + dcid_len
    dcid = b"\xc1" * dcid_len
    pn_mask = (1 << (8 * pn_len)) - 1
    f_ns = pp_ns = hp_ns = rf_ns = rpp_ns = rhp_ns = 0
    payload_bytes = 0
    failures = 0
    off = 0
    app = bytearray(max(sizes, default=0))
    start = clock()
    for b0 in range(0, npk, batch):
        b1 = min(b0 + batch, npk)
        t0 = clock()
        headers = []
        plains = []
        for i in range(b0, b1):
            sz = sizes[i]
            pn = first_pn + i
            headers.append(
                bytes([0x40 | (pn_len - 1)]) + dcid + (pn & pn_mask).to_bytes(pn_len, "big")
            )
            if off + sz > len(pattern):
                off = 0
            plains.append(pattern[off : off + sz])
            off += sz
        t1 = clock()
        wires = []
        for j, i in enumerate(range(b0, b1)):
            aad = headers[j]
            wires.append(bytearray(aad + tx._seal(first_pn + i, aad, plains[j])))
        t2 = clock()
        if tx.hp != H_OFF:
            for w in wires:
                tx._protect_header(w, hlen, pn_len)
        t3 = clock()
        f_ns += t1 - t0
        pp_ns += t2 - t1
        if tx.hp != H_OFF:
            hp_ns += t3 - t2
        else:
            f_ns += t3 - t2
        if do_open:
            for j, i in enumerate(range(b0, b1)):
                w = wires[j]
                k = rx._unprotect_header(w, hlen)
                pn = pn_decode(int.from_bytes(w[hlen : hlen + k], "big"), k, first_pn + i - 1)
                if pn != first_pn + i:
                    failures += 1
            t4 = clock()
            recv = []
            for j, i in enumerate(range(b0, b1)):
                w = wires[j]
                try:
                    recv.append(rx._open(first_pn + i, bytes(w[: hlen + pn_len]), bytes(w[hlen + pn_len :])))
                except AuthFailure:
                    failures += 1
                    recv.append(b"")
            t5 = clock()
            for p in recv:
                app[: len(p)] = p
                payload_bytes += len(p)
            t6 = clock()
            if rx.hp != H_OFF:
                rhp_ns += t4 - t3
            else:
                rf_ns += t4 - t3
            rpp_ns += t5 - t4
            rf_ns += t6 - t5
        else:
            payload_bytes += sum(sizes[b0:b1])
    stop = clock()
    if failures:
        raise AuthFailure(f"{failures} packets failed to round-trip in the kernel")
    elapsed = stop - start
    if not count_seal:
        elapsed -= f_ns + pp_ns + hp_ns
        f_ns = pp_ns = hp_ns = 0
    return {
        "elapsed_ns": elapsed,
        "framing_ns": f_ns + rf_ns,
        "pp_ns": pp_ns + rpp_ns,
        "hp_ns": hp_ns + rhp_ns,
        "seal_pp_ns": pp_ns,
        "seal_hp_ns": hp_ns,
        "open_pp_ns": rpp_ns,
        "open_hp_ns": rhp_ns,
        "packets": npk,
        "payload_bytes": payload_bytes,
    }
