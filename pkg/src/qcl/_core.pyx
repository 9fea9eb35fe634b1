# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled protection kernel over OpenSSL's EVP interface.

Contexts are keyed once per ``Protector``; each packet only re-arms the
nonce (AEAD) or the sample (ChaCha20 mask).  ``run_stream`` drives the
batch-staged benchmark loop without touching Python objects per packet.
"""

from libc.stdint cimport int64_t, uint8_t, uint32_t, uint64_t
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy, memset
from posix.time cimport CLOCK_MONOTONIC, clock_gettime, timespec

from .errors import AuthFailure, KeyLengthMismatch, MalformedHeader, PayloadTooShortForSample


cdef extern from "openssl/evp.h" nogil:
    ctypedef struct EVP_CIPHER_CTX:
        pass
    ctypedef struct EVP_CIPHER:
        pass
    ctypedef struct OSSL_LIB_CTX:
        pass
    int EVP_CTRL_AEAD_GET_TAG
    int EVP_CTRL_AEAD_SET_TAG
    EVP_CIPHER_CTX *EVP_CIPHER_CTX_new()
    void EVP_CIPHER_CTX_free(EVP_CIPHER_CTX *ctx)
    EVP_CIPHER *EVP_CIPHER_fetch(OSSL_LIB_CTX *libctx, const char *algorithm, const char *properties)
    void EVP_CIPHER_free(EVP_CIPHER *cipher)
    int EVP_EncryptInit_ex(EVP_CIPHER_CTX *ctx, const EVP_CIPHER *cipher, void *impl,
                           const unsigned char *key, const unsigned char *iv)
    int EVP_DecryptInit_ex(EVP_CIPHER_CTX *ctx, const EVP_CIPHER *cipher, void *impl,
                           const unsigned char *key, const unsigned char *iv)
    int EVP_EncryptUpdate(EVP_CIPHER_CTX *ctx, unsigned char *out, int *outl,
                          const unsigned char *inp, int inl)
    int EVP_EncryptFinal_ex(EVP_CIPHER_CTX *ctx, unsigned char *out, int *outl)
    int EVP_DecryptUpdate(EVP_CIPHER_CTX *ctx, unsigned char *out, int *outl,
                          const unsigned char *inp, int inl)
    int EVP_DecryptFinal_ex(EVP_CIPHER_CTX *ctx, unsigned char *out, int *outl)
    int EVP_CIPHER_CTX_ctrl(EVP_CIPHER_CTX *ctx, int type, int arg, void *ptr)
    int EVP_CIPHER_CTX_set_padding(EVP_CIPHER_CTX *ctx, int pad)


cdef enum:
    TAG_LEN = 16
    SAMPLE_LEN = 16
    MAX_PACKET = 65536

# codes match crypto_suites.CipherSuite.code / HpAlg.code
cdef enum:
    S_AES128 = 0
    S_AES256 = 1
    S_CHACHA = 2
    S_NOOP = 3
    H_AES = 0
    H_CHACHA = 1
    H_NOOP = 2
    H_OFF = 3

BACKEND = "compiled"

cdef unsigned char ZEROS[64]
memset(ZEROS, 0, 64)


cdef inline int64_t now_ns() noexcept nogil:
    cdef timespec ts
    clock_gettime(CLOCK_MONOTONIC, &ts)
    return <int64_t>ts.tv_sec * 1000000000 + ts.tv_nsec


cdef inline void make_nonce(const uint8_t *iv, uint64_t pn, uint8_t *out) noexcept nogil:
    cdef int i
    memcpy(out, iv, 12)
    for i in range(8):
        out[11 - i] ^= <uint8_t>((pn >> (8 * i)) & 0xFF)


cdef inline uint64_t decode_pn(uint64_t truncated, int pn_len, int64_t largest) noexcept nogil:
    cdef uint64_t expected = <uint64_t>(largest + 1)
    cdef uint64_t win = (<uint64_t>1) << (8 * pn_len)
    cdef uint64_t hwin = win >> 1
    cdef uint64_t mask = win - 1
    cdef uint64_t cand = (expected & ~mask) | truncated
    if cand + hwin <= expected and cand < ((<uint64_t>1) << 62) - win:
        return cand + win
    if cand > expected + hwin and cand >= win:
        return cand - win
    return cand


cdef class Protector:
    """One direction's protection state for a (suite, hp_alg) pair."""

    cdef EVP_CIPHER_CTX *enc
    cdef EVP_CIPHER_CTX *dec
    cdef EVP_CIPHER_CTX *hpctx
    cdef EVP_CIPHER *aead_cipher
    cdef EVP_CIPHER *hp_cipher
    cdef uint8_t iv[12]
    cdef readonly int suite
    cdef readonly int hp

    def __cinit__(self):
        self.enc = NULL
        self.dec = NULL
        self.hpctx = NULL
        self.aead_cipher = NULL
        self.hp_cipher = NULL

    def __init__(self, int suite, int hp, bytes key, bytes iv, bytes hp_key):
        cdef const char *name = NULL
        self.suite = suite
        self.hp = hp
        if len(iv) != 12:
            raise KeyLengthMismatch("iv must be 12 bytes")
        memcpy(self.iv, <const char *>iv, 12)
        if suite == S_AES128:
            name = b"AES-128-GCM"
            if len(key) != 16:
                raise KeyLengthMismatch("AES_128_GCM needs a 16-byte key")
        elif suite == S_AES256:
            name = b"AES-256-GCM"
            if len(key) != 32:
                raise KeyLengthMismatch("AES_256_GCM needs a 32-byte key")
        elif suite == S_CHACHA:
            name = b"ChaCha20-Poly1305"
            if len(key) != 32:
                raise KeyLengthMismatch("CHACHA20_POLY1305 needs a 32-byte key")
        elif suite != S_NOOP:
            raise ValueError(f"unknown suite code {suite}")
        if name != NULL:
            self.aead_cipher = EVP_CIPHER_fetch(NULL, name, NULL)
            self.enc = EVP_CIPHER_CTX_new()
            self.dec = EVP_CIPHER_CTX_new()
            if self.aead_cipher == NULL or self.enc == NULL or self.dec == NULL:
                raise MemoryError("OpenSSL context allocation failed")
            if (EVP_EncryptInit_ex(self.enc, self.aead_cipher, NULL, <const unsigned char *>key, NULL) != 1
                    or EVP_DecryptInit_ex(self.dec, self.aead_cipher, NULL, <const unsigned char *>key, NULL) != 1):
                raise RuntimeError("AEAD key setup failed")

        name = NULL
        if hp == H_AES:
            if len(hp_key) == 16:
                name = b"AES-128-ECB"
            elif len(hp_key) == 32:
                name = b"AES-256-ECB"
            else:
                raise KeyLengthMismatch("AES_ECB needs a 16 or 32-byte key")
        elif hp == H_CHACHA:
            name = b"ChaCha20"
            if len(hp_key) != 32:
                raise KeyLengthMismatch("CHACHA20_RAW needs a 32-byte key")
        elif hp != H_NOOP and hp != H_OFF:
            raise ValueError(f"unknown hp code {hp}")
        if name != NULL:
            self.hp_cipher = EVP_CIPHER_fetch(NULL, name, NULL)
            self.hpctx = EVP_CIPHER_CTX_new()
            if self.hp_cipher == NULL or self.hpctx == NULL:
                raise MemoryError("OpenSSL context allocation failed")
            if hp == H_AES:
                if EVP_EncryptInit_ex(self.hpctx, self.hp_cipher, NULL, <const unsigned char *>hp_key, NULL) != 1:
                    raise RuntimeError("header-protection key setup failed")
                EVP_CIPHER_CTX_set_padding(self.hpctx, 0)
            else:
                if EVP_EncryptInit_ex(self.hpctx, self.hp_cipher, NULL, <const unsigned char *>hp_key, ZEROS) != 1:
                    raise RuntimeError("header-protection key setup failed")

    def __dealloc__(self):
        if self.enc != NULL:
            EVP_CIPHER_CTX_free(self.enc)
        if self.dec != NULL:
            EVP_CIPHER_CTX_free(self.dec)
        if self.hpctx != NULL:
            EVP_CIPHER_CTX_free(self.hpctx)
        if self.aead_cipher != NULL:
            EVP_CIPHER_free(self.aead_cipher)
        if self.hp_cipher != NULL:
            EVP_CIPHER_free(self.hp_cipher)

    # -- per-packet primitives (no GIL, no allocation) --

    cdef int _seal(self, uint64_t pn, const uint8_t *aad, int aad_len,
                   const uint8_t *pt, int pt_len, uint8_t *out) noexcept nogil:
        """Write ciphertext||tag to ``out``; 0 on success."""
        cdef uint8_t nonce[12]
        cdef int outl = 0
        cdef int fin = 0
        if self.suite == S_NOOP:
            memcpy(out, pt, pt_len)
            memset(out + pt_len, 0, TAG_LEN)
            return 0
        make_nonce(self.iv, pn, nonce)
        if EVP_EncryptInit_ex(self.enc, NULL, NULL, NULL, nonce) != 1:
            return -1
        if EVP_EncryptUpdate(self.enc, NULL, &outl, aad, aad_len) != 1:
            return -1
        if EVP_EncryptUpdate(self.enc, out, &outl, pt, pt_len) != 1:
            return -1
        if EVP_EncryptFinal_ex(self.enc, out + outl, &fin) != 1:
            return -1
        if EVP_CIPHER_CTX_ctrl(self.enc, EVP_CTRL_AEAD_GET_TAG, TAG_LEN, out + pt_len) != 1:
            return -1
        return 0

    cdef int _open(self, uint64_t pn, const uint8_t *aad, int aad_len,
                   const uint8_t *ct, int ct_len, uint8_t *out) noexcept nogil:
        """Verify and decrypt ``ct`` (ciphertext||tag); 0 ok, 1 auth failure."""
        cdef uint8_t nonce[12]
        cdef uint8_t tag[TAG_LEN]
        cdef int outl = 0
        cdef int fin = 0
        cdef int n = ct_len - TAG_LEN
        if self.suite == S_NOOP:
            memcpy(out, ct, n)
            return 0
        make_nonce(self.iv, pn, nonce)
        memcpy(tag, ct + n, TAG_LEN)
        if EVP_DecryptInit_ex(self.dec, NULL, NULL, NULL, nonce) != 1:
            return -1
        if EVP_DecryptUpdate(self.dec, NULL, &outl, aad, aad_len) != 1:
            return -1
        if EVP_DecryptUpdate(self.dec, out, &outl, ct, n) != 1:
            return -1
        if EVP_CIPHER_CTX_ctrl(self.dec, EVP_CTRL_AEAD_SET_TAG, TAG_LEN, tag) != 1:
            return -1
        if EVP_DecryptFinal_ex(self.dec, out + outl, &fin) != 1:
            return 1
        return 0

    cdef int _mask(self, const uint8_t *sample, uint8_t *mask) noexcept nogil:
        cdef uint8_t block[SAMPLE_LEN]
        cdef int outl = 0
        if self.hp == H_AES:
            if EVP_EncryptUpdate(self.hpctx, block, &outl, sample, SAMPLE_LEN) != 1:
                return -1
            memcpy(mask, block, 5)
        elif self.hp == H_CHACHA:
            if EVP_EncryptInit_ex(self.hpctx, NULL, NULL, NULL, sample) != 1:
                return -1
            if EVP_EncryptUpdate(self.hpctx, mask, &outl, ZEROS, 5) != 1:
                return -1
        else:
            memset(mask, 0, 5)
        return 0

    cdef int _protect_header(self, uint8_t *pkt, int pn_offset, int pn_len) noexcept nogil:
        cdef uint8_t mask[5]
        cdef int i
        if self._mask(pkt + pn_offset + 4, mask) != 0:
            return -1
        if pkt[0] & 0x80:
            pkt[0] ^= mask[0] & 0x0F
        else:
            pkt[0] ^= mask[0] & 0x1F
        for i in range(pn_len):
            pkt[pn_offset + i] ^= mask[1 + i]
        return 0

    cdef int _unprotect_header(self, uint8_t *pkt, int pn_offset) noexcept nogil:
        """Unmask in place; returns the pn length or -1."""
        cdef uint8_t mask[5]
        cdef int i, pn_len
        if self.hp == H_OFF:
            return (pkt[0] & 0x03) + 1
        if self._mask(pkt + pn_offset + 4, mask) != 0:
            return -1
        if pkt[0] & 0x80:
            pkt[0] ^= mask[0] & 0x0F
        else:
            pkt[0] ^= mask[0] & 0x1F
        pn_len = (pkt[0] & 0x03) + 1
        for i in range(pn_len):
            pkt[pn_offset + i] ^= mask[1 + i]
        return pn_len

    # -- Python-facing single-packet API --

    def seal(self, bytes header, uint64_t pn, int pn_len, bytes payload):
        """Protect one packet whose header ends at the pn field."""
        cdef int hlen = len(header)
        cdef int plen = len(payload)
        cdef int i
        cdef bytearray out
        cdef uint8_t *buf
        if self.hp != H_OFF and pn_len + plen + TAG_LEN < 4 + SAMPLE_LEN:
            raise PayloadTooShortForSample("payload too short for a header-protection sample")
        out = bytearray(hlen + pn_len + plen + TAG_LEN)
        buf = out
        memcpy(buf, <const char *>header, hlen)
        for i in range(pn_len):
            buf[hlen + i] = <uint8_t>((pn >> (8 * (pn_len - 1 - i))) & 0xFF)
        if self._seal(pn, buf, hlen + pn_len, <const uint8_t *><const char *>payload, plen,
                      buf + hlen + pn_len) != 0:
            raise RuntimeError("AEAD seal failed")
        if self.hp != H_OFF and self._protect_header(buf, hlen, pn_len) != 0:
            raise RuntimeError("header protection failed")
        return bytes(out)

    def open(self, bytes wire, int pn_offset, int64_t largest_acked=-1, int end=-1):
        """Inverse of :meth:`seal`; returns ``(header, pn, pn_len, payload)``."""
        cdef int n = len(wire) if end < 0 else end
        cdef bytearray pkt
        cdef uint8_t *buf
        cdef int pn_len, i, rc
        cdef uint64_t truncated = 0
        cdef uint64_t pn
        cdef bytearray plain
        if n > len(wire):
            raise MalformedHeader("packet end beyond buffer")
        if self.hp != H_OFF and n < pn_offset + 4 + SAMPLE_LEN:
            raise PayloadTooShortForSample("packet too short to contain a header-protection sample")
        pkt = bytearray(wire[:n])
        buf = pkt
        pn_len = self._unprotect_header(buf, pn_offset)
        if pn_len < 0:
            raise RuntimeError("header protection removal failed")
        if n < pn_offset + pn_len + TAG_LEN:
            raise MalformedHeader("packet shorter than packet number plus tag")
        for i in range(pn_len):
            truncated = (truncated << 8) | buf[pn_offset + i]
        pn = decode_pn(truncated, pn_len, largest_acked)
        plain = bytearray(n - pn_offset - pn_len - TAG_LEN)
        rc = self._open(pn, buf, pn_offset + pn_len, buf + pn_offset + pn_len,
                        n - pn_offset - pn_len, <uint8_t *>plain if len(plain) else buf)
        if rc == 1:
            raise AuthFailure("tag verification failed")
        if rc != 0:
            raise RuntimeError("AEAD open failed")
        reserved = 0x0C if buf[0] & 0x80 else 0x18
        if buf[0] & reserved:
            raise MalformedHeader("reserved header bits are set after unmasking")
        return bytes(pkt[:pn_offset]), pn, pn_len, bytes(plain)


def run_stream(Protector tx, Protector rx, const uint32_t[:] sizes, const uint8_t[:] pattern,
               int dcid_len, int pn_len, bint count_seal, bint do_open, int batch,
               uint64_t first_pn=0):
    """Push every payload size in ``sizes`` through the pipeline.

    Each batch runs framing, packet protection and header protection as
    separate passes so three clock reads cover ``batch`` packets.  With
    ``do_open`` the receiver side (header unmasking, AEAD open, delivery
    copy) runs on the same batch.  ``count_seal=False`` keeps the sender
    stages out of the totals (receiver-only measurement).  Returns
    nanosecond totals per stage.
    """
    cdef Py_ssize_t npk = sizes.shape[0]
    cdef Py_ssize_t plen_pat = pattern.shape[0]
    cdef int hlen = 1 + dcid_len
    cdef int maxsz = 0
    cdef Py_ssize_t i, j, b0, b1
    cdef int k, slot
    cdef uint32_t sz
    cdef Py_ssize_t off = 0
    cdef uint64_t pn
    cdef uint64_t truncated
    cdef int64_t t0, t1, t2, t3, t4, t5, t6
    cdef int64_t f_ns = 0, pp_ns = 0, hp_ns = 0
    cdef int64_t rf_ns = 0, rpp_ns = 0, rhp_ns = 0
    cdef int64_t start, stop
    cdef uint64_t payload_bytes = 0
    cdef int failures = 0
    cdef uint8_t *plain = NULL
    cdef uint8_t *wire = NULL
    cdef uint8_t *recv = NULL
    cdef uint8_t *app = NULL
    cdef int stride
    cdef int rc

    if plen_pat == 0:
        raise ValueError("pattern must not be empty")
    for i in range(npk):
        if <int>sizes[i] > maxsz:
            maxsz = sizes[i]
    if maxsz > MAX_PACKET or maxsz > plen_pat:
        raise ValueError("packet payload larger than kernel buffers")
    if tx.hp != H_OFF and pn_len + <int>maxsz + TAG_LEN < 4 + SAMPLE_LEN:
        raise PayloadTooShortForSample("payload too short for a header-protection sample")
    stride = hlen + 4 + maxsz + TAG_LEN
    plain = <uint8_t *>malloc(<size_t>batch * stride)
    wire = <uint8_t *>malloc(<size_t>batch * stride)
    recv = <uint8_t *>malloc(<size_t>batch * stride)
    app = <uint8_t *>malloc(<size_t>maxsz + 1)
    if plain == NULL or wire == NULL or recv == NULL or app == NULL:
        free(plain); free(wire); free(recv); free(app)
        raise MemoryError()
    try:
        with nogil:
            start = now_ns()
            b0 = 0
            while b0 < npk:
                b1 = b0 + batch
                if b1 > npk:
                    b1 = npk
                # sender: framing (header + stream bytes into the packet buffer)
                t0 = now_ns()
                for i in range(b0, b1):
                    slot = <int>(i - b0)
                    sz = sizes[i]
                    pn = first_pn + <uint64_t>i
                    wire[slot * stride] = <uint8_t>(0x40 | (pn_len - 1))
                    memset(wire + slot * stride + 1, 0xC1, dcid_len)
                    for k in range(pn_len):
                        wire[slot * stride + hlen + k] = <uint8_t>((pn >> (8 * (pn_len - 1 - k))) & 0xFF)
                    if off + sz > plen_pat:
                        off = 0
                    memcpy(plain + slot * stride, &pattern[off], sz)
                    off += sz
                t1 = now_ns()
                for i in range(b0, b1):
                    slot = <int>(i - b0)
                    rc = tx._seal(first_pn + <uint64_t>i, wire + slot * stride, hlen + pn_len,
                                  plain + slot * stride, sizes[i], wire + slot * stride + hlen + pn_len)
                    if rc != 0:
                        failures += 1
                t2 = now_ns()
                if tx.hp != H_OFF:
                    for i in range(b0, b1):
                        slot = <int>(i - b0)
                        if tx._protect_header(wire + slot * stride, hlen, pn_len) != 0:
                            failures += 1
                t3 = now_ns()
                f_ns += t1 - t0
                pp_ns += t2 - t1
                if tx.hp != H_OFF:
                    hp_ns += t3 - t2
                else:
                    f_ns += t3 - t2
                if do_open:
                    # receiver: unmask header, open AEAD, deliver to the application buffer
                    for i in range(b0, b1):
                        slot = <int>(i - b0)
                        k = rx._unprotect_header(wire + slot * stride, hlen)
                        truncated = 0
                        for j in range(k):
                            truncated = (truncated << 8) | wire[slot * stride + hlen + j]
                        # pn recovered relative to the previous packet
                        pn = decode_pn(truncated, k, <int64_t>(first_pn + <uint64_t>i) - 1)
                        if pn != first_pn + <uint64_t>i:
                            failures += 1
                    t4 = now_ns()
                    for i in range(b0, b1):
                        slot = <int>(i - b0)
                        if rx._open(first_pn + <uint64_t>i, wire + slot * stride, hlen + pn_len,
                                    wire + slot * stride + hlen + pn_len, sizes[i] + TAG_LEN,
                                    recv + slot * stride) != 0:
                            failures += 1
                    t5 = now_ns()
                    for i in range(b0, b1):
                        slot = <int>(i - b0)
                        memcpy(app, recv + slot * stride, sizes[i])
                        payload_bytes += sizes[i]
                    t6 = now_ns()
                    # with HP off the first pass only parses the pn: framing work
                    if rx.hp != H_OFF:
                        rhp_ns += t4 - t3
                    else:
                        rf_ns += t4 - t3
                    rpp_ns += t5 - t4
                    rf_ns += t6 - t5
                else:
                    for i in range(b0, b1):
                        payload_bytes += sizes[i]
                b0 = b1
            stop = now_ns()
    finally:
        free(plain); free(wire); free(recv); free(app)
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
