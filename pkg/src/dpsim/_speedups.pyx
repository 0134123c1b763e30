# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_purepy``."""
from libc.stdint cimport uint8_t, uint32_t, uint64_t

cdef uint32_t CRC_TABLE[256]


cdef void _init_table():
    cdef uint32_t c
    cdef int n, k
    for n in range(256):
        c = n
        for k in range(8):
            if c & 1:
                c = 0xEDB88320 ^ (c >> 1)
            else:
                c = c >> 1
        CRC_TABLE[n] = c


_init_table()


cdef inline uint32_t _crc_bytes(uint32_t crc, const uint8_t* buf, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        crc = CRC_TABLE[(crc ^ buf[i]) & 0xFF] ^ (crc >> 8)
    return crc


def pack_fields(tuple widths, values):
    cdef Py_ssize_t nfields = len(widths)
    cdef Py_ssize_t i, total = 0
    cdef int w
    for i in range(nfields):
        total += <int>widths[i]
    cdef bytearray out = bytearray(total >> 3)
    cdef uint8_t* dst = <uint8_t*>(<char*>out)
    cdef Py_ssize_t bitpos = 0
    cdef uint64_t v
    cdef int remaining, take, byte_idx, bit_off
    for i in range(nfields):
        w = <int>widths[i]
        if w > 64:
            raise ValueError("field wider than 64 bits")
        v = <uint64_t>values[i]
        remaining = w
        while remaining > 0:
            byte_idx = bitpos >> 3
            bit_off = bitpos & 7
            take = 8 - bit_off
            if take > remaining:
                take = remaining
            dst[byte_idx] |= <uint8_t>(((v >> (remaining - take)) & ((1 << take) - 1))
                                       << (8 - bit_off - take))
            remaining -= take
            bitpos += take
    return bytes(out)


def unpack_fields(tuple widths, data, Py_ssize_t offset):
    cdef const uint8_t[:] buf = data
    cdef Py_ssize_t nfields = len(widths)
    cdef Py_ssize_t i, total = 0
    for i in range(nfields):
        total += <int>widths[i]
    if offset < 0 or offset + (total >> 3) > buf.shape[0]:
        raise IndexError("buffer too short for header")
    cdef list out = []
    cdef Py_ssize_t bitpos = offset * 8
    cdef int w, remaining, take, bit_off
    cdef uint64_t v
    for i in range(nfields):
        w = <int>widths[i]
        if w > 64:
            raise ValueError("field wider than 64 bits")
        v = 0
        remaining = w
        while remaining > 0:
            bit_off = bitpos & 7
            take = 8 - bit_off
            if take > remaining:
                take = remaining
            v = (v << take) | ((buf[bitpos >> 3] >> (8 - bit_off - take)) & ((1 << take) - 1))
            remaining -= take
            bitpos += take
        out.append(v)
    return out


def internet_checksum(data, Py_ssize_t start=0, Py_ssize_t end=-1):
    cdef const uint8_t[:] buf = data
    if end < 0:
        end = buf.shape[0]
    cdef uint64_t total = 0
    cdef Py_ssize_t i = start
    while i + 1 < end:
        total += (buf[i] << 8) | buf[i + 1]
        i += 2
    if i < end:
        total += buf[i] << 8
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def five_tuple_crc(uint32_t src_ip, uint32_t dst_ip, uint8_t protocol,
                   unsigned short src_port, unsigned short dst_port, uint32_t seed):
    cdef uint8_t b[17]
    b[0] = src_ip >> 24; b[1] = src_ip >> 16; b[2] = src_ip >> 8; b[3] = src_ip
    b[4] = dst_ip >> 24; b[5] = dst_ip >> 16; b[6] = dst_ip >> 8; b[7] = dst_ip
    b[8] = protocol
    b[9] = src_port >> 8; b[10] = src_port
    b[11] = dst_port >> 8; b[12] = dst_port
    b[13] = seed >> 24; b[14] = seed >> 16; b[15] = seed >> 8; b[16] = seed
    return _crc_bytes(0xFFFFFFFF, b, 17) ^ 0xFFFFFFFF
