# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: masked guest memory access, RLE row decode, window scan,
and the channel wait primitives.  Mirrors ``_pure`` exactly."""

from cpython.bytes cimport PyBytes_AS_STRING, PyBytes_FromStringAndSize
from libc.stdint cimport uint8_t, uint32_t, uint64_t, uintptr_t
from libc.string cimport memcpy, memset

cdef extern from *:
    """
    #include <stdint.h>
    #include <string.h>
    #include <sched.h>
    #include <time.h>
    #include <unistd.h>
    #include <sys/syscall.h>
    #include <linux/futex.h>

    static inline uint32_t sc_load_u32(uintptr_t a) {
        return __atomic_load_n((uint32_t *)a, __ATOMIC_ACQUIRE);
    }
    static inline void sc_store_u32(uintptr_t a, uint32_t v) {
        __atomic_store_n((uint32_t *)a, v, __ATOMIC_SEQ_CST);
    }
    static inline void sc_relax(void) {
    #if defined(__x86_64__) || defined(__i386__)
        __builtin_ia32_pause();
    #endif
    }
    static long sc_futex_wait(uintptr_t a, uint32_t v, long long timeout_ns) {
        struct timespec ts;
        ts.tv_sec = timeout_ns / 1000000000LL;
        ts.tv_nsec = timeout_ns % 1000000000LL;
        return syscall(SYS_futex, (uint32_t *)a, FUTEX_WAIT, v, &ts, NULL, 0);
    }
    static long sc_futex_wake(uintptr_t a, int n) {
        return syscall(SYS_futex, (uint32_t *)a, FUTEX_WAKE, n, NULL, NULL, 0);
    }
    static int sc_spin_wait(uintptr_t a, uint32_t want, unsigned long long limit, unsigned int yield_every) {
        unsigned long long i;
        for (i = 0; i < limit; i++) {
            if (__atomic_load_n((uint32_t *)a, __ATOMIC_ACQUIRE) == want) return 1;
            if (yield_every && (i + 1) % yield_every == 0) sched_yield();
            else sc_relax();
        }
        return __atomic_load_n((uint32_t *)a, __ATOMIC_ACQUIRE) == want;
    }
    static inline uint64_t sc_hash64(uint64_t x) {
        x ^= x >> 33; x *= 0xff51afd7ed558ccdULL; x ^= x >> 33;
        return x;
    }
    """
    uint32_t sc_load_u32(uintptr_t a) nogil
    void sc_store_u32(uintptr_t a, uint32_t v) nogil
    long sc_futex_wait(uintptr_t a, uint32_t v, long long timeout_ns) nogil
    long sc_futex_wake(uintptr_t a, int n) nogil
    int sc_spin_wait(uintptr_t a, uint32_t want, unsigned long long limit, unsigned int yield_every) nogil
    uint64_t sc_hash64(uint64_t x) nogil

import time

IMPLEMENTATION = "cython"

cdef enum:
    _ROW_DONE = 0
    _ROW_NEED_INPUT = 1
    _ROW_SHORT = 2
    _ROW_OVERFLOW = 3

ROW_DONE = _ROW_DONE
ROW_NEED_INPUT = _ROW_NEED_INPUT
ROW_SHORT = _ROW_SHORT
ROW_OVERFLOW = _ROW_OVERFLOW


cdef class MaskedRegion:
    """Guest-side accessors: every effective address is ``(offset + i) & mask``."""

    cdef uint8_t *ptr
    cdef uint64_t _mask
    cdef readonly uint64_t size
    cdef readonly object base
    cdef object _view

    def __init__(self, uintptr_t base, uint64_t size, view):
        if size & (size - 1) or len(view) != size:
            raise ValueError("region size must be a power of two matching the view")
        self.ptr = <uint8_t *>base
        self.base = base
        self.size = size
        self._mask = size - 1
        self._view = view  # keeps the mapping alive

    @property
    def mask(self):
        return self._mask

    cdef inline void _copy_out(self, uint64_t off, uint8_t *dst, uint64_t n) noexcept nogil:
        cdef uint64_t start = off & self._mask
        cdef uint64_t first
        if start + n <= self.size:
            memcpy(dst, self.ptr + start, n)
        else:
            first = self.size - start
            memcpy(dst, self.ptr + start, first)
            memcpy(dst + first, self.ptr, n - first)

    cdef inline void _copy_in(self, uint64_t off, const uint8_t *src, uint64_t n) noexcept nogil:
        cdef uint64_t start = off & self._mask
        cdef uint64_t first
        if start + n <= self.size:
            memcpy(self.ptr + start, src, n)
        else:
            first = self.size - start
            memcpy(self.ptr + start, src, first)
            memcpy(self.ptr, src + first, n - first)

    def load(self, long long off, int width):
        cdef uint64_t v = 0
        if width not in (1, 2, 4, 8):
            raise KeyError(width)
        self._copy_out(<uint64_t>off, <uint8_t *>&v, width)
        return v

    def store(self, long long off, int width, value):
        cdef uint64_t v
        if width not in (1, 2, 4, 8):
            raise KeyError(width)
        v = <uint64_t>(value & 0xFFFFFFFFFFFFFFFF)
        self._copy_in(<uint64_t>off, <const uint8_t *>&v, width)

    def read(self, long long off, long long n):
        if n < 0 or <uint64_t>n > self.size:
            raise ValueError("length out of range")
        out = PyBytes_FromStringAndSize(NULL, n)
        if n:
            self._copy_out(<uint64_t>off, <uint8_t *>PyBytes_AS_STRING(out), n)
        return out

    def write(self, long long off, const uint8_t[::1] data):
        cdef uint64_t n = data.shape[0]
        if n > self.size:
            raise ValueError("length out of range")
        if n:
            self._copy_in(<uint64_t>off, &data[0], n)

    def fill(self, long long off, long long n, int byte):
        cdef uint64_t start = (<uint64_t>off) & self._mask
        cdef uint64_t first
        if n < 0 or <uint64_t>n > self.size:
            raise ValueError("length out of range")
        if start + n <= self.size:
            memset(self.ptr + start, byte & 0xFF, n)
        else:
            first = self.size - start
            memset(self.ptr + start, byte & 0xFF, first)
            memset(self.ptr, byte & 0xFF, n - first)

    def decode_row(self, long long src, long long avail, long long dst, long long x, long long width):
        cdef uint64_t s = <uint64_t>src
        cdef long long a = avail
        cdef long long cx = x
        cdef int state = _ROW_NEED_INPUT
        cdef uint8_t count, val
        cdef uint64_t start, first
        with nogil:
            while a > 0:
                count = self.ptr[s & self._mask]
                if count == 0:
                    if cx != width:
                        state = _ROW_SHORT
                        break
                    s += 1
                    a -= 1
                    state = _ROW_DONE
                    break
                if a < 2:
                    break
                if cx + count > width:
                    state = _ROW_OVERFLOW
                    break
                val = self.ptr[(s + 1) & self._mask]
                start = (<uint64_t>(dst + cx)) & self._mask
                if start + count <= self.size:
                    memset(self.ptr + start, val, count)
                else:
                    first = self.size - start
                    memset(self.ptr + start, val, first)
                    memset(self.ptr, val, count - first)
                cx += count
                s += 2
                a -= 2
        return <long long>s, a, cx, state


def scan_u64(const uint8_t[::1] view, targets):
    """Byte offsets of every 8-byte little-endian window equal to one of ``targets``."""
    cdef Py_ssize_t n = view.shape[0]
    cdef Py_ssize_t i
    cdef uint64_t w, h
    cdef uint64_t table[1024]
    cdef uint8_t used[1024]
    cdef int tsize = 1024
    cdef int nt = len(targets)
    if nt == 0 or n < 8:
        return []
    if nt > 256:
        raise ValueError("too many scan targets")
    memset(used, 0, sizeof(used))
    for t in targets:
        w = <uint64_t>(t & 0xFFFFFFFFFFFFFFFF)
        h = sc_hash64(w) & (tsize - 1)
        while used[h] and table[h] != w:
            h = (h + 1) & (tsize - 1)
        table[h] = w
        used[h] = 1
    hits = []
    cdef bint found
    for i in range(n - 7):
        memcpy(&w, &view[i], 8)
        h = sc_hash64(w) & (tsize - 1)
        found = False
        while used[h]:
            if table[h] == w:
                found = True
                break
            h = (h + 1) & (tsize - 1)
        if found:
            hits.append(i)
    return hits


def load_u32(uintptr_t addr):
    return sc_load_u32(addr)


def store_u32(uintptr_t addr, uint32_t value):
    sc_store_u32(addr, value)


def futex_wait(uintptr_t addr, uint32_t expected, long long timeout_ns):
    cdef long r
    with nogil:
        r = sc_futex_wait(addr, expected, timeout_ns)
    return r


def futex_wake(uintptr_t addr, int n=1):
    return sc_futex_wake(addr, n)


def spin_wait(uintptr_t addr, uint32_t want, unsigned long long limit, unsigned int yield_every):
    cdef int r
    with nogil:
        r = sc_spin_wait(addr, want, limit, yield_every)
    return bool(r)


def monotonic_ns():
    return time.monotonic_ns()
