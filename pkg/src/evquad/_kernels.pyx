# cython: language_level=3
"""Compiled hot kernels; see ``_pykernels`` for the contract they share."""
import numpy as np

cimport numpy as cnp
from libc.stdint cimport int64_t, uint8_t, uint64_t
from libc.stdlib cimport free, malloc, qsort, realloc
from libc.string cimport memmove

from evquad._ktypes import ParsedBody
from evquad.errors import ModelError

cnp.import_array()

BACKEND = "cython"

cdef int N_SYM = 16
cdef int HIDDEN = 64
cdef int MAX_WINDOW = 256
cdef uint8_t POP[16]
POP[:] = [0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4]


cdef inline uint64_t spread(uint64_t v) noexcept nogil:
    v &= 0xFFFF
    v = (v | (v << 8)) & 0x00FF00FF
    v = (v | (v << 4)) & 0x0F0F0F0F
    v = (v | (v << 2)) & 0x33333333
    v = (v | (v << 1)) & 0x55555555
    return v


cdef inline uint64_t compact(uint64_t v) noexcept nogil:
    v &= 0x55555555
    v = (v | (v >> 1)) & 0x33333333
    v = (v | (v >> 2)) & 0x0F0F0F0F
    v = (v | (v >> 4)) & 0x00FF00FF
    v = (v | (v >> 8)) & 0x0000FFFF
    return v


cdef int cmp_u64(const void* a, const void* b) noexcept nogil:
    cdef uint64_t x = (<const uint64_t*>a)[0]
    cdef uint64_t y = (<const uint64_t*>b)[0]
    return (x > y) - (x < y)


# ------------------------------------------------------------------ quadtree

def occupancy_batch(xs, ys, unit_starts, int depth):
    cdef const int64_t[::1] X = np.ascontiguousarray(xs, dtype=np.int64)
    cdef const int64_t[::1] Y = np.ascontiguousarray(ys, dtype=np.int64)
    cdef const int64_t[::1] US = np.ascontiguousarray(unit_starts, dtype=np.int64)
    cdef Py_ssize_t n_units = US.shape[0] - 1
    cdef Py_ssize_t n = X.shape[0]
    if n_units <= 0:
        return np.zeros(0, np.uint8), np.zeros(1, np.int64)
    out = np.empty(max(depth * n, 1), dtype=np.uint8)
    starts = np.zeros(n_units + 1, dtype=np.int64)
    cdef uint8_t[::1] O = out
    cdef int64_t[::1] S = starts
    cdef uint64_t* keys = <uint64_t*>malloc(max(n, 1) * sizeof(uint64_t))
    if keys == NULL:
        raise MemoryError()
    cdef Py_ssize_t u, i, a, m, pos = 0
    cdef int d, shift
    cdef uint64_t parent
    cdef uint8_t nib
    with nogil:
        for u in range(n_units):
            a = US[u]
            m = US[u + 1] - a
            for i in range(m):
                keys[i] = (spread(<uint64_t>Y[a + i]) << 1) | spread(<uint64_t>X[a + i])
            qsort(keys, m, sizeof(uint64_t), cmp_u64)
            if m:
                for d in range(depth):
                    shift = 2 * (depth - d - 1)
                    i = 0
                    while i < m:
                        parent = keys[i] >> (shift + 2)
                        nib = 0
                        while i < m and (keys[i] >> (shift + 2)) == parent:
                            nib |= <uint8_t>(8 >> ((keys[i] >> shift) & 3))
                            i += 1
                        O[pos] = nib
                        pos += 1
            S[u + 1] = pos
    free(keys)
    return out[:pos].copy(), starts


def reconstruct_batch(nibbles, nib_starts, int depth):
    cdef const uint8_t[::1] NB = np.ascontiguousarray(nibbles, dtype=np.uint8)
    cdef const int64_t[::1] NS = np.ascontiguousarray(nib_starts, dtype=np.int64)
    cdef Py_ssize_t n_units = NS.shape[0] - 1
    cdef Py_ssize_t total = NB.shape[0]
    cdef Py_ssize_t max_unit = 0, u
    for u in range(n_units):
        max_unit = max(max_unit, NS[u + 1] - NS[u])
    xs = np.empty(4 * total + 1, dtype=np.int64)
    ys = np.empty(4 * total + 1, dtype=np.int64)
    starts = np.zeros(n_units + 1, dtype=np.int64)
    cdef int64_t[::1] XO = xs
    cdef int64_t[::1] YO = ys
    cdef int64_t[::1] S = starts
    cdef Py_ssize_t cap = 4 * max_unit + 4
    cdef uint64_t* cur = <uint64_t*>malloc(cap * sizeof(uint64_t))
    cdef uint64_t* nxt = <uint64_t*>malloc(cap * sizeof(uint64_t))
    cdef uint64_t* tmp
    if cur == NULL or nxt == NULL:
        free(cur)
        free(nxt)
        raise MemoryError()
    cdef Py_ssize_t a, b, p, count, ncount, i, out = 0
    cdef int d, q, code = 0, err_unit = -1
    cdef uint8_t nib
    cdef uint64_t x, y
    with nogil:
        for u in range(n_units):
            a = NS[u]
            b = NS[u + 1]
            p = a
            cur[0] = 0
            count = 1
            for d in range(depth):
                if p + count > b:
                    code = 1
                    break
                ncount = 0
                for i in range(count):
                    nib = NB[p + i]
                    if nib == 0 or nib > 15:
                        code = 2
                        break
                    for q in range(4):
                        if nib & (8 >> q):
                            nxt[ncount] = (cur[i] << 2) | <uint64_t>q
                            ncount += 1
                if code:
                    break
                p += count
                count = ncount
                tmp = cur
                cur = nxt
                nxt = tmp
            if code == 0 and p != b:
                code = 3
            if code:
                err_unit = u
                break
            for i in range(count):
                x = compact(cur[i])
                y = compact(cur[i] >> 1)
                cur[i] = (x << 16) | y
            qsort(cur, count, sizeof(uint64_t), cmp_u64)
            for i in range(count):
                XO[out + i] = <int64_t>(cur[i] >> 16)
                YO[out + i] = <int64_t>(cur[i] & 0xFFFF)
            out += count
            S[u + 1] = out
    free(cur)
    free(nxt)
    err = None
    if err_unit >= 0:
        msg = {1: "occupancy stream too short for its tree",
               2: "occupancy nibble outside 1..15",
               3: "surplus nibble(s) after leaf level"}[code]
        err = (err_unit, msg)
        starts = starts[:err_unit + 1]
    return xs[:out].copy(), ys[:out].copy(), starts, err


# ----------------------------------------------------------------- predictor

cdef struct Model:
    const float* w0
    const float* b0
    const float* w1
    const float* b1
    const float* w2
    const float* b2
    int window


cdef int predict_order(Model* m, const float* hist, int* order) noexcept nogil:
    """Logits in the normative float32 order, then symbols by descending logit."""
    cdef float h0[16]
    cdef float h1[64]
    cdef float z[16]
    cdef float acc
    cdef int i, j, o, s, cur, N = m.window
    for j in range(16):
        acc = m.b0[j]
        for i in range(N):
            acc = acc + m.w0[j * N + i] * hist[i * 16 + j]
        h0[j] = acc if acc > 0 else 0.0
    for o in range(64):
        acc = m.b1[o]
        for j in range(16):
            acc = acc + m.w1[o * 16 + j] * h0[j]
        h1[o] = acc if acc > 0 else 0.0
    for s in range(16):
        acc = m.b2[s]
        for o in range(64):
            acc = acc + m.w2[s * 64 + o] * h1[o]
        # NaN or +-Inf: reject (acc - acc is 0 only for finite values)
        if not (acc - acc == 0):
            return -1
        z[s] = acc
    for s in range(16):
        order[s] = s
    for i in range(1, 16):
        cur = order[i]
        j = i - 1
        while j >= 0 and z[order[j]] < z[cur]:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = cur
    return 0


cdef inline void push_pmf(float* hist, int N, const uint8_t* nib, Py_ssize_t n) noexcept nogil:
    cdef int64_t counts[16]
    cdef int s
    cdef Py_ssize_t i
    for s in range(16):
        counts[s] = 0
    for i in range(n):
        counts[nib[i]] += 1
    memmove(hist, hist + 16, (N - 1) * 16 * sizeof(float))
    for s in range(16):
        hist[(N - 1) * 16 + s] = <float>(<double>counts[s] / <double>n)


cdef object _model_arrays(model):
    arrs = [np.ascontiguousarray(a, dtype=np.float32) for a in (
        model.arrays() if hasattr(model, "arrays") else model)]
    N = arrs[0].shape[1]
    if N < 1 or N > MAX_WINDOW:
        raise ModelError(f"window {N} unsupported by the compiled kernel")
    return arrs


cdef void fill_model(Model* m, list arrs):
    cdef const float[:, ::1] w0 = arrs[0]
    cdef const float[::1] b0 = arrs[1]
    cdef const float[:, ::1] w1 = arrs[2]
    cdef const float[::1] b1 = arrs[3]
    cdef const float[:, ::1] w2 = arrs[4]
    cdef const float[::1] b2 = arrs[5]
    m.w0 = &w0[0, 0]
    m.b0 = &b0[0]
    m.w1 = &w1[0, 0]
    m.b1 = &b1[0]
    m.w2 = &w2[0, 0]
    m.b2 = &b2[0]
    m.window = w0.shape[1]


# ------------------------------------------------------------------- writer

cdef struct Writer:
    uint8_t* buf
    Py_ssize_t pos
    uint64_t acc
    int nbits


cdef inline void put_bits(Writer* w, uint64_t value, int count) noexcept nogil:
    w.acc = (w.acc << count) | value
    w.nbits += count
    while w.nbits >= 8:
        w.nbits -= 8
        w.buf[w.pos] = <uint8_t>((w.acc >> w.nbits) & 0xFF)
        w.pos += 1
    w.acc &= (<uint64_t>1 << w.nbits) - 1


cdef inline void align(Writer* w) noexcept nogil:
    if w.nbits:
        w.buf[w.pos] = <uint8_t>((w.acc << (8 - w.nbits)) & 0xFF)
        w.pos += 1
        w.acc = 0
        w.nbits = 0


cdef inline void put_varint(Writer* w, uint64_t v) noexcept nogil:
    while v > 0x7F:
        w.buf[w.pos] = <uint8_t>(0x80 | (v & 0x7F))
        w.pos += 1
        v >>= 7
    w.buf[w.pos] = <uint8_t>v
    w.pos += 1


def encode_body(nibbles, nib_starts, pol_bits, ev_starts, dts, model, int k):
    cdef const uint8_t[::1] NB = np.ascontiguousarray(nibbles, dtype=np.uint8)
    cdef const int64_t[::1] NS = np.ascontiguousarray(nib_starts, dtype=np.int64)
    cdef const uint8_t[::1] PB = np.ascontiguousarray(pol_bits, dtype=np.uint8)
    cdef const int64_t[::1] ES = np.ascontiguousarray(ev_starts, dtype=np.int64)
    cdef const uint64_t[::1] DT = np.ascontiguousarray(dts, dtype=np.uint64)
    cdef list arrs = _model_arrays(model)
    cdef Model m
    fill_model(&m, arrs)
    cdef int N = m.window
    cdef Py_ssize_t n_units = NS.shape[0] - 1
    cdef Py_ssize_t cap = 2 * NB.shape[0] + PB.shape[0] // 8 + 23 * n_units + 16
    out = np.empty(cap, dtype=np.uint8)
    offsets = np.zeros(n_units + 1, dtype=np.int64)
    cdef uint8_t[::1] O = out
    cdef int64_t[::1] OFF = offsets
    hist_arr = np.full((N, 16), np.float32(1.0 / 16), dtype=np.float32)
    cdef float[:, ::1] H = hist_arr
    cdef Writer w
    w.buf = &O[0]
    w.pos = 0
    w.acc = 0
    w.nbits = 0
    cdef int order[16]
    cdef int rank_of[16]
    cdef Py_ssize_t u, i, a, b, e0, e1
    cdef int r, q, failed = -1
    cdef uint64_t rank
    with nogil:
        for u in range(n_units):
            a = NS[u]
            b = NS[u + 1]
            e0 = ES[u]
            e1 = ES[u + 1]
            if predict_order(&m, &H[0, 0], order) != 0:
                failed = u
                break
            for r in range(16):
                rank_of[order[r]] = r
            put_varint(&w, DT[u])
            put_varint(&w, <uint64_t>(e1 - e0))
            for i in range(a, b):
                rank = <uint64_t>rank_of[NB[i]]
                q = <int>(rank >> k)
                put_bits(&w, (((<uint64_t>1 << q) - 1) << (1 + k)) | (rank & ((<uint64_t>1 << k) - 1)),
                         q + 1 + k)
            align(&w)
            for i in range(e0, e1):
                put_bits(&w, PB[i] & 1, 1)
            align(&w)
            OFF[u + 1] = w.pos
            push_pmf(&H[0, 0], N, &NB[a], b - a)
    if failed >= 0:
        raise ModelError(f"predictor produced non-finite logits at unit {failed}")
    return out[:w.pos].tobytes(), offsets


# ------------------------------------------------------------------- parser

cdef struct Reader:
    const uint8_t* data
    Py_ssize_t nbits
    Py_ssize_t pos


cdef inline int get_bit(Reader* r) noexcept nogil:
    if r.pos >= r.nbits:
        return -1
    cdef int bit = (r.data[r.pos >> 3] >> (7 - (r.pos & 7))) & 1
    r.pos += 1
    return bit


cdef inline int get_varint(const uint8_t* data, Py_ssize_t n, Py_ssize_t* pos,
                           uint64_t* value) noexcept nogil:
    cdef uint64_t v = 0
    cdef int shift = 0, i
    cdef uint8_t byte
    for i in range(10):
        if pos[0] >= n:
            return 1
        byte = data[pos[0]]
        pos[0] += 1
        if shift == 63 and (byte & 0x7E):
            return 2
        v |= (<uint64_t>(byte & 0x7F)) << shift
        if not byte & 0x80:
            value[0] = v
            return 0
        shift += 7
    return 2


_PARSE_ERRORS = {
    1: "truncated varint",
    2: "varint overflow",
    3: "zero timestamp delta between units",
    4: "timestamp delta overflows int64",
    5: "unit with zero events",
    6: "predictor produced non-finite logits",
    7: "more tree nodes than events",
    8: "bitstream exhausted",
    9: "Rice quotient out of range",
    10: "decoded the empty-node symbol 0 inside a stream",
    11: "event count disagrees with the tree's leaf count",
    12: "polarity payload truncated",
    13: "out of memory",
}


def parse_body(data, Py_ssize_t pos, Py_ssize_t n_units, int depth, int k, model):
    cdef const uint8_t[::1] D = np.frombuffer(bytes(data), dtype=np.uint8) if len(data) \
        else np.zeros(1, dtype=np.uint8)
    cdef Py_ssize_t n = len(data)
    cdef list arrs = _model_arrays(model)
    cdef Model m
    fill_model(&m, arrs)
    cdef int N = m.window
    # every record takes at least four bytes, which bounds the useful capacity
    cdef Py_ssize_t ucap = min(n_units, (n - pos) // 4 + 1) + 1
    if ucap < 1:
        ucap = 1
    dts = np.zeros(ucap, dtype=np.uint64)
    counts = np.zeros(ucap, dtype=np.int64)
    pol = np.zeros(ucap, dtype=np.int64)
    recs = np.zeros(ucap + 1, dtype=np.int64)
    nstarts = np.zeros(ucap + 1, dtype=np.int64)
    cdef uint64_t[::1] DTO = dts
    cdef int64_t[::1] CO = counts
    cdef int64_t[::1] PO = pol
    cdef int64_t[::1] RO = recs
    cdef int64_t[::1] NSO = nstarts
    hist_arr = np.full((N, 16), np.float32(1.0 / 16), dtype=np.float32)
    cdef float[:, ::1] H = hist_arr
    cdef Py_ssize_t nib_cap = 1024, nib_len = 0
    cdef uint8_t* nb = <uint8_t*>malloc(nib_cap)
    cdef uint8_t* grown
    if nb == NULL:
        raise MemoryError()
    cdef Reader rd
    rd.data = &D[0]
    rd.nbits = 8 * n
    cdef int order[16]
    cdef int code = 0, bit, lvl, q, max_q = 15 >> k, j
    cdef Py_ssize_t u = 0, c, level_count, pop, unit_start, pol_end
    cdef uint64_t dt, count, rank
    RO[0] = pos
    with nogil:
        while u < n_units:
            code = get_varint(&D[0], n, &pos, &dt)
            if code:
                break
            if u and dt == 0:
                code = 3
                break
            if dt >> 63:
                code = 4
                break
            code = get_varint(&D[0], n, &pos, &count)
            if code:
                break
            if count == 0:
                code = 5
                break
            if predict_order(&m, &H[0, 0], order) != 0:
                code = 6
                break
            rd.pos = 8 * pos
            unit_start = nib_len
            level_count = 1
            for lvl in range(depth):
                if <uint64_t>level_count > count:
                    code = 7
                    break
                if nib_len + level_count > nib_cap:
                    nib_cap = 2 * (nib_len + level_count)
                    grown = <uint8_t*>realloc(nb, nib_cap)
                    if grown == NULL:
                        code = 13
                        break
                    nb = grown
                pop = 0
                for c in range(level_count):
                    q = 0
                    while True:
                        bit = get_bit(&rd)
                        if bit <= 0:
                            break
                        q += 1
                        if q > max_q:
                            break
                    if bit < 0:
                        code = 8
                        break
                    if q > max_q:
                        code = 9
                        break
                    rank = <uint64_t>q << k
                    for j in range(k - 1, -1, -1):
                        bit = get_bit(&rd)
                        if bit < 0:
                            break
                        rank |= (<uint64_t>bit) << j
                    if bit < 0:
                        code = 8
                        break
                    if rank > 15:
                        code = 9
                        break
                    if order[rank] == 0:
                        code = 10
                        break
                    nb[nib_len] = <uint8_t>order[rank]
                    nib_len += 1
                    pop += POP[order[rank]]
                if code:
                    break
                level_count = pop
            if code:
                break
            if <uint64_t>level_count != count:
                code = 11
                break
            pos = (rd.pos + 7) >> 3
            pol_end = pos + <Py_ssize_t>((count + 7) >> 3)
            if pol_end > n:
                code = 12
                break
            DTO[u] = dt
            CO[u] = <int64_t>count
            PO[u] = pos
            pos = pol_end
            RO[u + 1] = pos
            NSO[u + 1] = nib_len
            push_pmf(&H[0, 0], N, nb + unit_start, nib_len - unit_start)
            u += 1
    done = u
    nib_out = np.empty(NSO[done], dtype=np.uint8)
    cdef uint8_t[::1] NO = nib_out
    cdef Py_ssize_t t
    for t in range(NSO[done]):
        NO[t] = nb[t]
    free(nb)
    err = (done, _PARSE_ERRORS[code]) if code else None
    return ParsedBody(nib_out, nstarts[:done + 1].copy(), dts[:done].copy(),
                      counts[:done].copy(), pol[:done].copy(), recs[:done + 1].copy(),
                      int(RO[done]), err)
