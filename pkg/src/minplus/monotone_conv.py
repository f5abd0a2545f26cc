"""Exact monotone min-plus convolution via prime fingerprints and bit levels.

The basic path scales entries down by s = floor(n^alpha), convolves the
compressed sequences combinatorially, fingerprints the residues of the
compressed values modulo a random prime inside one long trivariate polynomial
product, and repairs the fingerprint collisions pair by pair.  The recursive
path instead peels the residue A mod p one bit per level, carrying compact
segment sets of the star-mismatched index pairs between levels.

Conventions:
    - Sequences are 0-based numpy arrays; offset i stands for the 1-based
      index i+1.  Convolution outputs follow core's layout: C_k for
      k = 2..2n lives at offset t = k-2, so output offset t collects operand
      offset pairs (i, j) with i + j = t.
    - A run is a maximal interval of equal value; an infinite stretch is its
      own run, so runs never straddle a finite/infinite boundary.
    - The basic algorithm's erroneous sets are (m, 2) arrays of (i, j) offset
      pairs.  The recursion stores columnar segments ([i0, i1], t): for every
      i in [i0, i1] both A_i and B_{t-i} are finite and the level and star
      values on both sides match those at i0.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .core import (
    INF,
    SAT,
    Seq,
    is_inf,
    minplus_conv_oracle,
    reconstruct_from_parts,
    split_seq_by_residue,
)
from .monotone_mm import (
    B_WINDOW,
    GUARD_FACTOR_DEFAULT,
    MAX_RESTARTS,
    SMALL_N_CUTOFF,
    _REFINE_CHUNK,
    GuardBlowup,
    RunResult,
    RunStats,
)
from .polyalg import pack_trivariate, seq_poly_mul
from .primes import basic_interval, recursive_interval, sampling_pool
from .rangetree import TreeStack

BASIC_B_OFFSETS = (0, 1, 2)
MAX_CHILDREN_CONV = 4


def _require_monotone(x: np.ndarray, what: str, allow_inf: bool) -> None:
    fin = ~is_inf(x)
    if not allow_inf and not fin.all():
        raise ValueError(f"{what} must be finite")
    vals = x[fin]
    if vals.size and (np.diff(vals) < 0).any():
        raise ValueError(f"{what} must be non-decreasing over its finite entries")


def _runs(x: np.ndarray):
    """Maximal equal-value runs of a sequence: (starts, ends, values)."""
    n = x.shape[0]
    starts = np.flatnonzero(np.r_[True, x[1:] != x[:-1]])
    ends = np.r_[starts[1:] - 1, n - 1]
    return starts, ends, x[starts]


def _finite_runs(x: np.ndarray):
    s, e, v = _runs(x)
    keep = v < SAT
    return s[keep], e[keep], v[keep]


def _expand_intervals(lo: np.ndarray, hi: np.ndarray):
    """Flatten inclusive intervals: (source row per element, element values)."""
    ln = hi - lo + 1
    total = int(ln.sum())
    row = np.repeat(np.arange(lo.shape[0]), ln)
    off = np.arange(total) - np.repeat(np.cumsum(ln) - ln, ln)
    return row, off + np.repeat(lo, ln)


def _next_change_1d(x: np.ndarray) -> np.ndarray:
    """nxt[i] = smallest i' > i with x[i'] != x[i], else n."""
    n = x.shape[0]
    nxt = np.full(n, n, dtype=np.int64)
    if n > 1:
        cand = np.where(x[1:] != x[:-1], np.arange(1, n), n)
        nxt[:-1] = np.minimum.accumulate(cand[::-1])[::-1]
    return nxt


def _run_start_1d(x: np.ndarray) -> np.ndarray:
    """start[j] = first index of the run of x containing j."""
    n = x.shape[0]
    starts = np.r_[True, x[1:] != x[:-1]]
    return np.maximum.accumulate(np.where(starts, np.arange(n), 0))


# ---------------------------------------------------------------------------
# compressed approximation


_PAIR_CHUNK = 1 << 21


def _approx_conv_arrays(at: np.ndarray, bt: np.ndarray) -> np.ndarray:
    """Exact min-plus convolution of run-compressed sequences.

    Each pair of finite runs contributes one constant interval update on the
    output tree: run [sa, ea] x [sb, eb] covers exactly the output offsets
    sa+sb .. ea+eb at value va+vb.  Cost is (run pairs) tree updates instead
    of n^2 additions.
    """
    n = at.shape[0]
    width = 2 * n - 1
    sa, ea, va = _finite_runs(at)
    sb, eb, vb = _finite_runs(bt)
    ts = TreeStack(1, width)
    if sa.size and sb.size:
        block = max(1, _PAIR_CHUNK // sb.size)
        for a0 in range(0, sa.size, block):
            a1 = min(sa.size, a0 + block)
            lo = (sa[a0:a1, None] + sb[None, :]).ravel()
            hi = (ea[a0:a1, None] + eb[None, :]).ravel()
            v = (va[a0:a1, None] + vb[None, :]).ravel()
            ts.bulk_chmin(np.zeros(lo.shape[0], dtype=np.int64), lo + 1, hi + 1, v)
    out = ts.snapshot_all()[0]
    return np.where(out >= SAT, INF, out)


def approx_conv(At: Seq, Bt: Seq) -> Seq:
    """Convolution of two non-decreasing compressed sequences, exact."""
    if At.n != Bt.n:
        raise ValueError("operands must have equal length")
    _require_monotone(At.a, "left operand", allow_inf=True)
    _require_monotone(Bt.a, "right operand", allow_inf=True)
    return Seq(2 * At.n - 1, _approx_conv_arrays(At.a, Bt.a))


# ---------------------------------------------------------------------------
# basic erroneous-pair sets


def compute_Tb_conv(At: Seq, Bt: Seq, Ct: Seq, p: int, b: int) -> np.ndarray:
    """All (i, j) with At_i + Bt_j != Ct_{i+j} + b but congruent mod p.

    Searches per run-pair: within one pair of runs the sum is a single value,
    so the qualifying output offsets are found with binary searches in a
    residue-bucketed index of Ct, and only then expanded into pairs.
    Returns an (m, 2) int64 array of offset pairs.
    """
    at, bt, ct = At.a, Bt.a, Ct.a
    n = at.shape[0]
    if bt.shape[0] != n or ct.shape[0] != 2 * n - 1:
        raise ValueError("operand lengths are inconsistent")
    sa, ea, va = _finite_runs(at)
    sb, eb, vb = _finite_runs(bt)
    out = []
    if sa.size and sb.size:
        m_code = 2 * n
        fin_t = np.flatnonzero(~is_inf(ct))
        codes = np.sort((ct[fin_t] % p) * m_code + fin_t)
        block = max(1, _PAIR_CHUNK // sb.size)
        for a0 in range(0, sa.size, block):
            a1 = min(sa.size, a0 + block)
            delta = (va[a0:a1, None] + vb[None, :]).ravel()
            klo = (sa[a0:a1, None] + sb[None, :]).ravel()
            khi = (ea[a0:a1, None] + eb[None, :]).ravel()
            res = (delta - b) % p
            lo_idx = np.searchsorted(codes, res * m_code + klo, side="left")
            hi_idx = np.searchsorted(codes, res * m_code + khi, side="right")
            pair, pos = _expand_intervals(lo_idx, hi_idx - 1)
            if not pair.size:
                continue
            t = codes[pos] % m_code
            keep = ct[t] + b != delta[pair]
            pair, t = pair[keep], t[keep]
            rsa = np.repeat(sa[a0:a1], sb.size)
            rea = np.repeat(ea[a0:a1], sb.size)
            rsb = np.tile(sb, a1 - a0)
            reb = np.tile(eb, a1 - a0)
            ilo = np.maximum(rsa[pair], t - reb[pair])
            ihi = np.minimum(rea[pair], t - rsb[pair])
            row, ii = _expand_intervals(ilo, ihi)
            out.append(np.column_stack([ii, t[row] - ii]))
    if not out:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(out, axis=0)


# ---------------------------------------------------------------------------
# basic algorithm


def basic_monotone_conv(A: Seq, B: Seq, alpha: float = 0.2, beta: float = 0.4,
                        rng=None, force_prime: int | None = None) -> RunResult:
    """Exact convolution of two finite non-decreasing sequences.

    Scale down by s = floor(n^alpha), convolve the compressed sequences
    exactly, fingerprint the compressed residues mod a random prime from
    [n^beta, 2n^beta] inside a trivariate product, then for each output and
    each offset b in {0,1,2} subtract the collision terms enumerated by
    compute_Tb_conv and read the least surviving x-degree.  The prime draw
    affects running time only.
    """
    t_begin = time.perf_counter()
    a, b_seq = A.a, B.a
    n = A.n
    if B.n != n:
        raise ValueError("operands must have equal length")
    _require_monotone(a, "left operand", allow_inf=False)
    _require_monotone(b_seq, "right operand", allow_inf=False)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    s = max(1, int(np.floor(round(n ** alpha, 9))))

    t0 = time.perf_counter()
    at, bt = a // s, b_seq // s
    ct = _approx_conv_arrays(at, bt)
    approx_ms = (time.perf_counter() - t0) * 1e3

    widened = False
    if force_prime is not None:
        p = int(force_prime)
    else:
        pool, widened = sampling_pool(*basic_interval(n, beta))
        p = int(pool.primes[rng.integers(len(pool.primes))])

    t0 = time.perf_counter()
    xa, xb = a - s * at, b_seq - s * bt
    ya, yb = at % p, bt % p
    sx, sy = 2 * s - 1, 2 * p - 1
    coef_a = np.zeros((n, s, p), dtype=np.int64)
    coef_a[np.arange(n), xa, ya] = 1
    coef_b = np.zeros((n, s, p), dtype=np.int64)
    coef_b[np.arange(n), xb, yb] = 1
    prod = seq_poly_mul(pack_trivariate(coef_a, sx, sy, z_lo=0),
                        pack_trivariate(coef_b, sx, sy, z_lo=0))
    polymul_ms = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    width = 2 * n - 1
    block = sx * sy
    arr = prod.arr
    best = np.full(width, INF, dtype=np.int64)
    at_seq, bt_seq, ct_seq = Seq(n, at), Seq(n, bt), Seq(width, ct)
    sum_t = 0
    for boff in BASIC_B_OFFSETS:
        r = (ct + boff) % p
        base = np.arange(width) * block
        sl = np.zeros((width, sx, 2), dtype=np.int64)
        idx0 = base[:, None] + r[:, None] * sx + np.arange(sx)[None, :]
        sl[:, :, 0] = arr[idx0]
        high = r + p <= sy - 1  # the doubled residue slot may exceed the window
        idx1 = base[:, None] + np.minimum(r + p, sy - 1)[:, None] * sx + np.arange(sx)[None, :]
        sl[:, :, 1] = np.where(high[:, None], arr[idx1], 0)
        pairs = compute_Tb_conv(at_seq, bt_seq, ct_seq, p, boff)
        sum_t += pairs.shape[0]
        if pairs.size:
            pi, pj = pairs[:, 0], pairs[:, 1]
            tt = pi + pj
            ydeg = ya[pi] + yb[pj]
            slot, rem = np.divmod(ydeg - r[tt], p)
            assert not rem.any() and ((slot == 0) | (slot == 1)).all(), \
                "collision pair off its residue slot"
            cnt = np.bincount((tt * sx + xa[pi] + xb[pj]) * 2 + slot,
                              minlength=width * sx * 2).reshape(width, sx, 2)
            sl -= cnt
            if (sl < 0).any():
                raise RuntimeError("negative coefficient after erroneous-term subtraction")
        lane = sl.sum(axis=2)
        pos = lane > 0
        has = pos.any(axis=1)
        cand = np.where(has, np.int64(s) * (ct + boff) + pos.argmax(axis=1), INF)
        np.minimum(best, cand, out=best)
    best[is_inf(ct)] = INF
    subtract_ms = (time.perf_counter() - t0) * 1e3

    stats = RunStats(
        algorithm="basic-conv", n=n, engine="poly", alpha=alpha, beta=beta, p=p,
        widened=widened, level_T_sizes=(sum_t,),
        phase_approx_ms=approx_ms, phase_polymul_ms=polymul_ms,
        phase_subtract_ms=subtract_ms,
        total_ms=(time.perf_counter() - t_begin) * 1e3,
    )
    return RunResult(Seq(width, best), stats)


# ---------------------------------------------------------------------------
# recursive machinery


@dataclass
class ConvSegments:
    """Columnar segment sets ([i0, i1], t) bucketed by offset b."""

    i0: np.ndarray
    i1: np.ndarray
    t: np.ndarray
    b: np.ndarray

    @classmethod
    def empty(cls) -> "ConvSegments":
        z = np.empty(0, dtype=np.int64)
        return cls(z.copy(), z.copy(), z.copy(), z.copy())

    @property
    def total_segments(self) -> int:
        return int(self.i0.shape[0])

    def count_for(self, b: int) -> int:
        return int((self.b == b).sum())

    def expanded_pairs(self) -> np.ndarray:
        """(m, 2) rows (i, t): one row per covered index pair."""
        row, ii = _expand_intervals(self.i0, self.i1)
        return np.column_stack([ii, self.t[row]])

    def expanded_with_b(self) -> np.ndarray:
        """(m, 3) rows (i, t, b)."""
        row, ii = _expand_intervals(self.i0, self.i1)
        return np.column_stack([ii, self.t[row], self.b[row]])


@dataclass(frozen=True)
class ConvLevelState:
    """One level of the recursion, exposed for invariant checks."""

    l: int
    al: Seq
    bl: Seq
    cl: Seq
    t: ConvSegments
    astar: Seq
    bstar: Seq
    cstar: Seq
    p: int
    h: int


def _assert_assumption(a: np.ndarray, b: np.ndarray, p: int) -> None:
    for x, side in ((a, "left"), (b, "right")):
        fin = ~is_inf(x)
        if np.any(3 * (x[fin] % p) >= p):
            raise AssertionError(f"{side} operand violates the residue assumption")


def _conv_top_segments(astar: np.ndarray, bstar: np.ndarray,
                       cstar: np.ndarray) -> ConvSegments:
    """Maximal constant-star segments with a star mismatch, bucket 0.

    A position (i, t) starts a segment iff i is the diagonal's first valid
    index, an A*-run starts at i, or a B*-run starts at t-i+1 (the previous
    pair sat in a different B-run).  Generating those three candidate
    families, deduplicating, and closing each diagonal gives every maximal
    segment in one vectorized pass.
    """
    n = astar.shape[0]
    width = 2 * n - 1
    sa = _runs(astar)[0]
    sb = _runs(bstar)[0]
    offs = np.arange(n)
    cand_a = (np.repeat(sa, n) + np.tile(offs, sa.size)) * n + np.repeat(sa, n)
    jb = sb[sb >= 1]
    t_b = np.repeat(jb - 1, n) + np.tile(offs, jb.size)
    cand_b = t_b * n + np.tile(offs, jb.size)
    t_d = np.arange(width)
    cand_d = t_d * n + np.maximum(0, t_d - n + 1)
    codes = np.unique(np.concatenate([cand_a, cand_b, cand_d]))
    tt, ii = codes // n, codes % n
    same = np.r_[tt[1:] == tt[:-1], False]
    ends = np.where(same, np.r_[ii[1:], 0] - 1, np.minimum(n - 1, tt))
    va, vb2 = astar[ii], bstar[tt - ii]
    keep = (va < SAT) & (vb2 < SAT) & (cstar[tt] < SAT) & (va + vb2 != cstar[tt])
    return ConvSegments(ii[keep], ends[keep], tt[keep],
                        np.zeros(int(keep.sum()), dtype=np.int64))


def init_conv_top(a: Seq, b: Seq, astar: Seq, bstar: Seq, cstar: Seq,
                  p: int) -> ConvLevelState:
    """Top level l=h: zero level sequences and the star-mismatch segments."""
    h = int(p).bit_length()
    n = a.n
    al = np.where(is_inf(a.a), INF, 0)
    bl = np.where(is_inf(b.a), INF, 0)
    cl = np.where(is_inf(cstar.a), INF, 0)
    t = _conv_top_segments(astar.a, bstar.a, cstar.a)
    return ConvLevelState(h, Seq(n, al), Seq(n, bl), Seq(2 * n - 1, cl), t,
                          astar, bstar, cstar, p, h)


def refine_conv_segments(t_next: ConvSegments, al: np.ndarray, bl: np.ndarray,
                         cl: np.ndarray) -> ConvSegments:
    """Split each stored segment at the level-l value changes and re-bucket.

    Within a parent both A^(l) and B^(l) have at most two runs (monotone over
    a constant parent value), so a parent yields at most MAX_CHILDREN_CONV
    children; each child joins bucket A^(l)+B^(l)-C^(l) when inside the
    window, and drops out otherwise.
    """
    m = t_next.total_segments
    if m == 0:
        return ConvSegments.empty()
    nxt_a = _next_change_1d(al)
    run_b = _run_start_1d(bl)
    keep_i0, keep_i1, keep_t, keep_b = [], [], [], []
    for c0 in range(0, m, _REFINE_CHUNK):
        c1 = min(m, c0 + _REFINE_CHUNK)
        cur = t_next.i0[c0:c1].copy()
        shi = t_next.i1[c0:c1]
        st = t_next.t[c0:c1]
        rounds = 0
        while True:
            act = cur <= shi
            if not act.any():
                break
            rounds += 1
            assert rounds <= MAX_CHILDREN_CONV, \
                "segment split beyond the four-child bound"
            cur, shi, st = cur[act], shi[act], st[act]
            nxt = np.minimum(np.minimum(nxt_a[cur], st - run_b[st - cur] + 1),
                             shi + 1)
            bb = al[cur] + bl[st - cur] - cl[st]
            ok = np.abs(bb) <= B_WINDOW
            keep_i0.append(cur[ok])
            keep_i1.append(nxt[ok] - 1)
            keep_t.append(st[ok])
            keep_b.append(bb[ok])
            cur = nxt
    return ConvSegments(np.concatenate(keep_i0), np.concatenate(keep_i1),
                        np.concatenate(keep_t), np.concatenate(keep_b))


def _conv_subtraction_counts(t_next: ConvSegments, b: int, pref_a: np.ndarray,
                             pref_b: np.ndarray, width: int):
    """R^p for bucket b as per-offset x-degree counts, shape (width, 3).

    Over a stored segment the A bit rises 0->1 along i and the B bit (read at
    t-i) falls 1->0, so the x-degree takes each of 0,1,2 on at most one
    subinterval located by the two switch points.
    """
    sel = t_next.b == b
    if not sel.any():
        return None
    i0, i1, tt = t_next.i0[sel], t_next.i1[sel], t_next.t[sel]
    cnt_a = pref_a[i1 + 1] - pref_a[i0]
    cnt_b = pref_b[tt - i0 + 1] - pref_b[tt - i1]
    first_a1 = i1 - cnt_a + 1
    last_b1 = i0 + cnt_b - 1
    c2 = np.maximum(0, np.minimum(i1, last_b1) - np.maximum(i0, first_a1) + 1)
    c0 = np.maximum(0, np.minimum(i1, first_a1 - 1) - np.maximum(i0, last_b1 + 1) + 1)
    c1 = (i1 - i0 + 1) - c0 - c2
    assert (c1 >= 0).all(), "segment bit runs not monotone"
    r3 = np.zeros((width, 3), dtype=np.int64)
    np.add.at(r3, (tt, 0), c0)
    np.add.at(r3, (tt, 1), c1)
    np.add.at(r3, (tt, 2), c2)
    return r3


def _extract_conv_level(arr: np.ndarray, sx: int, sy: int, c_next: np.ndarray,
                        t_next: ConvSegments, bit_a: np.ndarray,
                        bit_b: np.ndarray) -> np.ndarray:
    """Read C^(l) out of the level product by subtracting stored collisions."""
    width = c_next.shape[0]
    block = sx * sy
    fin = c_next < SAT
    pref_a = np.zeros(bit_a.shape[0] + 1, dtype=np.int64)
    np.cumsum(bit_a, out=pref_a[1:])
    pref_b = np.zeros(bit_b.shape[0] + 1, dtype=np.int64)
    np.cumsum(bit_b, out=pref_b[1:])
    base = np.arange(width) * block
    xoff = np.arange(sx)
    best = np.full(width, INF, dtype=np.int64)
    for b in range(-B_WINDOW, B_WINDOW + 1):
        d = np.where(fin, c_next + b, 0)
        valid = fin & (d >= 0) & (d < sy)
        if not valid.any():
            continue
        sl = arr[base[:, None] + d[:, None] * sx + xoff[None, :]]
        sl = np.where(valid[:, None], sl, 0)
        r3 = _conv_subtraction_counts(t_next, b, pref_a, pref_b, width)
        if r3 is not None:
            sl = sl - r3
            if (sl[valid] < 0).any():
                raise RuntimeError(
                    "negative coefficient after erroneous-term subtraction")
        pos = sl > 0
        has = pos.any(axis=1) & valid
        cand = np.where(has, 2 * d + pos.argmax(axis=1), INF)
        np.minimum(best, cand, out=best)
    return best


# ---------------------------------------------------------------------------
# fused (polynomial-free) level kernel

_FUSED_CAP = 1 << 22


def _diag_min(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Minimum of f[i] + g[j] along every anti-diagonal i + j."""
    ra, rb = f.shape[0], g.shape[0]
    if ra == 1:
        return f[0] + g
    if rb == 1:
        return f + g[0]
    res = np.full(ra + rb - 1, INF, dtype=np.int64)
    ch = max(1, min(ra, _PAIR_CHUNK // rb))
    for r0 in range(0, ra, ch):
        c = min(ch, ra - r0)
        w = c + rb
        # shear the block so anti-diagonals become columns: row r shifted by r
        buf = np.full((c, w), INF, dtype=np.int64)
        buf[:, :rb] = f[r0:r0 + c, None] + g[None, :]
        sheared = as_strided(buf, shape=(c, w - 1),
                             strides=(buf.strides[0] - buf.strides[1],
                                      buf.strides[1]))
        np.minimum(res[r0:r0 + w - 1], sheared.min(axis=0),
                   out=res[r0:r0 + w - 1])
    return res


@dataclass
class _RectPlan:
    """Genuine star rectangles sorted into power-of-two shape buckets."""

    rsa: np.ndarray
    rea: np.ndarray
    rsb: np.ndarray
    reb: np.ndarray
    rval: np.ndarray
    ra: np.ndarray
    rb: np.ndarray
    klo: np.ndarray
    groups: list


def _rect_plan(astar: np.ndarray, bstar: np.ndarray,
               cstar: np.ndarray) -> _RectPlan:
    """Finite star-run rectangles that realize C* somewhere in their range.

    The per-value genuine test uses one binary search per rectangle against
    a (value, position)-sorted index of C*.  Surviving rectangles are sorted
    by padded shape so the level kernel can process equal-shape batches.
    """
    sa, ea, va = _finite_runs(astar)
    sb, eb, vb = _finite_runs(bstar)
    z = np.empty(0, dtype=np.int64)
    if not (sa.size and sb.size):
        return _RectPlan(*([z.copy() for _ in range(8)] + [[]]))
    width = cstar.shape[0]
    fin_t = np.flatnonzero(cstar < SAT)
    codes = np.sort(cstar[fin_t] * (width + 1) + fin_t)
    val = (va[:, None] + vb[None, :]).ravel()
    klo = (sa[:, None] + sb[None, :]).ravel()
    khi = (ea[:, None] + eb[None, :]).ravel()
    hit = (np.searchsorted(codes, val * (width + 1) + khi, side="right")
           > np.searchsorted(codes, val * (width + 1) + klo, side="left"))
    rsa = np.repeat(sa, sb.size)[hit]
    rea = np.repeat(ea, sb.size)[hit]
    rsb = np.tile(sb, sa.size)[hit]
    reb = np.tile(eb, sa.size)[hit]
    rval, klo = val[hit], klo[hit]
    ra, rb = rea - rsa + 1, reb - rsb + 1
    key = np.ceil(np.log2(ra)).astype(np.int64) * 64 + \
        np.ceil(np.log2(rb)).astype(np.int64)
    order = np.argsort(key, kind="stable")
    rsa, rea, rsb, reb = rsa[order], rea[order], rsb[order], reb[order]
    rval, klo, ra, rb, key = rval[order], klo[order], ra[order], rb[order], key[order]
    uk, starts = np.unique(key, return_index=True)
    ends = np.r_[starts[1:], key.shape[0]]
    groups = [(1 << int(k // 64), 1 << int(k % 64), int(s), int(e))
              for k, s, e in zip(uk, starts, ends)]
    return _RectPlan(rsa, rea, rsb, reb, rval, ra, rb, klo, groups)


_SENT32 = np.int32(1) << 29


def _fused_conv_level(al: np.ndarray, bl: np.ndarray, plan: _RectPlan,
                      cstar: np.ndarray) -> np.ndarray:
    """C^(l) as the genuine minimum: star-matching pairs only, per rectangle.

    Small rectangles run as padded equal-shape batches (one shear and min per
    batch) over int32 buffers -- level values stay below p, so sums fit with
    room for the padding sentinel.  The few rectangles too large for a batch
    buffer fall back to the row-chunked single-rectangle path.
    """
    n = al.shape[0]
    width = cstar.shape[0]
    out = np.full(width, INF, dtype=np.int64)
    # sentinel slot at index n feeds the shape padding
    al32 = np.empty(n + 1, dtype=np.int32)
    al32[:n] = np.where(al >= SAT, _SENT32, al)
    al32[n] = _SENT32
    bl32 = np.empty(n + 1, dtype=np.int32)
    bl32[:n] = np.where(bl >= SAT, _SENT32, bl)
    bl32[n] = _SENT32
    for pa, pb, s, e in plan.groups:
        w = pa + pb
        if pa * w > _FUSED_CAP:
            for q in range(s, e):
                sa, ea, sb, eb = (int(plan.rsa[q]), int(plan.rea[q]),
                                  int(plan.rsb[q]), int(plan.reb[q]))
                dm = _diag_min(al[sa:ea + 1], bl[sb:eb + 1])
                lo = sa + sb
                seg = out[lo:lo + dm.shape[0]]
                genuine = cstar[lo:lo + dm.shape[0]] == plan.rval[q]
                np.minimum(seg, np.where(genuine, dm, INF), out=seg)
            continue
        mc = max(1, _FUSED_CAP // (pa * w))
        offs_a, offs_b = np.arange(pa)[None, :], np.arange(pb)[None, :]
        offs_w = np.arange(w - 1)
        for c0 in range(s, e, mc):
            c1 = min(e, c0 + mc)
            m = c1 - c0
            ra_c, rb_c = plan.ra[c0:c1], plan.rb[c0:c1]
            ai = np.where(offs_a < ra_c[:, None],
                          plan.rsa[c0:c1, None] + offs_a, n)
            bj = np.where(offs_b < rb_c[:, None],
                          plan.rsb[c0:c1, None] + offs_b, n)
            buf = np.full((m, pa, w), _SENT32, dtype=np.int32)
            buf[:, :, :pb] = al32[ai][:, :, None] + bl32[bj][:, None, :]
            sheared = as_strided(buf, shape=(m, pa, w - 1),
                                 strides=(buf.strides[0],
                                          buf.strides[1] - buf.strides[2],
                                          buf.strides[2]))
            dm = sheared.min(axis=1)
            length = ra_c + rb_c - 1
            tt = np.minimum(plan.klo[c0:c1, None] + offs_w[None, :], width - 1)
            g = (offs_w[None, :] < length[:, None]) & \
                (cstar[tt] == plan.rval[c0:c1, None])
            np.minimum.at(out, tt[g], dm[g].astype(np.int64))
    return out


# ---------------------------------------------------------------------------
# level recursion driver


def run_conv_level_recursion(a: np.ndarray, b: np.ndarray, p: int, *,
                             engine: str = "poly",
                             guard_limit: float | None = None,
                             collect_states: bool = False,
                             timers: dict | None = None,
                             events: dict | None = None):
    """Run levels h..0 on one residue part; returns (C^(0), C*, T sizes[, states]).

    Inputs must already satisfy the residue assumption (low parts below p/3,
    monotone besides infinities).  Raises GuardBlowup when a level's segment
    count exceeds guard_limit.
    """
    n = a.shape[0]
    width = 2 * n - 1
    _assert_assumption(a, b, p)
    h = int(p).bit_length()
    a_inf, b_inf = is_inf(a), is_inf(b)
    timers = timers if timers is not None else {}
    events = events if events is not None else {}

    t0 = time.perf_counter()
    astar = np.where(a_inf, INF, a // p)
    bstar = np.where(b_inf, INF, b // p)
    cstar = _approx_conv_arrays(astar, bstar)
    t = _conv_top_segments(astar, bstar, cstar)
    timers["approx"] = timers.get("approx", 0.0) + (time.perf_counter() - t0)

    tsizes = [0] * (h + 1)
    tsizes[h] = t.total_segments
    if guard_limit is not None and t.total_segments > guard_limit:
        raise GuardBlowup(f"level {h}: {t.total_segments} segments")

    amod = np.where(a_inf, 0, a % p)
    bmod = np.where(b_inf, 0, b % p)
    c_prev = np.where(is_inf(cstar), INF, 0)

    states = []
    if collect_states:
        states.append(ConvLevelState(h, Seq(n, np.where(a_inf, INF, 0)),
                                     Seq(n, np.where(b_inf, INF, 0)),
                                     Seq(width, c_prev), t, Seq(n, astar),
                                     Seq(n, bstar), Seq(width, cstar), p, h))

    use_fused = engine == "fused"
    plan = None
    if use_fused:
        t0 = time.perf_counter()
        plan = _rect_plan(astar, bstar, cstar)
        timers["polymul"] = timers.get("polymul", 0.0) + (time.perf_counter() - t0)

    for l in range(h - 1, -1, -1):
        al = np.where(a_inf, INF, amod >> l)
        bl = np.where(b_inf, INF, bmod >> l)
        bit_a = np.where(a_inf, 0, (amod >> l) - 2 * (amod >> (l + 1)))
        bit_b = np.where(b_inf, 0, (bmod >> l) - 2 * (bmod >> (l + 1)))
        if use_fused:
            t0 = time.perf_counter()
            cl = _fused_conv_level(al, bl, plan, cstar)
            timers["polymul"] = timers.get("polymul", 0.0) + (time.perf_counter() - t0)
        else:
            t0 = time.perf_counter()
            ya = np.where(a_inf, 0, amod >> (l + 1))
            yb = np.where(b_inf, 0, bmod >> (l + 1))
            ymax = int(max(ya.max(initial=0), yb.max(initial=0)))
            sx, sy = 3, 2 * ymax + 1
            coef_a = np.zeros((n, 2, ymax + 1), dtype=np.int64)
            fa = np.flatnonzero(~a_inf)
            coef_a[fa, bit_a[fa], ya[fa]] = 1
            coef_b = np.zeros((n, 2, ymax + 1), dtype=np.int64)
            fb = np.flatnonzero(~b_inf)
            coef_b[fb, bit_b[fb], yb[fb]] = 1
            prod = seq_poly_mul(pack_trivariate(coef_a, sx, sy, z_lo=0),
                                pack_trivariate(coef_b, sx, sy, z_lo=0))
            timers["polymul"] = timers.get("polymul", 0.0) + (time.perf_counter() - t0)
            t0 = time.perf_counter()
            cl = _extract_conv_level(prod.arr, sx, sy, c_prev, t, bit_a, bit_b)
            timers["subtract"] = timers.get("subtract", 0.0) + (time.perf_counter() - t0)
        t0 = time.perf_counter()
        t = refine_conv_segments(t, al, bl, cl)
        timers["subtract"] = timers.get("subtract", 0.0) + (time.perf_counter() - t0)
        tsizes[l] = t.total_segments
        if guard_limit is not None and t.total_segments > guard_limit:
            raise GuardBlowup(f"level {l}: {t.total_segments} segments")
        if collect_states:
            states.append(ConvLevelState(l, Seq(n, al), Seq(n, bl),
                                         Seq(width, cl), t, Seq(n, astar),
                                         Seq(n, bstar), Seq(width, cstar), p, h))
        c_prev = cl

    if collect_states:
        return c_prev, cstar, tsizes, states
    return c_prev, cstar, tsizes


# ---------------------------------------------------------------------------
# public recursive driver


def _conv_guard_limit(n: int, alpha: float, guard: float | None):
    if guard is None:
        return None
    return guard * n ** (2.0 - alpha) * np.log2(max(n, 2)) ** 2


def recursive_monotone_conv(A: Seq, B: Seq, alpha: float = 0.5, rng=None,
                            engine: str = "auto",
                            force_prime: int | None = None,
                            guard: float | None = GUARD_FACTOR_DEFAULT) -> RunResult:
    """Exact convolution of two monotone sequences (infinities allowed).

    Splits both operands into residue parts, runs the bit-level recursion on
    each of the nine pairings, and recombines; the prime draw only affects
    running time.  engine="auto" picks the oracle below SMALL_N_CUTOFF
    (unless force_prime pins a real run), the rectangle kernel at large n,
    and the polynomial route at small n.
    """
    t_begin = time.perf_counter()
    n = A.n
    if B.n != n:
        raise ValueError("operands must have equal length")
    a, b = A.a, B.a
    _require_monotone(a, "left operand", allow_inf=True)
    _require_monotone(b, "right operand", allow_inf=True)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng

    resolved = engine
    if engine == "auto":
        if force_prime is None and n < SMALL_N_CUTOFF:
            resolved = "oracle"
        else:
            resolved = "fused" if n >= SMALL_N_CUTOFF else "poly"
    if resolved == "oracle":
        c = minplus_conv_oracle(a, b)
        stats = RunStats(algorithm="recursive-conv", n=n, engine="oracle",
                         alpha=alpha,
                         total_ms=(time.perf_counter() - t_begin) * 1e3)
        return RunResult(Seq(2 * n - 1, c), stats)

    lo, hi = recursive_interval(n, alpha)
    pool, widened = sampling_pool(lo, hi)
    limit = _conv_guard_limit(n, alpha, guard)
    tried: set[int] = set()
    restarts = 0
    guard_exhausted = False
    timers: dict = {}
    events: dict = {}

    while True:
        if force_prime is not None:
            p = int(force_prime)
        else:
            avail = [q for q in pool.primes if q not in tried]
            if not avail:
                guard_exhausted = True
                limit = None
                tried.clear()
                avail = list(pool.primes)
            p = int(avail[rng.integers(len(avail))])
        try:
            split = split_seq_by_residue(a, b, p)
            h = int(p).bit_length()
            level_totals = np.zeros(h + 1, dtype=np.int64)
            parts = []
            for ap in split.a_parts:
                for bp in split.b_parts:
                    c0, cs, tsz = run_conv_level_recursion(
                        ap, bp, p, engine=resolved,
                        guard_limit=limit, timers=timers, events=events)
                    level_totals += np.asarray(tsz)
                    parts.append(reconstruct_from_parts(cs, c0, p))
            break
        except GuardBlowup:
            if force_prime is not None or restarts >= MAX_RESTARTS:
                guard_exhausted = True
                limit = None
                continue
            tried.add(p)
            restarts += 1
            continue

    c = split.recombine(parts)

    stats = RunStats(
        algorithm="recursive-conv", n=n, engine=resolved, alpha=alpha, p=p, h=h,
        restarts=restarts, widened=widened, guard_exhausted=guard_exhausted,
        level_T_sizes=tuple(int(v) for v in level_totals),
        phase_approx_ms=timers.get("approx", 0.0) * 1e3,
        phase_polymul_ms=timers.get("polymul", 0.0) * 1e3,
        phase_subtract_ms=timers.get("subtract", 0.0) * 1e3,
        total_ms=(time.perf_counter() - t_begin) * 1e3,
    )
    return RunResult(Seq(2 * n - 1, c), stats)
