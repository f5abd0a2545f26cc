"""Exact monotone min-plus matrix products.

Three algorithms share this module: the basic single-shot scheme (scale down,
multiply count polynomials, subtract erroneous terms), the bit-level recursion
that repeats the same subtraction trick on one more bit per round, and the
column-monotone variant that runs the recursion with segments oriented along
the inner index.

Conventions:
  * All matrices are (n, n) int64 numpy arrays (or SquareMatrix wrappers) with
    0-based indices; the algebraic statements in the docstrings use the usual
    1-based math indices.  Infinity is core.INF and survives every transform.
  * A "level-l matrix" is ((M mod p) >> l) with infinities preserved; level h
    (p < 2^h <= 2p) is all zeros on finite entries.
  * Segments are run-compressed triples.  Orientation "row" fixes (i, k) and
    spans output columns [j0, j1]; orientation "column" fixes the output cell
    (i, j) and spans the inner index [k0, k1].  A TripleSets instance stores
    one level's segments for all buckets b in [-B_WINDOW, B_WINDOW] columnar.
  * Two interchangeable extraction engines: "poly" follows the count-polynomial
    route (encode, multiply, subtract, read min degree); "fused" computes each
    level value directly as the min of A^(l)+B^(l) over star-matching finite
    pairs.  They agree bit-for-bit; the test suite pins that equality.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    INF,
    SAT,
    SquareMatrix,
    is_inf,
    minplus_oracle,
    split_by_residue,
)
from .polyalg import BiPolyMatrix, polymat_mul
from .primes import basic_interval, recursive_interval, sample, sampling_pool
from .rangetree import TreeStack

B_WINDOW = 10                 # recursion keeps buckets b in [-10, 10]
BASIC_B_OFFSETS = (0, 1, 2)   # the basic algorithm only needs b in {0, 1, 2}
SMALL_N_CUTOFF = 64           # engine="auto" falls back to the oracle below this
GUARD_FACTOR_DEFAULT = 64.0
MAX_RESTARTS = 8
MAX_CHILDREN_ROW = 17         # <=2 B-runs joined with <=16 C-runs per parent
MAX_CHILDREN_COLUMN = 3       # <=2 A-runs joined with <=2 B-runs per parent
_PEN = 20000                  # fused-kernel penalty; above any real A^(l)+B^(l)
_REFINE_CHUNK = 1 << 21


class GuardBlowup(RuntimeError):
    """Raised internally when a level's segment count exceeds the guard."""


# ---------------------------------------------------------------------------
# run metadata


@dataclass(frozen=True)
class RunStats:
    """Metadata emitted alongside every algorithm run, for bench and tests."""

    algorithm: str
    n: int
    engine: str
    alpha: float
    beta: float | None = None
    p: int | None = None
    h: int | None = None
    restarts: int = 0
    widened: bool = False
    guard_exhausted: bool = False
    property2_clamps: int = 0
    level_T_sizes: tuple[int, ...] = ()
    phase_approx_ms: float = 0.0
    phase_polymul_ms: float = 0.0
    phase_subtract_ms: float = 0.0
    total_ms: float = 0.0

    @property
    def sum_T_segments(self) -> int:
        return int(sum(self.level_T_sizes))


@dataclass(frozen=True)
class RunResult:
    value: object  # SquareMatrix | Seq
    stats: RunStats


# ---------------------------------------------------------------------------
# segment storage


@dataclass
class TripleSets:
    """Run-compressed erroneous triples of one level, columnar.

    orientation "row": segment (i[m], f[m], [lo[m], hi[m]]) spans output
    columns j at fixed (i, k=f); orientation "column": spans the inner index k
    at fixed (i, j=f).  b[m] is the bucket A^(l)+B^(l)-C^(l) of the segment.
    """

    orientation: str
    i: np.ndarray
    f: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    b: np.ndarray

    @classmethod
    def empty(cls, orientation: str) -> "TripleSets":
        z = np.zeros(0, dtype=np.int64)
        return cls(orientation, z, z.copy(), z.copy(), z.copy(), z.copy())

    @property
    def total_segments(self) -> int:
        return int(self.i.size)

    def count_for(self, b: int) -> int:
        return int(np.count_nonzero(self.b == b))

    def expanded_triples(self) -> np.ndarray:
        """All (i, k, j) triples covered by the stored segments, 0-based."""
        if self.i.size == 0:
            return np.zeros((0, 3), dtype=np.int64)
        counts = self.hi - self.lo + 1
        total = int(counts.sum())
        grp_start = np.repeat(np.cumsum(counts) - counts, counts)
        span = np.repeat(self.lo, counts) + (np.arange(total) - grp_start)
        ii = np.repeat(self.i, counts)
        ff = np.repeat(self.f, counts)
        if self.orientation == "row":
            return np.stack([ii, ff, span], axis=1)
        return np.stack([ii, span, ff], axis=1)

    def expanded_with_b(self) -> np.ndarray:
        """(i, k, j, b) rows for every covered triple."""
        if self.i.size == 0:
            return np.zeros((0, 4), dtype=np.int64)
        counts = self.hi - self.lo + 1
        bb = np.repeat(self.b, counts)
        return np.concatenate([self.expanded_triples(), bb[:, None]], axis=1)


@dataclass(frozen=True)
class LevelData:
    """Read-only per-level context shared by extraction and refinement."""

    l: int
    p: int
    h: int
    al: np.ndarray        # A^(l), INF preserved
    bl: np.ndarray        # B^(l), finite
    al_next: np.ndarray   # A^(l+1)
    bl_next: np.ndarray   # B^(l+1)
    a_inf: np.ndarray     # bool mask of infinite A entries
    cstar: np.ndarray
    events: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LevelState:
    """One level of the recursion, as exposed to tests."""

    l: int
    al: SquareMatrix
    bl: SquareMatrix
    cl: SquareMatrix
    t: TripleSets
    astar: SquareMatrix
    bstar: SquareMatrix
    cstar: SquareMatrix
    p: int
    h: int


# ---------------------------------------------------------------------------
# shared helpers


def _next_change(rows: np.ndarray) -> np.ndarray:
    """next[r, j] = smallest j' > j with rows[r, j'] != rows[r, j], else n."""
    r, n = rows.shape
    nxt = np.full((r, n), n, dtype=np.int64)
    if n > 1:
        cand = np.where(rows[:, 1:] != rows[:, :-1], np.arange(1, n)[None, :], n)
        nxt[:, :-1] = np.minimum.accumulate(cand[:, ::-1], axis=1)[:, ::-1]
    return nxt


def _floor_div_inf(a: np.ndarray, d: int) -> np.ndarray:
    return np.where(is_inf(a), INF, a // d)


def _require_row_monotone(b: np.ndarray, who: str) -> None:
    if is_inf(b).any():
        raise ValueError(f"{who} must be finite")
    if b.shape[1] > 1 and (np.diff(b, axis=1) < 0).any():
        raise ValueError(f"{who} must have non-decreasing rows")


def _approx_rows(at: np.ndarray, bt: np.ndarray) -> np.ndarray:
    """Exact min-plus product using value runs of the monotone right rows.

    For each inner index k, every constant run [j0, j1] of bt[k] contributes
    one interval chmin of at[:, k] + value to all output rows at once, so the
    cost is n * (#runs) tree updates rather than n^3 scalar work.
    """
    n = at.shape[0]
    ts = TreeStack(n, n)
    all_rows = np.arange(n, dtype=np.int64)
    ones = np.ones(n, dtype=np.int64)
    for k in range(n):
        row = bt[k]
        starts = np.flatnonzero(np.r_[True, row[1:] != row[:-1]])
        ends = np.r_[starts[1:], n]
        col = at[:, k]
        for j0, j1 in zip(starts, ends):
            ts.bulk_chmin(all_rows, ones * (j0 + 1), ones * j1, col + row[j0])
    out = ts.snapshot_all()
    return np.where(out >= SAT, INF, out)


def approx_minplus_compressed(at: SquareMatrix, bt: SquareMatrix) -> SquareMatrix:
    """Min-plus product of a scaled pair, exact, via run-compressed updates.

    The right operand must be row-monotone (it is a scaled-down monotone
    matrix, so each row has few distinct values); the left operand may contain
    infinities.
    """
    _require_row_monotone(bt.a, "right operand of the compressed product")
    return SquareMatrix(at.n, _approx_rows(at.a, bt.a))


def level_matrix(m: SquareMatrix, p: int, l: int) -> SquareMatrix:
    """((M mod p) >> l) entry-wise, infinities preserved."""
    if not 0 <= l <= int(p).bit_length():
        raise ValueError(f"level {l} out of range for p={p}")
    a = m.a
    return SquareMatrix(m.n, np.where(is_inf(a), INF, (a % p) >> l))


def _assert_assumption(a: np.ndarray, b: np.ndarray, p: int) -> None:
    amod = a % p
    ok_a = np.where(is_inf(a), True, 3 * amod < p)
    assert ok_a.all(), "left operand violates the residue assumption (3(A mod p) >= p)"
    assert not is_inf(b).any(), "right operand must be finite here"
    assert (3 * (b % p) < p).all(), "right operand violates the residue assumption"


def star_product(a: SquareMatrix, b: SquareMatrix, p: int):
    """(A*, B*, C*) = (floor(A/p), floor(B/p), A* star B*) for a residue part.

    Under the residue assumption the low parts can never carry into the next
    p-digit, so C* is exactly floor(C/p); it is computed by the compressed
    product because B* inherits row-monotonicity from B.
    """
    _assert_assumption(a.a, b.a, p)
    astar = SquareMatrix(a.n, _floor_div_inf(a.a, p))
    bstar = SquareMatrix(b.n, b.a // p)
    cstar = approx_minplus_compressed(astar, bstar)
    return astar, bstar, cstar


# ---------------------------------------------------------------------------
# basic algorithm (single scaling level)


def _tb_basic(at, bt, ct, p, boff):
    """Run-compressed triples with at+bt != ct+b but congruent mod p."""
    n = at.shape[0]
    ii, kk = np.nonzero(~is_inf(at))
    if ii.size == 0:
        return TripleSets.empty("row")
    ncb = _next_change(bt)
    ncc = _next_change(ct)
    base = at[ii, kk]
    cur = np.zeros(ii.size, dtype=np.int64)
    frag_i, frag_k, frag_lo, frag_hi = [], [], [], []
    while True:
        nxt = np.minimum(ncb[kk, cur], ncc[ii, cur])
        delta = base + bt[kk, cur] - ct[ii, cur] - boff
        hit = (delta != 0) & (delta % p == 0) & (ct[ii, cur] < SAT)
        if hit.any():
            frag_i.append(ii[hit])
            frag_k.append(kk[hit])
            frag_lo.append(cur[hit])
            frag_hi.append(nxt[hit] - 1)
        alive = nxt < n
        if not alive.any():
            break
        ii, kk, base, cur = ii[alive], kk[alive], base[alive], nxt[alive]
    if not frag_i:
        return TripleSets.empty("row")
    i = np.concatenate(frag_i)
    return TripleSets(
        "row",
        i,
        np.concatenate(frag_k),
        np.concatenate(frag_lo),
        np.concatenate(frag_hi),
        np.full(i.size, boff, dtype=np.int64),
    )


def compute_Tb_basic(at: SquareMatrix, bt: SquareMatrix, ct: SquareMatrix,
                     p: int, b: int) -> TripleSets:
    """Erroneous-triple set of the basic algorithm for one offset b.

    Scans joint value runs of (bt row, ct row) per (i, k) pair in vectorized
    lockstep, so the cost is proportional to the number of runs plus output.
    """
    return _tb_basic(at.a, bt.a, ct.a, p, b)


def _expand_segments(t: TripleSets):
    counts = t.hi - t.lo + 1
    total = int(counts.sum())
    grp_start = np.repeat(np.cumsum(counts) - counts, counts)
    jj = np.repeat(t.lo, counts) + (np.arange(total) - grp_start)
    return np.repeat(t.i, counts), np.repeat(t.f, counts), jj


def basic_monotone_minplus(a: SquareMatrix, b: SquareMatrix, alpha: float = 1 / 3,
                           rng=None, force_prime: int | None = None) -> RunResult:
    """Exact min-plus product, single-level scheme.

    The left operand is arbitrary (infinities allowed); the right operand must
    be finite and row-monotone.  Randomness (the prime draw) affects running
    time only — the returned product is exact for every prime.
    """
    t_begin = time.perf_counter()
    _require_row_monotone(b.a, "right operand")
    n = a.n
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    s = max(1, math.floor(round(n ** alpha, 9)))
    at = _floor_div_inf(a.a, s)
    bt = b.a // s

    t0 = time.perf_counter()
    ct = _approx_rows(at, bt)
    approx_ms = (time.perf_counter() - t0) * 1e3

    lo, hi = basic_interval(n, alpha)
    pool, widened = sampling_pool(lo, hi)
    p = int(force_prime) if force_prime is not None else sample(pool, rng)

    # count-polynomial encodings: x^(value - s*scaled) y^(scaled mod p)
    a_inf = is_inf(a.a)
    xa = np.where(a_inf, 0, a.a - s * at)
    ya = np.where(a_inf, 0, at % p)
    xb = b.a - s * bt
    yb = bt % p
    t0 = time.perf_counter()
    ap = _single_term_matrix(n, xa, ya, a_inf)
    bp = _single_term_matrix(n, xb, yb, None)
    cp = polymat_mul(ap, bp)
    polymul_ms = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    coef = cp.coef
    dxc, dyc = coef.shape[2], coef.shape[3]
    ct_fin = ct < SAT
    best = np.full((n, n), INF, dtype=np.int64)
    tsets = []
    for boff in BASIC_B_OFFSETS:
        t_b = _tb_basic(at, bt, ct, p, boff)
        tsets.append(t_b)
        r = np.where(ct_fin, (ct + boff) % p, 0)
        # slice the product at the two y-degrees congruent to ct+b
        sl = np.zeros((n, n, dxc, 2), dtype=np.int64)
        idx = np.broadcast_to(r[:, :, None, None], (n, n, dxc, 1))
        sl[:, :, :, 0] = np.take_along_axis(coef, np.minimum(idx, dyc - 1), axis=3)[..., 0]
        sl[:, :, :, 0] = np.where((r < dyc)[:, :, None], sl[:, :, :, 0], 0)
        rp = r + p
        idx2 = np.broadcast_to(np.minimum(rp, dyc - 1)[:, :, None, None], (n, n, dxc, 1))
        sl[:, :, :, 1] = np.take_along_axis(coef, idx2, axis=3)[..., 0]
        sl[:, :, :, 1] = np.where((rp < dyc)[:, :, None], sl[:, :, :, 1], 0)
        if t_b.total_segments:
            ti, tk, tj = _expand_segments(t_b)
            xdeg = xa[ti, tk] + xb[tk, tj]
            ydeg = ya[ti, tk] + yb[tk, tj]
            slot = (ydeg - r[ti, tj]) // p
            assert ((slot == 0) | (slot == 1)).all(), "erroneous term off its congruent slices"
            flat = ((ti * n + tj) * dxc + xdeg) * 2 + slot
            rsub = np.bincount(flat, minlength=n * n * dxc * 2).reshape(n, n, dxc, 2)
            sl -= rsub
        if (sl[ct_fin] < 0).any():
            raise RuntimeError("negative coefficient after erroneous-term subtraction")
        posx = (sl > 0).any(axis=3)
        has = posx.any(axis=2) & ct_fin
        smin = posx.argmax(axis=2)
        cand = np.where(has, s * (ct + boff) + smin, INF)
        best = np.minimum(best, cand)
    best = np.where(ct_fin, best, INF)
    subtract_ms = (time.perf_counter() - t0) * 1e3

    stats = RunStats(
        algorithm="basic-mm", n=n, engine="poly", alpha=alpha, p=p,
        widened=widened,
        level_T_sizes=(sum(t.total_segments for t in tsets),),
        phase_approx_ms=approx_ms, phase_polymul_ms=polymul_ms,
        phase_subtract_ms=subtract_ms,
        total_ms=(time.perf_counter() - t_begin) * 1e3,
    )
    return RunResult(SquareMatrix(n, best), stats)


def _single_term_matrix(n, xdeg, ydeg, skip_mask):
    """BiPolyMatrix whose (i,k) entry is x^xdeg y^ydeg (or 0 where skipped)."""
    dx = int(xdeg.max(initial=0)) + 1
    dy = int(ydeg.max(initial=0)) + 1
    coef = np.zeros((n, n, dx, dy), dtype=np.int64)
    ii, kk = np.nonzero(np.ones((n, n), dtype=bool) if skip_mask is None else ~skip_mask)
    coef[ii, kk, xdeg[ii, kk], ydeg[ii, kk]] = 1
    return BiPolyMatrix(n, 0, 0, coef)


# ---------------------------------------------------------------------------
# level recursion: T-set machinery


def _top_segments_row(a_inf, astar, bstar, cstar) -> TripleSets:
    n = astar.shape[0]
    ii, kk = np.nonzero(~a_inf)
    if ii.size == 0:
        return TripleSets.empty("row")
    ncb = _next_change(bstar)
    ncc = _next_change(cstar)
    base = astar[ii, kk]
    cur = np.zeros(ii.size, dtype=np.int64)
    frag = []
    while True:
        nxt = np.minimum(ncb[kk, cur], ncc[ii, cur])
        mism = base + bstar[kk, cur] != cstar[ii, cur]
        if mism.any():
            frag.append((ii[mism], kk[mism], cur[mism], nxt[mism] - 1))
        alive = nxt < n
        if not alive.any():
            break
        ii, kk, base, cur = ii[alive], kk[alive], base[alive], nxt[alive]
    if not frag:
        return TripleSets.empty("row")
    i = np.concatenate([f[0] for f in frag])
    return TripleSets(
        "row", i,
        np.concatenate([f[1] for f in frag]),
        np.concatenate([f[2] for f in frag]),
        np.concatenate([f[3] for f in frag]),
        np.zeros(i.size, dtype=np.int64),
    )


def _top_segments_column(a_inf, astar, bstar, cstar) -> TripleSets:
    n = astar.shape[0]
    nca = _next_change(astar)
    ncb = _next_change(np.ascontiguousarray(bstar.T))
    ii = np.repeat(np.arange(n, dtype=np.int64), n)
    jj = np.tile(np.arange(n, dtype=np.int64), n)
    cs = cstar[ii, jj]
    cur = np.zeros(ii.size, dtype=np.int64)
    frag = []
    while True:
        nxt = np.minimum(nca[ii, cur], ncb[jj, cur])
        fin = ~a_inf[ii, cur]
        mism = fin & (astar[ii, cur] + bstar[cur, jj] != cs)
        if mism.any():
            frag.append((ii[mism], jj[mism], cur[mism], nxt[mism] - 1))
        alive = nxt < n
        if not alive.any():
            break
        ii, jj, cs, cur = ii[alive], jj[alive], cs[alive], nxt[alive]
    if not frag:
        return TripleSets.empty("column")
    i = np.concatenate([f[0] for f in frag])
    return TripleSets(
        "column", i,
        np.concatenate([f[1] for f in frag]),
        np.concatenate([f[2] for f in frag]),
        np.concatenate([f[3] for f in frag]),
        np.zeros(i.size, dtype=np.int64),
    )


def init_top_level(a: SquareMatrix, b: SquareMatrix, astar: SquareMatrix,
                   bstar: SquareMatrix, cstar: SquareMatrix, p: int) -> LevelState:
    """Level-h state: zero level matrices and the star-mismatch segment set.

    Every segment with a finite A entry and A*+B* != C* lands in bucket 0,
    because all level-h matrices vanish on finite entries.
    """
    n = a.n
    h = int(p).bit_length()
    a_inf = is_inf(a.a)
    t = _top_segments_row(a_inf, astar.a, bstar.a, cstar.a)
    zero_a = SquareMatrix(n, np.where(a_inf, INF, 0))
    zero_b = SquareMatrix(n, np.zeros((n, n), dtype=np.int64))
    ch = SquareMatrix(n, np.where(is_inf(cstar.a), INF, 0))
    return LevelState(h, zero_a, zero_b, ch, t, astar, bstar, cstar, p, h)


def refine_segments(t_next: TripleSets, data: LevelData, cl: np.ndarray) -> TripleSets:
    """Split level-(l+1) segments at level-l value changes and re-bucket.

    Children falling outside the b-window are dropped; every surviving child
    satisfies the level-l segment conditions by construction (the star rows
    never change across levels, so only the level values need re-reading).
    """
    if t_next.total_segments == 0:
        return TripleSets.empty(t_next.orientation)
    row_oriented = t_next.orientation == "row"
    if row_oriented:
        nc1 = _next_change(data.bl)
        nc2 = _next_change(cl)
        max_children = MAX_CHILDREN_ROW
    else:
        nc1 = _next_change(data.al)
        nc2 = _next_change(np.ascontiguousarray(data.bl.T))
        max_children = MAX_CHILDREN_COLUMN
    out = [TripleSets.empty(t_next.orientation)]
    for c0 in range(0, t_next.total_segments, _REFINE_CHUNK):
        c1 = min(t_next.total_segments, c0 + _REFINE_CHUNK)
        si = t_next.i[c0:c1]
        sf = t_next.f[c0:c1]
        shi = t_next.hi[c0:c1]
        cur = t_next.lo[c0:c1].copy()
        frag = []
        rounds = 0
        while si.size:
            rounds += 1
            assert rounds <= max_children, (
                f"segment split produced more than {max_children} children")
            if row_oriented:
                nxt = np.minimum(np.minimum(nc1[sf, cur], nc2[si, cur]), shi + 1)
                bprime = data.al[si, sf] + data.bl[sf, cur] - cl[si, cur]
            else:
                nxt = np.minimum(np.minimum(nc1[si, cur], nc2[sf, cur]), shi + 1)
                bprime = data.al[si, cur] + data.bl[cur, sf] - cl[si, sf]
            keep = np.abs(bprime) <= B_WINDOW
            if keep.any():
                frag.append((si[keep], sf[keep], cur[keep], nxt[keep] - 1, bprime[keep]))
            alive = nxt <= shi
            si, sf, shi, cur = si[alive], sf[alive], shi[alive], nxt[alive]
        if frag:
            out.append(TripleSets(
                t_next.orientation,
                np.concatenate([f[0] for f in frag]),
                np.concatenate([f[1] for f in frag]),
                np.concatenate([f[2] for f in frag]),
                np.concatenate([f[3] for f in frag]),
                np.concatenate([f[4] for f in frag]),
            ))
    if len(out) == 1:
        return out[0]
    return TripleSets(
        t_next.orientation,
        np.concatenate([t.i for t in out]),
        np.concatenate([t.f for t in out]),
        np.concatenate([t.lo for t in out]),
        np.concatenate([t.hi for t in out]),
        np.concatenate([t.b for t in out]),
    )


# ---------------------------------------------------------------------------
# level recursion: extraction engines


def _enforce_property2(cl: np.ndarray, cstar: np.ndarray, events: dict) -> np.ndarray:
    """Assert C^(l) is non-decreasing within equal-C* runs; clamp if not.

    The clamp never fires on correct inputs — it exists so a violated
    assumption degrades to a recorded event instead of a wrong product.
    """
    viol = (cl[:, 1:] < cl[:, :-1]) & (cstar[:, 1:] == cstar[:, :-1])
    if not viol.any():
        return cl
    events["property2_clamps"] = events.get("property2_clamps", 0) + int(viol.sum())
    cl = cl.copy()
    for r in np.nonzero(viol.any(axis=1))[0]:
        row = cl[r]
        starts = np.flatnonzero(np.r_[True, cstar[r, 1:] != cstar[r, :-1]])
        for s0, s1 in zip(starts, np.r_[starts[1:], row.size]):
            row[s0:s1] = np.maximum.accumulate(row[s0:s1])
    return cl


def _encode_level(n, values, bits, skip_mask):
    dx = int(bits.max(initial=0)) + 1
    dy = int(values.max(initial=0)) + 1
    coef = np.zeros((n, n, dx, dy), dtype=np.int64)
    ii, kk = np.nonzero(np.ones((n, n), dtype=bool) if skip_mask is None else ~skip_mask)
    coef[ii, kk, bits[ii, kk], values[ii, kk]] = 1
    return BiPolyMatrix(n, 0, 0, coef)


def _subtraction_counts(t_next: TripleSets, b: int, data: LevelData, n: int, dxc: int):
    """R^p for bucket b as per-cell x-degree counts, shape (n, n, dxc)."""
    sel = t_next.b == b
    if not sel.any():
        return None
    bit_a = data.al - 2 * data.al_next
    bit_b = data.bl - 2 * data.bl_next
    si, sf, slo, shi = t_next.i[sel], t_next.f[sel], t_next.lo[sel], t_next.hi[sel]
    if t_next.orientation == "column":
        # both bits may flip once inside a segment: the A bit drops 1->0 along
        # k (A mod p non-increasing there) and the B bit rises 0->1, so count
        # the three x-degree pieces from the two switch points
        ones_a = np.zeros((n, n + 1), dtype=np.int64)
        np.cumsum(bit_a, axis=1, out=ones_a[:, 1:])
        ones_b = np.zeros((n + 1, n), dtype=np.int64)
        np.cumsum(bit_b, axis=0, out=ones_b[1:, :])
        first_a0 = slo + (ones_a[si, shi + 1] - ones_a[si, slo])
        last_b0 = shi - (ones_b[shi + 1, sf] - ones_b[slo, sf])
        c2 = np.maximum(0, np.minimum(shi, first_a0 - 1) - np.maximum(slo, last_b0 + 1) + 1)
        c0 = np.maximum(0, np.minimum(shi, last_b0) - np.maximum(slo, first_a0) + 1)
        c1 = (shi - slo + 1) - c0 - c2
        r = np.zeros((n, n, 3), dtype=np.int64)
        np.add.at(r, (si, sf, 0), c0)
        np.add.at(r, (si, sf, 1), c1)
        np.add.at(r, (si, sf, 2), c2)
        assert not r[:, :, dxc:].any(), "erroneous term beyond the product x-window"
        return r[:, :, :dxc]
    # row orientation: the B bit may flip once inside a segment (B mod p is
    # monotone there), so split each interval at the 0->1 switch
    xa = bit_a[si, sf]
    assert ((xa >= 0) & (xa <= 1)).all(), "A bit outside {0,1} on a stored segment"
    zeros_pref = np.zeros((n, n + 1), dtype=np.int64)
    np.cumsum(1 - bit_b, axis=1, out=zeros_pref[:, 1:])
    jsw = slo + (zeros_pref[sf, shi + 1] - zeros_pref[sf, slo])
    diff = np.zeros((n, dxc + 1, n + 1), dtype=np.int64)
    np.add.at(diff, (si, xa, slo), 1)
    np.add.at(diff, (si, xa, jsw), -1)
    np.add.at(diff, (si, xa + 1, jsw), 1)
    np.add.at(diff, (si, xa + 1, shi + 1), -1)
    assert not diff[:, dxc, :].any(), "erroneous term beyond the product x-window"
    r = np.cumsum(diff[:, :dxc, :n], axis=2)
    return r.transpose(0, 2, 1)


def extract_level(cp: BiPolyMatrix, c_next: np.ndarray, t_next: TripleSets,
                  data: LevelData) -> np.ndarray:
    """Read C^(l) out of the level product by subtracting erroneous counts.

    For each cell, each candidate bucket b slices the count polynomial at
    y-degree C^(l+1)+b, removes the counts contributed by stored segments of
    that bucket, and keeps 2(C^(l+1)+b) + (min surviving x-degree); the cell
    value is the minimum over buckets, or infinity for the zero polynomial.
    """
    n = c_next.shape[0]
    coef = cp.coef
    dxc, dyc = coef.shape[2], coef.shape[3]
    zero_poly = ~coef.any(axis=(2, 3))
    fin = c_next < SAT
    best = np.full((n, n), INF, dtype=np.int64)
    for b in range(-B_WINDOW, B_WINDOW + 1):
        d = np.where(fin, c_next + b, 0)
        valid = fin & (d >= 0) & (d < dyc)
        if not valid.any():
            continue
        idx = np.broadcast_to(np.minimum(d, dyc - 1)[:, :, None, None], (n, n, dxc, 1))
        sl = np.take_along_axis(coef, idx, axis=3)[..., 0]
        sl = np.where(valid[:, :, None], sl, 0)
        r = _subtraction_counts(t_next, b, data, n, dxc)
        if r is not None:
            sl = sl - r
            if (sl[valid] < 0).any():
                raise RuntimeError(
                    "negative coefficient after erroneous-term subtraction")
        pos = sl > 0
        has = pos.any(axis=2) & valid
        smin = pos.argmax(axis=2)
        cand = np.where(has, 2 * d + smin, INF)
        best = np.minimum(best, cand)
    best[zero_poly] = INF
    if t_next.orientation == "row":
        best = _enforce_property2(best, data.cstar, data.events)
    return best


def _pen_matrix(a_inf, astar, bstar, cstar, dtype):
    """(n,n,n) penalty tensor: 0 on finite star-matching (i,k,j), _PEN else."""
    n = astar.shape[0]
    pen = np.empty((n, n, n), dtype=dtype)
    chunk = max(1, (1 << 23) // max(1, n * n))
    for i0 in range(0, n, chunk):
        i1 = min(n, i0 + chunk)
        match = astar[i0:i1, :, None] + bstar[None, :, :] == cstar[i0:i1, None, :]
        match &= ~a_inf[i0:i1, :, None]
        pen[i0:i1] = np.where(match, 0, _PEN).astype(dtype)
    return pen


def _fused_level(al_masked, bl, pen):
    """min over k of A^(l)+B^(l) restricted to unpenalized triples."""
    n = al_masked.shape[0]
    out = np.empty((n, n), dtype=np.int64)
    chunk = max(1, (1 << 23) // max(1, n * n))
    for i0 in range(0, n, chunk):
        i1 = min(n, i0 + chunk)
        d = al_masked[i0:i1, :, None] + bl[None, :, :]
        d += pen[i0:i1]
        m = d.min(axis=1)
        out[i0:i1] = np.where(m >= _PEN, INF, m.astype(np.int64))
    return out


# ---------------------------------------------------------------------------
# level recursion driver


def run_level_recursion(a: np.ndarray, b: np.ndarray, p: int, *,
                        orientation: str = "row", engine: str = "poly",
                        guard_limit: float | None = None,
                        collect_states: bool = False, timers: dict | None = None,
                        events: dict | None = None):
    """Run levels h..0 on one residue part; returns (C^(0), C*, T sizes[, states]).

    Inputs must already satisfy the residue assumption (low parts below p/3).
    Raises GuardBlowup when a level's total segment count exceeds guard_limit.
    """
    n = a.shape[0]
    _assert_assumption(a, b, p)
    h = int(p).bit_length()
    a_inf = is_inf(a)
    timers = timers if timers is not None else {}
    events = events if events is not None else {}

    t0 = time.perf_counter()
    astar = _floor_div_inf(a, p)
    bstar = b // p
    if orientation == "row":
        cstar = _approx_rows(astar, bstar)
        t = _top_segments_row(a_inf, astar, bstar, cstar)
    else:
        cstar = _cstar_column(astar, bstar, a_inf)
        t = _top_segments_column(a_inf, astar, bstar, cstar)
    timers["approx"] = timers.get("approx", 0.0) + (time.perf_counter() - t0)

    tsizes = [0] * (h + 1)
    tsizes[h] = t.total_segments
    if guard_limit is not None and t.total_segments > guard_limit:
        raise GuardBlowup(f"level {h}: {t.total_segments} segments")

    amod = np.where(a_inf, 0, a % p)
    bmod = b % p
    c_prev = np.where(is_inf(cstar), INF, 0)

    states = []
    if collect_states:
        states.append(_as_state(h, np.where(a_inf, INF, 0),
                                 np.zeros_like(bmod), c_prev, t,
                                 astar, bstar, cstar, p, h))

    use_fused = engine == "fused"
    pen = None
    if use_fused:
        t0 = time.perf_counter()
        dtype = np.int16 if 2 * (p - 1) + _PEN < 32600 else np.int32
        pen = _pen_matrix(a_inf, astar, bstar, cstar, dtype)
        timers["polymul"] = timers.get("polymul", 0.0) + (time.perf_counter() - t0)

    for l in range(h - 1, -1, -1):
        al = np.where(a_inf, INF, amod >> l)
        bl = bmod >> l
        data = LevelData(l, p, h, al, bl,
                         np.where(a_inf, INF, amod >> (l + 1)), bmod >> (l + 1),
                         a_inf, cstar, events)
        if use_fused:
            t0 = time.perf_counter()
            cl = _fused_level((amod >> l).astype(pen.dtype), bl.astype(pen.dtype), pen)
            if orientation == "row":
                cl = _enforce_property2(cl, cstar, events)
            timers["polymul"] = timers.get("polymul", 0.0) + (time.perf_counter() - t0)
        else:
            t0 = time.perf_counter()
            ap = _encode_level(n, np.where(a_inf, 0, amod >> (l + 1)),
                               np.where(a_inf, 0, (amod >> l) - 2 * (amod >> (l + 1))),
                               a_inf)
            bp = _encode_level(n, bmod >> (l + 1), bl - 2 * (bmod >> (l + 1)), None)
            cp = polymat_mul(ap, bp)
            timers["polymul"] = timers.get("polymul", 0.0) + (time.perf_counter() - t0)
            t0 = time.perf_counter()
            cl = extract_level(cp, c_prev, t, data)
            timers["subtract"] = timers.get("subtract", 0.0) + (time.perf_counter() - t0)
        t0 = time.perf_counter()
        t = refine_segments(t, data, cl)
        timers["subtract"] = timers.get("subtract", 0.0) + (time.perf_counter() - t0)
        tsizes[l] = t.total_segments
        if guard_limit is not None and t.total_segments > guard_limit:
            raise GuardBlowup(f"level {l}: {t.total_segments} segments")
        if collect_states:
            states.append(_as_state(l, al, bl, cl, t, astar, bstar, cstar, p, h))
        c_prev = cl

    if collect_states:
        return c_prev, cstar, tsizes, states
    return c_prev, cstar, tsizes


def _as_state(l, al, bl, cl, t, astar, bstar, cstar, p, h) -> LevelState:
    n = al.shape[0]
    return LevelState(l, SquareMatrix(n, al), SquareMatrix(n, bl),
                      SquareMatrix(n, cl), t, SquareMatrix(n, astar),
                      SquareMatrix(n, bstar), SquareMatrix(n, cstar), p, h)


def _cstar_column(astar, bstar, a_inf):
    """Star product when B is column-monotone and A rows are non-increasing.

    Within a constant run of an A* row the minimum of B* over the run's k-range
    sits at the run's first row (B* columns are non-decreasing), so each run
    contributes a single vectorized candidate row.
    """
    n = astar.shape[0]
    out = np.full((n, n), INF, dtype=np.int64)
    for i in range(n):
        row = astar[i]
        starts = np.flatnonzero(np.r_[True, row[1:] != row[:-1]])
        for k0 in starts:
            if a_inf[i, k0]:
                continue
            np.minimum(out[i], row[k0] + bstar[k0], out=out[i])
    return np.where(out >= SAT, INF, out)


# ---------------------------------------------------------------------------
# public recursive drivers


def _guard_limit(n: int, alpha: float, guard: float | None) -> float | None:
    if guard is None:
        return None
    return guard * n ** (3 - alpha) * math.log2(max(n, 2)) ** 2


def _run_recursive(a: SquareMatrix, b: SquareMatrix, alpha, rng, engine,
                   force_prime, guard, orientation, algorithm) -> RunResult:
    t_begin = time.perf_counter()
    n = a.n
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng

    resolved = engine
    if engine == "auto":
        if force_prime is None and n < SMALL_N_CUTOFF:
            resolved = "oracle"
        else:
            resolved = "fused" if n >= SMALL_N_CUTOFF else "poly"
    if resolved == "oracle":
        c = minplus_oracle(a, b)
        stats = RunStats(algorithm=algorithm, n=n, engine="oracle", alpha=alpha,
                         total_ms=(time.perf_counter() - t_begin) * 1e3)
        return RunResult(SquareMatrix(n, c), stats)

    if orientation == "column":
        prepped = np.minimum.accumulate(a.a, axis=1)
        a = SquareMatrix(n, prepped)
        if (np.diff(b.a, axis=0) < 0).any() or is_inf(b.a).any():
            raise ValueError("right operand must be finite with non-decreasing columns")
    else:
        _require_row_monotone(b.a, "right operand")

    lo, hi = recursive_interval(n, alpha)
    pool, widened = sampling_pool(lo, hi)
    limit = _guard_limit(n, alpha, guard)
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
            split = split_by_residue(a, b, p)
            h = int(p).bit_length()
            level_totals = np.zeros(h + 1, dtype=np.int64)
            parts = []
            for ap, bp in split.pairs:
                c0, cs, tsz = run_level_recursion(
                    np.asarray(ap), np.asarray(bp), p, orientation=orientation,
                    engine=resolved, guard_limit=limit, timers=timers, events=events)
                level_totals += np.asarray(tsz)
                parts.append(np.where(is_inf(cs), INF, p * cs + c0))
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
        algorithm=algorithm, n=n, engine=resolved, alpha=alpha, p=p, h=h,
        restarts=restarts, widened=widened, guard_exhausted=guard_exhausted,
        property2_clamps=int(events.get("property2_clamps", 0)),
        level_T_sizes=tuple(int(v) for v in level_totals),
        phase_approx_ms=timers.get("approx", 0.0) * 1e3,
        phase_polymul_ms=timers.get("polymul", 0.0) * 1e3,
        phase_subtract_ms=timers.get("subtract", 0.0) * 1e3,
        total_ms=(time.perf_counter() - t_begin) * 1e3,
    )
    return RunResult(SquareMatrix(n, c), stats)


def recursive_monotone_minplus(a: SquareMatrix, b: SquareMatrix, alpha: float = 0.5,
                               rng=None, engine: str = "auto",
                               force_prime: int | None = None,
                               guard: float | None = GUARD_FACTOR_DEFAULT) -> RunResult:
    """Exact min-plus product of an arbitrary A with a row-monotone B.

    Splits into nine residue parts, runs the bit-level recursion on each, and
    recombines; the prime draw only affects running time.  engine="auto" picks
    the oracle below SMALL_N_CUTOFF (unless force_prime pins a real run), the
    direct fused kernel at large n, and the polynomial route at small n.
    """
    return _run_recursive(a, b, alpha, rng, engine, force_prime, guard,
                          "row", "recursive-mm")


def column_monotone_minplus(a: SquareMatrix, b: SquareMatrix, alpha: float = 0.5,
                            rng=None, engine: str = "auto",
                            force_prime: int | None = None,
                            guard: float | None = GUARD_FACTOR_DEFAULT) -> RunResult:
    """Exact min-plus product of an arbitrary A with a column-monotone B.

    First rewrites A with running row minima (a later entry never beats an
    earlier, cheaper one against non-decreasing columns), then runs the same
    recursion with segments spanning the inner index.
    """
    return _run_recursive(a, b, alpha, rng, engine, force_prime, guard,
                          "column", "column-mm")
