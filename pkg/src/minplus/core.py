"""Extended-integer min-plus primitives: containers, oracles, validation, reductions.

Everything downstream (approximation phases, residue splitting, the level
recursion) builds on the conventions fixed here.

Conventions:
  * Entries are int64.  ``INF = 2**61`` is the infinity sentinel; anything
    ``>= SAT`` (2**60) reads back as infinite, so ``finite + INF`` saturates
    instead of overflowing.  Finite magnitudes are capped at ``MAG_CAP = 2**40``
    at the container boundary, far below SAT, so finite + finite never strays
    into the saturation band.
  * Mathematical indices are 1-based (rows/columns ``1..n``, convolution
    outputs ``2..2n``); numpy arrays are 0-based.  The conversion happens once,
    here: matrix entry (i, j) lives at ``a[i-1, j-1]`` and convolution output
    C_k at ``c[k-2]``.  Reported violation positions are 1-based.
  * Floor division and floor modulo (numpy ``//``, ``%``) are used throughout;
    both are exact for negative values, which occur transiently inside
    residue-shifted subproblems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INF = np.int64(1) << np.int64(61)
SAT = np.int64(1) << np.int64(60)  # read-back threshold: >= SAT means "infinite"
MAG_CAP = np.int64(1) << np.int64(40)

MATRIX_KINDS = ("arbitrary", "row-monotone", "column-monotone", "bounded-difference")
SEQ_KINDS = ("monotone-sequence", "seq")
PROFILE_KINDS = ("row-monotone", "column-monotone", "monotone-sequence", "bounded-difference")


def as_array(m) -> np.ndarray:
    """Accept a container or a bare array-like; return an int64 ndarray."""
    if isinstance(m, (SquareMatrix, Seq)):
        return m.a
    return np.asarray(m, dtype=np.int64)


def is_inf(x) -> np.ndarray:
    return np.asarray(x) >= SAT


def saturate(x: np.ndarray) -> np.ndarray:
    """Clamp everything in the saturation band to the canonical sentinel."""
    x = np.asarray(x, dtype=np.int64)
    return np.where(x >= SAT, INF, x)


def sat_add(x, y) -> np.ndarray:
    """Elementwise min-plus addition: finite+finite exact, anything infinite -> INF."""
    return saturate(np.asarray(x, dtype=np.int64) + np.asarray(y, dtype=np.int64))


@dataclass(frozen=True)
class SquareMatrix:
    """n x n matrix of extended integers (row-major int64, INF sentinel)."""

    n: int
    a: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(as_array(self.a).reshape(self.n, self.n))
        object.__setattr__(self, "a", a)
        fin = ~is_inf(a)
        if np.any(np.abs(a[fin]) > MAG_CAP):
            raise ValueError("finite entries exceed the 2**40 magnitude cap")

    @classmethod
    def from_rows(cls, rows) -> "SquareMatrix":
        a = np.asarray(rows, dtype=np.int64)
        return cls(a.shape[0], a)


@dataclass(frozen=True)
class Seq:
    """Length-n sequence of extended integers.

    Results of convolutions are also carried as Seq: a convolution of two
    length-n inputs yields entries C_2..C_2n stored at offsets 0..2n-2.
    """

    n: int
    a: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(as_array(self.a).reshape(self.n))
        object.__setattr__(self, "a", a)
        fin = ~is_inf(a)
        if np.any(np.abs(a[fin]) > MAG_CAP):
            raise ValueError("finite entries exceed the 2**40 magnitude cap")

    @classmethod
    def from_list(cls, xs) -> "Seq":
        a = np.asarray(xs, dtype=np.int64)
        return cls(a.shape[0], a)


@dataclass(frozen=True)
class MonotoneProfile:
    """Structural class of an instance plus the entry-bound multiplier.

    kind: one of row-monotone | column-monotone | monotone-sequence |
        bounded-difference.  For bounded-difference, ``delta`` is the adjacent
        difference bound and ``axis`` says along which direction adjacency is
        measured ("row" = within a row, "column" = within a column).
    c: entries are required to lie in [0, c*n]; c >= 1, default 1.
    """

    kind: str
    c: int = 1
    delta: int = 1
    axis: str = "row"

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.c < 1:
            raise ValueError("bound constant c must be >= 1")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.axis not in ("row", "column"):
            raise ValueError("axis must be 'row' or 'column'")


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    position: tuple | None = None  # 1-based (i, j) for matrices, (i,) for sequences
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class UndoTransform:
    """Offsets added during a reduction, to be subtracted from the result.

    The two channels that carry through a min-plus product untouched:
    adding r_i to row i of the left operand adds r_i to row i of the result;
    adding s_j to column j of the right operand adds s_j to column j of the
    result.  For sequences only ``row_offsets`` is used and it is indexed by
    the output position k = 2..2n (offset k-2).
    """

    row_offsets: np.ndarray | None = None
    column_offsets: np.ndarray | None = None

    def apply(self, c) -> np.ndarray:
        """Subtract the recorded offsets from a result matrix/sequence."""
        out = as_array(c).copy()
        inf = is_inf(out)
        if self.row_offsets is not None:
            ro = np.asarray(self.row_offsets, dtype=np.int64)
            out = out - (ro[:, None] if out.ndim == 2 else ro)
        if self.column_offsets is not None:
            out = out - np.asarray(self.column_offsets, dtype=np.int64)[None, :]
        out[inf] = INF
        return out


def _first_bad(mask_bad: np.ndarray) -> tuple:
    """1-based coordinates of the first True in row-major order."""
    flat = int(np.argmax(mask_bad))
    if mask_bad.ndim == 1:
        return (flat + 1,)
    n = mask_bad.shape[1]
    return (flat // n + 1, flat % n + 1)


def validate(m, profile: MonotoneProfile) -> ValidationReport:
    """Check m against the profile; report the first violation (1-based).

    The entry bound 0 <= entry <= c*n applies to every profile kind; the
    monotone and bounded-difference kinds additionally require all entries
    finite.
    """
    a = as_array(m)
    n = a.shape[0]
    inf = is_inf(a)
    if profile.kind in ("row-monotone", "column-monotone", "bounded-difference",
                        "monotone-sequence"):
        if np.any(inf):
            return ValidationReport(False, _first_bad(inf), "infinite entry not allowed")
    bound = np.int64(profile.c) * np.int64(n)
    bad = (~inf) & ((a < 0) | (a > bound))
    if np.any(bad):
        pos = _first_bad(bad)
        return ValidationReport(False, pos, f"entry out of [0, {int(bound)}] at {pos}")
    if profile.kind == "row-monotone":
        drop = a[:, 1:] < a[:, :-1]
        if np.any(drop):
            i, j = _first_bad(drop)
            return ValidationReport(False, (i, j + 1), f"row {i} decreases at column {j + 1}")
    elif profile.kind == "column-monotone":
        drop = a[1:, :] < a[:-1, :]
        if np.any(drop):
            i, j = _first_bad(drop)
            return ValidationReport(False, (i + 1, j), f"column {j} decreases at row {i + 1}")
    elif profile.kind == "monotone-sequence":
        drop = a[1:] < a[:-1]
        if np.any(drop):
            (i,) = _first_bad(drop)
            return ValidationReport(False, (i + 1,), f"sequence decreases at index {i + 1}")
    elif profile.kind == "bounded-difference":
        diff = a[:, 1:] - a[:, :-1] if profile.axis == "row" else a[1:, :] - a[:-1, :]
        bad = np.abs(diff) > profile.delta
        if np.any(bad):
            i, j = _first_bad(bad)
            if profile.axis == "row":
                return ValidationReport(False, (i, j + 1),
                                        f"|difference| > {profile.delta} at ({i},{j + 1})")
            return ValidationReport(False, (i + 1, j),
                                    f"|difference| > {profile.delta} at ({i + 1},{j})")
    return ValidationReport(True)


# ---------------------------------------------------------------------------
# Oracles


def minplus_oracle(A, B) -> np.ndarray:
    """C[i,j] = min_k A[i,k] + B[k,j], saturating.  Plain O(n^3), vectorized per k."""
    a, b = as_array(A), as_array(B)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("minplus_oracle needs two square matrices of equal dimension")
    n = a.shape[0]
    c = np.full((n, n), np.int64(2) * INF, dtype=np.int64)
    for k in range(n):
        np.minimum(c, a[:, k, None] + b[None, k, :], out=c)
    return saturate(c)


def minplus_conv_oracle(A, B) -> np.ndarray:
    """Min-plus convolution, output C_k for k = 2..2n at offsets 0..2n-2.

    C_k = min over i of A_i + B_{k-i} with 1 <= i <= n, 1 <= k-i <= n,
    saturating.  Plain O(n^2), vectorized per i.
    """
    a, b = as_array(A), as_array(B)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("minplus_conv_oracle needs two sequences of equal length")
    n = a.shape[0]
    c = np.full(2 * n - 1, np.int64(2) * INF, dtype=np.int64)
    for i in range(n):
        np.minimum(c[i : i + n], a[i] + b, out=c[i : i + n])
    return saturate(c)


# ---------------------------------------------------------------------------
# Reductions


def reduce_bd_to_monotone(B, delta: int, axis: str = "row"):
    """Turn a bounded-difference matrix into a monotone one by index offsets.

    axis="row" (adjacent entries within a row differ by at most delta): add
    j*delta to column j (1-based j), making every row non-decreasing.  The
    offsets ride through a product where the matrix is the *right* operand,
    so the undo subtracts them from the result's columns.

    axis="column": add i*delta to row i, making every column non-decreasing;
    valid for the *left* operand slot, undone on the result's rows.

    Returns (monotone matrix, UndoTransform); raises if B is not
    delta-bounded-difference along the axis.
    """
    b = as_array(B)
    n = b.shape[0]
    if axis not in ("row", "column"):
        raise ValueError("axis must be 'row' or 'column'")
    diff = b[:, 1:] - b[:, :-1] if axis == "row" else b[1:, :] - b[:-1, :]
    bad = np.abs(diff) > delta
    if np.any(bad):
        pos = _first_bad(bad)
        raise ValueError(f"input is not {delta}-bounded-difference along {axis}s near {pos}")
    idx = np.arange(1, n + 1, dtype=np.int64) * np.int64(delta)
    if axis == "row":
        return b + idx[None, :], UndoTransform(column_offsets=idx)
    return b + idx[:, None], UndoTransform(row_offsets=idx)


def normalize_A_range(A, c: int, n: int):
    """Shift each row of A so its first column equals c*n; entries above 2c*n -> INF.

    Valid whenever the partner operand's entries lie in [0, c*n]: the row
    shifts ride through the product (left-operand rows), and a shifted entry
    above 2c*n can never be a witness because column 1 already offers
    A'[i,1] + B[1,j] <= 2c*n.  Rows whose first column is infinite anchor on
    their first finite entry instead (all-infinite rows are left alone).
    """
    a = as_array(A)
    if a.shape != (n, n):
        raise ValueError("dimension mismatch")
    cn = np.int64(c) * np.int64(n)
    shifts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        row = a[i]
        fin = row[~is_inf(row)]
        anchor = row[0] if not is_inf(row[0]) else (fin[0] if fin.size else None)
        if anchor is not None:
            shifts[i] = cn - anchor
    out = np.where(is_inf(a), INF, a + shifts[:, None])
    out = np.where(out > 2 * cn, INF, out)
    return out, UndoTransform(row_offsets=shifts)


def residue_class(v: np.ndarray, p: int) -> np.ndarray:
    """0, 1 or 2 by thirds of the residue: 3r < p | p < 3r < 2p | 3r > 2p.

    p is a prime > 3, never divisible by 3, so the boundaries are never hit
    and the strict tests partition all residues.
    """
    r = np.asarray(v, dtype=np.int64) % np.int64(p)
    return (3 * r >= p).astype(np.int8) + (3 * r >= 2 * p).astype(np.int8)


@dataclass(frozen=True)
class ResidueSplit:
    """Nine assumption-ready sub-instances of a min-plus product.

    pairs[t] = (A_part, B_part) with every finite entry satisfying
    3*(entry mod p) < p, B_part row-monotone; shifts[t] is added back to the
    t-th sub-product before the elementwise-min recombination.
    """

    p: int
    pairs: tuple
    shifts: tuple

    def recombine(self, products) -> np.ndarray:
        out = np.full_like(as_array(products[0]), np.int64(2) * INF)
        for prod, sh in zip(products, self.shifts):
            q = as_array(prod)
            np.minimum(out, np.where(is_inf(q), np.int64(2) * INF, q + np.int64(sh)), out=out)
        return saturate(out)


def _mask_shift_parts(a: np.ndarray, p: int):
    """Split by residue class; shift each part down so residues land below p/3.

    Returns three (part, shift) pairs: part = a - shift where the class
    matches, INF elsewhere.  Used for left operands (matrix rows or either
    convolution side); the class shifts are ceil(p/3) and ceil(2*p/3).
    """
    cls = residue_class(a, p)
    t1, t2 = -(-p // 3), -(-(2 * p) // 3)  # ceil(p/3), ceil(2p/3)
    out = []
    for k, sh in ((0, 0), (1, t1), (2, t2)):
        part = np.where(is_inf(a) | (cls != k), INF, a - np.int64(sh))
        out.append((saturate(part), sh))
    return out


def _monotone_b_parts(b: np.ndarray, p: int):
    """Three row-monotone right-operand parts, already shifted below p/3.

    Case analysis on the residue class of each entry; the unshifted family
    values are part + shift.  Every part stays row-monotone because each case
    value lies within [p*floor(b/p), p*(floor(b/p)+1)] and respects the
    ordering of b within a row.
    """
    cls = residue_class(b, p)
    t1, t2 = -(-p // 3), -(-(2 * p) // 3)
    q = (b // np.int64(p)) * np.int64(p)  # p * floor(b/p)
    # family values before the uniform shifts
    b1 = np.select([cls == 0, cls == 1, cls == 2], [b, q + p, q + p])
    b2 = np.select([cls == 0, cls == 1, cls == 2], [q + t1, b, q + p + t1])
    b3 = np.select([cls == 0, cls == 1, cls == 2], [q + t2, q + t2, b])
    return [(b1, 0), (b2 - t1, t1), (b3 - t2, t2)]


def split_by_residue(A, B, p: int) -> ResidueSplit:
    """Nine sub-instances whose shifted recombination equals A*B exactly.

    B must be row-monotone with finite entries.  Every (witness) pair lands in
    exactly one sub-instance at its original value plus that instance's shift,
    and no sub-instance ever undercuts the true product, so the elementwise
    min over the nine shifted sub-products is exact.
    """
    a, b = as_array(A), as_array(B)
    if p < 7:
        raise ValueError("p must be at least 7 (residue classes degenerate below)")
    if np.any(is_inf(b)):
        raise ValueError("right operand must be finite row-monotone")
    a_parts = _mask_shift_parts(a, p)
    b_parts = _monotone_b_parts(b, p)
    pairs, shifts = [], []
    for ap, asx in a_parts:
        for bp, bsx in b_parts:
            pairs.append((ap, bp))
            shifts.append(asx + bsx)
    return ResidueSplit(p=p, pairs=tuple(pairs), shifts=tuple(shifts))


@dataclass(frozen=True)
class SeqResidueSplit:
    """Residue-class split of both convolution operands.

    a_parts/b_parts are assumption-ready (residues below p/3, monotone besides
    the infinite stretches); recombination adds a_shifts[s] + b_shifts[t] to
    the (s,t) sub-convolution and takes the elementwise min over all nine.
    inf_intervals_* counts maximal infinite runs per part.
    """

    p: int
    a_parts: tuple
    b_parts: tuple
    a_shifts: tuple
    b_shifts: tuple
    inf_intervals_a: tuple
    inf_intervals_b: tuple

    def recombine(self, products) -> np.ndarray:
        out = np.full_like(as_array(products[0]), np.int64(2) * INF)
        t = 0
        for sa in self.a_shifts:
            for sb in self.b_shifts:
                q = as_array(products[t])
                np.minimum(out, np.where(is_inf(q), np.int64(2) * INF, q + np.int64(sa + sb)),
                           out=out)
                t += 1
        return saturate(out)


def _count_inf_intervals(a: np.ndarray) -> int:
    inf = is_inf(a)
    if not inf.any():
        return 0
    starts = inf & ~np.concatenate(([False], inf[:-1]))
    return int(starts.sum())


def split_seq_by_residue(A, B, p: int) -> SeqResidueSplit:
    """Class-mask both sequences; each part is monotone besides its INF runs.

    A monotone sequence restricted to one residue class keeps its order, and
    the down-shift is uniform, so each part satisfies the recursion's
    assumption directly.  The number of infinite intervals per part is
    reported; for entries in [0, c*n] it is at most a few per wrap of p.
    """
    a, b = as_array(A), as_array(B)
    ap = _mask_shift_parts(a, p)
    bp = _mask_shift_parts(b, p)
    return SeqResidueSplit(
        p=p,
        a_parts=tuple(x for x, _ in ap),
        b_parts=tuple(x for x, _ in bp),
        a_shifts=tuple(s for _, s in ap),
        b_shifts=tuple(s for _, s in bp),
        inf_intervals_a=tuple(_count_inf_intervals(x) for x, _ in ap),
        inf_intervals_b=tuple(_count_inf_intervals(x) for x, _ in bp),
    )


def reconstruct_from_parts(C_star, C_mod, p: int) -> np.ndarray:
    """Exact value from quotient and remainder: p*C_star + C_mod; INF propagates."""
    cs, cm = as_array(C_star), as_array(C_mod)
    inf = is_inf(cs) | is_inf(cm)
    if np.any((~inf) & ((cm < 0) | (cm >= p))):
        raise ValueError(f"remainder entry outside [0, {p})")
    return np.where(inf, INF, np.int64(p) * np.where(inf, 0, cs) + np.where(inf, 0, cm))


# ---------------------------------------------------------------------------
# MPM1 instance files


def write_mpm1(path, kind: str, a) -> None:
    """Serialize: line 1 `MPM1 <kind> <n>`, then whitespace rows, `inf` for INF."""
    arr = as_array(a)
    n = arr.shape[0]
    lines = [f"MPM1 {kind} {n}"]
    rows = arr.reshape(n, -1) if arr.ndim == 2 else arr.reshape(1, -1)
    for r in rows:
        lines.append(" ".join("inf" if is_inf(v) else str(int(v)) for v in r))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mpm1(path):
    """Parse an MPM1 file -> (kind, ndarray); sequences come back 1-D."""
    text = Path(path).read_text().split()
    if not text or text[0] != "MPM1":
        raise ValueError("not an MPM1 file (missing magic)")
    kind = text[1]
    n = int(text[2])
    pos = 3
    if pos < len(text) and text[pos].lstrip("+-").isdigit() and kind not in SEQ_KINDS:
        # optional m token; only square shapes are supported
        maybe_m = int(text[pos])
        if maybe_m >= 1 and 4 + n * maybe_m == len(text):
            if maybe_m != n:
                raise ValueError("MPM1 carries a non-square shape; only m == n is supported")
            pos = 4
    toks = text[pos:]
    want = n if kind in SEQ_KINDS else n * n
    if len(toks) != want:
        raise ValueError(f"MPM1 body has {len(toks)} entries, expected {want}")
    vals = np.array([INF if t == "inf" else np.int64(t) for t in toks], dtype=np.int64)
    return kind, (vals if kind in SEQ_KINDS else vals.reshape(n, n))
