"""Exact integer polynomials in x, y (and z) with bounded degree windows.

The fingerprinting products only ever need polynomials whose exponents live in
small known windows, so everything is a dense coefficient grid:

  * BiPoly / BiPolyMatrix store coefficients as (DX, DY) grids indexed by
    exponent minus the window's low end.  x windows are allowed to start at a
    negative exponent (bookkeeping from degree-shift tricks); storage is
    always shifted to start at zero, only the ``x_lo`` label changes.
  * Products go through Kronecker packing to a univariate array
    (e = x + SX*y, SX strictly above the product's x-degree), so one exact
    convolution does the bivariate job.

Two product backends sit behind ``polymat_mul``:

  * "cubic": degree-indexed coefficient convolution - for every coefficient
    pair, one dense integer matrix product (numpy int64 matmul).  Exact, no
    preconditions, slow; the reference path.
  * "ntt": evaluate packed polynomials at roots of unity mod q, one batched
    float64 matrix product per evaluation point, interpolate back.  Exact as
    long as true coefficients stay below q and n*(q-1)^2 < 2^53 keeps the
    float sums integral; both are asserted.  q = 65537 (order-2^16 NTT) for
    matrix work, q = 469762049 (order-2^26) for long sequence products.

Coefficients in this library are witness counts: non-negative, at most n for
matrix products and at most the sequence length for convolutions, far below
either modulus.  ``polymat_mul`` enforces the declared count cap n*n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Q_MATRIX = 65537  # 2^16 + 1, primitive root 3, supports NTT lengths to 2^16
Q_SEQ = 469762049  # 7 * 2^26 + 1, primitive root 3, lengths to 2^26
_ROOT = {Q_MATRIX: 3, Q_SEQ: 3}
_MAX_ORDER = {Q_MATRIX: 1 << 16, Q_SEQ: 1 << 26}


# ---------------------------------------------------------------------------
# number-theoretic transform along the last axis


_REV_CACHE: dict[int, np.ndarray] = {}
_TW_CACHE: dict[tuple, np.ndarray] = {}


def _bitrev(k: int) -> np.ndarray:
    idx = _REV_CACHE.get(k)
    if idx is None:
        bits = k.bit_length() - 1
        idx = np.zeros(k, dtype=np.int64)
        for b in range(bits):
            idx |= ((np.arange(k) >> b) & 1) << (bits - 1 - b)
        _REV_CACHE[k] = idx
    return idx


def _pow_table(w: int, m: int, q: int) -> np.ndarray:
    arr = np.ones(1, dtype=np.int64)
    while arr.size < m:
        arr = np.concatenate([arr, arr * np.int64(pow(w, arr.size, q)) % q])
    return arr[:m]


def _twiddles(q: int, ln: int, invert: bool) -> np.ndarray:
    key = (q, ln, invert)
    tw = _TW_CACHE.get(key)
    if tw is None:
        w = pow(_ROOT[q], (q - 1) // ln, q)
        if invert:
            w = pow(w, q - 2, q)
        tw = _pow_table(w, ln // 2, q)
        _TW_CACHE[key] = tw
    return tw


def ntt(a: np.ndarray, q: int, invert: bool = False) -> np.ndarray:
    """Exact DFT mod q along the last axis; length must be a power of two <= the
    modulus' 2-adic order.  Returns a new array; input must already be in [0, q)."""
    k = a.shape[-1]
    if k & (k - 1) or k > _MAX_ORDER[q]:
        raise ValueError(f"NTT length {k} unsupported for q={q}")
    if k == 1:
        return a.copy()
    out = np.ascontiguousarray(a[..., _bitrev(k)]).astype(np.int64, copy=False)
    ln = 2
    while ln <= k:
        half = ln // 2
        tw = _twiddles(q, ln, invert)
        b = out.reshape(*out.shape[:-1], k // ln, ln)
        u = b[..., :half].copy()
        v = b[..., half:] * tw % q
        b[..., :half] = (u + v) % q
        b[..., half:] = (u - v) % q
        ln *= 2
    if invert:
        out = out * np.int64(pow(k, q - 2, q)) % q
    return out


def next_pow2(v: int) -> int:
    k = 1
    while k < v:
        k *= 2
    return k


# ---------------------------------------------------------------------------
# polynomial containers


@dataclass(frozen=True)
class BiPoly:
    """Dense bivariate polynomial on the window [x_lo, x_lo+DX) x [y_lo, y_lo+DY)."""

    x_lo: int
    y_lo: int
    coef: np.ndarray  # (DX, DY) int64

    def __post_init__(self):
        c = np.asarray(self.coef, dtype=np.int64)
        if c.ndim != 2:
            raise ValueError("BiPoly coefficient grid must be 2-D")
        object.__setattr__(self, "coef", c)

    def is_zero(self) -> bool:
        return not self.coef.any()

    def coef_at(self, x: int, y: int) -> int:
        dx, dy = x - self.x_lo, y - self.y_lo
        if 0 <= dx < self.coef.shape[0] and 0 <= dy < self.coef.shape[1]:
            return int(self.coef[dx, dy])
        return 0

    def monomials(self) -> list:
        xs, ys = np.nonzero(self.coef)
        return [(self.x_lo + int(a), self.y_lo + int(b), int(self.coef[a, b]))
                for a, b in zip(xs, ys)]


def bipoly_add(p: BiPoly, r: BiPoly) -> BiPoly:
    x_lo = min(p.x_lo, r.x_lo)
    y_lo = min(p.y_lo, r.y_lo)
    x_hi = max(p.x_lo + p.coef.shape[0], r.x_lo + r.coef.shape[0])
    y_hi = max(p.y_lo + p.coef.shape[1], r.y_lo + r.coef.shape[1])
    out = np.zeros((x_hi - x_lo, y_hi - y_lo), dtype=np.int64)
    for q_ in (p, r):
        out[q_.x_lo - x_lo : q_.x_lo - x_lo + q_.coef.shape[0],
            q_.y_lo - y_lo : q_.y_lo - y_lo + q_.coef.shape[1]] += q_.coef
    return BiPoly(x_lo, y_lo, out)


def bipoly_mul(p: BiPoly, r: BiPoly) -> BiPoly:
    """Schoolbook 2-D convolution; windows add."""
    dxp, dyp = p.coef.shape
    dxr, dyr = r.coef.shape
    out = np.zeros((dxp + dxr - 1, dyp + dyr - 1), dtype=np.int64)
    for a in range(dxp):
        row = p.coef[a]
        nz = np.nonzero(row)[0]
        for b in nz:
            out[a : a + dxr, b : b + dyr] += row[b] * r.coef
    return BiPoly(p.x_lo + r.x_lo, p.y_lo + r.y_lo, out)


@dataclass(frozen=True)
class BiPolyMatrix:
    """n x n matrix of BiPoly entries sharing one degree window.

    coef[i, k, a, b] is the coefficient of x^(x_lo+a) y^(y_lo+b) in entry
    (i+1, k+1).  An all-zero slice is the zero polynomial (the encoding of an
    infinite input entry).
    """

    n: int
    x_lo: int
    y_lo: int
    coef: np.ndarray  # (n, n, DX, DY) int64

    def __post_init__(self):
        c = np.asarray(self.coef, dtype=np.int64)
        if c.shape[:2] != (self.n, self.n) or c.ndim != 4:
            raise ValueError("BiPolyMatrix grid must be (n, n, DX, DY)")
        object.__setattr__(self, "coef", c)

    def entry(self, i: int, k: int) -> BiPoly:
        """1-based entry accessor."""
        return BiPoly(self.x_lo, self.y_lo, self.coef[i - 1, k - 1])


@dataclass(frozen=True)
class PackedPoly:
    """Univariate view of a bivariate (or trivariate) polynomial.

    Exponent packing is e = x + sx*y (+ sx*sy*z with z counted from z_lo).
    Unpacking is exact as long as the packed-out variables' true degrees stay
    below their strides, which holds by the callers' window bookkeeping and is
    checked where cheap.
    """

    arr: np.ndarray
    sx: int
    sy: int | None = None  # stride block for z, expressed as number of y slots
    x_lo: int = 0
    y_lo: int = 0
    z_lo: int = 0


def pack(p: BiPoly, sx: int) -> PackedPoly:
    """Kronecker-pack with raw exponents: coefficient of x^a y^b lands at a + sx*b."""
    if p.x_lo < 0 or p.y_lo < 0:
        raise ValueError("shift the window to non-negative exponents before packing")
    dx, dy = p.coef.shape
    x_hi = p.x_lo + dx - 1
    if sx <= x_hi:
        raise ValueError(f"stride {sx} too small for x-degree {x_hi}")
    y_hi = p.y_lo + dy - 1
    arr = np.zeros(x_hi + sx * y_hi + 1 if p.coef.any() else 1, dtype=np.int64)
    xs, ys = np.nonzero(p.coef)
    np.add.at(arr, (xs + p.x_lo) + sx * (ys + p.y_lo), p.coef[xs, ys])
    return PackedPoly(arr, sx)


def unpack(p: PackedPoly, sx: int | None = None) -> BiPoly:
    sx = p.sx if sx is None else sx
    e = np.nonzero(p.arr)[0]
    if e.size == 0:
        return BiPoly(0, 0, np.zeros((1, 1), dtype=np.int64))
    xs, ys = e % sx, e // sx
    out = np.zeros((int(xs.max()) + 1, int(ys.max()) + 1), dtype=np.int64)
    out[xs, ys] = p.arr[e]
    return BiPoly(0, 0, out)


# ---------------------------------------------------------------------------
# polynomial-matrix product


def polymat_mul(A: BiPolyMatrix, B: BiPolyMatrix, backend: str = "auto") -> BiPolyMatrix:
    """C[i,j] = sum_k A[i,k]*B[k,j] over Z[x,y], exact.

    backend "cubic" runs one integer matmul per coefficient pair; "ntt"
    evaluates at roots of unity with batched float64 matmuls (exact under the
    asserted headroom).  "auto" picks ntt when the packed length warrants it.
    """
    if A.n != B.n:
        raise ValueError("dimension mismatch")
    n = A.n
    max_a = int(A.coef.max(initial=0))
    max_b = int(B.coef.max(initial=0))
    if A.coef.min(initial=0) < 0 or B.coef.min(initial=0) < 0:
        raise ValueError("witness-count coefficients must be non-negative")
    # true output coefficients are bounded by n * max_a * max_b * (monomials per entry)
    nnz_a = _max_entry_monomials(A.coef)
    nnz_b = _max_entry_monomials(B.coef)
    nnz = min(nnz_a, nnz_b)
    bound = n * max(1, max_a) * max(1, max_b) * max(1, nnz)
    if bound >= (1 << 62):
        raise OverflowError("coefficient bound exceeds 64-bit headroom")
    dxa, dya = A.coef.shape[2:]
    dxb, dyb = B.coef.shape[2:]
    dxc, dyc = dxa + dxb - 1, dya + dyb - 1
    if backend == "auto":
        k = next_pow2(dxc * dyc)
        backend = "ntt" if (k >= 64 and bound < Q_MATRIX and n * (Q_MATRIX - 1) ** 2 < 2**53
                            and k <= _MAX_ORDER[Q_MATRIX]) else "cubic"
    if backend == "cubic":
        out = np.zeros((n, n, dxc, dyc), dtype=np.int64)
        for xa in range(dxa):
            for ya in range(dya):
                sa = A.coef[:, :, xa, ya]
                if not sa.any():
                    continue
                for xb in range(dxb):
                    for yb in range(dyb):
                        sb = B.coef[:, :, xb, yb]
                        if not sb.any():
                            continue
                        out[:, :, xa + xb, ya + yb] += sa @ sb
    elif backend == "ntt":
        if bound >= Q_MATRIX:
            raise OverflowError(f"true coefficients may reach {bound} >= q={Q_MATRIX}")
        out = _polymat_mul_ntt(A.coef, B.coef, dxc, dyc)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if max_a <= 1 and max_b <= 1 and nnz_a <= 1 and nnz_b <= 1:
        # witness-count usage (one monomial per entry): each output
        # coefficient counts matching k-indices, so it is capped by n
        assert int(out.max(initial=0)) <= n, "count coefficients exceeded the n cap"
    return BiPolyMatrix(n, A.x_lo + B.x_lo, A.y_lo + B.y_lo, out)


def _max_entry_monomials(c: np.ndarray) -> int:
    return int((c != 0).sum(axis=(2, 3)).max(initial=0))


def _polymat_mul_ntt(ca: np.ndarray, cb: np.ndarray, dxc: int, dyc: int) -> np.ndarray:
    n = ca.shape[0]
    q = Q_MATRIX
    k = next_pow2(dxc * dyc)
    pa = _pack_grid(ca, dxc, k)
    pb = _pack_grid(cb, dxc, k)
    ea = ntt(pa, q).transpose(2, 0, 1).astype(np.float64)
    eb = ntt(pb, q).transpose(2, 0, 1).astype(np.float64)
    prod = np.matmul(ea, eb)  # exact: n*(q-1)^2 < 2^53
    prod = (prod % q).astype(np.int64)
    cc = ntt(prod.transpose(1, 2, 0), q, invert=True)
    cc = cc[..., : dxc * dyc].reshape(n, n, dyc, dxc)
    return np.ascontiguousarray(cc.transpose(0, 1, 3, 2))


def _pack_grid(c: np.ndarray, sx: int, k: int) -> np.ndarray:
    n, _, dx, dy = c.shape
    out = np.zeros((n, n, k), dtype=np.int64)
    for b in range(dy):
        out[:, :, sx * b : sx * b + dx] += c[:, :, :, b]
    return out


# ---------------------------------------------------------------------------
# packed trivariate sequence product


def pack_trivariate(coef: np.ndarray, sx: int, sy: int, z_lo: int = 1) -> PackedPoly:
    """Pack an (L, DX, DY) grid as e = x + sx*y + sx*sy*(z - z_lo).

    Strides must leave room for the intended product: the caller passes the
    product-safe sx (> product x-degree) and sy (> product y-degree).
    """
    el, dx, dy = coef.shape
    if sx < dx or sy < dy:
        raise ValueError("stride too small for the packed windows")
    arr = np.zeros(sx * sy * el, dtype=np.int64)
    grid = arr.reshape(el, sy, sx)
    grid[:, :dy, :dx] = coef.transpose(0, 2, 1)
    return PackedPoly(arr, sx, sy, z_lo=z_lo)


def seq_poly_mul(A: PackedPoly, B: PackedPoly) -> PackedPoly:
    """Exact product of two packed trivariate polynomials (shared strides).

    The z-major packing makes this one long univariate convolution, done with
    the order-2^26 NTT.  Coefficients are witness counts <= sequence length,
    far below q; asserted via the operands' maxima.
    """
    if A.sx != B.sx or A.sy != B.sy or A.sy is None:
        raise ValueError("operands must share packing strides")
    q = Q_SEQ
    lena, lenb = A.arr.shape[0], B.arr.shape[0]
    nnz = min(int((A.arr != 0).sum()), int((B.arr != 0).sum()))
    bound = max(int(A.arr.max(initial=0)), 1) * max(int(B.arr.max(initial=0)), 1) * max(nnz, 1)
    if bound >= q:
        raise OverflowError("coefficient bound exceeds the sequence modulus")
    k = next_pow2(lena + lenb - 1)
    fa = np.zeros(k, dtype=np.int64)
    fa[:lena] = A.arr
    fb = np.zeros(k, dtype=np.int64)
    fb[:lenb] = B.arr
    ea, eb = ntt(fa, q), ntt(fb, q)
    cc = ntt(ea * eb % q, q, invert=True)[: lena + lenb - 1]
    return PackedPoly(cc, A.sx, A.sy, z_lo=A.z_lo + B.z_lo)


def seq_poly_mul_schoolbook(A: PackedPoly, B: PackedPoly) -> PackedPoly:
    """O(L_A * L_B) reference convolution for the trivariate product."""
    if A.sx != B.sx or A.sy != B.sy:
        raise ValueError("operands must share packing strides")
    out = np.zeros(A.arr.shape[0] + B.arr.shape[0] - 1, dtype=np.int64)
    nz = np.nonzero(A.arr)[0]
    for e in nz:
        out[e : e + B.arr.shape[0]] += A.arr[e] * B.arr
    return PackedPoly(out, A.sx, A.sy, z_lo=A.z_lo + B.z_lo)


def z_slice(p: PackedPoly, z: int) -> BiPoly:
    """Coefficient of z^z as a BiPoly (packed trivariate input)."""
    if p.sy is None:
        raise ValueError("not a trivariate packing")
    block = p.sx * p.sy
    lo = (z - p.z_lo) * block
    if lo < 0 or lo >= p.arr.shape[0]:
        return BiPoly(0, 0, np.zeros((1, 1), dtype=np.int64))
    chunk = np.zeros(block, dtype=np.int64)
    avail = min(block, p.arr.shape[0] - lo)
    chunk[:avail] = p.arr[lo : lo + avail]
    return BiPoly(0, 0, np.ascontiguousarray(chunk.reshape(p.sy, p.sx).T))


def min_x_degree(p: BiPoly, d: int):
    """Least x-exponent with a nonzero coefficient at y-degree exactly d, else None."""
    dy = d - p.y_lo
    if dy < 0 or dy >= p.coef.shape[1]:
        return None
    col = p.coef[:, dy]
    nz = np.nonzero(col)[0]
    if nz.size == 0:
        return None
    return p.x_lo + int(nz[0])
