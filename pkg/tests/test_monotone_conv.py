import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minplus.core import INF, Seq, is_inf, minplus_conv_oracle
from minplus.monotone_conv import (
    B_WINDOW,
    MAX_CHILDREN_CONV,
    ConvSegments,
    approx_conv,
    basic_monotone_conv,
    compute_Tb_conv,
    init_conv_top,
    recursive_monotone_conv,
    refine_conv_segments,
    run_conv_level_recursion,
)


def seq(vals):
    a = np.asarray(vals, dtype=np.int64)
    return Seq(a.shape[0], a)


def rand_mono(n, seed, c=4, inf_frac=0.0):
    """A sorted random sequence, optionally with infinite entries."""
    r = np.random.default_rng(seed)
    a = np.sort(r.integers(0, c * n + 1, n))
    if inf_frac:
        a = np.where(r.random(n) < inf_frac, INF, a)
    return Seq(n, a)


# ---------------------------------------------------------------------------
# compressed approximation


def test_approx_n1():
    assert approx_conv(seq([5]), seq([7])).a[0] == 12


def test_approx_constant_sequences():
    got = approx_conv(seq([3, 3, 3]), seq([5, 5, 5])).a
    assert np.array_equal(got, np.full(5, 8))


@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(1, 64))
@settings(max_examples=40)
def test_approx_constant_formula(va, vb, n):
    got = approx_conv(Seq(n, np.full(n, va, dtype=np.int64)),
                      Seq(n, np.full(n, vb, dtype=np.int64))).a
    assert (got == va + vb).all()


def test_approx_matches_oracle():
    for seed in range(10):
        a = rand_mono(64, seed, inf_frac=0.2 if seed % 2 else 0.0)
        b = rand_mono(64, seed + 100, inf_frac=0.2 if seed % 2 else 0.0)
        got = approx_conv(a, b).a
        assert np.array_equal(got, minplus_conv_oracle(a.a, b.a))


def test_approx_rejects_non_monotone():
    with pytest.raises(ValueError):
        approx_conv(seq([2, 1]), seq([1, 1]))
    with pytest.raises(ValueError):
        approx_conv(seq([1, 1, 1]), Seq(3, np.array([5, INF, 3])))


# ---------------------------------------------------------------------------
# basic erroneous-pair sets


def brute_tb_conv(at, bt, ct, p, b):
    pairs = set()
    n = at.shape[0]
    for i in range(n):
        if is_inf(at[i]):
            continue
        for j in range(n):
            if is_inf(bt[j]):
                continue
            d = at[i] + bt[j] - ct[i + j] - b
            if d != 0 and d % p == 0:
                pairs.add((i, j))
    return pairs


def test_tb_conv_huge_prime_empty():
    a, b = rand_mono(8, 3), rand_mono(8, 4)
    at, bt = a.a // 2, b.a // 2
    ct = minplus_conv_oracle(at, bt)
    t = compute_Tb_conv(Seq(8, at), Seq(8, bt), Seq(15, ct), 10**9, 0)
    assert t.shape == (0, 2)


def test_tb_conv_difference_p_included():
    # the pair (1, 0) overshoots ct_1 by exactly p = 5
    at, bt = seq([0, 5]), seq([0, 0])
    ct = Seq(3, minplus_conv_oracle(at.a, bt.a))
    t = compute_Tb_conv(at, bt, ct, 5, 0)
    assert {(i, j) for i, j in t.tolist()} == {(1, 0)}


def test_tb_conv_matches_brute():
    for seed in range(6):
        frac = 0.15 if seed % 3 == 0 else 0.0
        a, b = rand_mono(32, seed, inf_frac=frac), rand_mono(32, seed + 9, inf_frac=frac)
        at = np.where(is_inf(a.a), INF, a.a // 3)
        bt = np.where(is_inf(b.a), INF, b.a // 3)
        ct = minplus_conv_oracle(at, bt)
        for p in (2, 5, 7):
            for boff in (0, 1, 2):
                t = compute_Tb_conv(Seq(32, at), Seq(32, bt), Seq(63, ct), p, boff)
                got = {(i, j) for i, j in t.tolist()}
                assert got == brute_tb_conv(at, bt, ct, p, boff)


# ---------------------------------------------------------------------------
# basic algorithm


def test_basic_n1():
    res = basic_monotone_conv(seq([3]), seq([4]), rng=0)
    assert res.value.a[0] == 7


def test_basic_matches_oracle_20_seeds():
    for seed in range(20):
        a, b = rand_mono(16, seed), rand_mono(16, seed + 40)
        res = basic_monotone_conv(a, b, rng=seed)
        assert np.array_equal(res.value.a, minplus_conv_oracle(a.a, b.a)), f"seed {seed}"


def test_basic_larger_sizes_nonempty_T():
    for n in (64, 256):
        for seed in range(3):
            a, b = rand_mono(n, seed, c=200), rand_mono(n, seed + 7, c=200)
            res = basic_monotone_conv(a, b, rng=seed)
            assert np.array_equal(res.value.a, minplus_conv_oracle(a.a, b.a))
            assert res.stats.level_T_sizes[0] > 0


def test_basic_rejects_bad_inputs():
    with pytest.raises(ValueError):
        basic_monotone_conv(seq([2, 1]), seq([0, 0]))
    with pytest.raises(ValueError):
        basic_monotone_conv(Seq(2, np.array([0, INF])), seq([0, 0]))


def test_sandwich_lemma_on_witnesses():
    # at every witness split of the true convolution, the scaled pair sits in [0, 2]
    for seed in range(8):
        n = 32
        a, b = rand_mono(n, seed), rand_mono(n, seed + 11)
        s = 2
        at, bt = a.a // s, b.a // s
        ct = minplus_conv_oracle(at, bt)
        c = minplus_conv_oracle(a.a, b.a)
        for t in range(2 * n - 1):
            lo, hi = max(0, t - n + 1), min(n - 1, t)
            ii = np.arange(lo, hi + 1)
            wit = ii[a.a[ii] + b.a[t - ii] == c[t]]
            d = at[wit] + bt[t - wit] - ct[t]
            assert (d >= 0).all() and (d <= 2).all()


# ---------------------------------------------------------------------------
# top-level segments


def _assumption_instance(n, seed, p, inf_frac=0.0):
    """Monotone sequence already satisfying the residue assumption."""
    r = np.random.default_rng(seed)
    vals = np.sort(r.integers(0, 4, n) * p + r.integers(0, max(1, p // 3), n))
    if inf_frac:
        vals = np.where(r.random(n) < inf_frac, INF, vals)
    return vals


def _stars(a, b, p):
    astar = np.where(is_inf(a), INF, a // p)
    bstar = np.where(is_inf(b), INF, b // p)
    cstar = minplus_conv_oracle(astar, bstar)
    return astar, bstar, cstar


def test_conv_top_all_matching_empty():
    n = 4
    z = Seq(n, np.zeros(n, dtype=np.int64))
    zc = Seq(2 * n - 1, np.zeros(2 * n - 1, dtype=np.int64))
    st_ = init_conv_top(z, z, z, z, zc, 11)
    assert st_.t.total_segments == 0
    assert st_.l == st_.h == (11).bit_length()


def test_conv_top_single_mismatch():
    a = np.array([0, 100], dtype=np.int64)
    b = np.array([0, 0], dtype=np.int64)
    astar, bstar, cstar = _stars(a, b, 11)
    st_ = init_conv_top(seq(a), seq(b), Seq(2, astar), Seq(2, bstar),
                        Seq(3, cstar), 11)
    assert {(i, t) for i, t in st_.t.expanded_pairs().tolist()} == {(1, 1)}
    assert st_.t.total_segments == 1


def test_conv_top_matches_brute():
    p = 41
    for seed in range(5):
        frac = 0.2 if seed % 2 else 0.0
        a = _assumption_instance(12, seed, p, inf_frac=frac)
        b = _assumption_instance(12, seed + 50, p, inf_frac=frac)
        astar, bstar, cstar = _stars(a, b, p)
        st_ = init_conv_top(seq(a), seq(b), Seq(12, astar), Seq(12, bstar),
                            Seq(23, cstar), p)
        got = {(i, t) for i, t in st_.t.expanded_pairs().tolist()}
        want = set()
        for i in range(12):
            for j in range(12):
                if is_inf(a[i]) or is_inf(b[j]):
                    continue
                if astar[i] + bstar[j] != cstar[i + j]:
                    want.add((i, i + j))
        assert got == want


def test_refine_hits_child_bound():
    # one parent crossing an A change, a B change, and another A change
    al = np.array([0, 1, 1, 2], dtype=np.int64)
    bl = np.array([0, 0, 1, 1], dtype=np.int64)
    cl = np.zeros(7, dtype=np.int64)
    cl[3] = 1
    parent = ConvSegments(np.array([0]), np.array([3]), np.array([3]), np.array([0]))
    kids = refine_conv_segments(parent, al, bl, cl)
    got = {(i0, i1, t, b) for i0, i1, t, b in
           zip(kids.i0.tolist(), kids.i1.tolist(), kids.t.tolist(), kids.b.tolist())}
    assert got == {(0, 0, 3, 0), (1, 1, 3, 1), (2, 2, 3, 0), (3, 3, 3, 1)}
    assert kids.total_segments == MAX_CHILDREN_CONV


# ---------------------------------------------------------------------------
# level recursion invariants (collected states)


def _collect(a, b, p, engine="poly"):
    return run_conv_level_recursion(a, b, p, engine=engine, collect_states=True)


def _brute_level_values(a, b, p, l):
    """C^(l) recomputed directly: min of level sums over star-matching pairs."""
    n = a.shape[0]
    a_inf, b_inf = is_inf(a), is_inf(b)
    astar, bstar, cstar = _stars(a, b, p)
    al = np.where(a_inf, 0, (a % p) >> l)
    bl = np.where(b_inf, 0, (b % p) >> l)
    out = np.full(2 * n - 1, INF, dtype=np.int64)
    for t in range(2 * n - 1):
        vals = [al[i] + bl[t - i] for i in range(max(0, t - n + 1), min(n, t + 1))
                if not a_inf[i] and not b_inf[t - i]
                and astar[i] + bstar[t - i] == cstar[t]]
        if vals:
            out[t] = min(vals)
    return out, astar, bstar, cstar


def test_level_values_match_direct_formula_and_brute_pairs():
    # the central equivalence: extracted level values equal the genuine-min
    # formula, and stored segments expand to exactly the defining pair sets
    n, p = 12, 41
    for seed in range(3):
        frac = 0.2 if seed == 2 else 0.0
        a = _assumption_instance(n, seed, p, inf_frac=frac)
        b = _assumption_instance(n, seed + 31, p, inf_frac=frac)
        c0, cstar_arr, tsz, states = _collect(a, b, p)
        a_inf, b_inf = is_inf(a), is_inf(b)
        for st_ in states:
            l = st_.l
            want_cl, astar, bstar, cstar = _brute_level_values(a, b, p, l)
            assert np.array_equal(st_.cl.a, want_cl), f"level {l} values differ"
            got = {(i, t, bb) for i, t, bb in st_.t.expanded_with_b().tolist()}
            al = np.where(a_inf, 0, (a % p) >> l)
            bl = np.where(b_inf, 0, (b % p) >> l)
            want = set()
            for i in range(n):
                for j in range(n):
                    if a_inf[i] or b_inf[j]:
                        continue
                    t = i + j
                    if astar[i] + bstar[j] == cstar[t]:
                        continue
                    bb = 0 if l == p.bit_length() else al[i] + bl[j] - want_cl[t]
                    if abs(bb) <= B_WINDOW:
                        want.add((i, t, int(bb)))
            assert got == want, f"level {l} pair sets differ"


def test_final_level_equals_c_mod_p_and_reconstruction():
    n, p = 12, 53
    for seed in range(4):
        a = _assumption_instance(n, seed, p)
        b = _assumption_instance(n, seed + 17, p)
        c = minplus_conv_oracle(a, b)
        c0, cstar, tsz, states = _collect(a, b, p)
        fin = ~is_inf(c)
        assert np.array_equal(c0[fin], (c % p)[fin])
        assert np.array_equal(np.where(fin, p * cstar + c0, INF), np.where(fin, c, INF))


def test_property_1_window_every_level():
    n, p = 12, 67
    for seed in range(4):
        a = _assumption_instance(n, seed, p)
        b = _assumption_instance(n, seed + 23, p)
        c = minplus_conv_oracle(a, b)
        cmod = c % p
        fin = ~is_inf(c)
        _, _, _, states = _collect(a, b, p)
        for st_ in states:
            l = st_.l
            lo = (cmod - 2 * (2**l - 1)) // (2**l)
            hi = (cmod + 2 * (2**l - 1)) // (2**l)
            assert (st_.cl.a[fin] >= lo[fin]).all()
            assert (st_.cl.a[fin] <= hi[fin]).all()


def test_level_relation_lemma():
    n, p = 12, 67
    for seed in range(4):
        a = _assumption_instance(n, seed, p)
        b = _assumption_instance(n, seed + 29, p)
        _, _, _, states = _collect(a, b, p)
        for prev, cur in zip(states, states[1:]):
            d = cur.cl.a - 2 * prev.cl.a
            fin = ~is_inf(cur.cl.a) & ~is_inf(prev.cl.a)
            assert (d[fin] >= -7).all() and (d[fin] <= 8).all()


def test_t_nesting_every_level():
    n, p = 12, 41
    for seed in range(4):
        a = _assumption_instance(n, seed, p)
        b = _assumption_instance(n, seed + 13, p)
        _, _, _, states = _collect(a, b, p)
        for prev, cur in zip(states, states[1:]):
            outer = {tuple(t) for t in prev.t.expanded_pairs().tolist()}
            inner = {tuple(t) for t in cur.t.expanded_pairs().tolist()}
            assert inner <= outer


def test_witness_bucket_window_every_level():
    n, p = 12, 41
    for seed in range(4):
        a = _assumption_instance(n, seed, p)
        b = _assumption_instance(n, seed + 37, p)
        c = minplus_conv_oracle(a, b)
        _, _, _, states = _collect(a, b, p)
        a_inf, b_inf = is_inf(a), is_inf(b)
        for st_ in states:
            l = st_.l
            al = np.where(a_inf, 0, (a % p) >> l)
            bl = np.where(b_inf, 0, (b % p) >> l)
            for i in range(n):
                for j in range(n):
                    if a_inf[i] or b_inf[j]:
                        continue
                    if a[i] + b[j] == c[i + j]:
                        bb = al[i] + bl[j] - st_.cl.a[i + j]
                        assert -B_WINDOW <= bb <= B_WINDOW


# ---------------------------------------------------------------------------
# recursive driver


def test_recursive_n1():
    for eng in ("poly", "fused"):
        res = recursive_monotone_conv(seq([3]), seq([4]), rng=0, engine=eng)
        assert res.value.a[0] == 7


def test_recursive_matches_oracle():
    for n in (8, 16, 32, 64):
        for seed in range(4):
            frac = 0.15 if seed == 3 else 0.0
            a, b = rand_mono(n, seed, inf_frac=frac), rand_mono(n, seed + 77, inf_frac=frac)
            want = minplus_conv_oracle(a.a, b.a)
            eng = "fused" if n >= 32 else "poly"
            res = recursive_monotone_conv(a, b, rng=seed, engine=eng)
            assert np.array_equal(res.value.a, want), f"n={n} seed={seed}"


def test_recursive_large_values_nonempty_T():
    for seed in range(3):
        a, b = rand_mono(64, seed, c=200), rand_mono(64, seed + 5, c=200)
        want = minplus_conv_oracle(a.a, b.a)
        for eng in ("poly", "fused"):
            res = recursive_monotone_conv(a, b, rng=seed, engine=eng)
            assert np.array_equal(res.value.a, want)
            assert sum(res.stats.level_T_sizes) > 0


def test_engines_bit_equal():
    for n in (8, 12, 16):
        for seed in range(3):
            a, b = rand_mono(n, seed, c=200), rand_mono(n, seed + 3, c=200)
            r1 = recursive_monotone_conv(a, b, rng=seed, engine="poly")
            r2 = recursive_monotone_conv(a, b, rng=seed, engine="fused")
            assert r1.stats.p == r2.stats.p
            assert np.array_equal(r1.value.a, r2.value.a)
            assert r1.stats.level_T_sizes == r2.stats.level_T_sizes


def test_auto_engine_fallthrough():
    a, b = rand_mono(8, 0), rand_mono(8, 1)
    res = recursive_monotone_conv(a, b, rng=0, engine="auto")
    assert res.stats.engine == "oracle"
    assert np.array_equal(res.value.a, minplus_conv_oracle(a.a, b.a))
    # pinning the prime forces a real run
    res2 = recursive_monotone_conv(a, b, rng=0, engine="auto", force_prime=127)
    assert res2.stats.engine == "poly" and res2.stats.p == 127
    assert np.array_equal(res2.value.a, minplus_conv_oracle(a.a, b.a))


def test_recursive_rejects_non_monotone():
    a = rand_mono(8, 0)
    bad = Seq(8, np.arange(8, dtype=np.int64)[::-1].copy())
    with pytest.raises(ValueError):
        recursive_monotone_conv(a, bad, engine="poly")


def test_guard_restarts_then_proceeds():
    # large entries relative to the prime so the segment sets are nonempty
    a, b = rand_mono(16, 1, c=200), rand_mono(16, 2, c=200)
    res = recursive_monotone_conv(a, b, rng=0, engine="poly", guard=1e-9)
    assert res.stats.guard_exhausted and res.stats.restarts > 0
    assert np.array_equal(res.value.a, minplus_conv_oracle(a.a, b.a))
    res2 = recursive_monotone_conv(a, b, rng=0, engine="poly", guard=1e-9,
                                   force_prime=211)
    assert res2.stats.guard_exhausted and res2.stats.restarts == 0
    assert np.array_equal(res2.value.a, minplus_conv_oracle(a.a, b.a))
