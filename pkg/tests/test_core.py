import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minplus.core import (
    INF,
    MonotoneProfile,
    Seq,
    SquareMatrix,
    is_inf,
    minplus_conv_oracle,
    minplus_oracle,
    normalize_A_range,
    read_mpm1,
    reconstruct_from_parts,
    reduce_bd_to_monotone,
    residue_class,
    split_by_residue,
    split_seq_by_residue,
    validate,
    write_mpm1,
)


def M(rows):
    return np.asarray(rows, dtype=np.int64)


# ---------------------------------------------------------------------------
# oracles


def test_oracle_single_entry():
    assert minplus_oracle(M([[3]]), M([[4]])).tolist() == [[7]]


def test_oracle_all_zero():
    z = np.zeros((4, 4), dtype=np.int64)
    assert np.array_equal(minplus_oracle(z, z), z)


def test_oracle_two_by_two():
    c = minplus_oracle(M([[1, 5], [2, 0]]), M([[0, 3], [1, 1]]))
    assert c.tolist() == [[1, 4], [1, 1]]


def test_oracle_dimension_mismatch():
    with pytest.raises(ValueError):
        minplus_oracle(np.zeros((2, 2), np.int64), np.zeros((3, 3), np.int64))


def test_oracle_infinite_row_propagates():
    a = M([[INF, INF], [0, 0]])
    b = M([[1, 2], [3, 4]])
    c = minplus_oracle(a, b)
    assert is_inf(c[0]).all() and c[1].tolist() == [1, 2]


def test_conv_oracle_examples():
    assert minplus_conv_oracle(M([0, 2]), M([1, 3])).tolist() == [1, 3, 5]
    assert minplus_conv_oracle(M([0]), M([0])).tolist() == [0]
    c = minplus_conv_oracle(np.array([INF, 1], np.int64), M([2, 2]))
    assert is_inf(c[0]) and c[1] == 3 and c[2] == 3


def test_conv_oracle_length_mismatch():
    with pytest.raises(ValueError):
        minplus_conv_oracle(M([1, 2]), M([1, 2, 3]))


@given(
    st.lists(st.integers(0, 50), min_size=1, max_size=8),
    st.lists(st.integers(0, 50), min_size=1, max_size=8),
)
def test_conv_oracle_matches_reference(xs, ys):
    n = min(len(xs), len(ys))
    a, b = M(xs[:n]), M(ys[:n])
    got = minplus_conv_oracle(a, b)
    for k in range(2, 2 * n + 1):  # 1-based output index
        want = min(
            int(a[i - 1] + b[k - i - 1])
            for i in range(max(1, k - n), min(n, k - 1) + 1)
        )
        assert got[k - 2] == want


@given(st.integers(0, 10_000))
def test_oracle_matches_reference(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    a = rng.integers(0, 40, (n, n)).astype(np.int64)
    b = rng.integers(0, 40, (n, n)).astype(np.int64)
    want = [
        [min(int(a[i, k] + b[k, j]) for k in range(n)) for j in range(n)]
        for i in range(n)
    ]
    assert minplus_oracle(a, b).tolist() == want


def test_oracle_row_monotone_output():
    # product against a row-monotone right operand stays row-monotone
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(2, 12))
        a = rng.integers(0, 3 * n, (n, n)).astype(np.int64)
        b = np.sort(rng.integers(0, n + 1, (n, n)).astype(np.int64), axis=1)
        c = minplus_oracle(a, b)
        assert (c[:, 1:] >= c[:, :-1]).all()


def test_oracle_permutation_covariant():
    rng = np.random.default_rng(11)
    a = rng.integers(0, 30, (6, 6)).astype(np.int64)
    b = rng.integers(0, 30, (6, 6)).astype(np.int64)
    perm = rng.permutation(6)
    assert np.array_equal(minplus_oracle(a[perm], b), minplus_oracle(a, b)[perm])


# ---------------------------------------------------------------------------
# containers / validate


def test_magnitude_cap_enforced():
    with pytest.raises(ValueError):
        SquareMatrix(1, [[1 << 50]])
    with pytest.raises(ValueError):
        Seq(1, [-(1 << 50)])
    assert SquareMatrix(1, [[int(INF)]]).a[0, 0] == INF  # sentinel itself is fine


def test_profile_validation():
    with pytest.raises(ValueError):
        MonotoneProfile("diagonal-monotone")
    with pytest.raises(ValueError):
        MonotoneProfile("row-monotone", c=0)


def test_validate_row_monotone_true():
    rep = validate(M([[0, 1, 1], [2, 2, 3], [0, 5, 9]]), MonotoneProfile("row-monotone", c=3))
    assert rep and rep.position is None


def test_validate_row_monotone_violation_position():
    rep = validate(M([[0, 2, 1], [0, 0, 0], [0, 0, 0]]), MonotoneProfile("row-monotone", c=3))
    assert not rep
    assert rep.position == (1, 3)


def test_validate_bd_violation():
    rep = validate(M([[0, 2], [0, 0]]), MonotoneProfile("bounded-difference", c=2, delta=1))
    assert not rep and rep.position == (1, 2)


def test_validate_entry_bound():
    rep = validate(M([[0, 9]]), MonotoneProfile("monotone-sequence", c=1))
    assert not rep and "out of" in rep.message
    assert validate(M([0, 1, 2]), MonotoneProfile("monotone-sequence", c=1))


def test_validate_column_monotone():
    ok = M([[0, 3], [1, 3]])
    assert validate(ok, MonotoneProfile("column-monotone", c=2))
    rep = validate(M([[1, 3], [0, 3]]), MonotoneProfile("column-monotone", c=2))
    assert not rep and rep.position == (2, 1)


def test_validate_rejects_infinity():
    a = np.array([0, INF, 3], dtype=np.int64)
    rep = validate(a, MonotoneProfile("monotone-sequence"))
    assert not rep and rep.position == (2,)


# ---------------------------------------------------------------------------
# reductions


def test_reduce_bd_row_example():
    m, undo = reduce_bd_to_monotone(M([[3, 2], [4, 4]]), 1, "row")
    assert m.tolist() == [[4, 4], [5, 6]]
    assert undo.column_offsets.tolist() == [1, 2]


def test_reduce_bd_zero_delta():
    b = M([[1, 1], [2, 2]])
    m, undo = reduce_bd_to_monotone(b, 0, "row")
    assert np.array_equal(m, b) and (undo.column_offsets == 0).all()


def test_reduce_bd_rejects_non_bd():
    with pytest.raises(ValueError):
        reduce_bd_to_monotone(M([[0, 5], [0, 0]]), 1, "row")


def test_reduce_bd_row_undo_roundtrip():
    rng = np.random.default_rng(3)
    a = rng.integers(0, 25, (5, 5)).astype(np.int64)
    b = np.cumsum(rng.integers(-2, 3, (5, 5)), axis=1).astype(np.int64) + 10
    m, undo = reduce_bd_to_monotone(b, 2, "row")
    assert (m[:, 1:] >= m[:, :-1]).all()
    assert np.array_equal(undo.apply(minplus_oracle(a, m)), minplus_oracle(a, b))


def test_reduce_bd_column_undo_roundtrip():
    # column-axis reduction rides on the left operand's rows
    rng = np.random.default_rng(4)
    a = np.cumsum(rng.integers(-1, 2, (5, 5)), axis=0).astype(np.int64) + 8
    b = rng.integers(0, 25, (5, 5)).astype(np.int64)
    m, undo = reduce_bd_to_monotone(a, 1, "column")
    assert (m[1:, :] >= m[:-1, :]).all()
    assert np.array_equal(undo.apply(minplus_oracle(m, b)), minplus_oracle(a, b))


def test_normalize_row_example():
    # c*n = 10: the row [5, 7, 6] shifts by +5 so its first column hits 10
    a, _ = normalize_A_range(
        np.array([[5, 7, 6, 0, 0], [10, 0, 0, 0, 0], [0, 0, 0, 0, 0], [0] * 5, [0] * 5],
                 np.int64), c=2, n=5)
    assert a[0, :3].tolist() == [10, 12, 11]


def test_normalize_anchored_rows_unchanged():
    a = M([[4, 5], [4, 6]])
    out, undo = normalize_A_range(a, c=2, n=2)
    assert np.array_equal(out, a) and (undo.row_offsets == 0).all()


def test_normalize_undo_roundtrip():
    rng = np.random.default_rng(9)
    n = 6
    a = rng.integers(0, 200, (n, n)).astype(np.int64)
    b = np.sort(rng.integers(0, n + 1, (n, n)), axis=1).astype(np.int64)
    an, undo = normalize_A_range(a, c=1, n=n)
    fin = ~is_inf(an)
    assert (an[:, 0] == n).all()
    assert np.array_equal(undo.apply(minplus_oracle(an, b)), minplus_oracle(a, b))
    assert fin.any()


def test_normalize_drops_unreachable_entries():
    a = M([[0, 100], [0, 0]])
    out, _ = normalize_A_range(a, c=1, n=2)
    assert is_inf(out[0, 1]) and out[0, 0] == 2


# ---------------------------------------------------------------------------
# residue splitting


def test_residue_class_thresholds():
    # p = 7: thirds are {0,1,2}, {3,4}, {5,6}
    assert residue_class(np.arange(7), 7).tolist() == [0, 0, 0, 1, 1, 2, 2]
    # ceil(p/3) = 3 sits in the middle class
    assert residue_class(np.array([3]), 7).tolist() == [1]


def test_split_matrix_family_values_entry8_p7():
    b = np.full((2, 2), 8, dtype=np.int64)
    a = np.zeros((2, 2), dtype=np.int64)
    sp = split_by_residue(a, b, 7)
    # unshifted family values for a class-0 entry: B' = 8, B'' = 7+ceil(7/3) = 10,
    # B''' = 7+ceil(14/3) = 12; parts are stored pre-shifted by (0, 3, 5)
    fam = [int(sp.pairs[t][1][0, 0] + sp.shifts[t]) for t in (0, 1, 2)]
    assert fam == [8, 10, 12]


def test_split_matrix_a_class_masking():
    # (a mod p) in the middle third appears only in the second A-part
    a = np.full((1, 1), 10, dtype=np.int64)  # 10 mod 7 = 3 -> class 1
    b = np.zeros((1, 1), dtype=np.int64)
    sp = split_by_residue(a, b, 7)
    a_parts = [sp.pairs[t][0] for t in (0, 3, 6)]
    assert is_inf(a_parts[0][0, 0]) and is_inf(a_parts[2][0, 0])
    assert a_parts[1][0, 0] + 3 == 10  # shifted down by ceil(7/3)


def test_split_matrix_parts_satisfy_assumption():
    rng = np.random.default_rng(21)
    a = rng.integers(0, 120, (8, 8)).astype(np.int64)
    b = np.sort(rng.integers(0, 9 * 8, (8, 8)), axis=1).astype(np.int64)
    sp = split_by_residue(a, b, 41)
    for ap, bp in sp.pairs:
        for part in (ap, bp):
            fin = ~is_inf(part)
            assert (3 * (part[fin] % 41) < 41).all()
        assert not is_inf(bp).any()
        assert (bp[:, 1:] >= bp[:, :-1]).all()


def test_split_matrix_recombination_exact():
    rng = np.random.default_rng(5)
    a = rng.integers(0, 60, (8, 8)).astype(np.int64)
    b = np.sort(rng.integers(0, 9, (8, 8)), axis=1).astype(np.int64)
    b = np.cumsum(b, axis=1)  # row-monotone, spread-out values
    sp = split_by_residue(a, b, 41)
    prods = [minplus_oracle(ap, bp) for ap, bp in sp.pairs]
    assert np.array_equal(sp.recombine(prods), minplus_oracle(a, b))


def test_split_matrix_small_p_rejected():
    z = np.zeros((2, 2), np.int64)
    with pytest.raises(ValueError):
        split_by_residue(z, z, 5)


def test_split_seq_example():
    sp = split_seq_by_residue(M([1, 2, 3, 9, 10]), M([0, 0, 0, 0, 0]), 7)
    low = sp.a_parts[0]
    # 3 and 10 share residue 3 mod 7 (middle class); 9 mod 7 = 2 stays low
    assert low.tolist()[:2] == [1, 2] and low[3] == 9
    assert is_inf(low[2]) and is_inf(low[4])
    assert sp.inf_intervals_a[0] == 2


def test_split_seq_single_class():
    a = M([0, 7, 14])
    sp = split_seq_by_residue(a, a, 7)
    assert np.array_equal(sp.a_parts[0], a)
    assert is_inf(sp.a_parts[1]).all() and is_inf(sp.a_parts[2]).all()


def test_split_seq_recombination_exact():
    rng = np.random.default_rng(13)
    n = 64
    a = np.sort(rng.integers(0, n + 1, n)).astype(np.int64)
    b = np.sort(rng.integers(0, n + 1, n)).astype(np.int64)
    sp = split_seq_by_residue(a, b, 41)
    prods = [minplus_conv_oracle(ap, bp) for ap in sp.a_parts for bp in sp.b_parts]
    assert np.array_equal(sp.recombine(prods), minplus_conv_oracle(a, b))


def test_split_seq_parts_monotone_besides_inf():
    rng = np.random.default_rng(17)
    a = np.sort(rng.integers(0, 200, 50)).astype(np.int64)
    sp = split_seq_by_residue(a, a, 41)
    for part, count in zip(sp.a_parts, sp.inf_intervals_a):
        fin = part[~is_inf(part)]
        assert (fin[1:] >= fin[:-1]).all()
        assert count <= 3 * (200 // 41 + 2)


# ---------------------------------------------------------------------------
# reconstruction


def test_reconstruct_scalar():
    assert int(reconstruct_from_parts(np.int64(2), np.int64(5), 11)) == 27


def test_reconstruct_inf_propagates():
    out = reconstruct_from_parts(np.array([INF, 1], np.int64), np.array([INF, 3], np.int64), 7)
    assert is_inf(out[0]) and out[1] == 10


def test_reconstruct_rejects_bad_remainder():
    with pytest.raises(ValueError):
        reconstruct_from_parts(np.array([1]), np.array([11]), 11)


@given(st.lists(st.integers(0, 10**6), min_size=1, max_size=20), st.integers(2, 97))
def test_reconstruct_roundtrip(xs, p):
    c = M(xs)
    assert np.array_equal(reconstruct_from_parts(c // p, c % p, p), c)


# ---------------------------------------------------------------------------
# MPM1 files


def test_mpm1_matrix_roundtrip(tmp_path):
    a = np.array([[0, INF], [5, -3]], dtype=np.int64)
    f = tmp_path / "m.mpm1"
    write_mpm1(f, "arbitrary", a)
    kind, back = read_mpm1(f)
    assert kind == "arbitrary" and np.array_equal(back, a)


def test_mpm1_seq_roundtrip(tmp_path):
    a = np.array([1, 2, INF], dtype=np.int64)
    f = tmp_path / "s.mpm1"
    write_mpm1(f, "seq", a)
    kind, back = read_mpm1(f)
    assert kind == "seq" and back.ndim == 1 and np.array_equal(back, a)


def test_mpm1_single_zero_matrix(tmp_path):
    f = tmp_path / "z.mpm1"
    write_mpm1(f, "arbitrary", np.zeros((1, 1), np.int64))
    kind, back = read_mpm1(f)
    assert back.shape == (1, 1) and back[0, 0] == 0


def test_mpm1_optional_m_token(tmp_path):
    f = tmp_path / "m.mpm1"
    f.write_text("MPM1 arbitrary 2 2\n0 1\n2 3\n")
    _, back = read_mpm1(f)
    assert back.tolist() == [[0, 1], [2, 3]]
    f.write_text("MPM1 arbitrary 2 3\n0 1 2\n3 4 5\n")
    with pytest.raises(ValueError):
        read_mpm1(f)


def test_mpm1_rejects_garbage(tmp_path):
    f = tmp_path / "bad.mpm1"
    f.write_text("NOPE seq 3\n1 2 3\n")
    with pytest.raises(ValueError):
        read_mpm1(f)
