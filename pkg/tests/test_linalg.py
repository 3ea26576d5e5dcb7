import random
from fractions import Fraction

from ncg.coefficients import GaussRat, GR_ONE, GR_ZERO
from ncg.linalg import (RowReducer, determinant,
                        is_positive_definite_hermitian, mat_inverse,
                        nullspace, solve, vec_add)


def random_system(rng, max_rows=6, max_cols=7, density=0.6):
    n_rows = rng.randint(1, max_rows)
    n_cols = rng.randint(1, max_cols)
    cols = list(range(n_cols))
    rows = []
    for _ in range(n_rows):
        row = {}
        for c in cols:
            if rng.random() < density:
                v = GaussRat(rng.randint(-3, 3), rng.randint(-2, 2))
                if not v.is_zero():
                    row[c] = v
        rows.append(row)
    return rows, cols


def test_nullspace_kernel_property():
    rng = random.Random(3)
    for _ in range(150):
        rows, cols = random_system(rng)
        basis = nullspace(rows, cols)
        for vec in basis:
            for row in rows:
                acc = GR_ZERO
                for c, v in row.items():
                    acc = acc + v * vec.get(c, GR_ZERO)
                assert acc.is_zero()
        reducer = RowReducer()
        for i, row in enumerate(rows):
            if row:
                reducer.insert(row, i)
        assert len(basis) == len(cols) - reducer.rank


def test_row_reducer_certificates():
    rng = random.Random(5)
    for _ in range(60):
        rows, cols = random_system(rng, max_rows=5, max_cols=5)
        reducer = RowReducer()
        originals = {}
        for i, row in enumerate(rows):
            if row:
                originals[i] = row
                reducer.insert(row, i)
        # random combination of inserted rows must reduce with a certificate
        target = {}
        for i, row in originals.items():
            c = GaussRat(rng.randint(-2, 2))
            target = vec_add(target, row, c)
        residue, combo = reducer.express(target)
        assert not residue
        replay = {}
        for label, c in combo.items():
            replay = vec_add(replay, originals[label], c)
        assert replay == target


def test_solve_consistent_and_inconsistent():
    rng = random.Random(7)
    solved = 0
    for _ in range(120):
        rows, cols = random_system(rng, max_rows=5, max_cols=5)
        secret = {c: GaussRat(rng.randint(-2, 2)) for c in cols}
        rhs = []
        for row in rows:
            acc = GR_ZERO
            for c, v in row.items():
                acc = acc + v * secret[c]
            rhs.append(acc)
        sol = solve(rows, rhs, cols)
        assert sol is not None
        for row, b in zip(rows, rhs):
            acc = GR_ZERO
            for c, v in row.items():
                acc = acc + v * sol.get(c, GR_ZERO)
            assert acc == b
        solved += 1
    assert solved == 120
    # inconsistent: x = 0 and x = 1
    assert solve([{0: GR_ONE}, {0: GR_ONE}], [GR_ZERO, GR_ONE], [0]) is None


def test_matrix_inverse_and_determinant():
    rng = random.Random(11)
    for _ in range(80):
        n = rng.randint(1, 4)
        mat = [[GaussRat(rng.randint(-3, 3), rng.randint(-1, 1))
                for _ in range(n)] for _ in range(n)]
        det = determinant(mat)
        if det.is_zero():
            continue
        inv = mat_inverse(mat)
        prod = [[sum((mat[i][t] * inv[t][j] for t in range(n)), GR_ZERO)
                 for j in range(n)] for i in range(n)]
        expected = [[GR_ONE if i == j else GR_ZERO for j in range(n)]
                    for i in range(n)]
        assert prod == expected


def test_positive_definite_check():
    assert is_positive_definite_hermitian(((GR_ONE, GR_ZERO),
                                           (GR_ZERO, GR_ONE)))
    two = GaussRat(2)
    i_half = GaussRat(0, 1, 2)
    hermitian = ((two, i_half), (i_half.conj(), GR_ONE))
    assert is_positive_definite_hermitian(hermitian)
    assert not is_positive_definite_hermitian(((GaussRat(-1),),))
    assert not is_positive_definite_hermitian(((GR_ONE, GR_ONE),
                                               (GR_ZERO, GR_ONE)))
