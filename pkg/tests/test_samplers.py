import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpcok import gfp
from fpcok.errors import ThresholdOutOfRange
from fpcok.samplers import (
    EntryDistribution,
    MatrixEnsemble,
    TwoPointEntry,
    TwoPointGrid,
    alpha_n,
    entry_words,
    extreme_points,
    random_balanced_law,
    sample_array,
    sample_matrix,
)


def test_alpha_n_values():
    assert alpha_n(2, 100, 2) == pytest.approx(0.0921034037, abs=1e-9)
    assert alpha_n(1, 1000, 2) == pytest.approx(0.0069077553, abs=1e-9)
    with pytest.raises(ThresholdOutOfRange):
        alpha_n(2, 7, 2)  # 2 ln 7 / 7 = 0.556 > 1/2
    assert alpha_n(2, 7, 3) == pytest.approx(2 * math.log(7) / 7)
    assert alpha_n(2, 7, 2, clamp=True) == 0.5
    for bad in [(2, 1, 2), (0, 10, 2), (-1, 10, 2)]:
        with pytest.raises(ValueError):
            alpha_n(*bad)


def test_distribution_validation():
    with pytest.raises(ValueError):
        EntryDistribution(3, [0.5, 0.5])
    with pytest.raises(ValueError):
        EntryDistribution(2, [1.2, -0.2])
    with pytest.raises(ValueError):
        EntryDistribution(2, [0.5, 0.6])
    d = EntryDistribution(3, [0.5, 0.25, 0.25])
    assert d.is_balanced(0.5) and not d.is_balanced(0.5 + 1e-9)
    assert d.is_balanced(0.5 + 1e-13)
    d.check_balanced(0.4)
    with pytest.raises(ValueError):
        d.check_balanced(0.6)


def test_char_two_point():
    for p in (2, 3, 5):
        for t in range(1, p):
            law = TwoPointEntry(p, t, 0.3).to_distribution()
            for m in range(p):
                expect = 0.7 + 0.3 * np.exp(2j * np.pi * t * m / p)
                assert abs(law.char(m) - expect) < 1e-14
    assert EntryDistribution.uniform(5).char(2) == pytest.approx(0, abs=1e-15)
    with pytest.raises(ValueError):
        TwoPointEntry(3, 0, 0.2)
    with pytest.raises(ValueError):
        TwoPointEntry(3, 1, 1.5)


def test_extreme_points():
    pts = extreme_points(2, 0.3)
    assert [(u, v) for u, v, _ in pts] == [(0, 1), (1, 0)]
    pts = extreme_points(3, 0.4)
    assert len(pts) == 6
    for u, v, law in pts:
        assert u != v
        assert law.probs[u] == pytest.approx(0.6) and law.probs[v] == pytest.approx(0.4)
        assert law.is_balanced(0.4) and law.probs.max() == pytest.approx(1 - 0.4)
    with pytest.raises(ValueError):
        extreme_points(3, 0.6)  # two-point laws are no longer balanced
    with pytest.raises(ValueError):
        extreme_points(2, 0.0)


def test_extreme_points_are_extreme():
    # every balanced law is a convex combination of the two-point laws:
    # check with a nonnegative least-squares fit on random laws
    from scipy.optimize import nnls

    rng = np.random.default_rng(0)
    for p, alpha in [(3, 0.3), (5, 0.45), (2, 0.5)]:
        V = np.array([law.probs for _, _, law in extreme_points(p, alpha)]).T
        A = np.vstack([V, np.ones(V.shape[1])])
        for _ in range(20):
            x = random_balanced_law(p, alpha, rng).probs
            w, res = nnls(A, np.append(x, 1.0))
            assert res < 1e-9


def test_random_balanced_law():
    rng = np.random.default_rng(1)
    for p in (2, 3, 7):
        for alpha in (0.01, 0.3, 1 - 1 / p):
            assert random_balanced_law(p, alpha, rng).is_balanced(alpha)
    with pytest.raises(ValueError):
        random_balanced_law(2, 0.6, rng)


def test_ensemble_validation():
    with pytest.raises(ValueError):
        MatrixEnsemble(4, 3)
    with pytest.raises(ValueError):
        MatrixEnsemble(2, 0)
    with pytest.raises(ValueError):
        MatrixEnsemble(2, 3, "gaussian")
    with pytest.raises(ValueError):
        MatrixEnsemble(2, 3, TwoPointGrid.constant(4, 0.1))
    with pytest.raises(ValueError):
        MatrixEnsemble(3, 2, TwoPointGrid(np.array([[1, 3], [1, 1]]), 0.1))
    with pytest.raises(ValueError):
        MatrixEnsemble(3, 2, EntryDistribution.uniform(5))
    with pytest.raises(ValueError):
        MatrixEnsemble(2, 2, seed=-1)
    with pytest.raises(ValueError):
        TwoPointGrid(np.ones((2, 3)), 0.1)


def test_json_roundtrip(tmp_path):
    grid = TwoPointGrid(np.array([[1, 2], [2, 1]]), 0.25)
    for ens in [
        MatrixEnsemble(3, 2, "uniform", 7),
        MatrixEnsemble(3, 2, EntryDistribution(3, [0.5, 0.3, 0.2]), 8),
        MatrixEnsemble(3, 2, grid, 9),
        MatrixEnsemble(2, 4, TwoPointGrid.constant(4, 0.1), 2**64 - 1),
    ]:
        back = MatrixEnsemble.from_json(ens.to_json())
        assert back.to_dict() == ens.to_dict()
        assert sample_matrix(back, 3) == sample_matrix(ens, 3)
    d = MatrixEnsemble(3, 2, grid, 9).to_dict()
    assert d["law"] == {"two_point_grid": {"t": [[1, 2], [2, 1]], "alpha": 0.25}}
    assert MatrixEnsemble(2, 3, TwoPointGrid.constant(3, 0.2)).to_dict()["law"]["two_point_grid"]["t"] == 1
    path = tmp_path / "ens.json"
    path.write_text(ens.to_json())
    assert MatrixEnsemble.load(path).to_dict() == ens.to_dict()
    with pytest.raises(ValueError):
        MatrixEnsemble.from_dict({"p": 2, "n": 2, "law": {"gauss": 1}})


def test_entry_law():
    grid = TwoPointGrid(np.array([[1, 2], [2, 1]]), 0.25)
    ens = MatrixEnsemble(3, 2, grid)
    assert ens.entry_law(0, 1) == EntryDistribution(3, [0.75, 0, 0.25])
    assert MatrixEnsemble(3, 2).entry_law(1, 1) == EntryDistribution.uniform(3)


def test_sampling_deterministic():
    ens = MatrixEnsemble(2, 3, "uniform", 1234)
    a = sample_matrix(ens, 0)
    assert a == sample_matrix(ens, 0)
    assert a == sample_matrix(MatrixEnsemble.from_json(ens.to_json()), 0)
    big = MatrixEnsemble(2, 40, "uniform", 1234)
    assert sample_matrix(big, 0) != sample_matrix(big, 1)
    assert sample_matrix(big, 0) != sample_matrix(big.with_seed(1235), 0)


def test_words_prefix_stable():
    # the first entries do not depend on how many words are drawn
    w9 = entry_words(5, 6, 9)
    w100 = entry_words(5, 6, 100)
    assert w9.dtype == np.uint32
    assert np.array_equal(w9, w100[:9])


def test_degenerate_two_point():
    ens = MatrixEnsemble(5, 6, TwoPointGrid.constant(6, 0.0, 3), 0)
    assert not sample_array(ens, 0).any()
    ens = MatrixEnsemble(5, 6, TwoPointGrid.constant(6, 1.0, 3), 0)
    assert (sample_array(ens, 0) == 3).all()
    t = np.arange(36).reshape(6, 6) % 4 + 1
    ens = MatrixEnsemble(5, 6, TwoPointGrid(t, 1.0), 0)
    assert np.array_equal(sample_array(ens, 0), t)


def _z(count, n, prob):
    return abs(count - n * prob) / math.sqrt(n * prob * (1 - prob))


def test_uniform_frequencies():
    ens = MatrixEnsemble(3, 317, "uniform", 99)  # 100489 entries
    a = sample_array(ens, 0)
    for v in range(3):
        assert _z(np.count_nonzero(a == v), a.size, 1 / 3) < 5


def test_general_law_frequencies():
    law = EntryDistribution(5, [0.1, 0.4, 0.0, 0.3, 0.2])
    a = sample_array(MatrixEnsemble(5, 300, law, 3), 0)
    assert np.count_nonzero(a == 2) == 0
    for v in (0, 1, 3, 4):
        assert _z(np.count_nonzero(a == v), a.size, law.probs[v]) < 5


def test_two_point_frequencies():
    t = np.random.default_rng(0).integers(1, 7, size=(300, 300))
    a = sample_array(MatrixEnsemble(7, 300, TwoPointGrid(t, 0.05), 11), 4)
    nz = a != 0
    assert _z(nz.sum(), a.size, 0.05) < 5
    assert np.array_equal(a[nz], t[nz])


def test_streams_look_independent():
    ens = MatrixEnsemble(2, 200, "uniform", 0)
    a = sample_array(ens, 0).astype(int)
    b = sample_array(ens, 1).astype(int)
    assert _z(np.count_nonzero(a == b), a.size, 0.5) < 5


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([2, 3, 5]), st.integers(1, 12), st.integers(0, 2**64 - 1), st.integers(0, 2**40))
def test_entries_in_range(p, n, seed, stream):
    for law in ("uniform", EntryDistribution.uniform(p), TwoPointGrid.constant(n, 0.3, p - 1)):
        M = sample_matrix(MatrixEnsemble(p, n, law, seed), stream)
        assert M.shape == (n, n)
        assert M.data.max() < p


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([3, 5, 7]), st.integers(2, 25), st.integers(0, 2**32), st.data())
def test_unit_scaling_preserves_corank(p, n, seed, data):
    # scaling t by a unit gives the same zero pattern from the same words,
    # and scaling a column by a unit preserves rank
    s = data.draw(st.integers(1, p - 1))
    base = MatrixEnsemble(p, n, TwoPointGrid.constant(n, 0.2, 1), seed)
    scaled = MatrixEnsemble(p, n, TwoPointGrid.constant(n, 0.2, s), seed)
    a = sample_matrix(base, 0)
    b = sample_matrix(scaled, 0)
    assert np.array_equal((a.data.astype(int) * s) % p, b.data)
    assert gfp.corank(a) == gfp.corank(b)
