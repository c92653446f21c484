import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radloc.model import (
    EnvironmentWord,
    InvalidDistribution,
    SingleGenDistribution,
    SiteParams,
    generation_weight,
    multiplicity,
    periodic_word,
    rbm,
    rkm,
    rlm,
    sample_word,
    substream,
    tree_geometry,
    vertex_positions,
)

sites = st.builds(
    SiteParams,
    st.integers(1, 5),
    st.floats(0.1, 5.0, allow_nan=False),
    st.floats(-3.0, 3.0, allow_nan=False),
)


class TestSiteParams:
    def test_valid(self):
        s = SiteParams(2, 1.0, 0.5)
        assert (s.b, s.ell, s.q, s.p) == (2, 1.0, 0.5, 1.0)

    @pytest.mark.parametrize("args", [(0, 1.0, 0.0), (2, 0.0, 0.0), (2, -1.0, 0.0), (2.5, 1.0, 0.0),
                                      (2, math.inf, 0.0), (2, 1.0, math.nan)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            SiteParams(*args)

    def test_integral_float_branching(self):
        assert SiteParams(3.0, 1.0).b == 3


class TestDistribution:
    def test_single_atom_rejected(self):
        with pytest.raises(InvalidDistribution, match="two-point"):
            SingleGenDistribution([(2, 1, 0)], [1.0])

    def test_duplicate_atoms_do_not_count(self):
        with pytest.raises(InvalidDistribution):
            SingleGenDistribution([(2, 1, 0), (2, 1, 0)])

    @pytest.mark.parametrize("w", [[0.5, 0.6], [1.0, 0.0], [-0.5, 1.5]])
    def test_bad_weights(self, w):
        with pytest.raises(InvalidDistribution):
            SingleGenDistribution([(2, 1, 0), (3, 1, 0)], w)

    def test_uniform_default(self):
        d = SingleGenDistribution([(2, 1, 0), (3, 1, 0), (4, 1, 0)])
        assert np.allclose(d.probabilities, 1 / 3)

    def test_presets(self):
        assert {a.b for a in rbm().atoms} == {2, 3}
        assert {a.ell for a in rlm((1, 3)).atoms} == {1.0, 3.0}
        assert {a.q for a in rkm((0, 2)).atoms} == {0.0, 2.0}
        assert all(a.q == 0 for a in rbm().atoms)

    def test_means(self):
        d = rlm((1, 3))
        assert d.mean("ell") == 2.0
        assert rbm().mean_log_branching() == pytest.approx(0.5 * math.log(6))

    @given(st.lists(sites, min_size=2, max_size=5, unique=True))
    @settings(max_examples=40, deadline=None)
    def test_json_roundtrip(self, atoms):
        d = SingleGenDistribution(atoms)
        back = SingleGenDistribution.from_json(d.to_json())
        assert list(back.atoms) == list(d.atoms)
        assert np.allclose(back.probabilities, d.probabilities, rtol=0, atol=1e-15)


class TestWords:
    def test_sample_support_and_determinism(self):
        d = SingleGenDistribution([(2, 1, 0), (3, 1, 0)], [0.5, 0.5])
        w1 = sample_word(d, 4, seed=7)
        w2 = sample_word(d, 4, seed=7)
        assert len(w1) == 4
        assert all(s in d.atoms for s in w1)
        assert list(w1) == list(w2)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_frequencies(self, seed):
        d = SingleGenDistribution([(2, 1, 0), (3, 1, 0), (5, 1, 0)], [0.2, 0.3, 0.5])
        w = sample_word(d, 100_000, seed=seed)
        freq = np.array([np.mean(w.b == b) for b in (2, 3, 5)])
        assert np.max(np.abs(freq - d.probabilities)) < 0.01

    def test_substreams_independent_of_order(self):
        a = substream(3, 1, 2).random(4)
        substream(3, 0, 0).random(10)
        assert np.array_equal(a, substream(3, 1, 2).random(4))
        assert not np.array_equal(a, substream(3, 2, 1).random(4))

    def test_json_roundtrip(self):
        w = sample_word(rlm((1, 3)), 20, seed=1)
        back = EnvironmentWord.from_json(w.to_json())
        assert list(back) == list(w)

    def test_shift_and_slices(self):
        w = EnvironmentWord([(2, 1, 0), (3, 2, 0), (2, 3, 1)])
        assert list(w.shift(1)) == [SiteParams(3, 2, 0), SiteParams(2, 3, 1)]
        assert len(w[:2]) == 2

    @pytest.mark.parametrize("ells,expected", [((1, 1, 1), (0, 1, 2, 3)), ((1, 3, 1), (0, 1, 4, 5))])
    def test_positions(self, ells, expected):
        w = EnvironmentWord([(2, l, 0) for l in ells])
        assert np.array_equal(vertex_positions(w), expected)

    @given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=30))
    def test_position_differences(self, ells):
        # exact up to the rounding of each partial sum
        w = EnvironmentWord([(2, l, 0) for l in ells])
        t = vertex_positions(w)
        assert np.all(np.abs(np.diff(t) - ells) <= 2 * np.spacing(t[1:]))

    def test_periodic(self):
        c = [(2, 1, 0)]
        assert list(periodic_word(c, 3)) == [SiteParams(2, 1, 0)] * 3
        assert len(periodic_word([(2, 1, 0), (3, 1, 0)], 2)) == 4
        assert list(periodic_word([(2, 1, 0), (3, 1, 0)], 1)) == [SiteParams(2, 1, 0), SiteParams(3, 1, 0)]


class TestTreeCombinatorics:
    def test_figure_example(self):
        w = EnvironmentWord([(2, 1, 0), (2, 1, 0), (3, 1, 0)])
        assert [generation_weight(w, n) for n in (1, 2, 3)] == [1, 2, 4]

    def test_path(self):
        w = EnvironmentWord([(1, 1, 0)] * 5)
        assert all(generation_weight(w, n) == 1 for n in range(6))

    def test_binary(self):
        w = EnvironmentWord([(2, 1, 0)] * 6)
        assert [generation_weight(w, n) for n in range(1, 7)] == [2 ** (n - 1) for n in range(1, 7)]

    @pytest.mark.parametrize("b,n,expected", [(2, 2, 2), (3, 3, 18)])
    def test_multiplicity(self, b, n, expected):
        w = EnvironmentWord([(b, 1, 0)] * 5)
        assert multiplicity(w, 0) == 1
        assert multiplicity(w, n) == expected

    @given(st.lists(st.integers(1, 4), min_size=1, max_size=12))
    def test_telescoping(self, bs):
        w = EnvironmentWord([(b, 1, 0) for b in bs])
        N = len(bs)
        total = sum(multiplicity(w, n) for n in range(1, N + 1))
        assert total == math.prod(bs) - 1

    def test_discrete_convention(self):
        w = EnvironmentWord([(2, 1, 0), (3, 1, 0)])
        assert generation_weight(w, 2, root_branching=None) == 6
        assert multiplicity(w, 1, root_branching=None) == 2 * 2

    def test_geometry(self):
        w = EnvironmentWord([(2, 1, 0), (3, 2, 0), (2, 1, 0)])
        g = tree_geometry(w)
        assert np.array_equal(g.gen_weights, [1, 1, 2, 6])
        assert np.array_equal(g.multiplicities, [1, 1, 4, 6])
        assert g.weight_at(0.5) == 1 and g.weight_at(2.0) == 2 and g.weight_at(3.5) == 6
