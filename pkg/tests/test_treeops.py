import math

import numpy as np
import pytest

from radloc.cocycle import continuum_rate, lyapunov_mc
from radloc.halfline import (
    HalfLineProfile,
    dynamical_moment,
    eigenfunction_profile,
    truncated_eigenvalues,
)
from radloc.model import EnvironmentWord, rbm, rlm, sample_word, tree_geometry
from radloc.treeops import (
    VertexAddress,
    edge_quadrature,
    inner_product,
    kirchhoff_residual,
    lift,
    tree_decay_check,
    tree_dynamical_moment,
    vertices_at,
)

PI2 = math.pi ** 2


def base_profile(word, g, n, window, which=0):
    """Normalized eigenfunction of the radial problem starting at generation g."""
    geo = tree_geometry(word)
    shifted = word.shift(g)
    E = truncated_eigenvalues(shifted, n, window).eigenvalues[which]
    prof = eigenfunction_profile(shifted, n, E)
    prof.origin = float(geo.positions[g])
    return prof.normalized("function"), geo


def first_vertex(geo, g):
    return next(vertices_at(geo, g))


class TestAddresses:
    def test_basic(self):
        v = VertexAddress((1, 2))
        assert v.generation == 2 and str(v) == "/1/2"
        assert v.child(3).parent == v
        assert v.child(3).is_descendant_of(v) and not v.is_descendant_of(v.child(3))

    def test_validate(self):
        geo = tree_geometry(EnvironmentWord([(2, 1, 0), (3, 1, 0), (2, 1, 0)]))
        VertexAddress((1, 2, 3)).validate(geo)
        with pytest.raises(ValueError):
            VertexAddress((2,)).validate(geo)
        with pytest.raises(ValueError):
            VertexAddress((1, 3)).validate(geo)

    def test_counts(self):
        w = EnvironmentWord([(2, 1, 0), (3, 1, 0), (2, 1, 0)])
        geo = tree_geometry(w)
        for g in range(4):
            assert len(list(vertices_at(geo, g))) == geo.gen_weights[g]


class TestLift:
    def test_path_root_lift(self):
        w = EnvironmentWord.constant((1, 1.0, 0.0), 3)
        prof, geo = base_profile(w, 0, 3, (0, 5))
        f = lift(prof, (), 0, geo)
        for h in (1, 2, 3):
            x = first_vertex(geo, h)
            for s in (0.1, 0.5, 0.9):
                r = geo.positions[h - 1] + s
                assert f(x, s) == pytest.approx(complex(prof.evaluate(r)), abs=1e-14)

    def test_binary_k1_signs(self):
        w = EnvironmentWord.constant((2, 1.0, 0.0), 4)
        prof, geo = base_profile(w, 1, 3, (0.5, 10))
        f = lift(prof, (1,), 1, geo)
        a1 = f.amplitude(VertexAddress((1, 1)))
        a2 = f.amplitude(VertexAddress((1, 2)))
        assert a1 == pytest.approx(-1, abs=1e-15) and a2 == pytest.approx(1, abs=1e-15)
        assert f.amplitude(VertexAddress((1,))) == 0

    def test_rejects_bad_k(self):
        w = EnvironmentWord.constant((3, 1.0, 0.0), 4)
        prof, geo = base_profile(w, 1, 3, (0.5, 10))
        with pytest.raises(ValueError):
            lift(prof, (1,), 0, geo)
        with pytest.raises(ValueError):
            lift(prof, (1,), 3, geo)

    def test_rejects_wrong_origin(self):
        w = EnvironmentWord.constant((2, 1.0, 0.0), 4)
        prof, geo = base_profile(w, 1, 3, (0.5, 10))
        prof.origin = 0.0
        with pytest.raises(ValueError):
            lift(prof, (1,), 1, geo)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_norm_preserved(self, seed):
        w = sample_word(rbm(), 6, seed=seed)
        prof, geo = base_profile(w, 2, 4, (0.5, 30))
        v = first_vertex(geo, 2)
        f = lift(prof, v, 1, geo)
        direct = sum(float(np.sum(wq * np.abs(vals) ** 2)) for wq, vals in edge_quadrature(f, 6).values())
        assert direct == pytest.approx(1.0, abs=1e-10)
        assert f.norm_squared() == pytest.approx(1.0, abs=1e-10)

    def test_rows(self):
        w = EnvironmentWord.constant((2, 1.0, 0.0), 4)
        prof, geo = base_profile(w, 1, 3, (0.5, 10))
        rows = lift(prof, (1,), 1, geo).to_rows(3)
        assert len(rows) == 2 + 4
        assert rows[0][:3] == (2, "/1/1", 1)


class TestKirchhoff:
    @pytest.mark.parametrize("seed", [0, 3])
    def test_all_vertices(self, seed):
        w = sample_word(rbm(), 6, seed=seed)
        prof, geo = base_profile(w, 1, 5, (0.5, 30), which=1)
        f = lift(prof, (1,), 1, geo)
        scale = float(np.max(np.abs(prof.boundary_data)))
        for h in range(1, 6):
            for x in vertices_at(geo, h):
                c, fl = kirchhoff_residual(f, x)
                assert c < 1e-9 * scale and fl < 1e-9 * scale

    def test_root(self):
        w = sample_word(rlm((1, 3)), 5, seed=0)
        prof, geo = base_profile(w, 0, 5, (0.5, 30))
        f = lift(prof, (), 0, geo)
        assert kirchhoff_residual(f, ())[0] < 1e-12
        for h in range(1, 5):
            assert max(kirchhoff_residual(f, first_vertex(geo, h))) < 1e-9

    def test_corrupted_profile_detected(self):
        w = EnvironmentWord.constant((2, 1.0, 0.5), 5)
        prof, geo = base_profile(w, 1, 4, (0.5, 30))
        data = prof.data.copy()
        data[2, 1] += 1e-3 * np.abs(data).max()
        bad = HalfLineProfile(prof.energy, data, prof.log_scale, prof.word, origin=prof.origin)
        f = lift(bad, (1,), 1, geo)
        # local index 2 is generation 3
        scale = math.exp(prof.log_scale[2]) * np.abs(data).max()
        assert kirchhoff_residual(f, (1, 1, 1))[1] > 1e-4 * scale
        assert kirchhoff_residual(lift(prof, (1,), 1, geo), (1, 1, 1))[1] < 1e-12


class TestOrthogonality:
    def test_distinct_lifts(self):
        w = EnvironmentWord([(2, 1, 0), (3, 1, 0), (2, 1, 0), (3, 1, 0), (2, 1, 0)])
        geo = tree_geometry(w)
        fns = []
        for g in range(0, 3):
            shifted = w.shift(g)
            E = truncated_eigenvalues(shifted, 5 - g, (0.5, 12)).eigenvalues[:2]
            for e in E:
                p = eigenfunction_profile(shifted, 5 - g, e)
                p.origin = float(geo.positions[g])
                p = p.normalized("function")
                for v in vertices_at(geo, g):
                    ks = [0] if g == 0 else range(1, int(geo.branchings[g]))
                    fns.extend(lift(p, v, k, geo) for k in ks)
        G = np.array([[inner_product(a, b, 5) for b in fns] for a in fns])
        assert np.max(np.abs(G - np.eye(len(fns)))) < 1e-10

    @pytest.mark.parametrize("bs", [[2, 2, 2, 2], [3, 1, 2, 2], [2, 3, 2, 3, 2]])
    def test_lift_count(self, bs):
        # one lift per (v, k) for generations below the leaves, plus the root
        w = EnvironmentWord([(b, 1, 0) for b in bs])
        geo = tree_geometry(w)
        D = len(bs)
        total = 1 + sum(geo.gen_weights[g] * (geo.branchings[g] - 1) for g in range(1, D))
        assert total == geo.gen_weights[D]
        assert total == sum(geo.multiplicities[:D])

    def test_weight_consistency(self):
        w = sample_word(rbm(), 8, seed=2)
        geo = tree_geometry(w)
        for h in range(1, 8):
            assert geo.weight_at(geo.positions[h] - 0.5) == len(list(vertices_at(geo, h)))


class TestDecay:
    def test_synthetic(self):
        w = EnvironmentWord.constant((1, 0.5, 0.0), 200)
        geo = tree_geometry(w)
        t = geo.positions
        data = np.zeros((201, 2))
        data[:, 0] = np.exp(-0.3 * t) * (t > 0)
        prof = HalfLineProfile(1.0, data, np.zeros(201), w)
        f = lift(prof, (), 0, geo)
        res = tree_decay_check(f)
        assert res.lam == pytest.approx(0.3, rel=1e-3) and res.holds

    def test_free_fails(self):
        w = EnvironmentWord.constant((2, 1.0, 0.0), 200)
        prof, geo = base_profile(w, 1, 199, (5, 5.2))
        C, lam, holds = tree_decay_check(lift(prof, (1,), 1, geo))
        assert not holds

    def test_rlm_lift(self):
        w = sample_word(rlm((1, 3)), 300, seed=3)
        prof, geo = base_profile(w, 2, 298, (4.9, 5.1))
        res = tree_decay_check(lift(prof, (1, 1), 1, geo))
        assert res.holds and res.lam > 0.01

    @pytest.mark.slow
    def test_rbm_rate(self):
        w = sample_word(rbm(), 1500, seed=11)
        geo = tree_geometry(w)
        lams = []
        shifted = w.shift(1)
        sp = truncated_eigenvalues(shifted, 1499, (7.3, 7.6), with_residuals=False)
        for E in sp.eigenvalues[::4]:
            p = eigenfunction_profile(shifted, 1499, E)
            p.origin = float(geo.positions[1])
            lams.append(tree_decay_check(lift(p, (1,), 1, geo)).lam)
        rate = continuum_rate(lyapunov_mc(7.45, rbm(), n=10_000, trials=50, seed=0).value, rbm())
        assert np.median(lams) == pytest.approx(rate, rel=0.25)


class TestTreeMoment:
    def test_path_reduction(self):
        w = EnvironmentWord.constant((1, 1.0, 0.0), 40)
        psi_support = 3.0
        tree = tree_dynamical_moment(w, 40, (2, 6), 1.0, psi_support)
        # path tree: only the root problem; psi = indicator weighted by |f|
        ref, _, terms = dynamical_moment(w, 40, (2, 6), 1.0, lambda x: (np.asarray(x) <= psi_support) * 1.0,
                                         absolute=True, return_terms=True)
        assert tree == pytest.approx(ref, rel=1e-10)

    def test_root_only_small_radius(self):
        w = sample_word(rbm(), 60, seed=1)
        _, terms = tree_dynamical_moment(w, 60, (7.3, 7.6), 1.0, 0.9, return_terms=True)
        assert [t[0] for t in terms] == [0]

    def test_radius_guard(self):
        w = sample_word(rbm(), 20, seed=1)
        with pytest.raises(ValueError):
            tree_dynamical_moment(w, 20, (7.3, 7.6), 1.0, 11.0)

    @pytest.mark.slow
    def test_depth_stability(self):
        w = sample_word(rbm(), 600, seed=7)
        a = tree_dynamical_moment(w, 400, (7.3, 7.6), 2.0, 3.0)
        b = tree_dynamical_moment(w, 600, (7.3, 7.6), 2.0, 3.0)
        assert abs(a - b) < 0.05 * a
