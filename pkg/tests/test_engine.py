"""Posterior engine against brute-force enumeration over stopped covers."""

import math

import numpy as np
import pytest
from scipy.stats import chisquare

from covermodels import (
    BadConfig,
    Box,
    CoverModelPosterior,
    DirichletMultinomial,
    ExactEnumerator,
    ExplicitCover,
    HistogramDensity,
    KdTreeCover,
    dirichlet_block_marginal,
    parse_depth_weight,
)
from conftest import attach_random_engine, random_static_tree, random_xy


class TestDepthWeight:
    def test_const(self):
        tag, fn = parse_depth_weight("const:0.3")
        assert fn(1) == fn(7) == 0.3

    def test_geometric(self):
        tag, fn = parse_depth_weight("2^-k")
        assert fn(1) == 0.5 and fn(3) == 0.125

    def test_bare_number(self):
        _, fn = parse_depth_weight(0.25)
        assert fn(2) == 0.25

    def test_rejects_garbage(self):
        with pytest.raises(BadConfig):
            parse_depth_weight("linear")
        with pytest.raises(BadConfig):
            parse_depth_weight("const:1.5")


class TestAgainstEnumeration:
    """Randomized static trees, checked after every absorb."""

    def run_one(self, seed, kind):
        rng = np.random.default_rng(seed)
        cov = random_static_tree(rng)
        post, oracle = attach_random_engine(rng, cov, kind)
        data = []
        for _ in range(int(rng.integers(4, 13))):
            x, y = random_xy(rng, cov, kind)
            data.append((x, y))
            post.absorb(x, y)
            # pointwise predictive agreement at fresh probes
            for _ in range(3):
                xq, yq = random_xy(rng, cov, kind)
                got = post.predict_logdensity(xq, yq)
                want = oracle.log_predictive(data, xq, yq)
                assert got == pytest.approx(want, abs=1e-10), (seed, kind)
            assert post.log_marginal_likelihood() == pytest.approx(
                oracle.log_evidence(data), abs=1e-10
            )

    @pytest.mark.parametrize("seed", range(6))
    def test_dirichlet_locals(self, seed):
        self.run_one(seed, "dirichlet")

    @pytest.mark.parametrize("seed", range(6, 12))
    def test_histogram_locals(self, seed):
        self.run_one(seed, "histogram")

    def test_stop_posteriors(self):
        rng = np.random.default_rng(42)
        cov = random_static_tree(rng, max_extra_splits=4)
        post, oracle = attach_random_engine(rng, cov, "dirichlet")
        data = []
        for _ in range(8):
            x, y = random_xy(rng, cov)
            data.append((x, y))
            post.absorb(x, y)
        for cid in cov.contexts:
            got = post.stop_posterior(cid)
            want = oracle.stop_posterior(data, cid)
            assert got == pytest.approx(want, abs=1e-10), cid


class TestPrequential:
    def test_sum_of_predictives_is_evidence(self):
        rng = np.random.default_rng(7)
        cov = random_static_tree(rng)
        post, _ = attach_random_engine(rng, cov, "dirichlet")
        total = 0.0
        for _ in range(20):
            x, y = random_xy(rng, cov)
            total += post.absorb(x, y)
        assert total == pytest.approx(post.log_marginal_likelihood(), abs=1e-12)
        assert total == pytest.approx(post.log_evidence, abs=1e-12)

    def test_absorb_returns_pre_update_predictive(self):
        rng = np.random.default_rng(17)
        cov = random_static_tree(rng)
        post, _ = attach_random_engine(rng, cov, "dirichlet")
        x, y = random_xy(rng, cov)
        before = post.predict_logdensity(x, y)
        assert post.absorb(x, y) == before


class TestLocality:
    def test_absorb_touches_only_the_match_path(self):
        rng = np.random.default_rng(23)
        cov = random_static_tree(rng, max_extra_splits=6, dim=1)
        post, _ = attach_random_engine(rng, cov, "dirichlet")
        for _ in range(6):
            post.absorb(*random_xy(rng, cov))
        x, y = random_xy(rng, cov)
        on_path = {cid for lvl in cov.match_levels(x) for cid in lvl}
        before = {c: post.states[c].log_m for c in cov.contexts}
        post.absorb(x, y)
        for c in cov.contexts:
            if c in on_path:
                continue
            assert post.states[c].log_m == before[c]


class TestReplayGrowth:
    def test_grown_tree_equals_fresh_enumeration(self):
        """Splits triggered by data must look as if they always existed."""
        rng = np.random.default_rng(3)
        cov = KdTreeCover(Box([0.0], [1.0]), alpha=2.0, max_depth=5)
        factory = lambda depth, region: DirichletMultinomial(2, 0.5)
        post = CoverModelPosterior(cov, factory, depth_weight="2^-k", grow=True)
        data = []
        for i in range(40):
            x = rng.uniform(0, 1, size=1)
            y = int(rng.integers(2))
            data.append((x, y))
            post.absorb(x, y)
            if i in (5, 15, 39):
                w0 = {c: post.states[c].w0 for c in cov.contexts}
                oracle = ExactEnumerator(cov, w0, dirichlet_block_marginal(2, 0.5))
                assert post.log_marginal_likelihood() == pytest.approx(
                    oracle.log_evidence(data), abs=1e-10
                )
                xq = rng.uniform(0, 1, size=1)
                assert post.predict_logdensity(xq, 1) == pytest.approx(
                    oracle.log_predictive(data, xq, 1), abs=1e-10
                )
        assert cov.refinement_depth >= 2  # the cascade actually fired


class TestSnapshot:
    def test_text_round_trip_continues_exactly(self):
        rng = np.random.default_rng(31)
        cov = KdTreeCover(Box([0.0], [1.0]), alpha=2.0, max_depth=6)
        factory = lambda depth, region: DirichletMultinomial(2, 0.5)
        post = CoverModelPosterior(cov, factory, depth_weight="2^-k", grow=True)
        for _ in range(30):
            post.absorb(rng.uniform(0, 1, size=1), int(rng.integers(2)))
        text = post.to_text()
        clone = CoverModelPosterior.from_text(text, factory)
        assert clone.n_obs == post.n_obs
        assert clone.log_evidence == post.log_evidence
        for _ in range(15):
            x = rng.uniform(0, 1, size=1)
            y = int(rng.integers(2))
            assert clone.absorb(x, y) == post.absorb(x, y)
        xq = rng.uniform(0, 1, size=1)
        assert clone.predict_logdensity(xq, 0) == post.predict_logdensity(xq, 0)

    def test_snapshot_is_plain_text(self):
        rng = np.random.default_rng(1)
        cov = random_static_tree(rng)
        post, _ = attach_random_engine(rng, cov, "dirichlet")
        post.absorb(*random_xy(rng, cov))
        text = post.to_text()
        assert text.startswith("{")
        assert "covermodels-snapshot" in text


class TestPsiTable:
    def test_rows_mix_to_the_marginal(self):
        rng = np.random.default_rng(19)
        cov = random_static_tree(rng, dim=1)
        post, _ = attach_random_engine(rng, cov, "dirichlet")
        for _ in range(10):
            post.absorb(*random_xy(rng, cov))
        x, y = random_xy(rng, cov)
        rows, log_marginal = post.psi_table(x, y)
        assert log_marginal == pytest.approx(post.predict_logdensity(x, y), abs=1e-12)
        path = [cid for lvl in cov.match_levels(x) for cid in lvl]
        assert [r["cid"] for r in rows] == path
        # psi is the subtree mixture value: the root row carries the
        # marginal, the terminal row its own local, and every level in
        # between mixes stop against continue at the posterior stop mass
        assert rows[0]["log_psi"] == pytest.approx(log_marginal, abs=1e-12)
        assert rows[-1]["log_psi"] == rows[-1]["log_local"]
        rebuilt = rows[-1]["log_psi"]
        for row in rows[-2::-1]:
            g = post.stop_posterior(row["cid"])
            rebuilt = np.logaddexp(
                math.log(g) + row["log_local"], math.log1p(-g) + rebuilt
            )
            assert row["log_psi"] == pytest.approx(rebuilt, abs=1e-10)


class TestSampling:
    def test_sample_matches_predictive(self):
        rng = np.random.default_rng(77)
        cov = random_static_tree(rng, dim=1, max_extra_splits=3)
        post, _ = attach_random_engine(rng, cov, "dirichlet", alphabet=3)
        for _ in range(12):
            post.absorb(*random_xy(rng, cov, alphabet=3))
        x = rng.uniform(cov.root_box.lower, cov.root_box.upper)
        probs = np.exp([post.predict_logdensity(x, k) for k in range(3)])
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        n = 6000
        draws = np.array([post.sample_y(x, rng) for _ in range(n)])
        counts = np.bincount(draws.astype(int), minlength=3)
        stat, pval = chisquare(counts, probs * n)
        assert pval > 1e-4


class TestLatticeCovers:
    """Overlapping covers drop exactness but keep the machinery running."""

    def lattice_engine(self):
        cov = ExplicitCover(
            [
                [{0, 1, 2, 3, 4, 5}],
                [{0, 1, 2, 3}, {2, 3, 4, 5}],
                [{2, 3}],
            ]
        )
        factory = lambda depth, region: DirichletMultinomial(2, 0.5)
        return cov, CoverModelPosterior(cov, factory, grow=False)

    def test_not_exact(self):
        cov, post = self.lattice_engine()
        assert not cov.exact
        with pytest.raises(BadConfig):
            post.log_marginal_likelihood()

    def test_absorb_and_predict(self):
        cov, post = self.lattice_engine()
        rng = np.random.default_rng(13)
        total = 0.0
        for _ in range(25):
            q = int(rng.integers(6))
            y = int(rng.integers(2))
            total += post.absorb(q, y)
        assert np.isfinite(total)
        p = [math.exp(post.predict_logdensity(2, k)) for k in range(2)]
        assert sum(p) == pytest.approx(1.0, abs=1e-9)

    def test_transition_rows_stay_normalized(self):
        cov, post = self.lattice_engine()
        rng = np.random.default_rng(29)
        for _ in range(30):
            post.absorb(int(rng.integers(6)), int(rng.integers(2)))
        # the deepest context overlaps both mid-level sets
        deep = [c for c in cov.contexts.values() if c.depth == 3][0]
        v = post.states[deep.cid].v
        assert len(v) == 2
        assert sum(v.values()) == pytest.approx(1.0, abs=1e-12)


class TestValidation:
    def test_set_w0_range(self):
        rng = np.random.default_rng(0)
        cov = random_static_tree(rng)
        post, _ = attach_random_engine(rng, cov)
        root = cov.roots()[0]
        with pytest.raises(BadConfig):
            post.set_w0(root, 0.0)
        with pytest.raises(BadConfig):
            post.set_w0(root, 1.5)

    def test_rejects_unknown_context(self):
        rng = np.random.default_rng(0)
        cov = random_static_tree(rng)
        post, _ = attach_random_engine(rng, cov)
        with pytest.raises(KeyError):
            post.set_w0(10_000, 0.5)
