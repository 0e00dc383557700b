import math

import numpy as np
import pytest

from scforest.data import CategoricalDataset
from scforest.scf import (
    ParentSet,
    build_candidate_table,
    enumerate_scf_structures,
    inter_subsets,
    learn_cmap_scf,
    learn_map_scf_pair,
    score_parent_sets,
)
from scforest.scoring import LocalScorer, ScoreConfig

from conftest import random_dataset, scf_structure_scores


def _instance(seed):
    rng = np.random.default_rng(seed)
    nt, nc = int(rng.integers(1, 5)), int(rng.integers(0, 4))
    cards = rng.integers(2, 4, nt + nc).tolist()
    ds = random_dataset(rng, 30, cards)
    # correlate some targets with conditions so structure matters
    data = ds.data.copy()
    for t in range(nt):
        if nc and rng.random() < 0.6:
            src = nt + int(rng.integers(0, nc))
            m = rng.random(30) < 0.7
            data[m, t] = data[m, src] % cards[t]
    ds = CategoricalDataset(ds.names, cards, data)
    k = int(rng.integers(0, 3))
    return ds, tuple(range(nt)), tuple(range(nt, nt + nc)), k


class TestExhaustive:
    @pytest.mark.parametrize("seed", range(40))
    def test_forest_matches_oracle(self, seed):
        ds, targets, cond, k = _instance(seed)
        cfg = ScoreConfig(ess=float(1 + seed % 5), k=k)
        g = learn_cmap_scf(ds, targets, cond, cfg)
        best = max(s for s, _, _ in scf_structure_scores(ds.data, ds.cardinalities,
                                                         targets, cond, k, cfg.ess))
        assert g.score == pytest.approx(best, rel=1e-9, abs=1e-9)
        assert g.score == pytest.approx(score_parent_sets(ds, targets, cond, g.parents, cfg),
                                        rel=1e-12)

    @pytest.mark.parametrize("structure", ["tree", "none"])
    @pytest.mark.parametrize("seed", range(10))
    def test_restricted_shapes(self, seed, structure):
        ds, targets, cond, k = _instance(100 + seed)
        cfg = ScoreConfig(ess=5.0, k=k)
        g = learn_cmap_scf(ds, targets, cond, cfg, structure)
        best = max(s for s, _, _ in scf_structure_scores(ds.data, ds.cardinalities, targets,
                                                         cond, k, 5.0, structure=structure))
        assert g.score == pytest.approx(best, rel=1e-9, abs=1e-9)
        if structure == "none":
            assert g.n_intra_edges == 0
        elif targets:
            assert g.intra_parent().count(-1) == 1

    @pytest.mark.parametrize("alpha", [0.0, 1.5, math.inf])
    def test_penalty_matches_oracle(self, alpha):
        rng = np.random.default_rng(int(alpha * 10) if math.isfinite(alpha) else 99)
        ds = random_dataset(rng, 40, [2, 2, 3, 2])
        cfg = ScoreConfig(ess=10.0, alpha=alpha, k=1)
        g = learn_cmap_scf(ds, (0, 1, 2), (3,), cfg)
        best = max(s for s, _, _ in scf_structure_scores(ds.data, ds.cardinalities, (0, 1, 2),
                                                         (3,), 1, 10.0, alpha=alpha))
        assert g.score == pytest.approx(best, rel=1e-9)
        if alpha == math.inf:
            assert all(3 in ps.inter for ps in g.parents)

    def test_library_enumeration_count(self):
        # 16 forests on 3 targets, 3 condition subsets (k=1, |cond|=2) per target
        assert sum(1 for _ in enumerate_scf_structures((0, 1, 2), (3, 4), 1)) == 16 * 27


class TestCandidateTable:
    def test_fewest_parents_on_ties(self):
        # constant child: every parent set scores the same under any data
        ds = CategoricalDataset(["t", "c1", "c2"], [1, 2, 2], [[0, 0, 1], [0, 1, 0]])
        table = build_candidate_table(ds, (0,), (1, 2), ScoreConfig(k=2))
        assert table.parent_set(0, None) == ParentSet(None, ())

    def test_inter_subsets_order(self):
        assert inter_subsets((5, 3, 4), 2) == [(), (3,), (4,), (5,), (3, 4), (3, 5), (4, 5)]

    def test_shared_scorer_is_reused(self, rng):
        ds = random_dataset(rng, 20, [2, 2, 2])
        sc = LocalScorer(ds, 20.0)
        learn_cmap_scf(ds, (0, 1), (2,), ScoreConfig(k=1), scorer=sc)
        filled = len(sc)
        learn_cmap_scf(ds, (0, 1), (2,), ScoreConfig(k=1, alpha=2.0), scorer=sc)
        assert filled > 0 and len(sc) == filled


class TestValidation:
    def test_overlapping_sets(self, rng):
        ds = random_dataset(rng, 5, [2, 2])
        with pytest.raises(ValueError):
            learn_cmap_scf(ds, (0, 1), (1,), ScoreConfig())

    def test_unknown_structure(self, rng):
        ds = random_dataset(rng, 5, [2, 2])
        with pytest.raises(ValueError):
            learn_cmap_scf(ds, (0,), (1,), ScoreConfig(), structure="dag")


class TestPair:
    def test_copy_process_learns_self_edges(self):
        rng = np.random.default_rng(0)
        x = np.zeros((1000, 3), dtype=int)
        x[0] = rng.integers(0, 2, 3)
        for t in range(1, 1000):
            flip = rng.random(3) < 0.05
            x[t] = np.where(flip, 1 - x[t - 1], x[t - 1])
        prev = CategoricalDataset(["a", "b", "c"], [2, 2, 2], x[:-1])
        nxt = CategoricalDataset(["a", "b", "c"], [2, 2, 2], x[1:])
        _, g = learn_map_scf_pair(prev, nxt, ScoreConfig(ess=20.0, k=1), structure="none")
        assert [ps.inter for ps in g.parents] == [(0,), (1,), (2,)]
