"""Synthetic generator tests: planted structure, determinism, limits."""

import math

import numpy as np
import pytest

from brainalign import synth
from brainalign.errors import ConfigError
from brainalign.evalcls import build_neighborhoods


class TestLatticeGraph:
    def test_grid_structure(self):
        graph, coords = synth._lattice_graph(9)
        assert graph.n_voxels == 9
        assert graph.edges.shape[0] == 12  # 3x3 grid: 6 + 6
        assert list(graph.neighbors(4)) == [1, 3, 5, 7]
        assert coords.shape == (9, 2)

    def test_non_square_count(self):
        graph, _ = synth._lattice_graph(7)
        assert graph.n_voxels == 7
        assert graph.edges.max() < 7


class TestRandomGeometric:
    def test_valid_graph(self):
        rng = np.random.default_rng(0)
        graph, coords = synth._random_geometric_graph(100, rng)
        assert graph.n_voxels == 100
        assert graph.edges.shape[0] > 0
        assert (graph.edges[:, 0] != graph.edges[:, 1]).all()


class TestSynthGenerate:
    def test_fixed_seed_identical_bytes(self, tmp_path):
        a = synth.synth_generate(n_trs=40, n_voxels=30, d=4, frac_signal=0.3,
                                 snr=1.0, seed=9)
        b = synth.synth_generate(n_trs=40, n_voxels=30, d=4, frac_signal=0.3,
                                 snr=1.0, seed=9)
        pa = synth.write_synth(a, tmp_path / "a")
        pb = synth.write_synth(b, tmp_path / "b")
        for key in pa:
            assert pa[key].read_bytes() == pb[key].read_bytes()

    def test_planted_mask_contiguous(self):
        data = synth.synth_generate(n_trs=40, n_voxels=400, d=4,
                                    frac_signal=0.2, snr=1.0, seed=1)
        assert data.planted.sum() == 80
        # a blob on the lattice: most planted voxels touch another planted one
        lists = data.graph.adjacency_lists()
        touching = sum(any(data.planted[j] for j in lists[i])
                       for i in np.nonzero(data.planted)[0])
        assert touching / 80 > 0.9

    def test_frac_zero_is_pure_noise(self):
        data = synth.synth_generate(n_trs=30, n_voxels=20, d=3,
                                    frac_signal=0.0, snr=5.0, seed=2)
        assert not data.planted.any()
        assert abs(data.brain.values.mean()) < 0.1

    def test_infinite_snr_noiseless(self):
        data = synth.synth_generate(n_trs=30, n_voxels=20, d=3,
                                    frac_signal=0.5, snr=math.inf, seed=3)
        planted = data.brain.values[:, data.planted]
        assert np.allclose(planted.std(axis=0), 1.0)

    def test_snr_scaling(self):
        data = synth.synth_generate(n_trs=2000, n_voxels=20, d=3,
                                    frac_signal=0.5, snr=3.0, seed=4)
        planted_std = data.brain.values[:, data.planted].std(axis=0)
        # signal std 3 + noise std 1 -> total ~ sqrt(10)
        assert np.allclose(planted_std, math.sqrt(10.0), atol=0.35)

    def test_word_onset_layout(self):
        data = synth.synth_generate(n_trs=10, n_voxels=5, d=2,
                                    frac_signal=0.0, snr=1.0, seed=5,
                                    words_per_tr=4)
        assert data.features.n_rows == 40
        assert np.array_equal(data.word_onsets, np.repeat(np.arange(10), 4))

    def test_errors(self):
        with pytest.raises(ConfigError):
            synth.synth_generate(10, 10, 2, frac_signal=1.5, snr=1.0)
        with pytest.raises(ConfigError):
            synth.synth_generate(10, 10, 2, frac_signal=0.5, snr=1.0,
                                 graph_type="torus")
        with pytest.raises(ConfigError):
            synth.synth_generate(0, 10, 2, frac_signal=0.5, snr=1.0)


class TestDetectableMask:
    def test_superset_of_planted(self):
        data = synth.synth_generate(n_trs=30, n_voxels=100, d=3,
                                    frac_signal=0.25, snr=1.0, seed=6)
        detectable = synth.detectable_mask(data)
        assert np.all(detectable[data.planted])
        assert detectable.sum() > data.planted.sum()

    def test_matches_neighborhood_dilation(self):
        data = synth.synth_generate(n_trs=30, n_voxels=64, d=3,
                                    frac_signal=0.2, snr=1.0, seed=7)
        nbhd = build_neighborhoods(data.graph)
        expected = np.zeros(64, dtype=bool)
        for i in range(64):
            if data.planted[nbhd.members(i)].any():
                expected[i] = True
        assert np.array_equal(synth.detectable_mask(data), expected)
