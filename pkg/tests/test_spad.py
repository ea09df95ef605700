import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmfcircuit.errors import InvalidDimension, InvalidDistribution, InvalidParameter
from mmfcircuit.linalg import sylvester_operator
from mmfcircuit.quantum import OutcomeDistribution, PhotonPairSource, coincidence_distribution
from mmfcircuit.spad import (
    PS,
    DetectorArray,
    TimeTagStream,
    crosstalk_matrix,
    hex_layout,
    simulate_classical,
    simulate_pairs,
    spad23,
)


def ideal_array(n_pix=7, **kw):
    pos = hex_layout(n_pix, 23.0)
    base = dict(
        positions=pos,
        pitch=23.0,
        efficiency=1.0,
        dark_rate=0.0,
        dead_time=0.0,
        jitter_fwhm=0.0,
        crosstalk_true=np.zeros((n_pix, n_pix)),
    )
    base.update(kw)
    return DetectorArray(**base)


def pairwise(pos):
    d = np.hypot(*(pos[:, None] - pos[None]).transpose(2, 0, 1))
    return d[np.triu_indices(len(pos), 1)]


class TestHexLayout:
    def test_single(self):
        np.testing.assert_array_equal(hex_layout(1), [[0.0, 0.0]])

    def test_first_ring(self):
        pos = hex_layout(7, 10.0)
        np.testing.assert_allclose(pos[0], 0.0, atol=1e-12)
        np.testing.assert_allclose(np.hypot(*pos[1:].T), 10.0, atol=1e-12)

    def test_23_pixels(self):
        pos = hex_layout(23, 23.0)
        assert pos.shape == (23, 2)
        assert abs(pairwise(pos).min() - 23.0) < 1e-9

    @given(st.integers(2, 60))
    def test_min_distance_is_pitch(self, n):
        assert abs(pairwise(hex_layout(n, 5.0)).min() - 5.0) < 1e-9

    def test_ordered_by_radius(self):
        r = np.hypot(*hex_layout(19).T)
        assert np.all(np.diff(r) >= -1e-9)


class TestCrosstalkMatrix:
    def test_nearest_neighbour_value(self):
        pos = hex_layout(7, 23.0)
        b = crosstalk_matrix(pos, 23.0, 1e-3)
        np.testing.assert_allclose(b[0, 1:], 1e-3)
        assert np.all(np.diag(b) == 0)
        np.testing.assert_array_equal(b, b.T)

    def test_zero(self):
        assert np.all(crosstalk_matrix(hex_layout(7), 23.0, 0.0) == 0)


class TestArray:
    def test_spad23(self):
        a = spad23()
        assert a.n_pix == 23 and 22 not in a.usable_pixels and len(a.usable_pixels) == 22

    def test_rejects_bad_efficiency(self):
        with pytest.raises(InvalidParameter):
            ideal_array(efficiency=1.5)

    def test_rejects_bad_crosstalk(self):
        bad = np.full((7, 7), 0.1)
        np.fill_diagonal(bad, 0)
        with pytest.raises(InvalidParameter):
            ideal_array(crosstalk_true=bad)


class TestSimulatePairs:
    def test_nothing_in_nothing_out(self):
        d = coincidence_distribution(sylvester_operator(2), 0.0)
        s = simulate_pairs(d, PhotonPairSource(pair_rate=0.0), ideal_array(), 10.0, 0)
        assert len(s) == 0

    def test_dark_count_statistics(self):
        arr = ideal_array(1, dark_rate=100.0)
        d = OutcomeDistribution(np.zeros((1, 1)), 1.0)
        s = simulate_pairs(d, PhotonPairSource(pair_rate=0.0), arr, 100.0, 3)
        assert abs(len(s) - 1e4) < 4 * np.sqrt(1e4)

    def test_concentrated_outcome(self):
        p = np.zeros((3, 3))
        p[1, 2] = 1.0
        arr = ideal_array(jitter_fwhm=100e-12)
        s, truth = simulate_pairs(
            OutcomeDistribution(p, 0.0), PhotonPairSource(pair_rate=500.0), arr, 1.0, 4,
            detectors=[0, 1, 2], return_truth=True,
        )
        assert set(np.unique(s.pixels)) == {1, 2}
        c1, c2 = np.sum(s.pixels == 1), np.sum(s.pixels == 2)
        assert c1 == c2 == truth["n_pairs"]
        t1, t2 = s.timestamps[s.pixels == 1], s.timestamps[s.pixels == 2]
        assert np.max(np.abs(t1 - t2)) < 1000  # well inside a 1 ns window

    def test_histogram_converges(self):
        d = coincidence_distribution(sylvester_operator(4), 0.4)
        arr = ideal_array()
        _, truth = simulate_pairs(d, PhotonPairSource(pair_rate=2e4), arr, 2.0, 5, return_truth=True)
        hist = truth["outcome_counts"]
        n = hist.sum()
        iu = np.triu_indices(4)
        tv = 0.5 * np.abs(hist[iu] / n - d.probs[iu] / d.probs[iu].sum()).sum()
        assert tv < 3 * np.sqrt(len(iu[0]) / n)

    def test_dead_time_respected(self):
        arr = ideal_array(dead_time=50e-9, jitter_fwhm=120e-12, dark_rate=1e3, crosstalk_true=crosstalk_matrix(hex_layout(7), 23, 0.02))
        d = coincidence_distribution(sylvester_operator(4), 0.5)
        s = simulate_pairs(d, PhotonPairSource(pair_rate=3e6), arr, 0.05, 6)
        assert s.is_sorted()
        for p in range(7):
            t = s.timestamps[s.pixels == p]
            assert np.all(np.diff(t) >= 50e-9 * PS)

    def test_disabled_pixels_silent(self):
        arr = ideal_array(dark_rate=500.0, disabled_pixels=frozenset({3}))
        d = OutcomeDistribution(np.zeros((1, 1)), 1.0)
        s = simulate_pairs(d, PhotonPairSource(pair_rate=0.0), arr, 1.0, 1, detectors=[0])
        assert not np.any(s.pixels == 3)

    def test_rejects_routing_to_disabled(self):
        arr = ideal_array(disabled_pixels=frozenset({1}))
        d = coincidence_distribution(sylvester_operator(2), 0.0)
        with pytest.raises(InvalidDimension):
            simulate_pairs(d, PhotonPairSource(), arr, 1.0, 0, detectors=[0, 1])

    def test_rejects_bad_distribution(self):
        with pytest.raises(InvalidDistribution):
            simulate_pairs(OutcomeDistribution(np.full((2, 2), 0.5), 0.0), PhotonPairSource(), ideal_array(), 1.0)

    def test_seed_reproducible(self):
        d = coincidence_distribution(sylvester_operator(4), 0.5)
        arr = spad23()
        a = simulate_pairs(d, PhotonPairSource(pair_rate=1e4), arr, 0.2, 9)
        b = simulate_pairs(d, PhotonPairSource(pair_rate=1e4), arr, 0.2, 9)
        np.testing.assert_array_equal(a.timestamps, b.timestamps)
        np.testing.assert_array_equal(a.pixels, b.pixels)


class TestSimulateClassical:
    def test_only_darks(self):
        arr = ideal_array(dark_rate=50.0)
        s = simulate_classical(np.zeros(7), arr, 20.0, 2)
        assert abs(len(s) - 7 * 50 * 20) < 4 * np.sqrt(7 * 50 * 20)

    def test_crosstalk_thinning(self):
        beta = crosstalk_matrix(hex_layout(7), 23.0, 5e-3)
        arr = ideal_array(crosstalk_true=beta)
        rates = np.zeros(7)
        rates[0] = 2e5
        s, truth = simulate_classical(rates, arr, 2.0, 3, return_truth=True)
        n0 = truth["accepted_primary"][0]
        for j in range(1, 7):
            k = truth["crosstalk_counts"][0, j]
            sig = np.sqrt(n0 * beta[0, j] * (1 - beta[0, j]))
            assert abs(k - beta[0, j] * n0) < 3 * sig
            assert abs(np.sum(s.pixels == j) - beta[0, j] * 2e5 * 2.0) < 3 * sig + 3 * np.sqrt(beta[0, j] * 4e5)

    def test_dead_time_formula(self):
        arr = ideal_array(1, dead_time=50e-9)
        r = 1e7
        s = simulate_classical(np.array([r]), arr, 0.05, 4)
        observed = len(s) / 0.05
        assert abs(observed / (r / (1 + r * 50e-9)) - 1) < 0.02

    def test_rejects_bad_rates(self):
        with pytest.raises(InvalidDimension):
            simulate_classical(np.ones(3), ideal_array(), 1.0)
        with pytest.raises(InvalidParameter):
            simulate_classical(-np.ones(7), ideal_array(), 1.0)


class TestStreamIO:
    def test_csv_round_trip(self, tmp_path):
        s = simulate_classical(np.full(7, 1e3), ideal_array(), 0.1, 1)
        s.to_csv(tmp_path / "s.csv")
        back = TimeTagStream.from_csv(tmp_path / "s.csv", 0.1, 7)
        np.testing.assert_array_equal(back.pixels, s.pixels)
        np.testing.assert_array_equal(back.timestamps, s.timestamps)
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "pixel_id,timestamp_ps"

    def test_binary_round_trip(self, tmp_path):
        s = simulate_classical(np.full(7, 1e3), ideal_array(), 0.1, 1)
        s.to_binary(tmp_path / "s.bin")
        assert (tmp_path / "s.bin").stat().st_size == 9 * len(s)
        back = TimeTagStream.from_binary(tmp_path / "s.bin", 0.1, 7)
        np.testing.assert_array_equal(back.timestamps, s.timestamps)
