import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmfcircuit.errors import InvalidParameter, InvalidStream
from mmfcircuit.linalg import sylvester_operator
from mmfcircuit.quantum import PhotonPairSource, coincidence_distribution
from mmfcircuit.spad import PS, TimeTagStream, simulate_classical, simulate_pairs
from mmfcircuit.tagproc import CoincidenceRecord, count_coincidences, count_singles

from test_spad import ideal_array


def stream(pixels, times, duration=1.0, n_pix=4):
    return TimeTagStream(np.array(pixels), np.array(times), duration, n_pix)


class TestSingles:
    def test_empty(self):
        np.testing.assert_array_equal(count_singles(stream([], [])), 0)

    def test_rate(self):
        s = stream([5] * 100, np.arange(100) * 1000, 10.0, 8)
        assert count_singles(s)[5] == 10.0

    def test_dead_time_limited(self):
        arr = ideal_array(1, dead_time=50e-9)
        s = simulate_classical(np.array([5e6]), arr, 0.1, 3)
        assert abs(count_singles(s)[0] / (5e6 / (1 + 5e6 * 50e-9)) - 1) < 0.02


class TestCoincidences:
    def test_identical_times(self):
        rec = count_coincidences(stream([1, 2], [500, 500]))
        assert rec.C[1, 2] == 1 and rec.C[2, 1] == 1 and rec.C.sum() == 2

    def test_far_apart(self):
        rec = count_coincidences(stream([1, 2], [0, 10_000]), 1e-9)
        assert rec.C.sum() == 0

    def test_window_edge(self):
        assert count_coincidences(stream([0, 1], [0, 500]), 1e-9).C[0, 1] == 1
        assert count_coincidences(stream([0, 1], [0, 501]), 1e-9).C[0, 1] == 0

    def test_same_pixel_never_pairs(self):
        assert count_coincidences(stream([2, 2], [0, 1])).C.sum() == 0

    def test_each_event_pairs_once_per_pixel(self):
        rec = count_coincidences(stream([0, 1, 1], [0, 100, 200]))
        assert rec.C[0, 1] == 1

    def test_rejects_unsorted(self):
        with pytest.raises(InvalidStream):
            count_coincidences(stream([0, 1], [10, 5]))

    def test_rejects_bad_window(self):
        with pytest.raises(InvalidParameter):
            count_coincidences(stream([0], [0]), 0.0)

    def test_accidental_rate(self):
        rates = np.array([4e4, 6e4, 0, 0])
        arr = ideal_array(4)
        T = 5.0
        rec = count_coincidences(simulate_classical(rates, arr, T, 7), 2e-9)
        expected = 4e4 * 6e4 * 2e-9 * T
        assert abs(rec.C[0, 1] - expected) < 3 * np.sqrt(expected)

    def test_window_linearity(self):
        arr = ideal_array(4)
        s = simulate_classical(np.array([5e4, 5e4, 0, 0]), arr, 5.0, 8)
        c1 = count_coincidences(s, 1e-9).C[0, 1]
        c2 = count_coincidences(s, 2e-9).C[0, 1]
        assert abs(c2 - 2 * c1) < 3 * np.sqrt(2 * c1 + c2)

    @given(st.integers(0, 1000))
    def test_relabeling_symmetry(self, seed):
        r = np.random.default_rng(seed)
        t = np.sort(r.integers(0, 20_000, 60))
        p = r.integers(0, 5, 60)
        perm = r.permutation(5)
        a = count_coincidences(TimeTagStream(p, t, 1.0, 5), 1e-9)
        b = count_coincidences(TimeTagStream(perm[p], t, 1.0, 5), 1e-9)
        np.testing.assert_array_equal(b.C[np.ix_(perm, perm)], a.C)
        np.testing.assert_array_equal(b.n[perm], a.n)

    def test_end_to_end_distribution(self):
        d = coincidence_distribution(sylvester_operator(4), 0.3)
        arr = ideal_array(jitter_fwhm=120e-12)
        s = simulate_pairs(d, PhotonPairSource(pair_rate=5e3), arr, 2.0, 11)
        rec = count_coincidences(s, 1e-9)
        iu = np.triu_indices(4, 1)
        emp = rec.C[:4, :4][iu]
        th = d.probs[iu]
        n = emp.sum()
        tv = 0.5 * np.abs(emp / n - th / th.sum()).sum()
        assert tv < 3 * np.sqrt(len(th) / n)


class TestRecord:
    def test_requires_symmetry(self):
        with pytest.raises(InvalidParameter):
            CoincidenceRecord(np.ones(2), np.array([[0, 1], [2, 0]]), 1e-9, 1.0)

    def test_restrict(self):
        C = np.arange(16.0).reshape(4, 4)
        C = C + C.T
        rec = CoincidenceRecord(np.arange(4.0), C, 1e-9, 1.0).restrict([3, 1])
        np.testing.assert_array_equal(rec.n, [3, 1])
        assert rec.C[0, 1] == C[3, 1]

    def test_csv(self, tmp_path):
        rec = count_coincidences(stream([0, 1, 2], [0, 10, 20]))
        rec.to_csv(tmp_path / "c.csv")
        rec.singles_to_csv(tmp_path / "n.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "i,j,C_ij" and len(lines) == 1 + 6
        assert (tmp_path / "n.csv").read_text().splitlines()[0] == "i,rate_cps"
