from statistics import NormalDist

import numpy as np
import pytest

from unimodal_ordinal import data as D
from unimodal_ordinal.errors import (
    HeaderError,
    LabelRangeError,
    MalformedRowError,
    RaggedRowError,
)


class TestSynthetic:
    def test_deterministic_threshold(self):
        ds = D.generate_synthetic(D.SyntheticSpec(n_samples=500, n_features=1, num_classes=2, noise_std=0.0, seed=3, thresholds=[0.0]))
        np.testing.assert_array_equal(D.projection_direction(1, 3), [1.0])
        np.testing.assert_array_equal(ds.labels, (ds.features[:, 0] > 0).astype(int))

    def test_same_seed_same_data(self):
        a = D.generate_synthetic(D.SyntheticSpec(seed=11))
        b = D.generate_synthetic(D.SyntheticSpec(seed=11))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_quartile_proportions(self):
        n = 10_000
        t = [-0.6745, 0.6745]
        ds = D.generate_synthetic(D.SyntheticSpec(n_samples=n, n_features=3, num_classes=3, noise_std=0.0, seed=5, thresholds=t))
        cdf = NormalDist().cdf
        expected = np.array([cdf(t[0]), cdf(t[1]) - cdf(t[0]), 1 - cdf(t[1])])
        se = np.sqrt(expected * (1 - expected) / n)
        assert np.all(np.abs(ds.class_counts() / n - expected) < 3 * se)

    def test_default_marginals_equal_mass(self):
        n = 10_000
        ds = D.generate_synthetic(D.SyntheticSpec(n_samples=n, num_classes=5, noise_std=0.5, seed=2))
        se = np.sqrt(0.2 * 0.8 / n)
        assert np.all(np.abs(ds.class_counts() / n - 0.2) < 3 * se)

    def test_label_monotone_in_latent(self):
        ds = D.generate_synthetic(D.SyntheticSpec(n_samples=2000, n_features=4, noise_std=0.0, seed=9))
        z = ds.features @ D.projection_direction(4, 9)
        order = np.argsort(z)
        assert np.all(np.diff(ds.labels[order]) >= 0)

    def test_unit_direction(self):
        assert np.linalg.norm(D.projection_direction(7, 1)) == pytest.approx(1.0)

    def test_bad_thresholds(self):
        with pytest.raises(ValueError):
            D.SyntheticSpec(num_classes=3, thresholds=[1.0, 0.0])


class TestCSV:
    def test_one_row(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("f0,label\n0.5,2\n")
        ds = D.load_csv(p)
        assert (len(ds), ds.num_features, ds.num_classes) == (1, 1, 3)

    def test_round_trip(self, tmp_path, rng):
        ds = D.OrdinalDataset(rng.normal(size=(50, 3)) * 10 ** rng.uniform(-5, 5, size=(50, 3)), rng.integers(4, size=50), 4)
        D.save_csv(ds, tmp_path / "a.csv")
        back = D.load_csv(tmp_path / "a.csv", 4)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert np.max(np.abs(back.features - ds.features)) <= 1e-12
        np.testing.assert_array_equal(back.features, ds.features)  # 17 digits round-trip exactly

    def test_k_override(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("f0,label\n0.5,1\n")
        assert D.load_csv(p, 5).num_classes == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            D.load_csv(tmp_path / "nope.csv")

    def test_negative_label_names_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("f0,label\n0.5,-1\n")
        with pytest.raises(LabelRangeError, match="line 2"):
            D.load_csv(p)

    def test_label_above_k(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("f0,label\n0.5,1\n0.1,7\n")
        with pytest.raises(LabelRangeError, match="line 3"):
            D.load_csv(p, 4)

    def test_malformed(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("f0,label\n0.5,1\nabc,2\n")
        with pytest.raises(MalformedRowError, match="line 3"):
            D.load_csv(p)

    def test_ragged(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("f0,f1,label\n0.5,1,0\n0.5,1\n")
        with pytest.raises(RaggedRowError, match="line 3"):
            D.load_csv(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x,y\n0.5,1\n")
        with pytest.raises(HeaderError):
            D.load_csv(p)


class TestSplit:
    def _ds(self, n=10):
        return D.OrdinalDataset(np.arange(n, dtype=float)[:, None], np.arange(n) % 3, 3)

    def test_sizes(self):
        tr, va = D.split(self._ds(), 0.1, 0)
        assert (len(tr), len(va)) == (9, 1)

    def test_deterministic(self):
        a = D.split(self._ds(50), 0.2, 4)
        b = D.split(self._ds(50), 0.2, 4)
        np.testing.assert_array_equal(a[1].features, b[1].features)

    def test_partition(self):
        ds = self._ds(37)
        tr, va = D.split(ds, 0.3, 1)
        assert sorted(np.concatenate([tr.features[:, 0], va.features[:, 0]])) == sorted(ds.features[:, 0])
        assert sorted(np.concatenate([tr.labels, va.labels])) == sorted(ds.labels)

    @pytest.mark.parametrize("frac", [0.01, 0.99, 0.0, 1.0])
    def test_empty_part(self, frac):
        with pytest.raises(ValueError):
            D.split(self._ds(10), frac, 0)
