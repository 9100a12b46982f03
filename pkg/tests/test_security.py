import numpy as np
import pytest

from vqstego.security import (SecurityReport, _merge_rare, _plugin_kl,
                              _two_sample_chi2, run_security_test)

# The full-strength battery (n = 5000, pooled/KS/copy-index thresholds) runs
# in the acceptance suite; these are fast structural checks at small n.


class TestStatistics:
    def test_merge_rare_pools_small_columns(self):
        table = np.array([[100, 3, 2, 50], [90, 1, 0, 60]])
        merged = _merge_rare(table)
        # columns 1 and 2 (totals 4 and 2) pool into one category
        assert merged.shape == (2, 3)
        assert merged.sum() == table.sum()
        assert merged[:, -1].tolist() == [5, 1]

    def test_chi2_identical_counts_not_rejected(self):
        counts = np.array([40, 60, 80, 20])
        chi2, p = _two_sample_chi2(counts, counts)
        assert chi2 == pytest.approx(0.0, abs=1e-12)
        assert p == pytest.approx(1.0)

    def test_chi2_disjoint_counts_rejected(self):
        a = np.array([200, 0, 0, 0])
        b = np.array([0, 200, 0, 0])
        _, p = _two_sample_chi2(a, b)
        assert p < 1e-10

    def test_plugin_kl_zero_for_identical(self):
        counts = np.array([50, 150, 300])
        kl, stderr = _plugin_kl(counts, counts)
        assert kl == pytest.approx(0.0, abs=1e-12)
        assert stderr >= 0.0

    def test_plugin_kl_positive_for_shifted(self):
        kl, _ = _plugin_kl(np.array([400, 100]), np.array([100, 400]))
        assert kl > 0.5


class TestBattery:
    def test_rejects_unknown_variant(self, cfg):
        with pytest.raises(ValueError):
            run_security_test(cfg, 10, "bogus")

    def test_cover_null_control(self, cfg):
        report = run_security_test(cfg, 150, "cover")
        assert report.variant == "cover"
        assert report.copy_index_p is None
        assert report.pooled_p > 0.001
        assert len(report.position_p_values) == cfg.security_positions

    def test_stego_report_structure(self, cfg):
        report = run_security_test(cfg, 150, "stego")
        assert report.pooled_p > 0.001
        assert report.copy_index_p is not None
        assert report.copy_index_p > 1e-6
        assert 0.0 <= report.combined_p <= 1.0
        d = report.to_dict()
        assert d["combined_p"] == report.combined_p

    def test_biased_embedder_caught_by_copy_statistic(self, cfg):
        # always choosing copy index 0 reproduces the cover law exactly, so
        # frequency statistics stay quiet while the keyed statistic collapses
        report = run_security_test(cfg, 150, "biased")
        assert report.pooled_p > 0.001
        assert report.copy_index_p < 1e-6
        assert report.combined_p < 1e-6
