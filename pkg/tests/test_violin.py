"""Tests for score distribution summaries and the SVG renderer."""
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from refscore.violin import (
    GRID_POINTS,
    ViolinGroup,
    ViolinSummary,
    emit_violin_svg,
    silverman_bandwidth,
    trapezoid_integral,
    violin_summary,
)


def quantile_oracle(data, p):
    """Linear interpolation between order statistics, 1-based h = (n-1)p + 1."""
    x = sorted(data)
    h = (len(x) - 1) * p
    lo = int(np.floor(h))
    hi = min(lo + 1, len(x) - 1)
    return x[lo] + (h - lo) * (x[hi] - x[lo])


class TestQuartiles:
    def test_four_point_example(self):
        scores = {f"a{i}": float(v) for i, v in enumerate((1, 2, 3, 4))}
        gold = {i: 2.0 for i in scores}
        summary = violin_summary(scores, gold)
        group = summary.groups[2]
        assert group.q1 == pytest.approx(1.75)
        assert group.median == pytest.approx(2.5)
        assert group.q3 == pytest.approx(3.25)
        assert group.low == 1.0 and group.high == 4.0

    def test_matches_order_statistic_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n = int(rng.integers(2, 40))
            data = rng.uniform(1, 4, n).tolist()
            scores = {f"a{i}": v for i, v in enumerate(data)}
            gold = {i: 3.0 for i in scores}
            group = violin_summary(scores, gold).groups[3]
            assert group.q1 == pytest.approx(quantile_oracle(data, 0.25), abs=1e-12)
            assert group.median == pytest.approx(quantile_oracle(data, 0.5), abs=1e-12)
            assert group.q3 == pytest.approx(quantile_oracle(data, 0.75), abs=1e-12)

    def test_constant_group_degenerates(self):
        scores = {"a": 3.0, "b": 3.0, "c": 3.0}
        gold = {i: 1.0 for i in scores}
        group = violin_summary(scores, gold).groups[1]
        assert group.median == 3.0
        assert group.low == 3.0 and group.high == 3.0
        assert group.density is None


class TestGrouping:
    def test_non_integer_gold_discarded_and_counted(self):
        scores = {"a": 2.0, "b": 2.5, "c": 3.0}
        gold = {"a": 2.0, "b": 2.5, "c": 3.0}
        summary = violin_summary(scores, gold)
        assert summary.discarded_non_integer == 1
        assert sorted(summary.groups) == [2, 3]

    def test_all_non_integer_rejected(self):
        scores = {"a": 2.0, "b": 3.0}
        gold = {"a": 2.4, "b": 3.6}
        with pytest.raises(ValueError, match="integer gold"):
            violin_summary(scores, gold)

    def test_counts_sum_to_kept_articles(self):
        rng = np.random.default_rng(1)
        scores = {f"a{i}": float(rng.uniform(1, 4)) for i in range(60)}
        gold = {i: float(rng.integers(1, 5)) for i in scores}
        summary = violin_summary(scores, gold)
        assert sum(g.count for g in summary.groups.values()) == 60
        assert summary.discarded_non_integer == 0

    def test_unscored_articles_ignored(self):
        scores = {"a": 2.0}
        gold = {"a": 2.0, "ghost": 3.0}
        summary = violin_summary(scores, gold)
        assert sum(g.count for g in summary.groups.values()) == 1

    def test_gold_outside_levels_discarded(self):
        # an exact-integer gold left outside 1..4 by clamping errors upstream
        scores = {"a": 2.0, "b": 2.0}
        gold = {"a": 2.0, "b": 5.0}
        with pytest.raises(ValueError):
            ViolinGroup(5, 1, 2.0, 2.0, 2.0, 2.0, 1.9, (), None)
        summary = violin_summary(scores, gold)
        assert summary.discarded_non_integer == 1


class TestDensity:
    def test_non_negative_and_unit_mass(self):
        rng = np.random.default_rng(2)
        data = rng.normal(2.5, 0.6, 80)
        scores = {f"a{i}": float(np.clip(v, 1, 4)) for i, v in enumerate(data)}
        gold = {i: 4.0 for i in scores}
        group = violin_summary(scores, gold).groups[4]
        density = np.array(group.density)
        grid = np.array(group.grid)
        assert len(density) == GRID_POINTS
        assert (density >= 0).all()
        assert trapezoid_integral(density, grid) == pytest.approx(1.0, abs=1e-9)

    def test_density_peaks_near_the_data(self):
        scores = {f"a{i}": 1.5 + 0.01 * i for i in range(20)}
        gold = {i: 2.0 for i in scores}
        group = violin_summary(scores, gold).groups[2]
        grid = np.array(group.grid)
        density = np.array(group.density)
        peak = grid[int(np.argmax(density))]
        assert 1.3 <= peak <= 1.9


class TestSilvermanBandwidth:
    def test_formula(self):
        rng = np.random.default_rng(3)
        x = rng.normal(0, 1, 50)
        sd = np.std(x, ddof=1)
        iqr = np.quantile(x, 0.75) - np.quantile(x, 0.25)
        expected = 0.9 * min(sd, iqr / 1.34) * 50 ** (-0.2)
        assert silverman_bandwidth(x) == pytest.approx(expected, abs=1e-12)

    def test_zero_iqr_falls_back_to_sd(self):
        # half the mass at each of two points: IQR is 0, sd is not
        x = np.array([1.0] * 70 + [4.0] * 10)
        assert np.quantile(x, 0.75) - np.quantile(x, 0.25) == 0.0
        sd = np.std(x, ddof=1)
        assert silverman_bandwidth(x) == pytest.approx(0.9 * sd * len(x) ** (-0.2))

    def test_constant_data_is_degenerate(self):
        assert silverman_bandwidth([2.0, 2.0, 2.0]) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            silverman_bandwidth([])


class TestTrapezoidIntegral:
    def test_linear_function_exact(self):
        x = np.linspace(0, 2, 21)
        assert trapezoid_integral(2 * x, x) == pytest.approx(4.0, abs=1e-12)

    def test_uneven_grid(self):
        x = np.array([0.0, 0.5, 2.0])
        y = np.array([1.0, 1.0, 1.0])
        assert trapezoid_integral(y, x) == pytest.approx(2.0)


class TestSvgRendering:
    def build_summary(self):
        rng = np.random.default_rng(4)
        scores = {}
        gold = {}
        for level in (1, 2, 3):
            for i in range(25):
                art = f"u{level}-{i}"
                scores[art] = float(np.clip(rng.normal(level, 0.5), 1, 4))
                gold[art] = float(level)
        # one constant group for the degenerate marker
        for i in range(5):
            scores[f"c{i}"] = 3.5
            gold[f"c{i}"] = 4.0
        return violin_summary(scores, gold)

    def test_well_formed_xml(self):
        svg = emit_violin_svg(self.build_summary())
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")

    def test_one_violin_per_level_plus_degenerate_marker(self):
        summary = self.build_summary()
        svg = emit_violin_svg(summary)
        root = ET.fromstring(svg)
        ns = {"s": "http://www.w3.org/2000/svg"}
        polygons = root.findall(".//s:polygon", ns)
        assert len(polygons) == 3
        labels = [t.text for t in root.findall(".//s:text", ns)]
        for level in (1, 2, 3, 4):
            assert any(f"{level}* (n=" in (t or "") for t in labels)

    def test_deterministic_bytes(self):
        summary = self.build_summary()
        assert emit_violin_svg(summary) == emit_violin_svg(summary)

    def test_title_is_escaped(self):
        summary = self.build_summary()
        svg = emit_violin_svg(summary, title='scores <&> "quoted"')
        root = ET.fromstring(svg)
        texts = [t.text for t in root.iter() if t.tag.endswith("text")]
        assert any(t == 'scores <&> "quoted"' for t in texts)

    def test_group_invariants_enforced(self):
        with pytest.raises(ValueError, match="order statistics"):
            ViolinGroup(2, 3, 2.0, 2.5, 2.4, 1.0, 4.0, (), None)
        with pytest.raises(ValueError, match="empty"):
            ViolinGroup(2, 0, 2.0, 2.0, 2.0, 2.0, 2.0, (), None)
        with pytest.raises(ValueError, match="non-negative"):
            ViolinGroup(2, 3, 2.0, 2.0, 2.0, 1.0, 4.0, (1.0, 2.0), (0.5, -0.1))
