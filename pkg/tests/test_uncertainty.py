import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vilod.projection import ProjectionPoint
from vilod.uncertainty import (
    NegativeWeight,
    ScoreOutOfRange,
    TooFewPoints,
    average_confidence,
    compute_heatmap,
    heatmap_to_csv,
    select_al_samples,
    uncertainty_weight,
)


class TestAverageConfidence:
    def test_empty_is_zero(self):
        assert average_confidence([]) == 0.0

    def test_singleton(self):
        assert average_confidence([0.5]) == 0.5

    def test_mean(self):
        assert average_confidence([0.9, 0.3, 0.6]) == pytest.approx(0.6)

    def test_out_of_range(self):
        with pytest.raises(ScoreOutOfRange):
            average_confidence([1.2])


class TestUncertaintyWeight:
    @pytest.mark.parametrize("conf,expected", [(1.0, 0.0), (0.0, 1.0), (0.5, 0.25)])
    def test_formula(self, conf, expected):
        assert uncertainty_weight(conf) == expected

    def test_strictly_decreasing(self):
        grid = np.linspace(0, 1, 101)
        weights = [uncertainty_weight(c) for c in grid]
        assert all(a > b for a, b in zip(weights, weights[1:]))
        assert weights[-1] == 0.0

    def test_out_of_range(self):
        with pytest.raises(ScoreOutOfRange):
            uncertainty_weight(-0.1)


def brute_force_selection(detections_map, exclude, budget):
    scored = [
        (sum(v) / len(v) if v else 0.0, k)
        for k, v in detections_map.items()
        if k not in exclude
    ]
    scored.sort()
    return [(k, s) for s, k in scored[:budget]]


class TestSelectAlSamples:
    def test_hand_traced_example(self):
        dm = {"a": [], "b": [0.2], "c": [0.9, 0.5]}
        picked = select_al_samples(dm, set(), budget=2)
        assert [(s.image_id, s.avg_conf) for s in picked] == [("a", 0.0), ("b", 0.2)]

    def test_exclude_shifts_selection(self):
        dm = {"a": [], "b": [0.2], "c": [0.9, 0.5]}
        picked = select_al_samples(dm, {"a"}, budget=2)
        assert [(s.image_id, s.avg_conf) for s in picked] == [("b", 0.2), ("c", 0.7)]

    def test_budget_covers_all(self):
        dm = {"a": [0.3], "b": [0.1]}
        picked = select_al_samples(dm, set(), budget=10)
        assert [s.image_id for s in picked] == ["b", "a"]

    def test_budget_zero(self):
        assert select_al_samples({"a": [0.1]}, set(), budget=0) == []

    @settings(max_examples=200)
    @given(
        dm=st.dictionaries(
            st.text(alphabet="abcdefgh", min_size=1, max_size=4),
            st.lists(st.floats(min_value=0, max_value=1, allow_nan=False), max_size=6),
            max_size=30,
        ),
        budget=st.integers(min_value=0, max_value=40),
        data=st.data(),
    )
    def test_matches_brute_force_oracle(self, dm, budget, data):
        exclude = set(data.draw(st.lists(st.sampled_from(sorted(dm) or ["-"]), max_size=5)))
        picked = select_al_samples(dm, exclude, budget)
        oracle = brute_force_selection(dm, exclude, budget)
        assert [(s.image_id, s.avg_conf) for s in picked] == [
            (k, pytest.approx(s)) for k, s in oracle
        ]

    def test_monotone_exclusion(self):
        rng = np.random.default_rng(0)
        dm = {f"i{i}": list(rng.uniform(0, 1, rng.integers(0, 4))) for i in range(30)}
        base = select_al_samples(dm, set(), budget=10)
        base_ids = [s.image_id for s in base]
        # excluding a non-selected id changes nothing
        not_selected = next(i for i in dm if i not in base_ids)
        same = select_al_samples(dm, {not_selected}, budget=10)
        assert [s.image_id for s in same] == base_ids
        # excluding a selected id removes it and appends the next candidate
        victim = base_ids[3]
        shifted = select_al_samples(dm, {victim}, budget=10)
        shifted_ids = [s.image_id for s in shifted]
        assert victim not in shifted_ids
        assert shifted_ids[:3] == base_ids[:3]
        assert shifted_ids[3:9] == base_ids[4:]

    def test_zero_detections_sort_first(self):
        dm = {"empty": [], "low": [0.01], "high": [0.99]}
        picked = select_al_samples(dm, set(), budget=3)
        assert picked[0].image_id == "empty"


def direct_kde(grid, xy, weights):
    """Independent double-sum oracle over the grid's stored bandwidth."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    H = grid.bandwidth
    H_inv = np.linalg.inv(H)
    norm = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(H)))
    xs, ys = grid.cell_centers()
    values = np.zeros((grid.nx, grid.ny))
    for ix in range(grid.nx):
        for iy in range(grid.ny):
            cell = np.array([xs[ix], ys[iy]])
            total = 0.0
            for point, weight in zip(xy, w):
                diff = cell - point
                total += weight * np.exp(-0.5 * diff @ H_inv @ diff)
            values[ix, iy] = total * norm
    return values


class TestHeatmap:
    def make_points(self, xy):
        return [ProjectionPoint(f"p{i}", float(x), float(y)) for i, (x, y) in enumerate(xy)]

    def test_argmax_at_cluster(self):
        rng = np.random.default_rng(1)
        xy = rng.normal([2.0, -1.0], 0.05, size=(30, 2))
        grid = compute_heatmap(self.make_points(xy), np.ones(30), nx=32, ny=32)
        ix, iy = np.unravel_index(np.argmax(grid.values), grid.values.shape)
        xs, ys = grid.cell_centers()
        assert abs(xs[ix] - 2.0) < 0.3
        assert abs(ys[iy] + 1.0) < 0.3

    def test_all_zero_weights_degenerate(self):
        xy = [(0.0, 0.0), (1.0, 1.0), (2.0, 0.5)]
        grid = compute_heatmap(self.make_points(xy), [0.0, 0.0, 0.0], nx=8, ny=8)
        assert grid.degenerate
        assert np.all(grid.values == 0)

    def test_matches_direct_double_sum(self):
        rng = np.random.default_rng(2)
        xy = rng.normal(0, 2, size=(50, 2))
        weights = rng.uniform(0.01, 1, size=50)
        grid = compute_heatmap(self.make_points(xy), weights, nx=16, ny=16)
        oracle = direct_kde(grid, xy, weights)
        assert np.allclose(grid.values, oracle, rtol=1e-9, atol=0)

    def test_integral_near_one(self):
        rng = np.random.default_rng(3)
        xy = rng.normal(0, 1, size=(200, 2))
        weights = rng.uniform(0.1, 1, size=200)
        grid = compute_heatmap(self.make_points(xy), weights, nx=64, ny=64)
        mass = grid.values.sum() * grid.cell_area()
        assert 0.90 <= mass <= 1.0

    def test_extent_padding(self):
        xy = [(0.0, 0.0), (10.0, 20.0)]
        grid = compute_heatmap(self.make_points(xy), [1.0, 1.0], nx=8, ny=8)
        assert grid.x_min == pytest.approx(-0.5)
        assert grid.x_max == pytest.approx(10.5)
        assert grid.y_min == pytest.approx(-1.0)
        assert grid.y_max == pytest.approx(21.0)
        assert grid.colormap_name == "Reds"

    def test_errors(self):
        points = self.make_points([(0, 0)])
        with pytest.raises(TooFewPoints):
            compute_heatmap(points, [1.0])
        points = self.make_points([(0, 0), (1, 1)])
        with pytest.raises(NegativeWeight):
            compute_heatmap(points, [1.0, -0.5])

    def test_csv_export_roundtrippable_header(self):
        xy = [(0.0, 0.0), (1.0, 1.0), (0.5, 0.2)]
        grid = compute_heatmap(self.make_points(xy), [1, 2, 3], nx=4, ny=4)
        text = heatmap_to_csv(grid)
        header, *rows = text.splitlines()
        assert header.startswith("#")
        assert "nx=4" in header and "colormap=Reds" in header
        assert len(rows) == 4
        assert all(len(r.split(",")) == 4 for r in rows)
