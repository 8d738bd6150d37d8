import pytest
from hypothesis import given, settings, strategies as st

from capforge.tiler import assign_instances, plan_tiles, tile_image
from conftest import axis_rect, make_record, synth_image


def covers_exactly(windows, w, h):
    # brute force on a coarse grid plus exact corner accounting for speed:
    # every window inside the image, and a scanline union equals the area.
    for win in windows:
        assert 0 <= win.origin[0] and win.x_max <= w
        assert 0 <= win.origin[1] and win.y_max <= h
    xs = sorted({win.origin[0] for win in windows} | {win.x_max for win in windows} | {0, w})
    ys = sorted({win.origin[1] for win in windows} | {win.y_max for win in windows} | {0, h})
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
            assert any(
                win.origin[0] <= cx < win.x_max and win.origin[1] <= cy < win.y_max
                for win in windows
            ), f"uncovered cell around ({cx}, {cy})"


class TestPlanTiles:
    def test_exact_multiple_grid_only(self):
        windows = plan_tiles(2048, 2048)
        assert len(windows) == 4
        assert all(win.is_grid() for win in windows)
        assert {win.origin for win in windows} == {(0, 0), (1024, 0), (0, 1024), (1024, 1024)}

    def test_boundary_column(self):
        windows = plan_tiles(1500, 1024)
        assert [win.origin for win in windows] == [(0, 0), (476, 0)]
        grid = [win for win in windows if win.is_grid()]
        assert len(grid) == 1 and grid[0].origin == (0, 0)

    def test_small_image_passthrough(self):
        windows = plan_tiles(800, 600)
        assert len(windows) == 1
        assert windows[0].origin == (0, 0)
        assert windows[0].size == (800, 600)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            plan_tiles(0, 100)

    @given(w=st.integers(1, 4096), h=st.integers(1, 4096))
    @settings(max_examples=120)
    def test_coverage_and_grid_disjoint(self, w, h):
        windows = plan_tiles(w, h)
        covers_exactly(windows, w, h)
        grid = [win for win in windows if win.is_grid()]
        for i, a in enumerate(grid):
            for b in grid[i + 1 :]:
                overlap_w = min(a.x_max, b.x_max) - max(a.origin[0], b.origin[0])
                overlap_h = min(a.y_max, b.y_max) - max(a.origin[1], b.origin[1])
                assert overlap_w <= 0 or overlap_h <= 0


class TestAssignInstances:
    def test_instance_remapped_into_tile(self):
        windows = plan_tiles(2048, 2048, parent="big.png")
        rec = make_record(
            image_ref="big.png", image_w=2048, image_h=2048, obb=axis_rect(1100, 50, 1200, 120)
        )
        plan = assign_instances(windows, [rec])
        assert len(plan.windows) == 1
        win = plan.windows[0]
        assert win.origin == (1024, 0)
        [local] = plan.assignments[win]
        assert local.obb.corners[0] == (76, 50)
        assert local.image_ref == "big_1024_0.png"
        assert local.image_w == 1024

    def test_straddler_caught_by_boundary_tile(self):
        windows = plan_tiles(1500, 1024)
        rec = make_record(image_w=1500, image_h=1024, obb=axis_rect(1000, 200, 1100, 320))
        plan = assign_instances(windows, [rec])
        assert len(plan.windows) == 1
        assert plan.windows[0].origin == (476, 0)
        assert plan.partial_instances == 0

    def test_empty_windows_dropped(self):
        windows = plan_tiles(2048, 2048)
        rec = make_record(image_w=2048, image_h=2048, obb=axis_rect(10, 10, 80, 60))
        plan = assign_instances(windows, [rec])
        assert len(plan.windows) == 1
        assert plan.dropped_windows == 3

    def test_partial_instance_counted(self):
        # straddles the x=1024 grid edge of an exact-multiple image: no
        # boundary tile exists to catch it
        windows = plan_tiles(2048, 2048)
        rec = make_record(image_w=2048, image_h=2048, obb=axis_rect(1000, 10, 1100, 60))
        plan = assign_instances(windows, [rec])
        assert plan.partial_instances == 1
        assert plan.windows == []

    def test_duplicate_across_overlapping_tiles(self):
        windows = plan_tiles(1500, 1024)
        rec = make_record(image_w=1500, image_h=1024, obb=axis_rect(500, 100, 600, 200))
        plan = assign_instances(windows, [rec])
        assert len(plan.windows) == 2  # both the grid and boundary tile contain it
        deduped = assign_instances(windows, [rec], dedupe=True)
        assert len(deduped.windows) == 1

    def test_remap_round_trip_exact(self):
        windows = plan_tiles(3000, 3000)
        rec = make_record(image_w=3000, image_h=3000, obb=axis_rect(2100, 2200, 2150, 2260))
        plan = assign_instances(windows, [rec])
        for win in plan.windows:
            for local in plan.assignments[win]:
                restored = [
                    (x + win.origin[0], y + win.origin[1]) for x, y in local.obb.corners
                ]
                assert tuple(restored) == rec.obb.corners


class TestTileCrops:
    def test_crop_files_written_with_naming(self, tmp_path):
        img_path = tmp_path / "scene.png"
        synth_image(1500, 900, seed=2).save(img_path)
        rec = make_record(
            image_ref="scene.png", image_w=1500, image_h=900, obb=axis_rect(30, 40, 120, 100)
        )
        plan = tile_image(img_path, [rec], out_dir=tmp_path / "tiles")
        files = sorted(p.name for p in (tmp_path / "tiles").glob("*.png"))
        assert files == ["scene_0_0.png"]

    def test_crop_pixels_match_source(self, tmp_path):
        img = synth_image(1200, 1100, seed=4)
        img_path = tmp_path / "s.png"
        img.save(img_path)
        rec = make_record(
            image_ref="s.png", image_w=1200, image_h=1100, obb=axis_rect(200, 90, 300, 150)
        )
        plan = tile_image(img_path, [rec], out_dir=tmp_path / "tiles")
        win = plan.windows[0]
        import numpy as np
        from PIL import Image

        with Image.open(tmp_path / "tiles" / win.tile_name("s")) as tile:
            assert tile.size == win.size
            expected = img.crop((win.origin[0], win.origin[1], win.x_max, win.y_max))
            assert np.array_equal(np.asarray(tile), np.asarray(expected))
