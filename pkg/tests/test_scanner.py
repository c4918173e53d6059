"""Tests for scene ray casting, the inverse-square amplitude law and frame rendering."""

import json
import math

import numpy as np
import pytest

from tofsim.config import setup_from_config
from tofsim.errors import SceneError
from tofsim.radiometry import PrecisionInput, predict_noise
from tofsim.scanner import (
    Primitive,
    RasterGrid,
    Scene,
    calibrate,
    error_report,
    frame_time,
    raycast,
    received_amplitude,
    render_frame,
)
from tofsim.simlab import demod_lines, simulate_measurement

AMBIGUITY_RANGE = 4.796679328
REFERENCE_POWER = 0.03
RNG_SEED_FRAME = 12
CYLINDER_MAX_ERROR = 14e-3
PREDICTED_NOISE_LIMIT = 4e-3


def plane_at(z, **kwargs):
    return Primitive("plane", (0.0, 0.0, z), **kwargs)


@pytest.fixture
def cal():
    """Calibration putting R = 0.4 V at 1.5 m for ρ = 0.95 and 30 mW."""
    return calibrate(0.4, 0.95, 1.5, REFERENCE_POWER)


class TestRaycast:
    """First-hit distances for each primitive type."""

    def test_plane_on_axis(self):
        """A plane 2 m ahead is hit at 2 m."""
        assert raycast(Scene([plane_at(2.0)]), (0.0, 0.0, 1.0)) == (pytest.approx(2.0), 0.95)

    def test_plane_oblique(self):
        """Off-axis rays travel 2/cos θ."""
        theta = math.radians(20)
        t, _ = raycast(Scene([plane_at(2.0)]), (math.sin(theta), 0.0, math.cos(theta)))
        assert t == pytest.approx(2.0 / math.cos(theta), rel=1e-12)

    def test_plane_behind_is_missed(self):
        """Rays never hit surfaces behind the origin."""
        assert raycast(Scene([plane_at(2.0)]), (0.0, 0.0, -1.0)) is None

    def test_sphere(self):
        """A unit sphere centered 5 m ahead is hit at 4 m."""
        sphere = Primitive("sphere", (0.0, 0.0, 5.0), (1.0,))
        assert raycast(Scene([sphere]), (0.0, 0.0, 1.0))[0] == pytest.approx(4.0)

    def test_occlusion(self):
        """The nearest surface wins."""
        scene = Scene([Primitive("sphere", (0.0, 0.0, 5.0), (1.0,)), plane_at(2.0, reflectivity=0.5)])
        assert raycast(scene, (0.0, 0.0, 1.0)) == (pytest.approx(2.0), 0.5)

    def test_cylinder_side(self):
        """A vertical 5 cm cylinder is hit on its front face."""
        cylinder = Primitive("cylinder", (0.0, 0.0, 1.93), (0.05, 0.5))
        assert raycast(Scene([cylinder]), (0.0, 0.0, 1.0))[0] == pytest.approx(1.88, rel=1e-9)

    def test_cylinder_cap(self):
        """Along its axis a cylinder is hit on the near cap."""
        cylinder = Primitive("cylinder", (0.0, 0.0, 3.0), (0.5, 1.0), axis=(0.0, 0.0, 1.0))
        assert raycast(Scene([cylinder]), (0.0, 0.0, 1.0))[0] == pytest.approx(2.5)

    def test_box(self):
        """A unit cube centered 3 m ahead is hit at 2.5 m."""
        box = Primitive("box", (0.0, 0.0, 3.0), (1.0, 1.0, 1.0))
        assert raycast(Scene([box]), (0.0, 0.0, 1.0))[0] == pytest.approx(2.5)

    def test_box_miss(self):
        """A ray passing beside the box misses it."""
        box = Primitive("box", (2.0, 0.0, 3.0), (1.0, 1.0, 1.0))
        assert raycast(Scene([box]), (0.0, 0.0, 1.0)) is None

    def test_non_unit_direction(self):
        """Directions must be unit vectors."""
        with pytest.raises(SceneError):
            raycast(Scene([plane_at(2.0)]), (0.0, 0.0, 2.0))

    def test_checker_changes_reflectivity_only(self):
        """A checkered plane keeps its geometry but alternates reflectivity."""
        plane = plane_at(2.0, checker_period=0.1, checker_reflectivity=0.2)
        grid = RasterGrid(32, 1, math.radians(30), math.radians(1))
        t, rho = Scene([plane]).intersect(grid.directions())
        np.testing.assert_allclose(t * grid.directions()[:, 2], 2.0)
        assert set(np.unique(rho)) == {0.2, 0.95}


class TestSceneLoading:
    """JSON scene descriptions."""

    def test_from_json(self, tmp_path):
        """Pose objects, bare positions and checker textures are accepted."""
        entries = [
            {"type": "plane", "pose": {"position": [0, 0, 4], "normal": [0, 0, -1]},
             "checker": {"period": 0.2, "reflectivity": 0.3}},
            {"type": "sphere", "pose": [0, 0, 2], "size": [0.3], "reflectivity": 0.8},
        ]
        path = tmp_path / "scene.json"
        path.write_text(json.dumps(entries), encoding="utf-8")
        scene = Scene.from_json(path)
        assert [p.type for p in scene.primitives] == ["plane", "sphere"]
        assert scene.primitives[1].position == (0.0, 0.0, 2.0)

    @pytest.mark.parametrize(
        "entries",
        [
            {"type": "plane"},
            [],
            [{"type": "torus", "pose": [0, 0, 1]}],
            [{"type": "sphere", "pose": [0, 0, 1]}],
            [{"type": "sphere", "pose": [0, 0, 1], "size": [-1]}],
            [{"type": "plane", "pose": [0, 0, 1], "colour": "red"}],
            [{"type": "plane", "pose": "origin"}],
            [{"type": "plane", "pose": [0, 0, 1], "checker": 0.1}],
            [{"type": "plane", "pose": [0, 0, 1], "reflectivity": 1.5}],
        ],
    )
    def test_invalid_entries(self, entries):
        """Malformed scenes raise SceneError."""
        with pytest.raises(SceneError):
            Scene.from_entries(entries)

    def test_invalid_json(self, tmp_path):
        """Unparseable files raise SceneError."""
        path = tmp_path / "broken.json"
        path.write_text("[{", encoding="utf-8")
        with pytest.raises(SceneError):
            Scene.from_json(path)


class TestRasterGrid:
    """Pixel ray directions."""

    def test_single_pixel_looks_ahead(self):
        """A 1x1 grid looks straight down +z."""
        np.testing.assert_allclose(RasterGrid(1, 1, 0.5, 0.5).directions(), [[0.0, 0.0, 1.0]], atol=1e-15)

    def test_unit_rays_row_major(self):
        """Rays are unit length, row 0 at the top (negative y), left to right."""
        grid = RasterGrid(4, 3, math.radians(40), math.radians(30))
        rays = grid.directions()
        assert rays.shape == (12, 3)
        np.testing.assert_allclose(np.linalg.norm(rays, axis=1), 1.0)
        assert rays[0, 0] < 0 and rays[0, 1] < 0
        assert rays[3, 0] > 0 and rays[-1, 1] > 0

    def test_invalid_grid(self):
        """Resolutions are positive and FoVs lie in (0, π)."""
        with pytest.raises(SceneError):
            RasterGrid(0, 10, 0.5, 0.5)
        with pytest.raises(SceneError):
            RasterGrid(10, 10, math.pi, 0.5)

    def test_qvga_frame_time(self):
        """320 x 240 pixels at 800 ns take 61.44 ms."""
        assert frame_time(RasterGrid(320, 240, 0.5, 0.5), 800e-9) == pytest.approx(0.06144)


class TestReceivedAmplitude:
    """Inverse-square law with reflectivity and saturation."""

    def test_calibration_point(self, cal):
        """The reference target returns the reference amplitude."""
        r, r_dc, saturated = received_amplitude(0.95, 1.5, REFERENCE_POWER, cal)
        assert r == pytest.approx(0.4)
        assert r_dc == pytest.approx(0.4 * 0.572 / 0.526)
        assert not saturated

    def test_inverse_square(self, cal):
        """Doubling the distance quarters R."""
        near = received_amplitude(0.95, 2.0, REFERENCE_POWER, cal)[0]
        far = received_amplitude(0.95, 4.0, REFERENCE_POWER, cal)[0]
        assert far == pytest.approx(near / 4)

    def test_reflectivity_ratio(self, cal):
        """R scales with ρ."""
        bright = received_amplitude(0.95, 2.0, REFERENCE_POWER, cal)[0]
        dark = received_amplitude(0.5, 2.0, REFERENCE_POWER, cal)[0]
        assert bright / dark == pytest.approx(1.9)

    def test_saturation(self, cal):
        """Close targets saturate and are clipped at half full scale."""
        r, r_dc, saturated = received_amplitude(0.95, 0.3, REFERENCE_POWER, cal)
        assert saturated
        assert r == 1.0 and r_dc == 1.0

    def test_array_inputs(self, cal):
        """Arrays are evaluated element-wise."""
        r, r_dc, saturated = received_amplitude(np.array([0.95, 0.95]), np.array([1.5, 3.0]), REFERENCE_POWER, cal)
        np.testing.assert_allclose(r, [0.4, 0.1])
        assert saturated.tolist() == [False, False]

    def test_zero_distance(self, cal):
        """Zero distance has no amplitude."""
        with pytest.raises(SceneError):
            received_amplitude(0.95, 0.0, REFERENCE_POWER, cal)

    def test_invalid_calibration(self):
        """Calibration quantities are positive."""
        with pytest.raises(SceneError):
            calibrate(0.4, 0.0, 1.5, REFERENCE_POWER)


class TestRenderFrame:
    """Depth and amplitude frames."""

    @pytest.fixture
    def plane_scene(self):
        """Flat wall 2 m ahead."""
        return Scene([plane_at(2.0)])

    def test_wrapped_distance(self, cfg):
        """A wall at 5 m reads 5 m minus the ambiguity range."""
        frame = render_frame(Scene([plane_at(5.0)]), RasterGrid(1, 1, 0.1, 0.1), 800e-9, noise=False, cfg=cfg)
        assert frame.depth[0, 0] == pytest.approx(5.0 - AMBIGUITY_RANGE, abs=1e-4)
        assert frame.amplitude[0, 0] > 0

    def test_frame_time_and_metadata(self, cfg, plane_scene):
        """Frame time is W·H·T_int and the metadata reports it."""
        grid = RasterGrid(8, 6, 0.5, 0.4)
        frame = render_frame(plane_scene, grid, 800e-9, noise=False, cfg=cfg)
        assert frame.frame_time == 8 * 6 * 800e-9
        metadata = frame.metadata()
        assert metadata["resolution"] == [8, 6]
        assert metadata["frame_time_s"] == frame.frame_time
        assert metadata["returned_pixels"] == 48

    def test_noiseless_matches_ground_truth(self, cfg):
        """Without noise every returned pixel matches the analytic depth."""
        scene = Scene([Primitive("sphere", (0.0, 0.0, 2.5), (0.5,)), plane_at(3.5)])
        grid = RasterGrid(16, 12, math.radians(40), math.radians(30))
        frame = render_frame(scene, grid, 800e-9, noise=False, cfg=cfg)
        report = error_report(frame, scene, grid)
        assert report.max < 1e-9
        assert report.missing == 0
        assert np.all((frame.depth >= 0) & (frame.depth < AMBIGUITY_RANGE))

    def test_misses(self, cfg):
        """Pixels without a return hold NaN depth and zero amplitude."""
        scene = Scene([Primitive("sphere", (0.0, 0.0, 3.0), (0.2,))])
        grid = RasterGrid(9, 9, math.radians(40), math.radians(40))
        frame = render_frame(scene, grid, 800e-9, noise=False, cfg=cfg)
        assert math.isnan(frame.depth[0, 0])
        assert frame.amplitude[0, 0] == 0.0
        assert np.isfinite(frame.depth[4, 4])

    def test_amplitude_falls_with_distance(self, cfg, plane_scene):
        """Across a wall, farther pixels return smaller amplitudes."""
        grid = RasterGrid(15, 1, math.radians(60), math.radians(1))
        frame = render_frame(plane_scene, grid, 800e-9, noise=False, cfg=cfg)
        truth, _ = plane_scene.intersect(grid.directions())
        order = np.argsort(truth)
        assert np.all(np.diff(frame.amplitude[0][order]) <= 1e-15)

    def test_noisy_frame_is_reproducible(self, cfg, plane_scene):
        """Same seed, same frame, whatever the thread count."""
        grid = RasterGrid(6, 4, 0.3, 0.2)
        first = render_frame(plane_scene, grid, 800e-9, seed=RNG_SEED_FRAME, cfg=cfg, threads=1)
        second = render_frame(plane_scene, grid, 800e-9, seed=RNG_SEED_FRAME, cfg=cfg, threads=4)
        np.testing.assert_array_equal(first.depth, second.depth)
        np.testing.assert_array_equal(first.amplitude, second.amplitude)

    def test_resolution_mismatch(self, cfg, plane_scene):
        """Error reports need the grid the frame was rendered on."""
        frame = render_frame(plane_scene, RasterGrid(4, 4, 0.3, 0.3), 800e-9, noise=False, cfg=cfg)
        with pytest.raises(SceneError):
            error_report(frame, plane_scene, RasterGrid(5, 4, 0.3, 0.3))

    @pytest.mark.slow
    def test_rms_error_scales_with_integration_time(self, cfg, plane_scene):
        """Doubling T_int divides the RMS depth error by √2."""
        grid = RasterGrid(40, 30, 0.3, 0.2)
        short = error_report(render_frame(plane_scene, grid, 800e-9, cfg=cfg, threads=4), plane_scene, grid)
        long = error_report(render_frame(plane_scene, grid, 1.6e-6, cfg=cfg, threads=4), plane_scene, grid)
        assert short.rms / long.rms == pytest.approx(math.sqrt(2), rel=0.15)

    def test_cylinder_front_precision(self, cfg):
        """The model predicts at most 4 mm on the cylinder front at 800 ns, which sizes the scan tolerance."""
        scene = Scene([Primitive("cylinder", (0.0, 0.0, 1.93), (0.05, 0.5))])
        distance, rho = raycast(scene, (0.0, 0.0, 1.0))
        assert distance == pytest.approx(1.88)
        scan = cfg["scanner"]
        power = cfg["laser"]["power"]
        cal = calibrate(scan["reference_amplitude"], scan["reference_reflectivity"], scan["reference_distance"], power)
        r, r_dc, saturated = received_amplitude(rho, distance, power, cal, scan["modulation_depth"])
        assert not saturated
        setup = setup_from_config(
            cfg, true_distance=distance, received_amplitude=float(r), received_offset=float(r_dc),
            integration_time=800e-9, noise=False,
        )
        centre = simulate_measurement(setup)
        m, m_dc = demod_lines(setup.demod)
        inputs = PrecisionInput(centre.amplitude, centre.offset, 800e-9, setup.modulation_frequency, m, m_dc)
        for coefficient in ("published", "sinusoidal"):
            predicted = predict_noise(inputs, setup.chain, coefficient)
            assert 1e-3 < predicted <= PREDICTED_NOISE_LIMIT

    @pytest.mark.slow
    def test_cylinder_scan(self, cfg):
        """A 5 cm cylinder at 1.88 m scanned at 200 x 200 stays under 14 mm of error."""
        scene = Scene([Primitive("cylinder", (0.0, 0.0, 1.93), (0.05, 0.5))])
        grid = RasterGrid(200, 200, 0.1, 0.1)
        frame = render_frame(scene, grid, 800e-9, seed=RNG_SEED_FRAME, cfg=cfg, threads=4)
        report = error_report(frame, scene, grid)
        assert report.missing == 0
        assert report.errors.size > 10_000
        assert report.max < CYLINDER_MAX_ERROR
