import numpy as np
import pytest

from demoaug.errors import ColorJitterRefused, ConfigError, InvalidPermutation
from demoaug.imageaug import (
    VisualAugConfig,
    channel_permute,
    check_color_ops_allowed,
    color_jitter,
    gaussian_blur,
    gaussian_kernel,
    hsv_to_rgb,
    proprio_noise,
    random_resized_crop,
    read_ppm,
    rgb_to_hsv,
    write_ppm,
)
from demoaug.render import rasterize_state
from demoaug.rng import derive_stream
from demoaug.sim import reset


@pytest.fixture(scope="module")
def fixture_image(request):
    task = request.getfixturevalue("stack_task")
    return rasterize_state(reset(task, 31), task, size=64)


def test_crop_identity_bit_exact(fixture_image):
    cfg = VisualAugConfig(crop_scale=(1.0, 1.0), output_hw=fixture_image.shape[:2])
    out = random_resized_crop(fixture_image, cfg, derive_stream(0, "crop"))
    assert np.array_equal(out, fixture_image)


def test_crop_output_shape_contract(fixture_image):
    cfg = VisualAugConfig(crop_scale=(0.5, 0.9), output_hw=(48, 40))
    out = random_resized_crop(fixture_image, cfg, derive_stream(1, "crop"))
    assert out.shape == (48, 40, 3)
    assert out.dtype == np.uint8


def test_crop_deterministic_under_seed(fixture_image):
    cfg = VisualAugConfig(crop_scale=(0.5, 0.9), output_hw=(32, 32))
    a = random_resized_crop(fixture_image, cfg, derive_stream(7, "crop"))
    b = random_resized_crop(fixture_image, cfg, derive_stream(7, "crop"))
    assert np.array_equal(a, b)


def test_jitter_identity_factors_bit_exact(fixture_image):
    cfg = VisualAugConfig(brightness=0.0, contrast=0.0, saturation=0.0, hue=0.0)
    out = color_jitter(fixture_image, cfg, derive_stream(2, "jit"))
    assert np.array_equal(out, fixture_image)


class _ForcedRng:
    """Deterministic stand-in handing out scripted jitter factors."""

    def __init__(self, b=1.0, c=1.0, s=1.0, h=0.0):
        self.values = [b, c, s, h]
        self.i = 0

    def uniform(self, lo, hi):
        v = self.values[self.i]
        self.i += 1
        return v


def test_jitter_brightness_zero_blacks_out(fixture_image):
    out = color_jitter(fixture_image, VisualAugConfig(brightness=1.0), _ForcedRng(b=0.0))
    assert np.all(out == 0)


def test_jitter_hue_full_turn_round_trips(fixture_image):
    out = color_jitter(fixture_image, VisualAugConfig(hue=2 * np.pi), _ForcedRng(h=2 * np.pi))
    diff = np.abs(out.astype(np.int16) - fixture_image.astype(np.int16))
    assert diff.max() <= 1


def test_hsv_round_trip():
    rng = np.random.default_rng(0)
    rgb = rng.random((17, 13, 3))
    back = hsv_to_rgb(rgb_to_hsv(rgb))
    assert np.allclose(back, rgb, atol=1e-12)


def test_channel_permute_definition():
    img = np.zeros((2, 2, 3), dtype=np.uint8)
    img[0, 0] = (10, 20, 30)
    out = channel_permute(img, (2, 0, 1))
    assert tuple(out[0, 0]) == (30, 10, 20)
    assert np.array_equal(channel_permute(img, (0, 1, 2)), img)


def test_channel_permute_inverse_round_trip(fixture_image):
    perm = (2, 0, 1)
    inverse = (1, 2, 0)
    out = channel_permute(channel_permute(fixture_image, perm), inverse)
    assert np.array_equal(out, fixture_image)


def test_channel_permute_invalid():
    img = np.zeros((2, 2, 3), dtype=np.uint8)
    with pytest.raises(InvalidPermutation):
        channel_permute(img, (0, 0, 1))


def test_blur_sigma_zero_identity(fixture_image):
    assert np.array_equal(gaussian_blur(fixture_image, 0.0), fixture_image)


def test_blur_kernel_normalized():
    for sigma in (0.4, 1.0, 2.7):
        k = gaussian_kernel(sigma)
        assert len(k) == 2 * int(np.ceil(3 * sigma)) + 1
        assert abs(k.sum() - 1.0) <= 1e-12


def test_blur_constant_image_unchanged():
    img = np.full((9, 9, 3), 137, dtype=np.uint8)
    assert np.array_equal(gaussian_blur(img, 1.3), img)


def test_blur_impulse_reproduces_kernel():
    sigma = 1.0
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    size = 4 * r + 1
    img = np.zeros((size, size, 3), dtype=np.uint8)
    img[size // 2, size // 2] = 255
    out = gaussian_blur(img, sigma).astype(np.float64)
    expected = np.zeros((size, size))
    expected[size // 2 - r : size // 2 + r + 1, size // 2 - r : size // 2 + r + 1] = np.outer(k, k) * 255
    assert np.max(np.abs(out[..., 0] - np.rint(expected))) <= 1.0


def test_proprio_noise_identity_at_zero(stack_demos):
    traj = stack_demos.trajectories[0]
    assert proprio_noise(traj, 0.0, derive_stream(0, "pn")) is traj


def test_proprio_noise_statistics(stack_demos):
    sigma = 0.01
    traj = stack_demos.trajectories[0]
    deltas = []
    rng = derive_stream(4, "pn")
    # accumulate >= 1e5 samples over repeated noisings
    reps = int(np.ceil(100_000 / (len(traj) * 3)))
    for _ in range(reps):
        noisy = proprio_noise(traj, sigma, rng)
        for ts_o, ts_n in zip(traj.timesteps, noisy.timesteps):
            deltas.append(ts_n.robots[0].eef_pose.position - ts_o.robots[0].eef_pose.position)
            # actions byte-identical, entities untouched
            assert ts_n.actions == ts_o.actions
            assert ts_n.entities == ts_o.entities
    deltas = np.concatenate(deltas)
    assert deltas.size >= 100_000
    assert abs(deltas.mean()) <= 3 * sigma / np.sqrt(deltas.size) * 3
    assert abs(deltas.std() - sigma) <= 0.02 * sigma


def test_proprio_noise_perturbs_orientation(stack_demos):
    traj = stack_demos.trajectories[0]
    noisy = proprio_noise(traj, 0.05, derive_stream(5, "pn"))
    qs = [ts.robots[0].eef_pose.orientation for ts in noisy.timesteps]
    assert all(abs(np.linalg.norm(q) - 1.0) <= 1e-9 for q in qs)
    assert any(
        not np.array_equal(a.robots[0].eef_pose.orientation, b.robots[0].eef_pose.orientation)
        for a, b in zip(traj.timesteps, noisy.timesteps)
    )


def test_color_sensitivity_guard():
    check_color_ops_allowed(False)
    check_color_ops_allowed(True, force=True)
    with pytest.raises(ColorJitterRefused):
        check_color_ops_allowed(True)


def test_visual_config_validation():
    with pytest.raises(ConfigError):
        VisualAugConfig(crop_scale=(0.0, 1.0))
    with pytest.raises(ConfigError):
        VisualAugConfig(crop_scale=(0.9, 0.5))
    with pytest.raises(ConfigError):
        VisualAugConfig(blur_sigma=(1.0, 0.5))


def test_ppm_round_trip(tmp_path, fixture_image):
    path = tmp_path / "img.ppm"
    write_ppm(path, fixture_image)
    back = read_ppm(path)
    assert np.array_equal(back, fixture_image)
    raw = path.read_bytes()
    assert raw.startswith(b"P6\n64 64\n255\n")
