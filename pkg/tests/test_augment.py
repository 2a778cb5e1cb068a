import numpy as np
import pytest

from lfdepth import (
    AngularIndexError,
    DataError,
    Direction,
    DisparityMap,
    LightField,
    STREAM_ORDER,
    extract_stacks,
    extract_view,
    to_gray,
)
from lfdepth import augment, synth
from lfdepth.augment import (
    AugmentationSpec,
    apply_augmentation,
    enumerate_product,
    flip_lf,
    invert_orientation,
    permuted_stacks,
    photometric,
    rotate_lf,
    roundtrip_residual,
    sample_photometric,
    scale_lf,
    stack_permutation,
    transpose_lf,
    view_shift,
)

H = Direction.HORIZONTAL
V = Direction.VERTICAL
LD = Direction.LEFT_DIAGONAL
RD = Direction.RIGHT_DIAGONAL

# expected stack rearrangements, worked out from the step-vector algebra
# and frozen here: rotation maps each new direction to (source, reversed)
ROT90_TABLE = {H: (V, True), V: (H, False), RD: (LD, True), LD: (RD, False)}
FLIP_TABLE = {H: (H, False), V: (V, True), RD: (LD, True), LD: (RD, True)}


def render_occluder(n=2, h=40, w=40, seed=5):
    scene = synth.preset_scene("occluder", h, w, seed=seed)
    return synth.render(scene, n, h, w)


def render_slant(n=2, h=36, w=36, seed=3):
    scene = synth.preset_scene("slant", h, w, seed=seed)
    return (scene,) + synth.render(scene, n, h, w)


class TestRoundtripInvariant:
    """The defining check: after any augmentation the light field still
    satisfies the generative model against its transformed gt."""

    def test_identity(self):
        lf, gt, occ = render_occluder()
        assert roundtrip_residual(lf, gt, exclude=occ) < 1e-6

    @pytest.mark.parametrize("angle", [90, 180, 270])
    def test_rotations(self, angle):
        lf, gt, occ = render_occluder()
        lf2, gt2 = rotate_lf(lf, gt, angle)
        occ2 = np.rot90(occ, k=-angle // 90)
        assert roundtrip_residual(lf2, gt2, exclude=occ2) < 1e-6

    def test_flip(self):
        lf, gt, occ = render_occluder()
        lf2, gt2 = flip_lf(lf, gt)
        assert roundtrip_residual(lf2, gt2, exclude=occ[:, ::-1]) < 1e-6

    def test_flip_negates_disparity(self):
        lf, gt, occ = render_occluder()
        _, gt2 = flip_lf(lf, gt)
        assert np.array_equal(gt2.data, -gt.data[:, ::-1])

    def test_transpose(self):
        lf, gt, occ = render_occluder()
        lf2, gt2 = transpose_lf(lf, gt)
        assert np.array_equal(gt2.data, gt.data.T)
        assert roundtrip_residual(lf2, gt2, exclude=occ.T) < 1e-6

    @pytest.mark.parametrize("factor,disp", [(2, 2.0), (3, 3.0)])
    def test_scale_integer_shift_exact(self, factor, disp):
        # d divisible by the factor: block averaging commutes with the
        # view shift, so the scaled field is exact under nearest sampling
        scene = synth.SceneSpec(
            [synth.Layer(synth.ValueNoise(cell=7.0, octaves=2), disp)], seed=8)
        lf, gt, occ = synth.render(scene, 2, 36, 36)
        lf2, gt2 = scale_lf(lf, gt, factor)
        assert lf2.height == 36 // factor
        assert gt2.data.max() == pytest.approx(disp / factor, abs=1e-6)
        assert roundtrip_residual(lf2, gt2, interp="nearest") < 1e-6

    def test_scale_smooth_texture_bilinear(self):
        # fractional scaled disparity on a low-frequency texture
        scene = synth.SceneSpec(
            [synth.Layer(synth.SineGrating(fx=0.03, fy=0.013), (-1.0, 2.0 / 35))],
            seed=8)
        lf, gt, occ = synth.render(scene, 2, 36, 36)
        lf2, gt2 = scale_lf(lf, gt, 2)
        assert roundtrip_residual(lf2, gt2, interp="bilinear") < 2e-2

    def test_scale_quarter_resolution_shape(self):
        # factor 4 is the far end of the documented scale range
        scene = synth.SceneSpec(
            [synth.Layer(synth.ValueNoise(cell=9.0, octaves=2), 0.0)], seed=3)
        lf, gt, occ = synth.render(scene, 2, 64, 64)
        lf2, gt2 = scale_lf(lf, gt, 4)
        assert (lf2.height, lf2.width) == (16, 16)
        assert lf2.angular_extent == lf.angular_extent
        assert np.all(gt2.data == 0.0)

    def test_view_shift_with_re_rendered_gt(self):
        scene = synth.SceneSpec(
            [synth.Layer(synth.SineGrating(fx=0.03, fy=0.02), (-1.0, 2.0 / 29))],
            seed=4)
        lf, gt, occ = synth.render(scene, 3, 30, 30)
        shifted_gt = synth.render_disparity(scene, 30, 30, u=1.0, v=-1.0)
        lf2, gt2 = view_shift(lf, gt, 1, -1, n_dst=2, shifted_gt=shifted_gt)
        assert lf2.angular_extent == 2
        # new center view is the old (1, -1) view
        assert np.array_equal(extract_view(lf2, 0, 0), extract_view(lf, 1, -1))
        assert roundtrip_residual(lf2, gt2, interp="bilinear") < 2e-2

    def test_view_shift_requires_gt(self):
        _, lf, gt, _ = render_slant(n=2)
        with pytest.raises(DataError):
            view_shift(lf, gt, 1, 0, n_dst=1, shifted_gt=None)

    def test_view_shift_bounds(self):
        _, lf, gt, _ = render_slant(n=2)
        with pytest.raises(AngularIndexError):
            view_shift(lf, gt, 2, 0, n_dst=1,
                       shifted_gt=DisparityMap(gt.data, disparity_range=None))


class TestStackPermutation:
    def test_rot90_table_frozen(self):
        assert stack_permutation(90, False) == ROT90_TABLE

    def test_flip_table_frozen(self):
        assert stack_permutation(0, True) == FLIP_TABLE

    def test_identity(self):
        assert stack_permutation(0, False) == {
            H: (H, False), V: (V, False), LD: (LD, False), RD: (RD, False)}

    def test_rot180_reverses_h_and_v(self):
        table = stack_permutation(180, False)
        assert table[H] == (H, True)
        assert table[V] == (V, True)

    @pytest.mark.parametrize("rotation", [0, 90, 180, 270])
    @pytest.mark.parametrize("flip", [False, True])
    def test_permuted_stacks_match_transformed_lightfield(self, rotation, flip):
        # permuting + reversing stacks of the original must equal
        # extracting stacks from the transformed light field
        lf, gt, occ = render_occluder(n=2, h=28, w=28)
        stacks = extract_stacks(lf)
        # library convention composes flip first, then rotation
        lf2, gt2 = lf, gt
        if flip:
            lf2, gt2 = flip_lf(lf2, gt2)
        if rotation:
            lf2, gt2 = rotate_lf(lf2, gt2, rotation)
        expected = extract_stacks(lf2)
        got = permuted_stacks(stacks, rotation, flip)
        for d in STREAM_ORDER:
            np.testing.assert_allclose(got[d].views, expected[d].views,
                                       atol=1e-12)

    @pytest.mark.parametrize("rotation", [0, 90, 180, 270])
    @pytest.mark.parametrize("flip", [False, True])
    def test_invert_orientation_roundtrip(self, rotation, flip, rng):
        pred = rng.normal(size=(12, 12))
        # forward-transform a prediction the way the scene transform
        # would: flip (mirror + sign) first, then rotate
        fwd = pred
        if flip:
            fwd = -fwd[:, ::-1]
        fwd = np.rot90(fwd, k=-rotation // 90)
        back = invert_orientation(fwd, rotation, flip)
        np.testing.assert_allclose(back, pred, atol=1e-12)


class TestEnumerateProduct:
    def test_product_count_288(self):
        specs = enumerate_product(4, 3)
        assert len(specs) == 288
        assert len(set(specs)) == 288  # distinct

    def test_nine_shifts(self):
        specs = enumerate_product(4, 3)
        shifts = {s.view_shift for s in specs}
        assert len(shifts) == 9
        assert all(max(abs(a), abs(b)) <= 1 for a, b in shifts)

    def test_components(self):
        specs = enumerate_product(4, 3)
        assert {s.rotation for s in specs} == {0, 90, 180, 270}
        assert {s.flip for s in specs} == {False, True}
        assert {s.scale for s in specs} == {1, 2, 3, 4}
        assert all(not s.transpose for s in specs)

    def test_no_shift_case(self):
        assert len(enumerate_product(3, 3)) == 32  # 1 * 4 * 2 * 4


class TestPhotometric:
    def test_gain_then_mix_then_gamma(self):
        data = np.full((3, 3, 2, 2, 3), 0.25)
        data[..., 1] = 0.5
        data[..., 2] = 0.75
        lf = LightField(data)
        out = photometric(lf, gain=1.6, gray_mix=0.5, gamma=1.1)
        px = np.array([0.25, 0.5, 0.75]) * 1.6
        luma = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
        mixed = 0.5 * px + 0.5 * luma
        expected = np.clip(mixed, 0.0, 1.0) ** 1.1
        np.testing.assert_allclose(out.data[0, 0, 0, 0], expected, atol=1e-7)

    def test_identity_params_no_change(self):
        _, lf, _, _ = render_slant(n=1, h=8, w=8)
        out = photometric(lf, 1.0, 0.0, 1.0)
        np.testing.assert_allclose(out.data, lf.data, atol=1e-12)

    def test_sample_photometric_in_ranges(self, rng):
        for _ in range(50):
            spec = sample_photometric(rng)
            assert 0.5 <= spec.color_gain <= 2.0
            assert 0.0 <= spec.gray_mix <= 1.0
            assert 0.8 <= spec.gamma <= 1.2

    def test_gray_mix_noop_on_grayscale(self):
        # mixing a gray image toward its own luma changes nothing
        _, lf, _, _ = render_slant(n=1, h=8, w=8)  # single channel
        out = photometric(lf, 1.0, 0.5, 1.0)
        np.testing.assert_allclose(out.data, lf.data, atol=1e-7)


class TestApplyAugmentation:
    def test_full_spec_pipeline(self):
        scene = synth.SceneSpec(
            [synth.Layer(synth.SineGrating(fx=0.025, fy=0.02), (-1.0, 2.0 / 31))],
            seed=6)
        lf, gt, occ = synth.render(scene, 2, 32, 32)
        # gain kept below 1/max(image) so clipping cannot kink the views
        spec = AugmentationSpec(rotation=90, flip=True, scale=2,
                                color_gain=0.9, gamma=1.1)
        lf2, gt2 = apply_augmentation(lf, gt, spec)
        assert lf2.height == 16
        assert roundtrip_residual(lf2, gt2, interp="bilinear") < 2e-2

    def test_spec_validation(self):
        with pytest.raises(DataError):
            AugmentationSpec(rotation=45)
        with pytest.raises(DataError):
            AugmentationSpec(scale=5)
        with pytest.raises(DataError):
            AugmentationSpec(view_shift=(1, 0))  # needs n_dst

    def test_rotation_requires_square(self):
        scene = synth.preset_scene("flat0", 8, 12)
        lf, gt, _ = synth.render(scene, 1, 8, 12)
        with pytest.raises(DataError):
            rotate_lf(lf, gt, 90)
        lf2, gt2 = rotate_lf(lf, gt, 180)  # 180 keeps the shape
        assert lf2.height == 8
