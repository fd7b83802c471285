import math

import numpy as np
import pytest

from core.block_mode import BlockMode
from core.errors import InvalidDataError, ShapeMismatchError
from msfa.colorimetry import srgb_encode, xyz_weights
from msfa.evaluation import (
    DesignSpec,
    RgbImage,
    bandpass_msfa,
    bayer_cfa,
    compare_designs,
    evaluate_design,
    mask_by_threshold,
    mask_from_box,
    mean_spectrum,
    psnr,
    render_linear_srgb,
    render_msfa_colors,
    render_srgb,
    report_json,
    spectrum_rmse,
)
from msfa.mosaic import build_phi, expand_nine
from msfa.spectral_core import BlockShape, MsfaBlock, SpectralCube
from msfa.stats import empirical_autocorr
from msfa.synthetic import MAX_ABUNDANCE, abundance_fields, synth_hne, uniform_grid
from msfa.wiener import wiener_matrix
from utils.common.html_report_utils import generate_html_table

"""
Quality metrics, sRGB rendering, baseline filter arrays and design comparison.
"""


@pytest.mark.usefixtures("apply_scenario_metadata")
def test_psnr_values(scenario):
    ref = SpectralCube(np.full(scenario["shape"], scenario["reference"]), uniform_grid(500, 600, scenario["shape"][2]))
    test = ref.with_values(np.full(scenario["shape"], scenario["test"]), estimate=True)
    expected = scenario["expected_db"]
    value = psnr(ref, test)
    if expected == "inf":
        assert value == math.inf
    else:
        assert value == pytest.approx(expected, abs=1e-9)


def test_psnr_matches_loop(random_cube):
    a, b = random_cube(5, 3, 4), random_cube(5, 3, 4)
    total = 0.0
    for y in range(3):
        for x in range(5):
            for l in range(4):
                total += (a.values[y, x, l] - b.values[y, x, l]) ** 2
    mse = total / 60
    assert psnr(a, b) == pytest.approx(10 * math.log10(1 / mse), rel=1e-12)


def test_psnr_shape_mismatch(random_cube):
    with pytest.raises(ShapeMismatchError):
        psnr(random_cube(4, 4, 2), random_cube(4, 5, 2))


def test_unit_spectrum_renders_white(wavelengths16):
    white = render_srgb(SpectralCube(np.ones((2, 3, 16)), wavelengths16))
    black = render_srgb(SpectralCube(np.zeros((2, 3, 16)), wavelengths16))
    assert np.allclose(white.values, 1.0, atol=2e-3)
    assert np.array_equal(black.values, np.zeros((2, 3, 3)))


def test_xyz_weights_map_unit_spectrum_to_d65(wavelengths16):
    assert np.allclose(np.ones(16) @ xyz_weights(wavelengths16), [0.95047, 1.0, 1.08883], rtol=1e-12)
    with pytest.raises(InvalidDataError):
        xyz_weights(np.array([300.0, 400.0]))


def test_green_spike_renders_green(wavelengths16):
    values = np.zeros((1, 1, 16))
    values[0, 0, int(np.argmin(np.abs(wavelengths16 - 540.0)))] = 1.0
    r, g, b = render_linear_srgb(SpectralCube(values, wavelengths16))[0, 0]
    assert g > r and g > b


def test_srgb_transfer_curve():
    assert srgb_encode(np.array([0.0]))[0] == 0.0
    assert srgb_encode(np.array([1.0]))[0] == pytest.approx(1.0)
    assert srgb_encode(np.array([0.002]))[0] == pytest.approx(12.92 * 0.002)
    assert srgb_encode(np.array([0.5]))[0] == pytest.approx(1.055 * 0.5 ** (1 / 2.4) - 0.055)


def test_rgb_image_clamps_and_checks_shape():
    img = RgbImage(np.full((2, 2, 3), 1.5))
    assert img.values.max() == 1.0
    with pytest.raises(ShapeMismatchError):
        RgbImage(np.zeros((2, 2, 4)))


def test_mean_spectrum_and_masks(wavelengths16):
    values = np.zeros((4, 6, 16))
    values[1:3, 2:5, :] = 0.75
    cube = SpectralCube(values, wavelengths16)
    box = mask_from_box(6, 4, 2, 1, 5, 3)
    assert box.count == 6
    assert np.allclose(mean_spectrum(cube, box), 0.75)
    dark = mask_by_threshold(cube, 600.0, 0.1)
    assert dark.count == 24 - 6
    assert np.allclose(mean_spectrum(cube, dark), 0.0)
    assert spectrum_rmse(np.zeros(4), np.full(4, 0.5)) == pytest.approx(0.5)


def test_mean_spectrum_errors(wavelengths16):
    cube = SpectralCube(np.zeros((4, 4, 16)), wavelengths16)
    with pytest.raises(InvalidDataError):
        mean_spectrum(cube, mask_from_box(4, 4, 0, 0, 0, 0))
    with pytest.raises(ShapeMismatchError):
        mean_spectrum(cube, mask_from_box(5, 4, 0, 0, 2, 2))


def test_bandpass_msfa_centers(wavelengths16):
    msfa = bandpass_msfa(wavelengths16)
    assert msfa.sensitivities.shape == (16, 16)
    peaks = wavelengths16[np.argmax(msfa.sensitivities, axis=1)]
    assert np.array_equal(peaks, 420.0 + 20.0 * np.arange(16))
    assert np.array_equal(msfa.sensitivities.sum(axis=1), np.ones(16))


def test_bayer_layout(wavelengths16):
    cfa = bayer_cfa(wavelengths16)
    assert cfa.shape == BlockShape(2, 2)
    assert np.array_equal(cfa.sensitivities[1], cfa.sensitivities[2])
    peaks = wavelengths16[np.argmax(cfa.sensitivities, axis=1)]
    assert peaks[0] > peaks[1] > peaks[3]
    assert cfa.sensitivities.max() <= 1.0


def test_msfa_colors_image(wavelengths16):
    img = render_msfa_colors(bandpass_msfa(wavelengths16))
    assert (img.height, img.width) == (4, 4)


def test_evaluate_design_crops_and_reports(make_cube):
    cube = make_cube(18, 14, 16)
    block = BlockShape(4, 4)
    msfa = bandpass_msfa(cube.wavelengths, block)
    w = wiener_matrix(empirical_autocorr([cube], block, BlockMode.NINE_BLOCK), expand_nine(build_phi(msfa)))
    design = DesignSpec("bandpass-9block", msfa, w, "Bandpass + Wiener")
    result, estimate = evaluate_design(cube, design)
    assert estimate.values.shape == cube.values.shape
    assert result.strategy == "nine-block"
    assert result.psnr_msi_db > 0
    row = report_json([result])[0]
    assert set(row) == {"design_id", "psnr_msi_db", "psnr_rgb_db", "runtime_s"}
    assert [r.design_id for r in compare_designs(cube, [design])] == ["bandpass-9block"]


def test_identity_design_is_lossless():
    # one band with unit filters: the Wiener matrix inverts Phi exactly
    cube = SpectralCube(np.random.default_rng(3).uniform(0.1, 0.9, (8, 8, 1)), [550.0])
    block = BlockShape(2, 2)
    msfa = MsfaBlock(block, np.ones((4, 1)), cube.wavelengths)
    w = wiener_matrix(empirical_autocorr([cube], block, BlockMode.ONE_BLOCK), build_phi(msfa), ridge=0.0)
    result, _ = evaluate_design(cube, DesignSpec("identity", msfa, w))
    assert result.psnr_msi_db > 100


def test_html_report_highlights_best():
    rows = [
        {"Image": "a", "Design": "x", "PSNR MSI [dB]": "30.000", "PSNR RGB [dB]": "28.000"},
        {"Image": "a", "Design": "y", "PSNR MSI [dB]": "35.000", "PSNR RGB [dB]": "27.000"},
        {"Image": "b", "Design": "x", "PSNR MSI [dB]": "inf", "PSNR RGB [dB]": "20.000"},
    ]
    page = generate_html_table(rows, report_title="<cmp>")
    assert page.startswith("<!DOCTYPE html>")
    assert "&lt;cmp&gt;" in page
    assert page.count("class='best'") == 4
    assert "<td class='best'>35.000</td>" in page
    assert "<td class='best'>28.000</td>" in page
    assert "<td class='best'>inf</td>" in page


def test_synth_hne_is_seeded_and_valid():
    wavelengths = uniform_grid(420.0, 720.0, 31)
    first = synth_hne(40, 24, wavelengths, seed=3)
    assert first.values.shape == (24, 40, 31)
    assert np.array_equal(first.values, synth_hne(40, 24, wavelengths, seed=3).values)
    assert not np.array_equal(first.values, synth_hne(40, 24, wavelengths, seed=4).values)
    for seed in range(10):
        values = synth_hne(9, 7, wavelengths, seed=seed).values
        assert np.all(np.isfinite(values))
        assert values.min() > 0.0 and values.max() <= 1.0


def test_synth_hne_rejects_empty_size():
    with pytest.raises(InvalidDataError):
        synth_hne(0, 4, uniform_grid(420.0, 720.0, 4), seed=0)


def test_abundances_stay_bounded_on_small_images():
    for width, height in ((9, 7), (16, 16), (3, 2), (1, 1)):
        for seed in range(10):
            a_h, a_e = abundance_fields(width, height, seed)
            assert a_h.min() >= 0.0 and a_e.min() >= 0.0
            assert a_h.max() <= MAX_ABUNDANCE and a_e.max() <= MAX_ABUNDANCE


def test_psnr_is_symmetric_and_ignores_pixel_order(random_cube):
    a, b = random_cube(6, 5, 3), random_cube(6, 5, 3)
    assert psnr(a, b) == psnr(b, a)
    order = np.random.default_rng(8).permutation(30)

    def shuffled(cube):
        return cube.with_values(cube.values.reshape(30, 3)[order].reshape(5, 6, 3))

    assert psnr(shuffled(a), shuffled(b)) == pytest.approx(psnr(a, b), rel=1e-12)
    ra, rb = render_srgb(a), render_srgb(b)
    assert psnr(ra, rb) == psnr(rb, ra)


def test_dimming_never_brightens_any_channel(make_cube):
    cube = make_cube(12, 10, 16)
    linear, encoded = render_linear_srgb(cube), render_srgb(cube).values
    for alpha in (0.9, 0.5, 0.1):
        dimmed = cube.with_values(alpha * cube.values)
        assert np.all(render_linear_srgb(dimmed) <= linear + 1e-15)
        assert np.all(render_srgb(dimmed).values <= encoded + 1e-15)


def test_repeated_design_gives_identical_scores(make_cube):
    cube = make_cube(12, 12, 4)
    block = BlockShape(2, 2)
    msfa = bandpass_msfa(cube.wavelengths, block)
    w = wiener_matrix(empirical_autocorr([cube], block, BlockMode.NINE_BLOCK), expand_nine(build_phi(msfa)))
    design = DesignSpec("bandpass-9block", msfa, w)
    first, second = report_json(compare_designs(cube, [design, design]))
    # runtime_s is wall-clock; every other field is deterministic
    first.pop("runtime_s")
    second.pop("runtime_s")
    assert first == second
