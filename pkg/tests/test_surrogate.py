import numpy as np
import numpy.testing as npt
import pytest

from spikegrad.surrogate import (
    FAMILIES,
    KAPPA_FLOOR,
    SgConfig,
    adaptive_width,
    family_sg,
    rect_sg,
)


class TestRectangle:
    def test_center_height(self):
        assert rect_sg(0.5, 0.5, 1.0) == 1.0

    def test_boundary_excluded(self):
        # strict inequality at |v - v_th| == kappa/2
        assert rect_sg(1.0, 0.5, 1.0) == 0.0
        assert rect_sg(0.0, 0.5, 1.0) == 0.0

    def test_inside_window(self):
        assert rect_sg(0.3, 0.5, 1.0) == 1.0

    def test_height_scales_inverse_width(self):
        assert rect_sg(0.5, 0.5, 0.25) == 4.0

    def test_integrates_to_one(self):
        from scipy.integrate import quad
        for kappa in (0.3, 1.0, 2.7):
            edges = [0.5 - kappa / 2, 0.5 + kappa / 2]
            integral, err = quad(lambda v: float(rect_sg(v, 0.5, kappa)),
                                 -3.0, 4.0, points=edges, limit=200)
            assert err < 1e-8
            npt.assert_allclose(integral, 1.0, atol=1e-6)

    def test_nonpositive_kappa_rejected(self):
        with pytest.raises(ValueError):
            rect_sg(0.5, 0.5, 0.0)

    def test_support_monotone_in_kappa(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=1000)
        counts = [np.count_nonzero(rect_sg(v, 0.5, k)) for k in (0.2, 0.5, 1.0, 2.0, 5.0)]
        assert counts == sorted(counts)


class TestAdaptiveWidth:
    def test_standard_setup_first_step(self):
        # gamma_bar=1, v_th=0.5 recovers the standard unit width
        assert adaptive_width(0.2, 1.0, 0.5, 1) == 1.0

    def test_second_step_value(self):
        # 2*sqrt(1+0.04)*0.5 = sqrt(1.04)
        npt.assert_allclose(adaptive_width(0.2, 1.0, 0.5, 2), 1.019803902718557, atol=1e-12)
        npt.assert_allclose(adaptive_width(0.2, 1.0, 0.5, 2), 1.019804, atol=1e-6)

    def test_zero_decay_collapses_to_first_step(self):
        assert adaptive_width(0.0, 1.0, 0.5, 3) == adaptive_width(0.0, 1.0, 0.5, 1) == 1.0

    def test_monotone_in_tau_after_first_step(self):
        widths = [adaptive_width(tau, 1.0, 0.5, 2) for tau in np.linspace(0, 0.99, 20)]
        assert all(b >= a for a, b in zip(widths, widths[1:]))

    def test_linear_in_gamma_bar_and_threshold(self):
        base = adaptive_width(0.3, 1.0, 0.5, 2)
        npt.assert_allclose(adaptive_width(0.3, 2.0, 0.5, 2), 2 * base, rtol=1e-12)
        npt.assert_allclose(adaptive_width(0.3, 1.0, 1.0, 2), 2 * base, rtol=1e-12)

    def test_floor_clamps_degenerate_gamma(self):
        assert adaptive_width(0.2, 0.0, 0.5, 1) == KAPPA_FLOOR
        assert adaptive_width(0.2, -3.0, 0.5, 2) == KAPPA_FLOOR

    def test_timestep_must_be_positive(self):
        with pytest.raises(ValueError):
            adaptive_width(0.2, 1.0, 0.5, 0)


class TestFamilies:
    def test_peak_matched_at_threshold(self):
        for family in FAMILIES:
            for kappa in (0.5, 1.0, 2.0):
                npt.assert_allclose(family_sg(family, 0.5, 0.5, kappa), 1.0 / kappa,
                                    rtol=1e-12, err_msg=family)

    def test_triangle_support_edge(self):
        assert family_sg("triangular", 0.5 + 1.0, 0.5, 1.0) == 0.0
        assert family_sg("triangular", 0.5 - 1.0, 0.5, 1.0) == 0.0

    def test_sigmoid_value_at_one_width(self):
        # logistic derivative with temperature kappa/4 evaluated at d = kappa
        kappa = 1.3
        temp = kappa / 4.0
        s = 1.0 / (1.0 + np.exp(-kappa / temp))
        expected = s * (1 - s) / temp
        npt.assert_allclose(family_sg("sigmoid", 0.5 + kappa, 0.5, kappa), expected, rtol=1e-12)

    def test_atan_value_at_one_width(self):
        kappa = 0.8
        expected = (1 / kappa) / (1 + np.pi**2)
        npt.assert_allclose(family_sg("atan", 0.5 + kappa, 0.5, kappa), expected, rtol=1e-12)

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            family_sg("gaussian", 0.5, 0.5, 1.0)
        with pytest.raises(ValueError):
            SgConfig(family="gaussian")

    def test_families_symmetric_about_threshold(self):
        d = np.linspace(0.01, 2.0, 50)
        for family in FAMILIES:
            left = family_sg(family, 0.5 - d, 0.5, 1.1)
            right = family_sg(family, 0.5 + d, 0.5, 1.1)
            npt.assert_allclose(left, right, rtol=1e-12)


class TestSgConfig:
    def test_adaptive_recomputes_per_timestep(self):
        cfg = SgConfig(adaptive=True, kappa=123.0)  # fixed kappa ignored in adaptive mode
        assert cfg.width_at(0.2, 1.0, 0.5, 1) == 1.0
        assert cfg.width_at(0.2, 1.0, 0.5, 2) == pytest.approx(1.019803902718557)

    def test_fixed_mode_uses_kappa(self):
        cfg = SgConfig(adaptive=False, kappa=0.7)
        assert cfg.width_at(0.9, 5.0, 0.5, 2) == 0.7

    def test_width_responds_to_gamma_updates(self):
        cfg = SgConfig(adaptive=True)
        w1 = cfg.width_at(0.2, 1.0, 0.5, 2)
        w2 = cfg.width_at(0.2, 1.2, 0.5, 2)
        npt.assert_allclose(w2 / w1, 1.2, rtol=1e-12)
