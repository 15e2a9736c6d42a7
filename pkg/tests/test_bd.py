import math
import warnings

import numpy as np
import pytest

from pacebench.bd import (
    BdResult,
    CommonRange,
    bd_quality,
    bd_rate,
    common_range,
    interpolate,
    prune_monotone,
)
from pacebench.curves import RateQualityCurve
from pacebench.errors import (
    DegenerateCurveError,
    ExtrapolationError,
    NoOverlapError,
    PruningWarning,
)


def make_curve(rates, qualities, label=""):
    return RateQualityCurve(tuple(zip(rates, qualities)), label=label)


def synthetic_curve(n=8, lo_q=30.0, hi_q=65.0, base_rate=800.0, label="synth"):
    qs = np.linspace(lo_q, hi_q, n)
    rs = base_rate * np.exp((qs - lo_q) / 12.0)
    return make_curve(rs, qs, label)


# Independent oracle: dense trapezoid integration over the same interpolant
# (the package's interpolate()), never the package's Simpson machinery.

def trapezoid_bd_rate(test, ref, method, panels=10**6):
    t, r = prune_monotone(test), prune_monotone(ref)
    span = common_range(t, r, "quality")
    qs = np.linspace(span.lo, span.hi, panels + 1)
    rate_t = interpolate(t, "quality", qs)
    rate_r = interpolate(r, "quality", qs)
    if method == "paper_area":
        area_t = np.trapezoid(rate_t, qs)
        area_r = np.trapezoid(rate_r, qs)
        return 100.0 * (area_t - area_r) / area_r
    mean_delta = np.trapezoid(np.log10(rate_t) - np.log10(rate_r), qs) / (span.hi - span.lo)
    return 100.0 * (10.0 ** mean_delta - 1.0)


def trapezoid_bd_quality(test, ref, rate_domain, panels=10**6):
    t, r = prune_monotone(test), prune_monotone(ref)
    span = common_range(t, r, "rate")
    if rate_domain == "linear":
        xs = np.linspace(span.lo, span.hi, panels + 1)
        rates = xs
    else:
        xs = np.linspace(math.log10(span.lo), math.log10(span.hi), panels + 1)
        rates = np.clip(10.0 ** xs, span.lo, span.hi)
    delta = interpolate(t, "rate", rates) - interpolate(r, "rate", rates)
    return np.trapezoid(delta, xs) / (xs[-1] - xs[0])


class TestPruneMonotone:
    def test_dominated_point_dropped(self):
        curve = make_curve([1, 2, 3, 4], [10, 20, 15, 25])
        with pytest.warns(PruningWarning):
            pruned = prune_monotone(curve)
        assert pruned.points == ((1.0, 10.0), (2.0, 20.0), (4.0, 25.0))

    def test_strictly_increasing_unchanged(self):
        curve = make_curve([1, 2, 3], [10, 20, 30])
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert prune_monotone(curve).points == curve.points

    def test_degenerate(self):
        with pytest.warns(PruningWarning):
            with pytest.raises(DegenerateCurveError):
                prune_monotone(make_curve([1, 2], [20, 10]))

    def test_idempotent(self):
        curve = make_curve([1, 2, 3, 4, 5], [10, 8, 20, 19, 25])
        with pytest.warns(PruningWarning):
            once = prune_monotone(curve)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert prune_monotone(once) == once


class TestCommonRange:
    def test_quality_worked_example(self):
        a = make_curve([2160, 9925], [27, 61])
        b = make_curve([810, 10000], [6, 55])
        span = common_range(a, b, "quality")
        assert (span.lo, span.hi) == (27.0, 55.0)

    def test_rate_worked_example(self):
        a = make_curve([2160, 9925], [27, 61])
        b = make_curve([810, 10000], [6, 55])
        span = common_range(a, b, "rate")
        assert (span.lo, span.hi) == (2160.0, 9925.0)

    def test_disjoint(self):
        a = make_curve([1, 2], [0, 1])
        b = make_curve([1, 2], [2, 3])
        with pytest.raises(NoOverlapError):
            common_range(a, b, "quality")

    def test_invariant(self):
        with pytest.raises(NoOverlapError):
            CommonRange(5.0, 5.0, "rate")


class TestInterpolate:
    def test_two_point_log_rate_midpoint(self):
        curve = make_curve([1000, 2000], [50, 70])
        value = interpolate(curve, "quality", 60.0)
        assert 1000 < value < 2000
        assert value == pytest.approx(10 ** ((math.log10(1000) + math.log10(2000)) / 2), rel=1e-12)

    def test_exact_at_knots(self):
        curve = synthetic_curve()
        for rate, quality in curve.points:
            assert interpolate(curve, "quality", quality) == pytest.approx(rate, rel=1e-9)
            assert interpolate(curve, "rate", rate) == pytest.approx(quality, rel=1e-9)

    def test_output_within_bracketing_knots(self):
        curve = synthetic_curve()
        points = curve.points
        for (r0, q0), (r1, q1) in zip(points, points[1:]):
            mid_quality = (q0 + q1) / 2
            rate = interpolate(curve, "quality", mid_quality)
            assert r0 <= rate <= r1

    def test_dense_monotonicity(self):
        curve = make_curve([1000, 1500, 3000, 8000], [30, 42, 55, 70])
        probes = np.linspace(30, 70, 1000)
        rates = interpolate(curve, "quality", probes)
        assert (np.diff(rates) >= 0).all()
        probes_r = np.linspace(1000, 8000, 1000)
        qualities = interpolate(curve, "rate", probes_r)
        assert (np.diff(qualities) >= 0).all()

    def test_extrapolation_refused(self):
        curve = synthetic_curve()
        with pytest.raises(ExtrapolationError):
            interpolate(curve, "quality", curve.quality_range[1] + 1)
        with pytest.raises(ExtrapolationError):
            interpolate(curve, "rate", curve.rate_range[0] - 1)

    def test_non_monotone_curve_rejected(self):
        curve = make_curve([1, 2, 3], [10, 20, 15])
        with pytest.raises(DegenerateCurveError, match="prune"):
            interpolate(curve, "quality", 12)


class TestBdRate:
    def test_self_delta_zero(self):
        curve = synthetic_curve()
        assert abs(bd_rate(curve, curve, "paper_area").value) < 1e-9
        assert abs(bd_rate(curve, curve, "log_domain").value) < 1e-9

    @pytest.mark.parametrize("method", ["paper_area", "log_domain"])
    def test_constant_ratio_closed_form(self, method):
        ref = synthetic_curve(label="ref")
        test = make_curve([0.8 * r for r in ref.rates], ref.qualities, "test")
        result = bd_rate(test, ref, method)
        assert result.value == pytest.approx(-20.0, abs=1e-6)
        assert result.kind == "bd_rate_percent"
        assert result.method == method
        assert result.points_used == (8, 8)

    @pytest.mark.parametrize("method", ["paper_area", "log_domain"])
    def test_matches_dense_trapezoid_oracle(self, method):
        ref = synthetic_curve(label="ref")
        test = make_curve(
            [r * (0.7 + 0.05 * i) for i, r in enumerate(ref.rates)],
            [q + 1.5 for q in ref.qualities],
            "test",
        )
        ours = bd_rate(test, ref, method).value
        oracle = trapezoid_bd_rate(test, ref, method)
        assert ours == pytest.approx(oracle, abs=1e-6)

    def test_no_overlap_propagates(self):
        a = make_curve([100, 200], [10, 20])
        b = make_curve([100, 200], [30, 40])
        with pytest.raises(NoOverlapError):
            bd_rate(a, b)

    def test_degenerate_propagates(self):
        good = synthetic_curve()
        bad = make_curve([1, 2], [20, 10])
        with pytest.warns(PruningWarning):
            with pytest.raises(DegenerateCurveError):
                bd_rate(bad, good)

    def test_unknown_method(self):
        curve = synthetic_curve()
        with pytest.raises(ValueError):
            bd_rate(curve, curve, "quartic-fit")

    def test_common_range_attached(self):
        ref = synthetic_curve(lo_q=30, hi_q=65)
        test = synthetic_curve(lo_q=35, hi_q=70)
        result = bd_rate(test, ref)
        assert result.common_range.axis == "quality"
        assert (result.common_range.lo, result.common_range.hi) == (35.0, 65.0)


class TestBdQuality:
    def test_self_delta_zero(self):
        curve = synthetic_curve()
        assert abs(bd_quality(curve, curve, "linear").value) < 1e-9
        assert abs(bd_quality(curve, curve, "log").value) < 1e-9

    @pytest.mark.parametrize("rate_domain", ["linear", "log"])
    def test_constant_offset_closed_form(self, rate_domain):
        ref = synthetic_curve(label="ref")
        test = make_curve(ref.rates, [q + 5 for q in ref.qualities], "test")
        result = bd_quality(test, ref, rate_domain)
        assert result.value == pytest.approx(5.0, abs=1e-6)
        assert result.kind == "bd_quality_points"
        assert result.method == rate_domain

    @pytest.mark.parametrize("rate_domain", ["linear", "log"])
    def test_matches_dense_trapezoid_oracle(self, rate_domain):
        ref = synthetic_curve(label="ref")
        test = make_curve(
            [r * 1.1 for r in ref.rates],
            [q + 0.5 * i for i, q in enumerate(ref.qualities)],
            "test",
        )
        ours = bd_quality(test, ref, rate_domain).value
        oracle = trapezoid_bd_quality(test, ref, rate_domain)
        assert ours == pytest.approx(oracle, abs=1e-6)

    def test_unknown_domain(self):
        curve = synthetic_curve()
        with pytest.raises(ValueError):
            bd_quality(curve, curve, "sqrt")


class TestCrossCuttingProperties:
    def test_rate_unit_invariance(self):
        ref = synthetic_curve(label="ref")
        test = make_curve([0.85 * r for r in ref.rates], ref.qualities, "test")
        for scale in (0.001, 1000.0):
            scaled_ref = make_curve([scale * r for r in ref.rates], ref.qualities)
            scaled_test = make_curve([scale * r for r in test.rates], test.qualities)
            for method in ("paper_area", "log_domain"):
                assert bd_rate(scaled_test, scaled_ref, method).value == pytest.approx(
                    bd_rate(test, ref, method).value, abs=1e-9
                )
            assert bd_quality(scaled_test, scaled_ref, "log").value == pytest.approx(
                bd_quality(test, ref, "log").value, abs=1e-9
            )

    def test_quadrature_stable_under_panel_doubling(self):
        ref = synthetic_curve(label="ref")
        test = make_curve(
            [r * (0.75 + 0.03 * i) for i, r in enumerate(ref.rates)],
            [q + 2 for q in ref.qualities],
        )
        for method in ("paper_area", "log_domain"):
            coarse = bd_rate(test, ref, method, initial_panels=2000).value
            fine = bd_rate(test, ref, method, initial_panels=4000).value
            assert abs(fine - coarse) < 1e-7
        for domain in ("linear", "log"):
            coarse = bd_quality(test, ref, domain, initial_panels=2000).value
            fine = bd_quality(test, ref, domain, initial_panels=4000).value
            assert abs(fine - coarse) < 1e-7

    def test_sign_antisymmetry_under_dominance(self):
        ref = synthetic_curve(label="ref")
        test = make_curve([0.8 * r for r in ref.rates], ref.qualities, "test")
        forward = bd_rate(test, ref).value
        backward = bd_rate(ref, test).value
        assert forward < 0 < backward
        quality_fwd = bd_quality(test, ref).value
        quality_bwd = bd_quality(ref, test).value
        assert quality_fwd > 0 > quality_bwd
