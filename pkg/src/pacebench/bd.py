"""Bjontegaard-style deltas between two rate-quality curves.

The continuous curve through the sampled points is a shape-preserving
monotone piecewise cubic (PCHIP: harmonically weighted derivative
estimates, clamped so the interpolant never overshoots the data). In the
quality->rate direction the rate axis is interpolated as log10(rate) and
exponentiated on output, which makes the classic constant-ratio identity
exact and the result invariant under rate-unit changes.

Integrals use composite Simpson quadrature on uniform panels; the panel
count is doubled until the reported delta is stable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .curves import RateQualityCurve
from .errors import (
    DegenerateCurveError,
    ExtrapolationError,
    NoOverlapError,
    PruningWarning,
)

BD_RATE_METHODS = ("paper_area", "log_domain")
BD_QUALITY_RATE_DOMAINS = ("linear", "log")

DEFAULT_PANELS = 2000
_CONVERGENCE_TOL = 1e-8  # successive panel doublings must agree this closely
_MAX_PANELS = 1 << 21


@dataclass(frozen=True)
class CommonRange:
    """Overlap of two curves' spans on the integration axis."""

    lo: float
    hi: float
    axis: str  # "quality" | "rate"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise NoOverlapError(
                f"empty common {self.axis} range: [{self.lo}, {self.hi}]"
            )


@dataclass(frozen=True)
class BdResult:
    """A signed BD delta, its common range, and how it was computed.

    ``method`` records the computation mode: "paper_area" or "log_domain"
    for rate deltas, the rate domain ("linear" or "log") for quality deltas.
    ``points_used`` counts the (test, reference) points that survived pruning.
    """

    kind: str  # "bd_rate_percent" | "bd_quality_points"
    value: float
    common_range: CommonRange
    method: str
    points_used: tuple[int, int]


def prune_monotone(curve: RateQualityCurve) -> RateQualityCurve:
    """Keep only Pareto points: quality strictly above everything cheaper.

    Scanning by ascending rate, a point whose quality does not improve on
    the best seen so far is dropped (with a PruningWarning listing the
    casualties). The result is strictly increasing on both axes, which the
    interpolant needs to be invertible.
    """
    kept: list[tuple[float, float]] = []
    dropped: list[tuple[float, float]] = []
    best = -math.inf
    for rate, quality in curve.points:
        if quality > best:
            kept.append((rate, quality))
            best = quality
        else:
            dropped.append((rate, quality))
    if dropped:
        warnings.warn(
            PruningWarning(
                f"curve '{curve.label}': dropped {len(dropped)} dominated point(s): {dropped}"
            ),
            stacklevel=2,
        )
    if len(kept) < 2:
        raise DegenerateCurveError(
            f"curve '{curve.label}': fewer than 2 points survive monotone pruning"
        )
    return RateQualityCurve(tuple(kept), label=curve.label)


def common_range(curve_a: RateQualityCurve, curve_b: RateQualityCurve, axis: str) -> CommonRange:
    """[max of minima, min of maxima] on the chosen axis."""
    if axis == "quality":
        span_a, span_b = curve_a.quality_range, curve_b.quality_range
    elif axis == "rate":
        span_a, span_b = curve_a.rate_range, curve_b.rate_range
    else:
        raise ValueError(f"axis must be 'quality' or 'rate', got {axis!r}")
    lo = max(span_a[0], span_b[0])
    hi = min(span_a[1], span_b[1])
    if lo >= hi:
        raise NoOverlapError(
            f"no common {axis} range: [{span_a[0]:g}, {span_a[1]:g}] vs "
            f"[{span_b[0]:g}, {span_b[1]:g}]"
        )
    return CommonRange(lo, hi, axis)


def _require_monotone_quality(curve: RateQualityCurve) -> None:
    qs = curve.qualities
    if any(q1 <= q0 for q0, q1 in zip(qs, qs[1:])):
        raise DegenerateCurveError(
            f"curve '{curve.label}' is not strictly increasing in quality; "
            "apply prune_monotone first"
        )


def _log_rate_of_quality(curve: RateQualityCurve) -> Callable:
    return PchipInterpolator(np.asarray(curve.qualities), np.log10(curve.rates))


def _quality_of_rate(curve: RateQualityCurve) -> Callable:
    return PchipInterpolator(np.asarray(curve.rates), np.asarray(curve.qualities))


def interpolate(curve: RateQualityCurve, axis_in: str, x):
    """Evaluate the curve at ``x`` on ``axis_in``, returning the other axis.

    Exact at the knots; refuses to extrapolate. Scalar in, scalar out;
    array in, array out.
    """
    _require_monotone_quality(curve)
    if axis_in == "quality":
        lo, hi = curve.quality_range
        transform = _log_rate_of_quality(curve)
        post = lambda v: 10.0 ** v
    elif axis_in == "rate":
        lo, hi = curve.rate_range
        transform = _quality_of_rate(curve)
        post = lambda v: v
    else:
        raise ValueError(f"axis_in must be 'quality' or 'rate', got {axis_in!r}")
    values = np.asarray(x, dtype=float)
    if values.size and (values.min() < lo or values.max() > hi):
        raise ExtrapolationError(
            f"input outside the curve's {axis_in} range [{lo:g}, {hi:g}]"
        )
    out = post(transform(values))
    if np.ndim(x) == 0:
        return float(out)
    return out


def _composite_simpson(fn: Callable, lo: float, hi: float, panels: int) -> float:
    xs = np.linspace(lo, hi, 2 * panels + 1)
    ys = np.asarray(fn(xs), dtype=float)
    h = (hi - lo) / (2 * panels)
    total = ys[0] + ys[-1] + 4.0 * ys[1::2].sum() + 2.0 * ys[2:-1:2].sum()
    return float(total * h / 3.0)


def _converged_value(value_at: Callable[[int], float], initial_panels: int | None) -> float:
    # Never fewer than DEFAULT_PANELS, and always convergence-checked: the
    # panel count doubles until the value stops moving.
    n = max(initial_panels or DEFAULT_PANELS, DEFAULT_PANELS)
    previous = value_at(n)
    while n < _MAX_PANELS:
        n *= 2
        current = value_at(n)
        if abs(current - previous) < _CONVERGENCE_TOL:
            return current
        previous = current
    warnings.warn(f"quadrature did not stabilize below {_CONVERGENCE_TOL} by {n} panels")
    return previous


def bd_rate(
    test: RateQualityCurve,
    ref: RateQualityCurve,
    method: str = "paper_area",
    *,
    initial_panels: int | None = None,
) -> BdResult:
    """Average bitrate delta (%) at equal quality; negative = test is cheaper.

    ``paper_area`` compares the areas under the two rate(quality) curves over
    the common quality range, normalized by the reference area. ``log_domain``
    averages log10(rate_test) - log10(rate_ref) and converts the mean back to
    a percentage. ``initial_panels`` raises the Simpson starting resolution;
    either way the panel count doubles until the value is stable.
    """
    test_p = prune_monotone(test)
    ref_p = prune_monotone(ref)
    span = common_range(test_p, ref_p, "quality")
    log_rate_test = _log_rate_of_quality(test_p)
    log_rate_ref = _log_rate_of_quality(ref_p)

    if method == "paper_area":
        def value_at(n: int) -> float:
            area_test = _composite_simpson(lambda q: 10.0 ** log_rate_test(q), span.lo, span.hi, n)
            area_ref = _composite_simpson(lambda q: 10.0 ** log_rate_ref(q), span.lo, span.hi, n)
            return 100.0 * (area_test - area_ref) / area_ref
    elif method == "log_domain":
        def value_at(n: int) -> float:
            mean_log_delta = _composite_simpson(
                lambda q: log_rate_test(q) - log_rate_ref(q), span.lo, span.hi, n
            ) / (span.hi - span.lo)
            return 100.0 * (10.0 ** mean_log_delta - 1.0)
    else:
        raise ValueError(f"method must be one of {BD_RATE_METHODS}, got {method!r}")

    value = _converged_value(value_at, initial_panels)
    return BdResult(
        kind="bd_rate_percent",
        value=value,
        common_range=span,
        method=method,
        points_used=(len(test_p.points), len(ref_p.points)),
    )


def bd_quality(
    test: RateQualityCurve,
    ref: RateQualityCurve,
    rate_domain: str = "linear",
    *,
    initial_panels: int | None = None,
) -> BdResult:
    """Average quality delta (score points) at equal bitrate; positive = test scores higher.

    The difference quality_test - quality_ref is averaged over the common
    bitrate range, on a linear or log10 rate axis per ``rate_domain``.
    """
    test_p = prune_monotone(test)
    ref_p = prune_monotone(ref)
    span = common_range(test_p, ref_p, "rate")
    quality_test = _quality_of_rate(test_p)
    quality_ref = _quality_of_rate(ref_p)

    if rate_domain == "linear":
        lo, hi = span.lo, span.hi
        integrand = lambda x: quality_test(x) - quality_ref(x)
    elif rate_domain == "log":
        lo, hi = math.log10(span.lo), math.log10(span.hi)
        integrand = lambda u: quality_test(10.0 ** u) - quality_ref(10.0 ** u)
    else:
        raise ValueError(
            f"rate_domain must be one of {BD_QUALITY_RATE_DOMAINS}, got {rate_domain!r}"
        )

    def value_at(n: int) -> float:
        return _composite_simpson(integrand, lo, hi, n) / (hi - lo)

    value = _converged_value(value_at, initial_panels)
    return BdResult(
        kind="bd_quality_points",
        value=value,
        common_range=span,
        method=rate_domain,
        points_used=(len(test_p.points), len(ref_p.points)),
    )
