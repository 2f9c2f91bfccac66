"""Dyadic step distance d1 and its two ball averages d2, d0.

d1 = 2**(n-1) on the shell 2**(n-1) < d <= 2**n.  The averaging radius for
d2 and d0 is 2**(n-1)/8 with n taken from the sqrt(2)-scaled shell
sqrt(2) 2**(n-1) < d <= sqrt(2) 2**n; ``radius_rule="d1"`` switches to d1/8.

Inside such a ball the distance crosses at most a couple of dyadic levels a,
so d2 = a_top - sum_a (a/2) * phi_a with phi_a the volume fraction of the ball
where d <= a.  Each phi_a is integrated exactly along rays, since
{d <= a} is a union of capsules.
"""
from __future__ import annotations

import math

import numpy as np

from . import _backend
from .geometry import Curve, sigma_shell
from .quadrature import BallRule, sphere_rule

RADIUS_RULES = {"as_written": 0, "d1": 1}


def kernel_args(curve: Curve, *, n_max: int, centers, values, offsets, ray_degree: int,
                dist_ray_degree: int, outer_order: int, d0_order: int, radius_rule: str, r0: float, width: float,
                floor: float) -> tuple:
    if radius_rule not in RADIUS_RULES:
        raise ValueError(f"radius_rule must be one of {sorted(RADIUS_RULES)}")
    rays, ray_w = sphere_rule(ray_degree)
    drays, dray_w = sphere_rule(dist_ray_degree)
    outer = BallRule(outer_order)
    inner = BallRule(d0_order)
    return (
        curve.seg_start, curve.seg_vec, curve.cumulative_arclength[:-1],
        curve.total_length, 1.05 * curve.chord_arc_C0 + 0.05, n_max,
        centers, values, offsets, rays, ray_w, drays, dray_w,
        outer.nodes, outer.weights, inner.nodes, inner.weights,
        RADIUS_RULES[radius_rule], curve.centroid, r0, width, floor,
    )


class SmoothDistance:
    """Evaluator for d1, d2 and d0 around ``curve``."""

    def __init__(self, curve: Curve, order: int = 6, ray_degree: int = 31,
                 radius_rule: str = "as_written", impl=None):
        self.curve = curve
        self.order = order
        self.ray_degree = ray_degree
        self.radius_rule = radius_rule
        impl = impl or _backend
        args = kernel_args(
            curve, n_max=0, centers=np.zeros((2, 3)), values=np.zeros(2),
            offsets=np.array([0], dtype=np.intp), ray_degree=3, dist_ray_degree=ray_degree, outer_order=3,
            d0_order=order, radius_rule=radius_rule, r0=1.0, width=1.0, floor=0.0,
        )
        self.kernel = impl.FieldKernel(*args)

    def _eval(self, p, what):
        arr = np.asarray(p, dtype=float)
        out = self.kernel.eval(arr.reshape(-1, 3), what)
        if np.any(~np.isfinite(out)):
            raise ValueError("point lies on the curve (d = 0)")
        return float(out[0]) if arr.ndim == 1 else out

    def distance(self, p):
        return self._eval(p, "dist")

    def d1(self, p):
        return self._eval(p, "d1")

    def d2(self, p):
        return self._eval(p, "d2")

    def d0(self, p):
        return self._eval(p, "d0")

    def averaging_radius(self, d: float) -> float:
        if self.radius_rule == "d1":
            return 2.0 ** (sigma_shell(d) - 1) / 8.0
        return 2.0 ** (sigma_shell(d / math.sqrt(2.0)) - 1) / 8.0


def d1(sd: SmoothDistance, p):
    return sd.d1(p)


def d2(sd: SmoothDistance, p):
    return sd.d2(p)


def d0(sd: SmoothDistance, p):
    return sd.d0(p)
