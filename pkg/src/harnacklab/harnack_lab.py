"""Empirical verification of Harnack-type inequalities with constant fitting.

Every verifier walks a grid of space-time nodes, evaluates both sides of its
inequality (by quadrature for densities, by common-random-number Monte Carlo
for semigroups), and fits the smallest constant C that makes the inequality
hold on the grid after subtracting statistical slack.  A disjoint validation
grid then re-fits the constant; a verification only counts as stable when the
validation constant does not inflate past a configurable factor.  Fitting,
not testing: the inequalities are existential in C, so the lab's job is to
exhibit a finite C and show it does not drift, never to hard-code one.

Conventions used throughout:

* all constants are fitted in the statement form with coefficient 1 on any
  logarithm (log-Harnack cost, truncated tail exponents);
* Monte Carlo slack is 3 delta-method standard errors of the fitted-side
  combination, computed from the paired per-sample values so that shared
  noise cancels (exactly zero when x = y);
* nodes whose denominator is not significantly positive (mean below 3
  standard errors, or a density below the underflow floor) are excluded and
  counted, never silently dropped.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .density import (
    BoundConstants,
    DensityGrid,
    check_truncated_bounds,
    estimate_bound_constants,
    grid_interp,
    stable_density,
    truncated_density_estimate,
    TruncatedBoundConstants,
)
from .levy_core import (
    OUSpec,
    StableSpec,
    TruncatedStableSpec,
    describe_spec,
)
from .sampling import SeedSpec, sample_truncated_stable
from .ou_semigroup import (
    SemigroupSampler,
    TestFunction,
    ball_indicator,
    constant,
    exp_cap,
    gaussian_bump,
)

__all__ = [
    "Node",
    "NodeResult",
    "InequalityReport",
    "RatioCase",
    "CheckResult",
    "LogRatioIntegralReport",
    "INEQUALITY_IDS",
    "fit_constant",
    "harnack_shape",
    "classify_case",
    "lemma_ratio_bound",
    "truncated_ratio_bound",
    "default_comparison_grid",
    "validation_comparison_grid",
    "default_ratio_grid",
    "validation_ratio_grid",
    "default_test_functions",
    "log_test_functions",
    "verify_ratio_lemma",
    "verify_harnack",
    "verify_p_harnack",
    "verify_log_harnack",
    "verify_truncated_ratio",
    "log_ratio_integral_bound",
    "young_inequality_check",
    "jensen_check",
    "young_suite",
    "jensen_suite",
]

INEQUALITY_IDS = (
    "harnack_stable",
    "harnack_ou",
    "p_harnack",
    "ratio_lemma",
    "truncated_ratio",
    "log_harnack",
    "young",
    "jensen",
)


# ---------------------------------------------------------------------------
# nodes, reports, fitting


@dataclass(frozen=True)
class Node:
    """One evaluation point: time, two space points, optional third point."""

    t: float
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None


@dataclass(frozen=True)
class NodeResult:
    """Both sides of an inequality at one node, with its statistical slack.

    rhs_shape is the full right-hand side except for the fitted constant, so
    the implied per-node constant is max(lhs - slack, 0) / rhs_shape.
    """

    node: Node
    lhs: float
    rhs_shape: float
    slack: float
    extra: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        if self.rhs_shape <= 0.0:
            return math.inf
        return self.lhs / self.rhs_shape

    def to_dict(self) -> dict:
        out = {
            "t": self.node.t,
            "x": self.node.x.tolist(),
            "y": self.node.y.tolist(),
            "lhs": self.lhs,
            "rhs_shape": self.rhs_shape,
            "slack": self.slack,
            "ratio": self.ratio if math.isfinite(self.ratio) else None,
        }
        if self.node.z is not None:
            out["z"] = self.node.z.tolist()
        out.update(self.extra)
        return out


@dataclass
class InequalityReport:
    """Outcome of one verification run: fitted constant plus full node log."""

    inequality_id: str
    claim: str
    spec_doc: dict
    grid_meta: dict
    per_node: list[NodeResult]
    fitted_C: float
    validation_C: float | None
    excluded_nodes: int
    seed_doc: dict | None
    mc_meta: dict = field(default_factory=dict)
    violations: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        if self.violations:
            return False
        stable = self.mc_meta.get("stability_ok")
        if stable is False:
            return False
        return math.isfinite(self.fitted_C)

    def to_dict(self) -> dict:
        return {
            "inequality_id": self.inequality_id,
            "claim": self.claim,
            "spec": self.spec_doc,
            "grid": self.grid_meta,
            "per_node": [r.to_dict() for r in self.per_node],
            "fitted_C": self.fitted_C,
            "validation_C": self.validation_C,
            "excluded_nodes": self.excluded_nodes,
            "seed": self.seed_doc,
            "mc_meta": self.mc_meta,
            "violations": self.violations,
            "passed": self.passed,
        }


def fit_constant(lhs, rhs_shape, slack=0.0) -> float:
    """Smallest C with lhs <= C * rhs_shape + slack at every node.

    Equivalent to max over nodes of max(lhs - slack, 0) / rhs_shape; nodes
    with nonpositive lhs - slack ask nothing of C.  rhs_shape must be
    strictly positive (exclude degenerate nodes before fitting).
    """
    lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
    rhs_shape = np.atleast_1d(np.asarray(rhs_shape, dtype=float))
    slack_arr = np.broadcast_to(np.asarray(slack, dtype=float), lhs.shape)
    if lhs.size == 0:
        raise ValueError("cannot fit a constant on an empty node set")
    if np.any(rhs_shape <= 0.0) or not np.all(np.isfinite(rhs_shape)):
        raise ValueError("rhs shape must be finite and positive at every fitted node")
    num = np.maximum(lhs - slack_arr, 0.0)
    return float(np.max(num / rhs_shape))


def _seed_doc(seed: SeedSpec | None) -> dict | None:
    if seed is None:
        return None
    return {"master_seed": seed.master_seed, "stream_id": seed.stream_id}


def _fit_from_results(results: Sequence[NodeResult]) -> float:
    return fit_constant(
        [r.lhs for r in results],
        [r.rhs_shape for r in results],
        [r.slack for r in results],
    )


# ---------------------------------------------------------------------------
# shapes and grids


def harnack_shape(
    distance: float, t: float, alpha: float, d: int, time_scale: str = "capped"
) -> float:
    """Harnack comparison factor (1 + distance / t_eff^(1/alpha))^(d + alpha).

    time_scale 'raw' uses t itself (the scale-sharp form for pure stable
    noise); 'capped' uses t ∧ 1 (the drift-robust form, which is what a
    nonzero drift matrix supports for large times).
    """
    if time_scale not in ("raw", "capped"):
        raise ValueError("time_scale must be 'raw' or 'capped'")
    t_eff = t if time_scale == "raw" else min(t, 1.0)
    return (1.0 + distance / t_eff ** (1.0 / alpha)) ** (d + alpha)


def _axis_vector(d: int, radius: float, axis: int) -> np.ndarray:
    v = np.zeros(d)
    v[axis % d] = radius
    return v


def default_comparison_grid(
    d: int,
    t_values: Sequence[float] = (0.1, 0.25, 0.5, 1.0, 2.0),
    offsets: Sequence[float] = (0.0, 0.5, 1.0, 2.0, 4.0),
) -> list[Node]:
    """Two-point nodes: y at the origin, x at each offset along rotating axes.

    Both orders (x away / y away) appear, since the test functions are not
    symmetric about the pair.
    """
    nodes = []
    for t in t_values:
        for i, off in enumerate(offsets):
            x = _axis_vector(d, off, i)
            origin = np.zeros(d)
            nodes.append(Node(t=float(t), x=x, y=origin))
            if off > 0.0:
                nodes.append(Node(t=float(t), x=origin, y=x))
    return nodes


def validation_comparison_grid(d: int) -> list[Node]:
    """Disjoint from the default grid in both times and offsets."""
    return default_comparison_grid(
        d, t_values=(0.15, 0.35, 0.75, 1.5), offsets=(0.25, 0.75, 1.5, 3.0)
    )


def default_ratio_grid(
    d: int,
    alpha: float,
    t_values: Sequence[float] = (0.1, 0.25, 0.5, 1.0, 2.0),
    offsets: Sequence[float] = (0.0, 0.5, 1.0, 2.0, 4.0),
    n_z: int = 200,
    z_lo: float = 1e-3,
) -> list[Node]:
    """Three-point nodes for density-ratio checks.

    Per (t, offset): x at the offset along an axis, y at the origin, and z
    sweeping both signs of a log-spaced radius ladder out to 10 * max(1,
    offset) on the same axis, plus z = 0.  Log spacing concentrates nodes at
    the origin-side regime change; the 10x reach probes the far tail where
    the case analysis switches over.
    """
    nodes = []
    for t in t_values:
        for i, off in enumerate(offsets):
            axis = i % d
            x = _axis_vector(d, off, axis)
            y = np.zeros(d)
            reach = 10.0 * max(1.0, off)
            radii = np.geomspace(z_lo, reach, n_z)
            z_line = np.concatenate([-radii[::-1], [0.0], radii])
            for zr in z_line:
                nodes.append(Node(t=float(t), x=x, y=y, z=_axis_vector(d, zr, axis)))
    return nodes


def validation_ratio_grid(d: int, alpha: float) -> list[Node]:
    """Disjoint times, offsets, and z ladder from the default ratio grid."""
    return default_ratio_grid(
        d,
        alpha,
        t_values=(0.15, 0.35, 0.75, 1.5),
        offsets=(0.25, 0.75, 1.5, 3.0),
        n_z=60,
        z_lo=2.3e-3,
    )


def default_test_functions(d: int) -> list[TestFunction]:
    """Indicator, smooth bump, constant: the bounded-f trio used by default."""
    return [
        ball_indicator(np.zeros(d), 1.0),
        gaussian_bump(np.zeros(d), 1.0),
        constant(2.0),
    ]


def log_test_functions(d: int) -> list[TestFunction]:
    """Functions >= 1 for log-Harnack runs (log f must be defined)."""
    return [
        exp_cap(math.e, np.zeros(d), 1.0),
        exp_cap(100.0, np.zeros(d), 2.0),
        constant(1.5),
    ]


# ---------------------------------------------------------------------------
# density ratio lemma (pure stable)


@dataclass(frozen=True)
class RatioCase:
    """Which regime a (t, x, y, z) node falls in, and its intermediate bound.

    Tags: 'overlap' (z within one diffusive scale of y), 'far_field' (z far
    from y compared to both the diffusive scale and |x - y|), 'transition'
    (the band between).  Boundaries go to the earlier regime in this order.
    """

    tag: str
    bound: float | None = None


def classify_case(
    t: float,
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    alpha: float,
    constants: BoundConstants | None = None,
) -> RatioCase:
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    d = x.size
    t_scale = t ** (1.0 / alpha)
    dyz = float(np.linalg.norm(y - z))
    dxy = float(np.linalg.norm(x - y))
    if dyz <= t_scale:
        tag, factor = "overlap", 1.0
    elif dyz >= 2.0 * max(t_scale, dxy):
        tag, factor = "far_field", 2.0 ** (alpha + d)
    else:
        tag, factor = "transition", (dyz / t_scale) ** (d + alpha)
    bound = None
    if constants is not None:
        bound = factor * constants.c2_hat / constants.c1_hat
    return RatioCase(tag=tag, bound=bound)


def lemma_ratio_bound(
    t: float,
    x: np.ndarray,
    y: np.ndarray,
    alpha: float,
    d: int,
    c1: float,
    c2: float,
) -> float:
    """Global bound 2^(alpha+d) (c2/c1) (1 + |x-y| / t^(1/alpha))^(d+alpha).

    c1, c2 are the two-sided envelope constants (c1 lower, c2 upper); the
    bound holds for every z once the envelope holds at the radii involved.
    """
    dxy = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    return (
        2.0 ** (alpha + d)
        * (c2 / c1)
        * (1.0 + dxy / t ** (1.0 / alpha)) ** (d + alpha)
    )


def _ratio_density_cache(
    spec: StableSpec, nodes: Sequence[Node], threads: int = 1
) -> dict[tuple[float, float], float]:
    """Evaluate p_t at every distinct (t, radius) the nodes need.

    Rotational invariance means only the radius matters, so collinear grids
    collapse to a few thousand quadratures.  Keys are rounded to 1e-12 to
    merge radii that differ only by float noise.
    """
    keys = set()
    for nd in nodes:
        for point in (nd.x, nd.y):
            keys.add((nd.t, round(float(np.linalg.norm(point - nd.z)), 12)))
    keys = sorted(keys)

    def one(key):
        t, radius = key
        point = np.zeros(spec.d)
        point[0] = radius
        return stable_density(spec, t, point)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(one, keys))
    else:
        vals = [one(k) for k in keys]
    return dict(zip(keys, vals))


def _lookup(cache: dict, t: float, radius: float) -> float:
    return cache[(t, round(float(radius), 12))]


def verify_ratio_lemma(
    spec: StableSpec,
    grid: Sequence[Node] | None = None,
    constants: BoundConstants | None = None,
    *,
    validation: bool = True,
    rel_slack: float = 1e-6,
    threads: int = 1,
    underflow: float = 1e-300,
    seed: SeedSpec | None = None,
) -> InequalityReport:
    """Check the three-case density ratio bounds node by node.

    Fits (or receives) envelope constants certified on the whole scaled
    range the grid touches, then verifies p_t(x-z)/p_t(y-z) against the
    per-case and global bounds with a relative tolerance absorbing
    quadrature noise.  Zero violations is the pass condition; the fitted
    constant reported is the empirical max of ratio / comparison shape.
    """
    grid = list(default_ratio_grid(spec.d, spec.alpha) if grid is None else grid)
    if not grid:
        raise ValueError("empty node grid")
    for nd in grid:
        if nd.z is None:
            raise ValueError("ratio lemma nodes need a z point")

    max_scaled = max(
        max(np.linalg.norm(nd.x - nd.z), np.linalg.norm(nd.y - nd.z))
        / nd.t ** (1.0 / spec.alpha)
        for nd in grid
    )
    if constants is None:
        probe = np.linspace(0.0, max(max_scaled, 1.0), 8)[1:]
        constants = estimate_bound_constants(
            spec, [1.0], probe[:, None] * _axis_vector(spec.d, 1.0, 0)[None, :], refine=True
        )
    certified = constants.grid_meta.get("certified_scaled_radius", 0.0)
    if certified < max_scaled:
        raise ValueError(
            f"envelope constants certified to scaled radius {certified:.3g} "
            f"but the grid reaches {max_scaled:.3g}"
        )

    def run(nodes: Sequence[Node]):
        cache = _ratio_density_cache(spec, nodes, threads=threads)
        results, violations, case_counts = [], [], {}
        excluded = 0
        for nd in nodes:
            rx = float(np.linalg.norm(nd.x - nd.z))
            ry = float(np.linalg.norm(nd.y - nd.z))
            px, py = _lookup(cache, nd.t, rx), _lookup(cache, nd.t, ry)
            if py < underflow:
                excluded += 1
                continue
            ratio = px / py
            case = classify_case(nd.t, nd.x, nd.y, nd.z, spec.alpha, constants)
            glob = lemma_ratio_bound(
                nd.t, nd.x, nd.y, spec.alpha, spec.d, constants.c1_hat, constants.c2_hat
            )
            case_counts[case.tag] = case_counts.get(case.tag, 0) + 1
            shape = harnack_shape(
                float(np.linalg.norm(nd.x - nd.y)), nd.t, spec.alpha, spec.d, "raw"
            )
            res = NodeResult(
                node=nd,
                lhs=ratio,
                rhs_shape=shape,
                slack=0.0,
                extra={"case": case.tag, "case_bound": case.bound, "global_bound": glob},
            )
            results.append(res)
            if ratio > case.bound * (1.0 + rel_slack):
                violations.append({**res.to_dict(), "kind": "case_bound"})
            if ratio > glob * (1.0 + rel_slack):
                violations.append({**res.to_dict(), "kind": "global_bound"})
        return results, violations, case_counts, excluded

    results, violations, case_counts, excluded = run(grid)
    fitted = _fit_from_results(results)

    validation_C = None
    if validation:
        vgrid = validation_ratio_grid(spec.d, spec.alpha)
        vmax = max(
            max(np.linalg.norm(nd.x - nd.z), np.linalg.norm(nd.y - nd.z))
            / nd.t ** (1.0 / spec.alpha)
            for nd in vgrid
        )
        if vmax > certified:
            vgrid = [
                nd
                for nd in vgrid
                if max(np.linalg.norm(nd.x - nd.z), np.linalg.norm(nd.y - nd.z))
                / nd.t ** (1.0 / spec.alpha)
                <= certified
            ]
        vres, vviol, _, vexcl = run(vgrid)
        violations.extend(vviol)
        validation_C = _fit_from_results(vres)
        excluded += vexcl

    lemma_constant = 2.0 ** (spec.alpha + spec.d) * constants.c2_hat / constants.c1_hat
    return InequalityReport(
        inequality_id="ratio_lemma",
        claim=(
            "p_t(x-z)/p_t(y-z) obeys the three-regime case bounds and the global bound "
            "2^(alpha+d)(c2/c1)(1+|x-y|/t^(1/alpha))^(d+alpha)"
        ),
        spec_doc=describe_spec(spec),
        grid_meta={
            "nodes": len(grid),
            "case_counts": case_counts,
            "max_scaled_radius": max_scaled,
        },
        per_node=results,
        fitted_C=fitted,
        validation_C=validation_C,
        excluded_nodes=excluded,
        seed_doc=_seed_doc(seed),
        mc_meta={
            "lemma_constant": lemma_constant,
            "envelope": {"c1": constants.c1_hat, "c2": constants.c2_hat},
            "rel_slack": rel_slack,
            "stability_ok": True if validation_C is None else bool(not violations),
        },
        violations=violations,
    )


# ---------------------------------------------------------------------------
# semigroup Harnack verifiers


def _exact_mean(v: np.ndarray) -> float:
    """Mean that is exact for constant arrays.

    np.mean of n identical values can be off by an ulp (the sum rounds), which
    matters only where an inequality holds with equality; returning the common
    value keeps those degenerate nodes exactly on the boundary.
    """
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return lo
    return float(v.mean())


def _paired_stats(vx: np.ndarray, vy: np.ndarray) -> tuple[float, float, float, float, float]:
    n = vx.size
    mx, my = float(vx.mean()), float(vy.mean())
    if n < 2:
        return mx, my, 0.0, 0.0, 0.0
    dx, dy = vx - mx, vy - my
    varx = float(dx @ dx) / (n - 1)
    vary = float(dy @ dy) / (n - 1)
    cov = float(dx @ dy) / (n - 1)
    return mx, my, varx, vary, cov


def _difference_slack(
    grad_l: float, var_l: float, coeff_r: float, var_r: float, cov: float, n: int
) -> float:
    """3 SE of grad_l * L - coeff_r * R via the delta method on paired samples."""
    var = grad_l**2 * var_l + coeff_r**2 * var_r - 2.0 * grad_l * coeff_r * cov
    return 3.0 * math.sqrt(max(var, 0.0) / n)


def _driver_alpha(spec: OUSpec) -> float:
    drv = spec.driver
    if isinstance(drv, (StableSpec, TruncatedStableSpec)):
        return drv.alpha
    return drv.stable_floor.alpha


def _stability(fitted: float, validation: float | None, threshold: float) -> bool | None:
    if validation is None:
        return None
    if fitted == 0.0:
        return validation <= threshold
    return validation <= (1.0 + threshold) * fitted


def verify_harnack(
    spec: OUSpec,
    f_set: Sequence[TestFunction] | None = None,
    grid: Sequence[Node] | None = None,
    *,
    n: int = 10**5,
    seed: SeedSpec | None = None,
    time_scale: str | None = None,
    n_steps: int | None = None,
    epsilon: float | None = None,
    validation: bool = True,
    stability_threshold: float = 0.25,
) -> InequalityReport:
    """Fit C in P_t f(x) <= C (1 + |x-y|/t_eff^(1/alpha))^(d+alpha) P_t f(y).

    Both semigroup values at a node share one noise array (common random
    numbers), so the x = y nodes witness C >= 1 with zero slack and the
    fitted constant reflects genuine spatial decorrelation, not Monte Carlo
    scatter.  Nodes where P_t f(y) is not significantly positive are
    excluded.
    """
    if seed is None:
        seed = SeedSpec(0)
    alpha = _driver_alpha(spec)
    d = spec.d
    if time_scale is None:
        time_scale = "raw" if spec.op_norm == 0.0 else "capped"
    f_set = default_test_functions(d) if f_set is None else list(f_set)
    grid = list(default_comparison_grid(d) if grid is None else grid)

    def run(nodes, sampler):
        results, excluded = [], 0
        for f in f_set:
            for nd in nodes:
                vx = sampler.values(f, nd.x, nd.t)
                vy = sampler.values(f, nd.y, nd.t)
                mx, my, varx, vary, cov = _paired_stats(vx, vy)
                se_y = math.sqrt(vary / sampler.n)
                if my <= 3.0 * se_y:
                    excluded += 1
                    continue
                shape = harnack_shape(
                    float(np.linalg.norm(nd.x - nd.y)), nd.t, alpha, d, time_scale
                )
                rhs_shape = my * shape
                coeff = (mx / rhs_shape) * shape  # provisional C-hat times shape
                slack = _difference_slack(1.0, varx, coeff, vary, cov, sampler.n)
                results.append(
                    NodeResult(
                        node=nd,
                        lhs=mx,
                        rhs_shape=rhs_shape,
                        slack=slack,
                        extra={
                            "f": f.tag,
                            "se_lhs": math.sqrt(varx / sampler.n),
                            "se_rhs": se_y,
                        },
                    )
                )
        return results, excluded

    sampler = SemigroupSampler(spec, n, seed.substream(1), n_steps=n_steps, epsilon=epsilon)
    results, excluded = run(grid, sampler)
    if not results:
        raise ValueError("all nodes excluded: semigroup means not significantly positive")
    fitted = _fit_from_results(results)

    validation_C = None
    if validation:
        vsampler = SemigroupSampler(
            spec, n, seed.substream(2), n_steps=n_steps, epsilon=epsilon
        )
        vres, vexcl = run(validation_comparison_grid(d), vsampler)
        excluded += vexcl
        if vres:
            validation_C = _fit_from_results(vres)

    per_f = {}
    for f in f_set:
        rf = [r for r in results if r.extra.get("f") == f.tag]
        if rf:
            per_f[f.tag] = _fit_from_results(rf)

    ineq_id = "harnack_stable" if spec.op_norm == 0.0 else "harnack_ou"
    t_word = "t" if time_scale == "raw" else "min(t,1)"
    return InequalityReport(
        inequality_id=ineq_id,
        claim=(
            f"P_t f(x) <= C (1 + |x-y|/{t_word}^(1/alpha))^(d+alpha) P_t f(y) "
            "for bounded nonnegative f"
        ),
        spec_doc=describe_spec(spec),
        grid_meta={"nodes": len(grid), "functions": [f.tag for f in f_set]},
        per_node=results,
        fitted_C=fitted,
        validation_C=validation_C,
        excluded_nodes=excluded,
        seed_doc=_seed_doc(seed),
        mc_meta={
            "n": n,
            "time_scale": time_scale,
            "per_f_fitted": per_f,
            "stability_threshold": stability_threshold,
            "stability_ok": _stability(fitted, validation_C, stability_threshold),
        },
        violations=[],
    )


def verify_p_harnack(
    spec: OUSpec,
    f_set: Sequence[TestFunction] | None = None,
    grid: Sequence[Node] | None = None,
    p_list: Sequence[float] = (1.5, 2.0, 4.0),
    *,
    n: int = 10**5,
    seed: SeedSpec | None = None,
    time_scale: str | None = None,
    n_steps: int | None = None,
    epsilon: float | None = None,
    validation: bool = True,
    stability_threshold: float = 0.25,
) -> InequalityReport:
    """Fit C in (P_t f(x))^p <= C (1 + |x-y|/t_eff^(1/alpha))^(p(d+alpha)) P_t f^p(y).

    As p -> 1 the statement degenerates to the plain Harnack inequality, so a
    run at p close to 1 must reproduce the plain fitted constant; that
    continuity is part of the acceptance battery.  Every node also gets an
    empirical Jensen sanity check (mean f)^p <= mean f^p + 3 SE.
    """
    if seed is None:
        seed = SeedSpec(0)
    for p in p_list:
        if p <= 1.0:
            raise ValueError(f"power must exceed 1, got {p}")
    alpha = _driver_alpha(spec)
    d = spec.d
    if time_scale is None:
        time_scale = "raw" if spec.op_norm == 0.0 else "capped"
    f_set = default_test_functions(d) if f_set is None else list(f_set)
    grid = list(default_comparison_grid(d) if grid is None else grid)

    jensen_failures = 0

    def run(nodes, sampler):
        nonlocal jensen_failures
        results, excluded = [], 0
        for p in p_list:
            for f in f_set:
                for nd in nodes:
                    vx = sampler.values(f, nd.x, nd.t)
                    vyp = sampler.values(f, nd.y, nd.t) ** p
                    mx, myp, varx, varyp, cov = _paired_stats(vx, vyp)
                    se_yp = math.sqrt(varyp / sampler.n)
                    if myp <= 3.0 * se_yp:
                        excluded += 1
                        continue
                    vxp = vx**p
                    mxp = _exact_mean(vxp)
                    se_xp = float(vxp.std(ddof=1)) / math.sqrt(sampler.n)
                    if _exact_mean(vx) ** p > mxp + 3.0 * se_xp:
                        jensen_failures += 1
                    base = harnack_shape(
                        float(np.linalg.norm(nd.x - nd.y)), nd.t, alpha, d, time_scale
                    ) ** (1.0 / (d + alpha))
                    shape_p = base ** (p * (d + alpha))
                    lhs = mx**p
                    rhs_shape = myp * shape_p
                    grad_l = p * mx ** (p - 1.0)
                    coeff = (lhs / rhs_shape) * shape_p
                    slack = _difference_slack(grad_l, varx, coeff, varyp, cov, sampler.n)
                    results.append(
                        NodeResult(
                            node=nd,
                            lhs=lhs,
                            rhs_shape=rhs_shape,
                            slack=slack,
                            extra={"f": f.tag, "p": p},
                        )
                    )
        return results, excluded

    sampler = SemigroupSampler(spec, n, seed.substream(1), n_steps=n_steps, epsilon=epsilon)
    results, excluded = run(grid, sampler)
    if not results:
        raise ValueError("all nodes excluded: semigroup means not significantly positive")
    fitted = _fit_from_results(results)

    validation_C = None
    if validation:
        vsampler = SemigroupSampler(
            spec, n, seed.substream(2), n_steps=n_steps, epsilon=epsilon
        )
        vres, vexcl = run(validation_comparison_grid(d), vsampler)
        excluded += vexcl
        if vres:
            validation_C = _fit_from_results(vres)

    per_p = {}
    for p in p_list:
        rp = [r for r in results if r.extra.get("p") == p]
        if rp:
            per_p[str(p)] = _fit_from_results(rp)

    t_word = "t" if time_scale == "raw" else "min(t,1)"
    return InequalityReport(
        inequality_id="p_harnack",
        claim=(
            f"(P_t f(x))^p <= C (1 + |x-y|/{t_word}^(1/alpha))^(p(d+alpha)) P_t f^p(y) "
            "for bounded nonnegative f and p > 1"
        ),
        spec_doc=describe_spec(spec),
        grid_meta={
            "nodes": len(grid),
            "functions": [f.tag for f in f_set],
            "p_list": list(p_list),
        },
        per_node=results,
        fitted_C=fitted,
        validation_C=validation_C,
        excluded_nodes=excluded,
        seed_doc=_seed_doc(seed),
        mc_meta={
            "n": n,
            "time_scale": time_scale,
            "per_p_fitted": per_p,
            "jensen_failures": jensen_failures,
            "stability_threshold": stability_threshold,
            "stability_ok": _stability(fitted, validation_C, stability_threshold),
        },
        violations=[],
    )


def log_harnack_cost(distance: float, t: float) -> float:
    """Additive cost shape (1 + |x-y|) log((2 + |x-y|) / (t ∧ 1))."""
    return (1.0 + distance) * math.log((2.0 + distance) / min(t, 1.0))


def verify_log_harnack(
    spec: OUSpec,
    f_set: Sequence[TestFunction] | None = None,
    grid: Sequence[Node] | None = None,
    *,
    n: int = 10**5,
    seed: SeedSpec | None = None,
    n_steps: int | None = None,
    epsilon: float | None = None,
    validation: bool = True,
    stability_threshold: float = 0.25,
) -> InequalityReport:
    """Fit C in P_t(log f)(x) <= log P_t f(y) + C (1+|x-y|) log((2+|x-y|)/(t∧1)).

    Requires f >= 1 so the logarithm is nonnegative and defined pathwise.
    With shared noise the x = y nodes reduce to the empirical Jensen
    inequality, which holds exactly sample by sample, so their fitted
    constant is identically zero; any positive fitted C measures genuine
    displacement cost.
    """
    if seed is None:
        seed = SeedSpec(0)
    alpha = _driver_alpha(spec)
    d = spec.d
    f_set = log_test_functions(d) if f_set is None else list(f_set)
    for f in f_set:
        if not f.geq_one:
            raise ValueError(f"log-Harnack needs f >= 1, got {f.tag}")
    grid = list(default_comparison_grid(d) if grid is None else grid)

    def run(nodes, sampler):
        results = []
        for f in f_set:
            for nd in nodes:
                log_vx = np.log(sampler.values(f, nd.x, nd.t))
                vy = sampler.values(f, nd.y, nd.t)
                _, _, varl, vary, cov = _paired_stats(log_vx, vy)
                ml, my = _exact_mean(log_vx), _exact_mean(vy)
                lhs = ml - math.log(my)
                cost = log_harnack_cost(float(np.linalg.norm(nd.x - nd.y)), nd.t)
                var = varl + vary / my**2 - 2.0 * cov / my
                slack = 3.0 * math.sqrt(max(var, 0.0) / sampler.n)
                results.append(
                    NodeResult(
                        node=nd,
                        lhs=lhs,
                        rhs_shape=cost,
                        slack=slack,
                        extra={"f": f.tag, "log_mean_rhs": math.log(my)},
                    )
                )
        return results

    sampler = SemigroupSampler(spec, n, seed.substream(1), n_steps=n_steps, epsilon=epsilon)
    results = run(grid, sampler)
    fitted = _fit_from_results(results)

    diag_nodes = [
        r for r in results if np.array_equal(r.node.x, r.node.y)
    ]
    diag_C = _fit_from_results(diag_nodes) if diag_nodes else None

    validation_C = None
    if validation:
        vsampler = SemigroupSampler(
            spec, n, seed.substream(2), n_steps=n_steps, epsilon=epsilon
        )
        vres = run(validation_comparison_grid(d), vsampler)
        if vres:
            validation_C = _fit_from_results(vres)

    return InequalityReport(
        inequality_id="log_harnack",
        claim=(
            "P_t(log f)(x) <= log P_t f(y) + C (1 + |x-y|) log((2 + |x-y|)/(t ∧ 1)) "
            "for f >= 1"
        ),
        spec_doc=describe_spec(spec),
        grid_meta={"nodes": len(grid), "functions": [f.tag for f in f_set]},
        per_node=results,
        fitted_C=fitted,
        validation_C=validation_C,
        excluded_nodes=0,
        seed_doc=_seed_doc(seed),
        mc_meta={
            "n": n,
            "x_equals_y_C": diag_C,
            "stability_threshold": stability_threshold,
            "stability_ok": _stability(fitted, validation_C, stability_threshold),
        },
        violations=[],
    )


# ---------------------------------------------------------------------------
# truncated-noise ratio and entropy-cost checks


def truncated_ratio_bound(
    spec: TruncatedStableSpec,
    t: float,
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    c_mult: float,
    c_exp: float,
) -> float:
    """C1 t^(-d/alpha) (m/t)^(C2 m) with m = max(2, |x-y|, |y-z|).

    The superpolynomial shape reflects the exponential-type tail of the
    truncated density: ratios can grow like a power of m with exponent
    itself proportional to m, never faster.
    """
    if not 0.0 < t <= 1.0:
        raise ValueError("truncated ratio bound is stated for t in (0, 1]")
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    m = max(2.0, float(np.linalg.norm(x - y)), float(np.linalg.norm(y - z)))
    return c_mult * t ** (-spec.d / spec.alpha) * (m / t) ** (c_exp * m)


def _kde_se_at(grid: DensityGrid, points: np.ndarray) -> np.ndarray:
    se = grid.meta.get("se")
    if se is None:
        return np.zeros(np.asarray(points).size)
    xs = grid.points[:, 0]
    return np.interp(np.asarray(points, dtype=float).ravel(), xs, se)


def verify_truncated_ratio(
    spec: TruncatedStableSpec,
    t_grid: Sequence[float] = (0.25, 0.5, 1.0),
    *,
    n: int = 4 * 10**5,
    seed: SeedSpec | None = None,
    estimates: Sequence[DensityGrid] | None = None,
    constants: TruncatedBoundConstants | None = None,
    offsets: Sequence[float] = (0.0, 0.5, 1.0, 2.0),
    z_count: int = 41,
    epsilon: float | None = None,
    validation: bool = True,
    stability_threshold: float = 0.25,
) -> InequalityReport:
    """Fit C1 in the truncated-density ratio bound from KDE estimates.

    The exponent constant C2 comes from the fitted tail envelopes (the sum
    of the upper and lower tail rates), so only the multiplicative constant
    is free.  KDE bins with standard error above 30% of the value, or empty,
    are excluded rather than fitted against.
    """
    if spec.d != 1:
        raise NotImplementedError("truncated ratio verification is implemented for d=1")
    if seed is None:
        seed = SeedSpec(0)
    t_grid = list(t_grid)
    if estimates is None:
        estimates = [
            truncated_density_estimate(
                spec, t, n, seed=seed.substream(3, i), epsilon=epsilon
            )
            for i, t in enumerate(t_grid)
        ]
    estimates = list(estimates)
    if constants is None:
        constants = check_truncated_bounds(spec, t_grid, estimates)
    c_exp = max(constants.c4 + constants.c6, 0.1)

    reach = min(float(np.max(np.abs(g.points[:, 0]))) for g in estimates)
    z_max = max(reach - max(offsets) - 0.25, 1.0)

    def run(z_values):
        results, excluded = [], 0
        for t, grid_t in zip(t_grid, estimates):
            for i, off in enumerate(offsets):
                x = np.array([off])
                y = np.zeros(1)
                for zr in z_values:
                    z = np.array([zr])
                    px = float(np.asarray(grid_interp(grid_t, x - z)).reshape(()))
                    py = float(np.asarray(grid_interp(grid_t, y - z)).reshape(()))
                    se_x = float(_kde_se_at(grid_t, x - z)[0])
                    se_y = float(_kde_se_at(grid_t, y - z)[0])
                    if px <= 0.0 or py <= 0.0 or se_x > 0.3 * px or se_y > 0.3 * py:
                        excluded += 1
                        continue
                    ratio = px / py
                    shape = truncated_ratio_bound(spec, t, x, y, z, 1.0, c_exp)
                    slack = 3.0 * ratio * math.sqrt((se_x / px) ** 2 + (se_y / py) ** 2)
                    results.append(
                        NodeResult(
                            node=Node(t=t, x=x, y=y, z=z),
                            lhs=ratio,
                            rhs_shape=shape,
                            slack=slack,
                        )
                    )
        return results, excluded

    z_values = np.linspace(-z_max, z_max, z_count)
    results, excluded = run(z_values)
    if not results:
        raise ValueError("all truncated-ratio nodes excluded: KDE too noisy")
    fitted = _fit_from_results(results)

    validation_C = None
    if validation:
        half_step = (z_values[1] - z_values[0]) / 2.0 if z_count > 1 else 0.1
        vres, vexcl = run(z_values[:-1] + half_step)
        excluded += vexcl
        if vres:
            validation_C = _fit_from_results(vres)

    return InequalityReport(
        inequality_id="truncated_ratio",
        claim=(
            "p_t(x-z)/p_t(y-z) <= C1 t^(-d/alpha) (m/t)^(C2 m), "
            "m = max(2, |x-y|, |y-z|), for truncated stable noise on t in (0,1]"
        ),
        spec_doc=describe_spec(spec),
        grid_meta={
            "t_grid": t_grid,
            "offsets": list(offsets),
            "z_count": z_count,
            "z_max": z_max,
        },
        per_node=results,
        fitted_C=fitted,
        validation_C=validation_C,
        excluded_nodes=excluded,
        seed_doc=_seed_doc(seed),
        mc_meta={
            "n": n,
            "C2": c_exp,
            "tail_fit": constants.grid_meta.get("tail_fit"),
            "stability_threshold": stability_threshold,
            "stability_ok": _stability(fitted, validation_C, stability_threshold),
        },
        violations=[],
    )


@dataclass(frozen=True)
class LogRatioIntegralReport:
    """Relative entropy between two truncated transition laws versus its cost.

    kl_estimate approximates the integral of log(p_t(y,.) / p_t(x,.)) against
    p_t(y,.); the log-Harnack mechanism needs it controlled by
    C (1 + |x-y|) log((2 + |x-y|) / t).
    """

    t: float
    x: tuple[float, ...]
    y: tuple[float, ...]
    kl_estimate: float
    std_err: float
    envelope_unit: float
    C: float
    holds: bool
    floored_count: int
    n: int

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "x": list(self.x),
            "y": list(self.y),
            "kl_estimate": self.kl_estimate,
            "std_err": self.std_err,
            "envelope_unit": self.envelope_unit,
            "C": self.C,
            "holds": self.holds,
            "floored_count": self.floored_count,
            "n": self.n,
        }


def log_ratio_integral_bound(
    spec: TruncatedStableSpec,
    t: float,
    x,
    y,
    *,
    n: int = 10**5,
    seed: SeedSpec | None = None,
    estimate: DensityGrid | None = None,
    C: float | None = None,
    floor: float = 1e-12,
) -> LogRatioIntegralReport:
    """Monte Carlo bound on the entropy-type integral behind the log-Harnack cost.

    Draws Z from the transition law started at x and averages
    log p_hat(Z - x) - log p_hat(Z - y) on the KDE estimate (the relative
    entropy of the x-law with respect to the y-law); densities below
    ``floor`` are floored and counted rather than allowed to blow up the
    logarithm.  With C omitted, the smallest admissible constant is fitted;
    with C given, holds reports whether the estimate stays below
    C * envelope + 3 SE.
    """
    if spec.d != 1:
        raise NotImplementedError("entropy integral check is implemented for d=1")
    if not 0.0 < t <= 1.0:
        raise ValueError("the entropy-cost envelope is stated for t in (0, 1]")
    if seed is None:
        seed = SeedSpec(0)
    x = np.asarray(x, dtype=float).reshape(1)
    y = np.asarray(y, dtype=float).reshape(1)
    if estimate is None:
        estimate = truncated_density_estimate(
            spec, t, max(n, 2 * 10**5), seed=seed.substream(5)
        )
    z = x[None, :] + sample_truncated_stable(spec, t, None, n, seed.substream(7))
    px = grid_interp(estimate, z - x)
    py = grid_interp(estimate, z - y)
    floored = int(np.sum(px < floor) + np.sum(py < floor))
    vals = np.log(np.maximum(px, floor)) - np.log(np.maximum(py, floor))
    mean = float(vals.mean())
    se = float(vals.std(ddof=1)) / math.sqrt(n)
    dist = float(np.linalg.norm(x - y))
    env = (1.0 + dist) * math.log((2.0 + dist) / t)
    if C is None:
        C = max(mean, 0.0) / env
        holds = True
    else:
        holds = mean <= C * env + 3.0 * se
    return LogRatioIntegralReport(
        t=t,
        x=tuple(x),
        y=tuple(y),
        kl_estimate=mean,
        std_err=se,
        envelope_unit=env,
        C=float(C),
        holds=bool(holds),
        floored_count=floored,
        n=n,
    )


# ---------------------------------------------------------------------------
# finite-measure inequalities (Young, Jensen)


@dataclass(frozen=True)
class CheckResult:
    """Outcome of a single finite-measure inequality evaluation."""

    holds: bool
    margin: float


def young_inequality_check(mu, g, h, tol: float = 1e-12) -> CheckResult:
    """Entropy Young inequality mu(g h) <= mu(g log g) + log mu(e^h).

    mu must be a probability vector and g a nonnegative density with
    mu(g) = 1; both are renormalized, and renormalization failure (zero or
    non-finite total) is an error.  The convention 0 log 0 = 0 applies.
    margin = rhs - lhs, holds iff margin >= -tol.
    """
    mu = np.asarray(mu, dtype=float)
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if mu.shape != g.shape or mu.shape != h.shape:
        raise ValueError("mu, g, h must share one shape")
    if np.any(mu < 0.0) or not np.all(np.isfinite(mu)):
        raise ValueError("mu must be a finite nonnegative vector")
    total = float(mu.sum())
    if not total > 0.0:
        raise ValueError("mu must have positive total mass")
    mu = mu / total
    if np.any(g < 0.0) or not np.all(np.isfinite(g)):
        raise ValueError("g must be finite and nonnegative")
    mean_g = float(mu @ g)
    if not mean_g > 0.0:
        raise ValueError("g must have positive mean under mu")
    g = g / mean_g
    if abs(float(mu @ g) - 1.0) > 1e-12:
        raise ValueError("density renormalization failed to reach mu(g) = 1")
    if not np.all(np.isfinite(h)):
        raise ValueError("h must be finite")
    with np.errstate(divide="ignore", invalid="ignore"):
        glogg = np.where(g > 0.0, g * np.log(np.where(g > 0.0, g, 1.0)), 0.0)
    lhs = float(mu @ (g * h))
    rhs = float(mu @ glogg) + math.log(float(mu @ np.exp(h)))
    margin = rhs - lhs
    return CheckResult(holds=bool(margin >= -tol), margin=margin)


def jensen_check(mu, f, tol: float = 1e-12) -> CheckResult:
    """Jensen inequality mu(log f) <= log mu(f) for strictly positive f."""
    mu = np.asarray(mu, dtype=float)
    f = np.asarray(f, dtype=float)
    if mu.shape != f.shape:
        raise ValueError("mu and f must share one shape")
    if np.any(mu < 0.0) or not np.all(np.isfinite(mu)):
        raise ValueError("mu must be a finite nonnegative vector")
    total = float(mu.sum())
    if not total > 0.0:
        raise ValueError("mu must have positive total mass")
    mu = mu / total
    if np.any(f <= 0.0) or not np.all(np.isfinite(f)):
        raise ValueError("f must be finite and strictly positive")
    margin = math.log(float(mu @ f)) - float(mu @ np.log(f))
    return CheckResult(holds=bool(margin >= -tol), margin=margin)


def _finite_measure_suite(
    kind: str, n_cases: int, seed: SeedSpec, max_dim: int, exp_cap_level: float
) -> InequalityReport:
    rng = seed.rng()
    results, violations = [], []
    min_margin = math.inf
    for i in range(n_cases):
        m = int(rng.integers(1, max_dim + 1))
        mu = rng.dirichlet(np.ones(m))
        if kind == "young":
            g = rng.exponential(1.0, m)
            # a sprinkling of exact zeros exercises the 0 log 0 convention
            g = g * (rng.random(m) > 0.15)
            while not float(mu @ g) > 0.0:
                g = rng.exponential(1.0, m)
            h = rng.uniform(0.0, math.log(exp_cap_level), m)
            check = young_inequality_check(mu, g, h)
        else:
            f = np.exp(rng.normal(0.0, 2.0, m))
            check = jensen_check(mu, f)
        min_margin = min(min_margin, check.margin)
        res = NodeResult(
            node=Node(t=0.0, x=np.array([float(m)]), y=np.array([float(i)])),
            lhs=-check.margin,
            rhs_shape=1.0,
            slack=0.0,
            extra={"dim": m, "margin": check.margin},
        )
        results.append(res)
        if not check.holds:
            violations.append({"case": i, "dim": m, "margin": check.margin})
    claim = (
        "mu(g h) <= mu(g log g) + log mu(e^h) for probability mu, density g, bounded h"
        if kind == "young"
        else "mu(log f) <= log mu(f) for probability mu and positive f"
    )
    return InequalityReport(
        inequality_id=kind,
        claim=claim,
        spec_doc={"driver": "none", "kind": "finite_measure"},
        grid_meta={"n_cases": n_cases, "max_dim": max_dim},
        per_node=results,
        fitted_C=1.0,
        validation_C=None,
        excluded_nodes=0,
        seed_doc=_seed_doc(seed),
        mc_meta={"min_margin": min_margin},
        violations=violations,
    )


def young_suite(
    n_cases: int = 1000,
    seed: SeedSpec | None = None,
    max_dim: int = 20,
    exp_cap_level: float = 1e6,
) -> InequalityReport:
    """Randomized battery for the entropy Young inequality.

    Dirichlet weights, exponential densities with occasional exact zeros,
    and uniformly bounded exponents (capped at log of exp_cap_level so that
    e^h never overflows).  Any margin below -1e-12 is recorded as a
    violation.
    """
    return _finite_measure_suite("young", n_cases, seed or SeedSpec(0), max_dim, exp_cap_level)


def jensen_suite(
    n_cases: int = 1000, seed: SeedSpec | None = None, max_dim: int = 20
) -> InequalityReport:
    """Randomized battery for Jensen's inequality on finite measures."""
    return _finite_measure_suite("jensen", n_cases, seed or SeedSpec(0), max_dim, 1e6)
