"""Piecewise-smooth BV functions with explicit jump sets.

A function is a list of C^1 pieces partitioning the box plus jump parts
along registered carriers, so its derivative measure is exact: gradient
cell density plus (trace difference) (x) normal on each jump carrier
(atoms at jump points in 1D).  Everything downstream then carries
quadrature error only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .measures import (
    CarrierRegistry,
    Domain,
    MatrixRadonMeasure,
    MeasureError,
    area_functional,
    merge_breaks,
    pair_with_test_function,
    total_variation,
)

TRACE_TOL = 1e-8


class BVError(ValueError):
    pass


class CatalogError(BVError):
    """Requested construction is outside the supported closed-form catalog."""


@dataclass
class Piece:
    """A sub-region with closed-form u and gradient expressions.

    ``region`` is a bounds tuple (closed box) or a boolean mask callable;
    ``breaks`` declares per-axis discontinuity locations of the gradient
    inside the piece so quadrature can refine there.
    """

    region: object
    u: object  # nodes (M, dim) -> (M, N)
    grad: object  # nodes (M, dim) -> (M, N, n)
    breaks: tuple = None

    def mask(self, nodes):
        if callable(self.region):
            return np.asarray(self.region(nodes), dtype=bool)
        region = np.asarray(self.region, dtype=float)
        if region.ndim == 1:
            region = region[None, :]
        m = np.ones(len(nodes), dtype=bool)
        for k, (lo, hi) in enumerate(region):
            m &= (nodes[:, k] >= lo) & (nodes[:, k] <= hi)
        return m


@dataclass
class Jump:
    """One-sided traces along a carrier; the normal points from the minus
    side to the plus side (orientation is the stored 1D sign for point
    carriers)."""

    carrier_id: str
    plus: object  # pts (M, dim) -> (M, N)
    minus: object
    orientation: float = 1.0  # 1D only


class BVFunction:
    def __init__(
        self,
        domain,
        N,
        pieces,
        jumps=(),
        trace=None,
        registry=None,
        breaks=None,
        structure=None,
        validate=True,
    ):
        self.domain = domain
        self.N = int(N)
        self.pieces = list(pieces)
        self.jumps = list(jumps)
        self.registry = registry if registry is not None else CarrierRegistry()
        self.trace = trace
        self.structure = structure or {}
        piece_breaks = [p.breaks for p in self.pieces]
        self.breaks = merge_breaks(domain.dim, breaks, *piece_breaks)
        if validate:
            self._validate()

    # -- evaluation ----------------------------------------------------------

    def _piece_index(self, nodes):
        idx = np.full(len(nodes), -1, dtype=int)
        for k, piece in enumerate(self.pieces):
            m = piece.mask(nodes) & (idx < 0)
            idx[m] = k
        return idx

    def value_at(self, nodes):
        nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
        idx = self._piece_index(nodes)
        if np.any(idx < 0):
            raise BVError("pieces do not cover all quadrature nodes")
        out = np.empty((len(nodes), self.N))
        for k, piece in enumerate(self.pieces):
            m = idx == k
            if np.any(m):
                out[m] = np.asarray(piece.u(nodes[m])).reshape(-1, self.N)
        return out

    def gradient_at(self, nodes):
        nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
        idx = self._piece_index(nodes)
        if np.any(idx < 0):
            raise BVError("pieces do not cover all quadrature nodes")
        out = np.empty((len(nodes), self.N, self.domain.dim))
        for k, piece in enumerate(self.pieces):
            m = idx == k
            if np.any(m):
                out[m] = np.asarray(piece.grad(nodes[m])).reshape(
                    -1, self.N, self.domain.dim
                )
        return out

    def value_from_inside(self, points, normals, offset_scale=1e-9):
        """Evaluate the piece expression seen when approaching ``points``
        from the direction of ``normals``; used for boundary traces."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        shift = offset_scale * max(hi - lo for lo, hi in self.domain.box)
        probe = points + shift * np.asarray(normals, dtype=float)
        idx = self._piece_index(probe)
        if np.any(idx < 0):
            raise BVError("no piece adjacent to the requested points")
        out = np.empty((len(points), self.N))
        for k, piece in enumerate(self.pieces):
            m = idx == k
            if np.any(m):
                out[m] = np.asarray(piece.u(points[m])).reshape(-1, self.N)
        return out

    def l1_norm(self):
        nodes, weights = self.domain.cell_rule(breaks=self.breaks)
        return float(np.dot(weights, np.linalg.norm(self.value_at(nodes), axis=1)))

    def l1_distance(self, other):
        breaks = merge_breaks(self.domain.dim, self.breaks, other.breaks)
        nodes, weights = self.domain.cell_rule(breaks=breaks)
        diff = self.value_at(nodes) - other.value_at(nodes)
        return float(np.dot(weights, np.linalg.norm(diff, axis=1)))

    # -- validation ----------------------------------------------------------

    def _validate(self):
        nodes, _ = self.domain.cell_rule(breaks=self.breaks)
        idx = self._piece_index(nodes)
        if np.any(idx < 0):
            raise BVError("pieces do not partition the domain at quadrature nodes")
        for jump in self.jumps:
            if jump.carrier_id not in self.registry:
                raise BVError(f"jump carrier {jump.carrier_id!r} not registered")
        self.check_trace_consistency()

    @staticmethod
    def from_json(domain, obj, registry=None):
        """Build from {"pieces": [{"region": bounds, "u": [expr...],
        "grad": [[expr...]...]}], "jumps": [{"carrier": id, "plus": [expr...],
        "minus": [expr...], "orientation": s}], "trace": [expr...]}.

        Jump carriers must already exist in the registry.
        """
        from . import expressions

        registry = registry if registry is not None else CarrierRegistry()
        dim = domain.dim
        pieces = []
        N = None
        for pdesc in obj["pieces"]:
            u_exprs = pdesc["u"] if isinstance(pdesc["u"], list) else [pdesc["u"]]
            g_rows = pdesc["grad"]
            if not isinstance(g_rows[0], list):
                g_rows = [g_rows]
            N = len(u_exprs)
            pieces.append(
                Piece(
                    region=pdesc.get("region", domain.box),
                    u=expressions.compile_vector(u_exprs, dim),
                    grad=expressions.compile_matrix(g_rows, dim),
                    breaks=pdesc.get("breaks"),
                )
            )
        jumps = []
        for jdesc in obj.get("jumps", ()):
            plus_exprs = jdesc["plus"] if isinstance(jdesc["plus"], list) else [jdesc["plus"]]
            minus_exprs = jdesc["minus"] if isinstance(jdesc["minus"], list) else [jdesc["minus"]]
            jumps.append(
                Jump(
                    jdesc["carrier"],
                    plus=expressions.compile_vector(plus_exprs, dim),
                    minus=expressions.compile_vector(minus_exprs, dim),
                    orientation=float(jdesc.get("orientation", 1.0)),
                )
            )
        trace = None
        if "trace" in obj:
            t_exprs = obj["trace"] if isinstance(obj["trace"], list) else [obj["trace"]]
            trace = expressions.compile_vector(t_exprs, dim)
        return BVFunction(
            domain,
            N,
            pieces,
            jumps=jumps,
            trace=trace,
            registry=registry,
            breaks=obj.get("breaks"),
        )

    def check_trace_consistency(self, tol=TRACE_TOL):
        """One-sided Richardson limits of the piece expressions must match
        the declared jump traces at carrier quadrature nodes."""
        for jump in self.jumps:
            carrier = self.registry[jump.carrier_id]
            pts, _ = carrier.rule(min(self.domain.resolution, 16))
            if carrier.kind == "point":
                eta = np.zeros((1, self.domain.dim))
                eta[0, 0] = jump.orientation
                eta = np.tile(eta, (len(pts), 1))
            else:
                eta = np.tile(np.asarray(carrier.normal), (len(pts), 1))
            for side, declared in (("plus", jump.plus), ("minus", jump.minus)):
                sgn = 1.0 if side == "plus" else -1.0
                limit = self._one_sided_limit(pts, sgn * eta)
                stated = np.asarray(declared(pts)).reshape(-1, self.N)
                err = np.max(np.abs(limit - stated)) if len(pts) else 0.0
                if err > tol:
                    raise BVError(
                        f"{side} trace on carrier {jump.carrier_id!r} inconsistent "
                        f"with pieces (error {err:.2e})"
                    )

    def _one_sided_limit(self, pts, directions):
        h = 1e-6 * max(hi - lo for lo, hi in self.domain.box)
        u1 = self._eval_offset(pts, directions, h)
        u2 = self._eval_offset(pts, directions, 0.5 * h)
        return 2.0 * u2 - u1  # Richardson: O(h^2) for C^1 pieces

    def _eval_offset(self, pts, directions, h):
        probe = pts + h * directions
        inside = self.domain.contains(probe)
        probe = np.where(inside[:, None], probe, pts)  # clamp boundary touches
        return self.value_at(probe)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def derivative(u):
    """The derivative measure: gradient cell density plus, per jump
    carrier, the line density (trace difference) (x) normal; in 1D the
    jump parts are atoms."""
    parts = []
    atoms = []
    for jump in u.jumps:
        carrier = u.registry[jump.carrier_id]
        if carrier.kind == "point":
            pt = np.asarray(carrier.point, dtype=float)
            delta = (
                np.asarray(jump.plus(pt[None, :]))[0] - np.asarray(jump.minus(pt[None, :]))[0]
            ).reshape(u.N, 1)
            atoms.append((pt, delta * jump.orientation))
        else:
            normal = np.asarray(carrier.normal, dtype=float)

            def part(pts, _j=jump, _nrm=normal):
                diff = np.asarray(_j.plus(pts)) - np.asarray(_j.minus(pts))
                return diff.reshape(len(pts), u.N)[:, :, None] * _nrm[None, None, :]

            parts.append((jump.carrier_id, part))
    return MatrixRadonMeasure(
        u.domain,
        (u.N, u.domain.dim),
        density=u.gradient_at,
        carrier_parts=tuple(parts),
        atoms=tuple(atoms),
        registry=u.registry,
        breaks=u.breaks,
    )


@dataclass
class SmoothTestFunction:
    """Scalar C^1 test function vanishing on the domain boundary."""

    value: object  # nodes -> (M,)
    grad: object  # nodes -> (M, dim)
    label: str = "test"


def random_polynomial_test(domain, seed=0, degree=2):
    """Random polynomial times the boundary-vanishing box factor; gradient
    is analytic, so both sides of the parts formula stay polynomial."""
    rng = np.random.default_rng(seed)
    bounds = domain.box
    if domain.dim == 1:
        coef = rng.uniform(-1, 1, size=degree + 1)
        (a, b), = bounds

        def q(x):
            return np.polynomial.polynomial.polyval(x, coef)

        def dq(x):
            return np.polynomial.polynomial.polyval(
                x, np.polynomial.polynomial.polyder(coef)
            )

        def value(nodes):
            x = nodes[:, 0]
            return q(x) * (x - a) * (b - x)

        def grad(nodes):
            x = nodes[:, 0]
            g = dq(x) * (x - a) * (b - x) + q(x) * ((b - x) - (x - a))
            return g[:, None]

        return SmoothTestFunction(value, grad, label=f"poly1d[{seed}]")
    coef = rng.uniform(-1, 1, size=(degree + 1, degree + 1))
    for p in range(degree + 1):
        for qd in range(degree + 1):
            if p + qd > degree:
                coef[p, qd] = 0.0
    (ax, bx), (ay, by) = bounds

    def q2(x, y):
        return np.polynomial.polynomial.polyval2d(x, y, coef)

    dcx = np.polynomial.polynomial.polyder(coef, axis=0)
    dcy = np.polynomial.polynomial.polyder(coef, axis=1)

    def value(nodes):
        x, y = nodes[:, 0], nodes[:, 1]
        return q2(x, y) * (x - ax) * (bx - x) * (y - ay) * (by - y)

    def grad(nodes):
        x, y = nodes[:, 0], nodes[:, 1]
        bump_x = (x - ax) * (bx - x)
        bump_y = (y - ay) * (by - y)
        gx = (
            np.polynomial.polynomial.polyval2d(x, y, dcx) * bump_x
            + q2(x, y) * ((bx - x) - (x - ax))
        ) * bump_y
        gy = (
            np.polynomial.polynomial.polyval2d(x, y, dcy) * bump_y
            + q2(x, y) * ((by - y) - (y - ay))
        ) * bump_x
        return np.column_stack([gx, gy])

    return SmoothTestFunction(value, grad, label=f"poly2d[{seed}]")


def verify_integration_by_parts(u, psi, comp_i=0, comp_j=0):
    """|LHS + RHS| for the parts formula

        integral (dpsi/dx_j) u^i dL^n  =  - integral psi dDu^i_j,

    both sides by per-cell Gauss quadrature refined at the declared
    breakpoints (exact for polynomial data on aligned pieces)."""
    gamma = derivative(u)
    nodes, weights = u.domain.gauss_cell_rule(breaks=u.breaks)
    lhs = float(
        np.dot(weights, np.asarray(psi.grad(nodes))[:, comp_j] * u.value_at(nodes)[:, comp_i])
    )
    rhs = float(
        np.dot(weights, np.asarray(psi.value(nodes)) * u.gradient_at(nodes)[:, comp_i, comp_j])
    )
    for cid, fn in gamma.carrier_parts:
        pts, w = gamma.carrier(cid).rule(u.domain.resolution)
        rhs += float(
            np.dot(w, np.asarray(psi.value(pts)) * np.asarray(fn(pts))[:, comp_i, comp_j])
        )
    for p, v in gamma.atoms:
        rhs += float(np.asarray(psi.value(p[None, :]))[0] * v[comp_i, comp_j])
    return abs(lhs + rhs)


def boundary_trace(u, validate=True, tol=TRACE_TOL):
    """The boundary trace as a callable on boundary points: the stored
    trace if present (validated against the interior limit), otherwise
    the interior limit of the piece expressions."""
    pts, _, normals = u.domain.boundary_rule()

    def from_inside(points):
        return u.value_from_inside(points, u.domain.inward_normal(points))

    if u.trace is None:
        return from_inside
    if validate:
        stated = np.asarray(u.trace(pts)).reshape(-1, u.N)
        err = np.max(np.abs(stated - from_inside(pts)))
        if err > tol:
            raise BVError(f"stored boundary trace inconsistent with pieces ({err:.2e})")
    return lambda points: np.asarray(u.trace(points)).reshape(-1, u.N)


def zero_extension(u, outer_domain, carrier_prefix=None):
    """Extend by zero to a strictly larger box; the derivative gains the
    boundary jump density trace (x) inward-normal along the old boundary."""
    for k, (lo, hi) in enumerate(u.domain.box):
        olo, ohi = outer_domain.box[k]
        if not (olo < lo and hi < ohi):
            raise BVError("outer domain must strictly contain the inner one")
    trace_fn = boundary_trace(u)
    prefix = carrier_prefix or f"bnd[{id(u) & 0xFFFF:x}]"
    carriers = u.registry.boundary_carriers(u.domain, prefix=prefix)
    inner_box = u.domain.box
    pieces = [
        Piece(
            region=_restrict_region(piece.region, inner_box),
            u=piece.u,
            grad=piece.grad,
            breaks=piece.breaks,
        )
        for piece in u.pieces
    ]
    zero = Piece(
        region=lambda nodes: np.ones(len(nodes), dtype=bool),
        u=lambda nodes: np.zeros((len(nodes), u.N)),
        grad=lambda nodes: np.zeros((len(nodes), u.N, outer_domain.dim)),
    )
    jumps = list(u.jumps)
    for carrier in carriers:
        if carrier.kind == "point":
            orientation = 1.0 if carrier.point[0] == inner_box[0][0] else -1.0
            jumps.append(
                Jump(
                    carrier.cid,
                    plus=lambda pts, _t=trace_fn: _t(pts),
                    minus=lambda pts: np.zeros((len(pts), u.N)),
                    orientation=orientation,
                )
            )
        else:
            jumps.append(
                Jump(
                    carrier.cid,
                    plus=lambda pts, _t=trace_fn: _t(pts),
                    minus=lambda pts: np.zeros((len(pts), u.N)),
                )
            )
    edge_breaks = tuple(tuple(b for b in (lo, hi)) for lo, hi in inner_box)
    return BVFunction(
        outer_domain,
        u.N,
        pieces + [zero],
        jumps=jumps,
        trace=lambda pts: np.zeros((len(np.atleast_2d(pts)), u.N)),
        registry=u.registry,
        breaks=merge_breaks(outer_domain.dim, u.breaks, edge_breaks),
        structure={"kind": "zero_extension", "inner": u},
        validate=False,  # nodes of the outer grid may probe across the old boundary
    )


def _restrict_region(region, box):
    if callable(region):
        def mask(nodes, _r=region, _b=box):
            m = np.asarray(_r(nodes), dtype=bool)
            for k, (lo, hi) in enumerate(_b):
                m &= (nodes[:, k] >= lo) & (nodes[:, k] <= hi)
            return m

        return mask
    region = np.asarray(region, dtype=float)
    if region.ndim == 1:
        region = region[None, :]
    clipped = [
        (max(lo, box[k][0]), min(hi, box[k][1])) for k, (lo, hi) in enumerate(region)
    ]
    return tuple(clipped)


# ---------------------------------------------------------------------------
# Convergence diagnostics
# ---------------------------------------------------------------------------


def matrix_test_fields(domain, shape, per_axis=4):
    """Boundary-vanishing bump fields times coordinate matrices; the finite
    dictionary standing in for all continuous test fields in weak*
    comparisons."""
    N, n = shape
    bumps = scalar_bumps(domain, per_axis)
    fields = []
    for bump in bumps:
        for i in range(N):
            for j in range(n):
                E = np.zeros((N, n))
                E[i, j] = 1.0

                def phi(nodes, _b=bump, _E=E):
                    return np.asarray(_b(nodes))[:, None, None] * _E[None]

                fields.append(phi)
    return fields


def scalar_bumps(domain, per_axis=12):
    """Tensor-product C^1 bumps, ``per_axis`` centers per axis."""
    axes = []
    for lo, hi in domain.box:
        centers = lo + (hi - lo) * (np.arange(1, per_axis + 1)) / (per_axis + 1)
        width = (hi - lo) / (per_axis + 1)  # edge bumps vanish exactly on the boundary
        axes.append((centers, width))

    def axis_bump(t, c, w):
        s = np.clip(np.abs(t - c) / w, 0.0, 1.0)
        return (1.0 - s**2) ** 2

    bumps = []
    if domain.dim == 1:
        for c in axes[0][0]:
            bumps.append(lambda nodes, _c=c, _w=axes[0][1]: axis_bump(nodes[:, 0], _c, _w))
    else:
        for cx in axes[0][0]:
            for cy in axes[1][0]:
                bumps.append(
                    lambda nodes, _cx=cx, _cy=cy, _wx=axes[0][1], _wy=axes[1][1]: axis_bump(
                        nodes[:, 0], _cx, _wx
                    )
                    * axis_bump(nodes[:, 1], _cy, _wy)
                )
    return bumps


@dataclass
class ConvergenceReport:
    js: tuple
    l1_gaps: tuple
    weak_star_gaps: tuple  # max over the dictionary, per j
    tv_gaps: tuple
    area_gaps: tuple

    def rows(self):
        return list(zip(self.js, self.l1_gaps, self.weak_star_gaps, self.tv_gaps, self.area_gaps))


def convergence_report(sequence, u, js=None, test_fields=None):
    """Per-index gaps diagnosing weak*, strict and area-strict convergence
    of u_j -> u: L^1 distance, dictionary pairing gaps of the derivative
    measures, total-variation gap, area-functional gap."""
    js = tuple(js) if js is not None else tuple(range(1, len(sequence) + 1))
    seq = [sequence[k] if not callable(sequence) else sequence(j) for k, j in enumerate(js)]
    gamma = derivative(u)
    fields = (
        test_fields
        if test_fields is not None
        else matrix_test_fields(u.domain, (u.N, u.domain.dim), per_axis=3)
    )
    tv_u = total_variation(gamma)
    area_u = area_functional(gamma)
    pair_u = [pair_with_test_function(gamma, phi) for phi in fields]
    l1, weak, tvs, areas = [], [], [], []
    for uj in seq:
        gj = derivative(uj)
        l1.append(uj.l1_distance(u))
        weak.append(
            max(
                abs(pair_with_test_function(gj, phi) - ref)
                for phi, ref in zip(fields, pair_u)
            )
        )
        tvs.append(abs(total_variation(gj) - tv_u))
        areas.append(abs(area_functional(gj) - area_u))
    return ConvergenceReport(js, tuple(l1), tuple(weak), tuple(tvs), tuple(areas))


# ---------------------------------------------------------------------------
# Catalog constructors
# ---------------------------------------------------------------------------


def piecewise_affine_1d(
    domain, breakpoints=(), slopes=(0.0,), start_value=0.0, jumps=(), registry=None,
    carrier_prefix="jump",
):
    """Continuous piecewise-affine profile plus jumps: ``slopes`` has one
    entry per interval of the breakpoint partition, ``jumps`` is a list of
    (position, height) pairs (positions need not be slope breakpoints)."""
    registry = registry if registry is not None else CarrierRegistry()
    (a, b), = domain.box
    breakpoints = tuple(sorted(float(t) for t in breakpoints))
    jumps = tuple((float(t), np.atleast_1d(np.asarray(d, dtype=float))) for t, d in jumps)
    N = len(jumps[0][1]) if jumps else np.atleast_1d(np.asarray(slopes[0])).shape[0]
    slopes = np.asarray(
        [np.broadcast_to(np.atleast_1d(s), (N,)) for s in slopes], dtype=float
    )
    if len(slopes) != len(breakpoints) + 1:
        raise BVError("need one slope per breakpoint interval")
    start = np.broadcast_to(np.atleast_1d(np.asarray(start_value, dtype=float)), (N,))

    edges = np.concatenate([[a], breakpoints, [b]])
    # continuous accumulation of the affine part
    left_vals = np.zeros((len(edges) - 1, N))
    left_vals[0] = start
    for k in range(1, len(edges) - 1):
        left_vals[k] = left_vals[k - 1] + slopes[k - 1] * (edges[k] - edges[k - 1])

    jump_positions = np.array([t for t, _ in jumps]) if jumps else np.zeros(0)
    jump_heights = (
        np.stack([d for _, d in jumps]) if jumps else np.zeros((0, N))
    )

    def affine_part(x):
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(slopes) - 1)
        return left_vals[idx] + slopes[idx] * (x - edges[idx])[:, None]

    def value(nodes):
        x = nodes[:, 0]
        out = affine_part(x)
        for t, d in zip(jump_positions, jump_heights):
            out = out + (x > t)[:, None] * d[None, :]
        return out

    def grad(nodes):
        x = nodes[:, 0]
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx][:, :, None]

    jump_objs = []
    for k, (t, d) in enumerate(jumps):
        carrier = registry.register_point(f"{carrier_prefix}:{t:.12g}", (t,))

        def plus(pts, _t=t):
            base = affine_part(pts[:, 0])
            shift = sum(
                float(_s <= _t) * h[None, :]
                for _s, h in zip(jump_positions, jump_heights)
            )
            return base + shift

        def minus(pts, _t=t):
            base = affine_part(pts[:, 0])
            shift = sum(
                float(_s < _t) * h[None, :]
                for _s, h in zip(jump_positions, jump_heights)
            )
            return base + shift

        jump_objs.append(Jump(carrier.cid, plus, minus, orientation=1.0))

    structure = {
        "kind": "pw_affine_1d",
        "edges": edges,
        "slopes": slopes,
        "left_vals": left_vals,
        "jumps": jumps,
        "affine_part": affine_part,
    }
    piece = Piece(region=domain.box, u=value, grad=grad, breaks=(tuple(breakpoints) + tuple(jump_positions),))
    return BVFunction(
        domain,
        N,
        [piece],
        jumps=jump_objs,
        registry=registry,
        structure=structure,
    )


def heaviside_1d(domain, position=0.5, height=1.0, registry=None):
    return piecewise_affine_1d(
        domain, slopes=(0.0,), jumps=((position, (height,)),), registry=registry
    )


def ramp_1d(domain, position=0.0, width=1.0, height=1.0, registry=None):
    """Continuous ramp rising from 0 to ``height`` over [position,
    position + width]."""
    return piecewise_affine_1d(
        domain,
        breakpoints=(position, position + width),
        slopes=(0.0, height / width, 0.0),
        registry=registry,
    )


def sawtooth_1d(domain, j, registry=None):
    """Tent profile of period 1/j and amplitude 1/(2j), slopes exactly
    +-1; converges to zero in L^1 while |Du_j| stays at the box length."""
    (a, b), = domain.box
    length = b - a

    def value(nodes):
        t = np.mod((nodes[:, 0] - a) * j / length, 1.0)
        return (length / j) * np.minimum(t, 1.0 - t)[:, None]

    def grad(nodes):
        t = np.mod((nodes[:, 0] - a) * j / length, 1.0)
        return np.where(t < 0.5, 1.0, -1.0)[:, None, None]

    breaks = (tuple(a + length * k / (2 * j) for k in range(1, 2 * j)),)
    piece = Piece(region=domain.box, u=value, grad=grad, breaks=breaks)
    return BVFunction(
        domain,
        1,
        [piece],
        registry=registry if registry is not None else CarrierRegistry(),
        structure={"kind": "sawtooth", "j": j},
    )


def affine_2d(domain, matrix, offset=None, registry=None):
    G = np.asarray(matrix, dtype=float)
    N = G.shape[0]
    c = np.zeros(N) if offset is None else np.asarray(offset, dtype=float)

    def value(nodes):
        return nodes @ G.T + c[None, :]

    def grad(nodes):
        return np.tile(G[None], (len(nodes), 1, 1))

    piece = Piece(region=domain.box, u=value, grad=grad)
    return BVFunction(
        domain,
        N,
        [piece],
        registry=registry if registry is not None else CarrierRegistry(),
        structure={"kind": "affine_2d", "matrix": G, "offset": c},
    )


def vertical_step_2d(domain, threshold=0.5, height=1.0, registry=None, carrier_id=None):
    """Indicator-type step across the vertical line x_1 = threshold (scalar
    valued); the jump carrier is the full vertical segment."""
    registry = registry if registry is not None else CarrierRegistry()
    (ax, bx), (ay, by) = domain.box
    cid = carrier_id or f"vline:{threshold:.12g}"
    registry.register_segment(cid, (threshold, ay), (threshold, by), normal=(1.0, 0.0))
    left = Piece(
        region=((ax, threshold), (ay, by)),
        u=lambda nodes: np.zeros((len(nodes), 1)),
        grad=lambda nodes: np.zeros((len(nodes), 1, 2)),
    )
    right = Piece(
        region=((threshold, bx), (ay, by)),
        u=lambda nodes: np.full((len(nodes), 1), height),
        grad=lambda nodes: np.zeros((len(nodes), 1, 2)),
    )
    jump = Jump(
        cid,
        plus=lambda pts: np.full((len(pts), 1), height),
        minus=lambda pts: np.zeros((len(pts), 1)),
    )
    return BVFunction(
        domain,
        1,
        [left, right],
        jumps=[jump],
        registry=registry,
        breaks=((threshold,), ()),
        structure={"kind": "vertical_step", "threshold": threshold, "height": height},
    )


# ---------------------------------------------------------------------------
# Smooth approximation in the Dirichlet class
# ---------------------------------------------------------------------------


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _smoothstep_d(t):
    inside = (t > 0.0) & (t < 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * t * t * (1.0 - t) ** 2, 0.0)


def smooth_selected_jumps(u, widths):
    """Replace selected jumps of a 1D piecewise-affine catalog function by
    quintic transitions.  ``widths`` maps jump position -> transition width;
    jumps not listed stay as jumps."""
    structure = u.structure
    if structure.get("kind") != "pw_affine_1d":
        raise CatalogError("smooth approximation not in catalog for this function")
    jumps = structure["jumps"]
    affine_part = structure["affine_part"]
    smooth_data = [(t, d, widths[t]) for t, d in jumps if t in widths]
    kept = [(t, d) for t, d in jumps if t not in widths]

    def value(nodes):
        x = nodes[:, 0]
        out = affine_part(x)
        for t, d, w in smooth_data:
            theta = _smoothstep((x - t) / w + 0.5)
            out = out + theta[:, None] * d[None, :]
        for t, d in kept:
            out = out + (x > t)[:, None] * d[None, :]
        return out

    def grad(nodes):
        x = nodes[:, 0]
        edges = structure["edges"]
        slopes = structure["slopes"]
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(slopes) - 1)
        g = slopes[idx].copy()
        for t, d, w in smooth_data:
            dtheta = _smoothstep_d((x - t) / w + 0.5) / w
            g = g + dtheta[:, None] * d[None, :]
        return g[:, :, None]

    def continuous_part(x):
        # the rebuilt profile without the kept Heaviside terms
        out = affine_part(x)
        for t, d, w in smooth_data:
            out = out + _smoothstep((x - t) / w + 0.5)[:, None] * d[None, :]
        return out

    breaks = set(structure["edges"][1:-1])
    for t, _, w in smooth_data:
        breaks.update((t - 0.5 * w, t + 0.5 * w))
    jump_objs = []
    for t, d in kept:
        carrier = u.registry.register_point(f"jump:{t:.12g}", (t,))

        def plus_tr(pts, _t=t):
            x = pts[:, 0]
            out = continuous_part(x)
            for s, dd in kept:
                out = out + float(s <= _t) * dd[None, :]
            return out

        def minus_tr(pts, _t=t):
            x = pts[:, 0]
            out = continuous_part(x)
            for s, dd in kept:
                out = out + float(s < _t) * dd[None, :]
            return out

        jump_objs.append(Jump(carrier.cid, plus_tr, minus_tr, orientation=1.0))
        breaks.add(t)
    piece = Piece(region=u.domain.box, u=value, grad=grad, breaks=(tuple(sorted(breaks)),))
    new_structure = {
        # further smoothing passes are only supported when nothing was
        # smoothed here (grad reconstruction would miss the transitions)
        "kind": "pw_affine_1d" if not smooth_data else "smoothed_pw_affine",
        "base": u,
        "edges": structure["edges"],
        "slopes": structure["slopes"],
        "affine_part": continuous_part,
        "jumps": tuple(kept),
    }
    return BVFunction(
        u.domain,
        u.N,
        [piece],
        jumps=jump_objs,
        registry=u.registry,
        structure=new_structure,
    )


def smooth_dirichlet_approximation(u, j):
    """Catalog construction of a smooth approximation matching u near the
    boundary: each 1D jump is replaced by a quintic transition of width at
    most 1/(2j), so the area-functional gap decays like 1/j and the
    approximations share u's boundary values.

    Supported catalog: pieces without jumps (returned unchanged) and 1D
    piecewise-affine profiles with interior jumps.
    """
    if j < 1:
        raise BVError("approximation index must be >= 1")
    if not u.jumps:
        return u
    structure = u.structure
    if structure.get("kind") != "pw_affine_1d":
        raise CatalogError("smooth approximation not in catalog for this function")
    (a, b), = u.domain.box
    jumps = structure["jumps"]
    positions = sorted(t for t, _ in jumps)
    # transition widths: half-distance to neighbours/boundary, capped at 1/(2j)
    gaps = []
    for k, t in enumerate(positions):
        left = positions[k - 1] if k else a
        right = positions[k + 1] if k + 1 < len(positions) else b
        gaps.append(min(t - left, right - t))
    if min(gaps) <= 0:
        raise CatalogError("jump too close to the boundary for the collar construction")
    widths = {t: min(1.0 / (2 * j), g) for t, g in zip(positions, gaps)}
    return smooth_selected_jumps(u, widths)
