import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvcalc.measures import (
    CarrierRegistry,
    DecompositionError,
    Domain,
    MatrixRadonMeasure,
    MeasureError,
    ScalarRadonMeasure,
    absolutely_continuous_part,
    area_functional,
    measure_distance,
    mutually_singular,
    pair_with_test_function,
    rn_decompose,
    total_variation,
    zero_matrix_measure,
)


def interval(resolution=128):
    return Domain((0.0, 1.0), resolution)


def unit_square(resolution=32):
    return Domain(((0.0, 1.0), (0.0, 1.0)), resolution)


def ones_density(shape):
    def fn(nodes):
        return np.ones((len(nodes),) + shape)

    return fn


# ---------------------------------------------------------------------------
# total_variation
# ---------------------------------------------------------------------------


def test_total_variation_zero_measure():
    assert total_variation(zero_matrix_measure(interval(), (1, 1))) == 0.0


def test_total_variation_direct_sum_1d():
    reg = CarrierRegistry()
    gamma = MatrixRadonMeasure(
        interval(),
        (1, 1),
        density=ones_density((1, 1)),
        atoms=(((0.5,), [[2.0]]),),
        registry=reg,
    )
    assert total_variation(gamma) == pytest.approx(3.0, abs=1e-12)


def brute_force_cell_tv_2d(density_norm, refine):
    """Independent oracle: plain cell sum of |density| on a refine x refine
    grid, no shared quadrature code."""
    h = 1.0 / refine
    total = 0.0
    xs = (np.arange(refine) + 0.5) * h
    for x1 in xs:
        row = density_norm(x1, (np.arange(refine) + 0.5) * h)
        total += float(np.sum(row)) * h * h
    return total


def test_total_variation_2d_matches_brute_force():
    # density A(x) = x1 * Id on the unit square, N = n = 2
    dom = unit_square(resolution=32)

    def density(nodes):
        eye = np.eye(2)[None, :, :]
        return nodes[:, 0][:, None, None] * eye

    gamma = MatrixRadonMeasure(dom, (2, 2), density=density)
    oracle = brute_force_cell_tv_2d(
        lambda x1, x2s: np.full(len(x2s), x1 * np.sqrt(2.0)), refine=4 * 32
    )
    assert total_variation(gamma) == pytest.approx(oracle, abs=1e-10)


def test_total_variation_region_and_empty_region():
    gamma = MatrixRadonMeasure(interval(), (1, 1), density=ones_density((1, 1)))
    assert total_variation(gamma, region=(0.25, 0.75)) == pytest.approx(0.5, abs=1e-12)
    assert total_variation(gamma, region=(0.3, 0.3 + 1e-300)) == pytest.approx(0.0, abs=1e-12)


def test_total_variation_segment_region_clipping():
    dom = unit_square()
    reg = CarrierRegistry()
    reg.register_segment("s", (0.5, 0.0), (0.5, 1.0))
    gamma = MatrixRadonMeasure(
        dom,
        (1, 2),
        carrier_parts=(("s", lambda p: np.tile([[1.0, 0.0]], (len(p), 1, 1))),),
        registry=reg,
    )
    assert total_variation(gamma) == pytest.approx(1.0, abs=1e-12)
    assert total_variation(gamma, region=((0.0, 1.0), (0.0, 0.25))) == pytest.approx(
        0.25, abs=1e-12
    )


# ---------------------------------------------------------------------------
# rn_decompose
# ---------------------------------------------------------------------------


def test_rn_decompose_atom_shared():
    # gamma = L^1 + delta_{1/2}, mu = 2 L^1 + delta_{1/2}
    dom = interval()
    reg = CarrierRegistry()
    mu = ScalarRadonMeasure(
        dom,
        density=lambda n: 2.0 * np.ones(len(n)),
        atoms=(((0.5,), 1.0),),
        registry=reg,
        dominates_lebesgue=True,
    )
    gamma = MatrixRadonMeasure(
        dom, (1, 1), density=ones_density((1, 1)), atoms=(((0.5,), [[1.0]]),), registry=reg
    )
    dec = rn_decompose(gamma, mu)
    nodes, _ = dom.cell_rule()
    assert np.allclose(dec.cell_fn(nodes), 0.5)
    assert len(dec.atom_values) == 1
    _, w, v = dec.atom_values[0]
    assert w == 1.0 and v[0, 0] == pytest.approx(1.0)
    assert dec.remainder.is_structurally_zero()


def test_rn_decompose_jump_not_seen_by_mu():
    dom = unit_square()
    reg = CarrierRegistry()
    reg.register_segment("jump", (0.5, 0.0), (0.5, 1.0))
    mu = ScalarRadonMeasure(
        dom, density=lambda n: np.ones(len(n)), registry=reg, dominates_lebesgue=True
    )
    gamma = MatrixRadonMeasure(
        dom,
        (1, 2),
        carrier_parts=(("jump", lambda p: np.tile([[1.0, 0.0]], (len(p), 1, 1))),),
        registry=reg,
    )
    dec = rn_decompose(gamma, mu)
    nodes, _ = dom.cell_rule()
    assert np.allclose(dec.cell_fn(nodes), 0.0)
    assert not dec.remainder.is_structurally_zero()
    assert total_variation(dec.remainder) == pytest.approx(1.0, abs=1e-12)
    assert mutually_singular(dec.remainder, _as_matrix(mu))


def test_rn_decompose_proportional():
    dom = interval()
    reg = CarrierRegistry()
    reg.register_point("pt", (0.25,))
    mu = ScalarRadonMeasure(
        dom,
        density=lambda n: 1.0 + n[:, 0],
        atoms=(((0.75,), 0.5),),
        carrier_parts=(("pt", lambda p: 2.0 * np.ones(len(p))),),
        registry=reg,
        dominates_lebesgue=True,
    )
    c = 3.0
    gamma = MatrixRadonMeasure(
        dom,
        (1, 1),
        density=lambda n: c * (1.0 + n[:, 0])[:, None, None],
        atoms=(((0.75,), [[c * 0.5]]),),
        carrier_parts=(("pt", lambda p: c * 2.0 * np.ones(len(p))[:, None, None]),),
        registry=reg,
    )
    dec = rn_decompose(gamma, mu)
    nodes, _ = dom.cell_rule()
    assert np.allclose(dec.cell_fn(nodes), c, rtol=1e-13)
    for _, _, v in dec.atom_values:
        assert v[0, 0] == pytest.approx(c, rel=1e-13)
    for cid, _, ratio in dec.carrier_fns:
        pts, _ = reg[cid].rule(dom.resolution)
        assert np.allclose(ratio(pts), c, rtol=1e-13)
    assert dec.remainder.is_structurally_zero()


def test_rn_decompose_requires_domination_flag():
    dom = interval()
    mu = ScalarRadonMeasure(dom, density=lambda n: np.ones(len(n)))
    gamma = MatrixRadonMeasure(dom, (1, 1), density=ones_density((1, 1)))
    with pytest.raises(DecompositionError):
        rn_decompose(gamma, mu)


def test_rn_decompose_rejects_vanishing_carrier_density():
    dom = unit_square()
    reg = CarrierRegistry()
    reg.register_segment("s", (0.5, 0.0), (0.5, 1.0))
    mu = ScalarRadonMeasure(
        dom,
        density=lambda n: np.ones(len(n)),
        carrier_parts=(("s", lambda p: np.maximum(p[:, 1] - 0.5, 0.0)),),
        registry=reg,
        dominates_lebesgue=True,
    )
    gamma = MatrixRadonMeasure(
        dom,
        (1, 2),
        carrier_parts=(("s", lambda p: np.tile([[1.0, 0.0]], (len(p), 1, 1))),),
        registry=reg,
    )
    with pytest.raises(DecompositionError):
        rn_decompose(gamma, mu)


def _as_matrix(mu):
    """Scalar measure viewed as a 1 x dim matrix measure (for the
    mutual-singularity helper in tests)."""
    dim = mu.domain.dim
    e = np.zeros((1, dim))
    e[0, 0] = 1.0

    def density(nodes):
        return np.asarray(mu.density_at(nodes))[:, None, None] * e[None]

    parts = tuple(
        (cid, (lambda p, _f=fn: np.asarray(_f(p))[:, None, None] * e[None]))
        for cid, fn in mu.carrier_parts
    )
    atoms = tuple((p, w * e) for p, w in mu.atoms) if dim == 1 else ()
    return MatrixRadonMeasure(
        mu.domain, (1, dim), density=density, carrier_parts=parts, atoms=atoms,
        registry=mu.registry, breaks=mu.breaks,
    )


def test_rn_reconstruction_and_tv_additivity():
    rng = np.random.default_rng(7)
    dom = interval()
    reg = CarrierRegistry()
    reg.register_point("p0", (0.3,))
    for _ in range(10):
        c0, c1 = rng.uniform(0.5, 2.0, size=2)
        mu = ScalarRadonMeasure(
            dom,
            density=lambda n, a=c0, b=c1: a + b * n[:, 0] ** 2,
            atoms=(((0.3,), float(rng.uniform(0.5, 2.0))),),
            registry=reg,
            dominates_lebesgue=True,
        )
        s0, s1 = rng.uniform(-2.0, 2.0, size=2)
        gamma = MatrixRadonMeasure(
            dom,
            (1, 1),
            density=lambda n, a=s0, b=s1: (a + b * n[:, 0])[:, None, None],
            atoms=(
                ((0.3,), [[float(rng.uniform(-1, 1))]]),
                ((0.7,), [[float(rng.uniform(-1, 1))]]),
            ),
            registry=reg,
        )
        dec = rn_decompose(gamma, mu)
        nodes, _ = dom.cell_rule()
        recon = dec.cell_fn(nodes) * np.asarray(mu.density_at(nodes))[:, None, None]
        assert np.allclose(recon, gamma.density_at(nodes), rtol=1e-12, atol=1e-15)
        ac = absolutely_continuous_part(dec)
        tv_sum = total_variation(ac) + total_variation(dec.remainder)
        assert tv_sum == pytest.approx(total_variation(gamma), rel=1e-12)
        assert mutually_singular(dec.remainder, _as_matrix(mu))


# ---------------------------------------------------------------------------
# area functional
# ---------------------------------------------------------------------------


def test_area_zero_density_is_volume():
    gamma = zero_matrix_measure(interval(), (1, 1))
    assert area_functional(gamma) == pytest.approx(1.0, abs=1e-12)


def test_area_constant_density():
    gamma = MatrixRadonMeasure(interval(), (1, 1), density=ones_density((1, 1)))
    assert area_functional(gamma) == pytest.approx(np.sqrt(2.0), abs=1e-12)


def test_area_with_jump_segment():
    dom = unit_square()
    reg = CarrierRegistry()
    reg.register_segment("s", (0.5, 0.0), (0.5, 1.0))
    gamma = MatrixRadonMeasure(
        dom,
        (1, 2),
        carrier_parts=(("s", lambda p: np.tile([[2.0, 0.0]], (len(p), 1, 1))),),
        registry=reg,
    )
    assert area_functional(gamma) == pytest.approx(3.0, abs=1e-12)


def test_area_bounds_against_tv():
    rng = np.random.default_rng(3)
    dom = interval()
    for _ in range(5):
        coef = rng.uniform(-2, 2, size=3)
        gamma = MatrixRadonMeasure(
            dom,
            (1, 1),
            density=lambda n, c=coef: (c[0] + c[1] * n[:, 0] + c[2] * n[:, 0] ** 2)[
                :, None, None
            ],
            atoms=(((0.4,), [[float(rng.uniform(-1, 1))]]),),
        )
        tv = total_variation(gamma)
        vol = dom.volume()
        area = area_functional(gamma)
        assert area >= max(tv, vol) - 1e-12
        assert area <= vol + tv + 1e-12


# ---------------------------------------------------------------------------
# mutual singularity
# ---------------------------------------------------------------------------


def test_mutually_singular_cases():
    dom = interval()
    leb = MatrixRadonMeasure(dom, (1, 1), density=ones_density((1, 1)))
    dirac = MatrixRadonMeasure(dom, (1, 1), atoms=(((0.0,), [[1.0]]),))
    twol = MatrixRadonMeasure(dom, (1, 1), density=lambda n: 2 * np.ones((len(n), 1, 1)))
    assert mutually_singular(leb, dirac)
    assert not mutually_singular(leb, twol)

    dom2 = unit_square()
    reg = CarrierRegistry()
    reg.register_segment("s1", (0.25, 0.0), (0.25, 1.0))
    reg.register_segment("s2", (0.75, 0.0), (0.75, 1.0))
    part = lambda p: np.tile([[1.0, 0.0]], (len(p), 1, 1))
    m1 = MatrixRadonMeasure(dom2, (1, 2), carrier_parts=(("s1", part),), registry=reg)
    m2 = MatrixRadonMeasure(dom2, (1, 2), carrier_parts=(("s2", part),), registry=reg)
    assert mutually_singular(m1, m2)
    assert not mutually_singular(m1, m1)


# ---------------------------------------------------------------------------
# pairing
# ---------------------------------------------------------------------------


def bump_field(direction):
    direction = np.asarray(direction, dtype=float)

    def phi(nodes):
        prof = np.prod(nodes * (1.0 - nodes), axis=1) * 16.0
        return prof[:, None, None] * direction[None]

    return phi


def test_pairing_zero_field():
    gamma = MatrixRadonMeasure(interval(), (1, 1), density=ones_density((1, 1)))
    assert pair_with_test_function(gamma, lambda n: np.zeros((len(n), 1, 1))) == 0.0


def test_pairing_single_atom():
    gamma = MatrixRadonMeasure(interval(), (1, 1), atoms=(((0.25,), [[2.0]]),))
    phi = bump_field([[1.0]])
    expected = 16.0 * 0.25 * 0.75 * 2.0
    assert pair_with_test_function(gamma, phi) == pytest.approx(expected, abs=1e-12)


def test_pairing_matches_direct_sum_oracle_1d():
    # oracle: direct midpoint sum over the same partition plus the explicit
    # atom term, sharing no quadrature code with the measures module
    rng = np.random.default_rng(11)
    m = 4096
    dom = Domain((0.0, 1.0), m)
    coef = rng.uniform(-1, 1, size=3)
    atom_x, atom_v = 0.6, 1.3
    gamma = MatrixRadonMeasure(
        dom,
        (1, 1),
        density=lambda n, c=coef: (c[0] + c[1] * n[:, 0] + c[2] * n[:, 0] ** 2)[:, None, None],
        atoms=(((atom_x,), [[atom_v]]),),
    )
    phi = bump_field([[1.0]])

    oracle = 0.0
    for k in range(m):
        x = (k + 0.5) / m
        oracle += 16.0 * x * (1.0 - x) * (coef[0] + coef[1] * x + coef[2] * x * x) / m
    oracle += 16.0 * atom_x * (1 - atom_x) * atom_v

    assert pair_with_test_function(gamma, phi) == pytest.approx(oracle, abs=1e-10)


def test_pairing_rejects_nonvanishing_boundary_field():
    gamma = MatrixRadonMeasure(interval(), (1, 1), density=ones_density((1, 1)))
    with pytest.raises(MeasureError):
        pair_with_test_function(gamma, lambda n: np.ones((len(n), 1, 1)))


@settings(max_examples=30, deadline=None)
@given(
    a=st.floats(-2, 2),
    b=st.floats(-2, 2),
    s=st.floats(-3, 3),
)
def test_pairing_linear_in_measure(a, b, s):
    dom = Domain((0.0, 1.0), 64)
    phi = bump_field([[1.0]])
    g1 = MatrixRadonMeasure(dom, (1, 1), density=lambda n: (a + 0 * n[:, 0])[:, None, None])
    g2 = MatrixRadonMeasure(dom, (1, 1), density=lambda n: (b * n[:, 0])[:, None, None])
    combo = MatrixRadonMeasure(
        dom, (1, 1), density=lambda n: (a + s * b * n[:, 0])[:, None, None]
    )
    lhs = pair_with_test_function(combo, phi)
    rhs = pair_with_test_function(g1, phi) + s * pair_with_test_function(g2, phi)
    assert lhs == pytest.approx(rhs, abs=1e-10)


# ---------------------------------------------------------------------------
# quadrature behaviour
# ---------------------------------------------------------------------------


def test_refinement_first_order_on_smooth_density():
    def make(resolution):
        dom = Domain((0.0, 1.0), resolution)
        return MatrixRadonMeasure(
            dom, (1, 1), density=lambda n: np.sin(3 * n[:, 0])[:, None, None]
        )

    exact = (1.0 - np.cos(3.0)) / 3.0  # integral of |sin(3x)| = sin on (0,1)
    errs = [abs(total_variation(make(r)) - exact) for r in (64, 128, 256, 512)]
    for e, r in zip(errs, (64, 128, 256, 512)):
        assert e <= 5.0 / r
    assert errs[-1] < errs[0]


def test_breakpoint_refinement_makes_piecewise_exact():
    dom = Domain((0.0, 1.0), 10)  # grid NOT aligned with the break at 1/3
    step = lambda n: np.where(n[:, 0] < 1.0 / 3.0, 2.0, 0.5)[:, None, None]
    aligned = MatrixRadonMeasure(dom, (1, 1), density=step, breaks=(1.0 / 3.0,))
    assert total_variation(aligned) == pytest.approx(2 / 3 + 0.5 * 2 / 3, abs=1e-14)


def test_measure_distance_matched_parts():
    dom = interval()
    reg = CarrierRegistry()
    g1 = MatrixRadonMeasure(
        dom, (1, 1), density=ones_density((1, 1)), atoms=(((0.5,), [[1.0]]),), registry=reg
    )
    g2 = MatrixRadonMeasure(
        dom, (1, 1), density=ones_density((1, 1)), atoms=(((0.5,), [[3.0]]),), registry=reg
    )
    assert measure_distance(g1, g2) == pytest.approx(2.0, abs=1e-12)
    assert measure_distance(g1, g1) == pytest.approx(0.0, abs=1e-14)


def test_domain_invariants():
    with pytest.raises(MeasureError):
        Domain((1.0, 1.0), 8)
    with pytest.raises(MeasureError):
        Domain((0.0, 1.0), 0)
    dom = unit_square()
    _, _, normals = dom.boundary_rule()
    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)
    nodes, weights = dom.cell_rule()
    assert np.sum(weights) == pytest.approx(dom.volume(), rel=1e-14)


def test_dominates_flag_enforced():
    dom = interval()
    with pytest.raises(MeasureError):
        ScalarRadonMeasure(
            dom, density=lambda n: n[:, 0], dominates_lebesgue=True, eps=0.01
        )
