import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from bvcalc.bv import BVFunction, derivative, verify_integration_by_parts
from bvcalc.cli import main as cli_main
from bvcalc.functional import evaluate
from bvcalc.measures import (
    CarrierRegistry,
    Domain,
    ScalarRadonMeasure,
    total_variation,
)
from bvcalc.oracle import oracle_1d
from bvcalc.scenarios import (
    RunConfig,
    ScenarioError,
    build_case_1d,
    carpet_holes,
    carpet_lower_bound,
    random_case_description,
    run,
    scenario_catalog,
)
from bvcalc.young import GeneralizedYoungMeasure, pairing


# ---------------------------------------------------------------------------
# catalog structure
# ---------------------------------------------------------------------------


def test_catalog_size_and_unique_ids():
    catalog = scenario_catalog()
    assert len(catalog) >= 10
    ids = [s.sid for s in catalog]
    assert len(set(ids)) == len(ids)
    required = {
        "sawtooth-oscillation",
        "ramp-concentration",
        "atom-absorbs-jump",
        "boundary-term-demo",
        "reshetnyak-ramp",
        "nonquasiconvex-violation",
        "sq-envelope-monotone",
        "example1",
        "example2",
        "x-dependent-lsc",
    }
    assert required <= set(ids)


def test_run_config_validation():
    with pytest.raises(ScenarioError):
        RunConfig(scenario="sawtooth-oscillation", resolution=4)
    with pytest.raises(ScenarioError):
        RunConfig(scenario="sawtooth-oscillation", jmax=4)
    with pytest.raises(ScenarioError):
        RunConfig(scenario="sawtooth-oscillation", tolerance=0.0)


def test_unknown_scenario_is_usage_error():
    with pytest.raises(ScenarioError):
        run(RunConfig(scenario="definitely-not-a-scenario"))
    assert cli_main(["run", "--scenario", "definitely-not-a-scenario"]) == 2


@pytest.mark.parametrize("sid", [s.sid for s in scenario_catalog()])
def test_every_scenario_passes_and_is_fast(sid, tmp_path):
    start = time.time()
    code, result = run(
        RunConfig(scenario=sid, resolution=128, jmax=64, output=str(tmp_path / sid))
    )
    elapsed = time.time() - start
    assert code == 0, [c.name for c in result.clauses if not c.passed]
    assert elapsed < 60.0
    assert (tmp_path / sid / "report.json").exists()


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------


def test_reports_byte_identical(tmp_path):
    config = dict(scenario="reshetnyak-ramp", resolution=64, jmax=32)
    run(RunConfig(output=str(tmp_path / "a"), **config))
    run(RunConfig(output=str(tmp_path / "b"), **config))
    a = (tmp_path / "a" / "report.json").read_bytes()
    b = (tmp_path / "b" / "report.json").read_bytes()
    assert a == b
    ta = (tmp_path / "a" / "tables" / "continuity_gaps.csv").read_bytes()
    tb = (tmp_path / "b" / "tables" / "continuity_gaps.csv").read_bytes()
    assert ta == tb


def test_report_embeds_config_and_hash(tmp_path):
    run(
        RunConfig(
            scenario="atom-absorbs-jump", resolution=64, jmax=16, output=str(tmp_path)
        )
    )
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"]["scenario"] == "atom-absorbs-jump"
    assert report["config"]["resolution"] == 64
    assert len(report["builder_hash"]) == 40
    assert report["passed"] is True


# ---------------------------------------------------------------------------
# 1D oracle
# ---------------------------------------------------------------------------


def test_oracle_trivial_formula_identity():
    # F = |.|, smooth u: integral |u' / a| a = integral |u'|
    case_u = {"breaks": [], "slopes": [2.0], "jumps": []}
    case_mu = {"poly": [1.5], "atoms": []}
    val = oracle_1d(case_u, case_mu, {"kind": "norm"})
    assert val == pytest.approx(2.0, rel=1e-12)


def test_oracle_zero_profile():
    val = oracle_1d(
        {"breaks": [], "slopes": [0.0], "jumps": []},
        {"poly": [1.0], "atoms": [[0.5, 2.0]]},
        {"kind": "area"},
    )
    # F(0) * mu(0,1) = 1 * (1 + 2)
    assert val == pytest.approx(3.0, rel=1e-12)


def test_oracle_matches_evaluate_on_fifty_random_cases():
    rng = np.random.default_rng(2024)
    start = time.time()
    worst = 0.0
    for _ in range(50):
        case = random_case_description(rng)
        u, spec = build_case_1d(case, resolution=40000)
        ours = evaluate(u, spec).total
        ref = oracle_1d(case["u"], case["mu"], case["F"])
        worst = max(worst, abs(ours - ref) / abs(ref))
    assert worst <= 1e-8
    assert time.time() - start < 30.0


def test_oracle_cli_roundtrip(tmp_path):
    case = {
        "u": {"breaks": [], "slopes": [1.0], "jumps": [[0.5, 1.0]]},
        "mu": {"poly": [2.0], "atoms": [[0.5, 1.0]]},
        "F": {"kind": "norm"},
        "domain": [0.0, 1.0],
    }
    path = tmp_path / "case.json"
    path.write_text(json.dumps(case))
    out = subprocess.run(
        [sys.executable, "-m", "bvcalc.cli", "oracle", "--case", str(path)],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0
    assert json.loads(out.stdout)["value"] == pytest.approx(2.0, rel=1e-10)


# ---------------------------------------------------------------------------
# carpet construction
# ---------------------------------------------------------------------------


def test_carpet_hole_area_approaches_half():
    total = sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in carpet_holes(6))
    # removed area = sum over levels of (1/2) (1/9) (8/9)^(m-1) -> 1/2
    expected = 0.5 * (1.0 - (8.0 / 9.0) ** 6)
    assert total == pytest.approx(expected, rel=1e-12)
    assert total < 0.5


def test_carpet_holes_disjoint():
    holes = carpet_holes(3)
    for i in range(len(holes)):
        for j in range(i + 1, len(holes)):
            x0, x1, y0, y1 = holes[i]
            a0, a1, b0, b1 = holes[j]
            overlap = max(0.0, min(x1, a1) - max(x0, a0)) * max(
                0.0, min(y1, b1) - max(y0, b0)
            )
            assert overlap == 0.0


def test_carpet_bound_depth0_analytic():
    # no holes: min over c of the integral of |x - c| over the unit square
    # is attained at c = 1/2 with value 1/4
    bound, c = carpet_lower_bound(0)
    assert bound == pytest.approx(0.25, abs=1e-9)
    assert c == pytest.approx(0.5, abs=1e-6)


# ---------------------------------------------------------------------------
# declarative JSON interfaces
# ---------------------------------------------------------------------------


def test_scalar_measure_from_json():
    d = Domain((0.0, 1.0), 128)
    mu = ScalarRadonMeasure.from_json(
        d,
        {"density": "1 + x", "atoms": [[0.5, 2.0]]},
        dominates_lebesgue=True,
    )
    assert mu.mass() == pytest.approx(1.5 + 2.0, rel=1e-12)


def test_scalar_measure_from_json_with_segment():
    d = Domain(((0.0, 1.0), (0.0, 1.0)), 16)
    mu = ScalarRadonMeasure.from_json(
        d,
        {
            "density": "0",
            "segments": [
                {"id": "mid", "from": [0.5, 0.0], "to": [0.5, 1.0], "density": "2"}
            ],
        },
    )
    assert mu.mass() == pytest.approx(2.0, rel=1e-12)


def test_scalar_measure_from_json_cell_array():
    d = Domain((0.0, 1.0), 4)
    mu = ScalarRadonMeasure.from_json(d, {"density": [1.0, 2.0, 3.0, 4.0]})
    assert mu.mass() == pytest.approx(2.5, rel=1e-12)


def test_bv_function_from_json():
    d = Domain((0.0, 1.0), 128)
    reg = CarrierRegistry()
    reg.register_point("jmp", (0.5,))
    u = BVFunction.from_json(
        d,
        {
            "pieces": [{"region": [0.0, 1.0], "u": ["x + (x > 0.5)"], "grad": ["1"]}],
            "jumps": [{"carrier": "jmp", "plus": ["x + 1"], "minus": ["x"]}],
            "trace": ["x + (x > 0.5)"],
            "breaks": [0.5],
        },
        registry=reg,
    )
    Du = derivative(u)
    assert total_variation(Du) == pytest.approx(2.0, rel=1e-12)
    from bvcalc.bv import random_polynomial_test

    assert verify_integration_by_parts(u, random_polynomial_test(d, seed=4)) < 1e-8


def test_young_measure_from_json():
    d = Domain((0.0, 1.0), 64)
    reg = CarrierRegistry()
    mu = ScalarRadonMeasure(
        d, density=lambda n: np.ones(len(n)), registry=reg, dominates_lebesgue=True
    )
    nu = GeneralizedYoungMeasure.from_json(
        d,
        {
            "nu": [{"atoms": [[[[-1.0]], 0.5], [[[1.0]], 0.5]]}],
            "lambda": {"atoms": [[0.5, 1.0]]},
            "nu_inf": [{"atoms": [[[[1.0]], 1.0]]}],
        },
        mu,
        registry=reg,
    )
    from bvcalc.integrands import make_norm

    # mean |A| against mu plus recession mass on lambda
    assert pairing(make_norm(), nu) == pytest.approx(1.0 + 1.0, rel=1e-12)


def test_sawtooth_scenario_cross_oracle():
    # the final sawtooth element, described independently for the oracle
    d = Domain((0.0, 1.0), 512)
    reg = CarrierRegistry()
    from bvcalc.bv import sawtooth_1d
    from bvcalc.functional import FunctionalSpec
    from bvcalc.integrands import make_norm

    j = 32
    u = sawtooth_1d(d, j, registry=reg)
    mu = ScalarRadonMeasure(
        d, density=lambda n: np.ones(len(n)), registry=reg, dominates_lebesgue=True
    )
    ours = evaluate(u, FunctionalSpec(make_norm(), mu, d)).total
    breaks = [k / (2 * j) for k in range(1, 2 * j)]
    slopes = [1.0 if k % 2 == 0 else -1.0 for k in range(2 * j)]
    ref = oracle_1d(
        {"breaks": breaks, "slopes": slopes, "jumps": []},
        {"poly": [1.0], "atoms": []},
        {"kind": "norm"},
    )
    assert abs(ours - ref) / abs(ref) <= 1e-8


def test_ramp_scenario_cross_oracle():
    d = Domain((0.0, 1.0), 512)
    reg = CarrierRegistry()
    from bvcalc.bv import ramp_1d
    from bvcalc.functional import FunctionalSpec
    from bvcalc.integrands import make_norm, x_modulated

    j = 64
    u = ramp_1d(d, 0.0, 1.0 / j, registry=reg)
    mu = ScalarRadonMeasure(
        d, density=lambda n: np.ones(len(n)), registry=reg, dominates_lebesgue=True
    )
    ours = evaluate(u, FunctionalSpec(x_modulated(make_norm()), mu, d)).total
    ref = oracle_1d(
        {"breaks": [0.0, 1.0 / j], "slopes": [0.0, float(j), 0.0], "jumps": []},
        {"poly": [1.0], "atoms": []},
        {"kind": "norm", "modulated": True},
    )
    assert abs(ours - ref) / abs(ref) <= 1e-8
