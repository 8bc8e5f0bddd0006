import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gicblock.acopf import (
    AcModel,
    OpfOptions,
    _integral_patterns,
    branch_flow,
    certificate,
    objective_gen_cost,
    objective_shed_cost,
    solve_acpf,
    solve_coupled,
    solve_opf,
    solve_pf,
)
from gicblock.case import Generator, Load, parse_case
from gicblock.coupling import apply_field
from gicblock.dcnet import build_dc_network
from gicblock.errors import InfeasibleError
from gicblock.gic import solve_gic

from oracles import newton_two_bus

CERT = 1e-8


def two_bus_doc(p=0.5, q=0.0, g=1.0, b=-10.0, vmin=0.9, vmax=1.1):
    return {
        "name": "two-bus",
        "network": {
            "substations": [{"id": "A", "latitude": 40.0, "longitude": -90.0, "grounding_r": 0.2}],
            "busses": [
                {"id": "1", "base_kv": 20.0, "v_min": vmin, "v_max": vmax, "is_slack": True, "substation": "A"},
                {"id": "2", "base_kv": 20.0, "v_min": vmin, "v_max": vmax, "is_slack": False, "substation": "A"},
            ],
            "branches": [{"id": "1", "from_bus": "1", "to_bus": "2", "g": g, "b": b, "b_sh": 0.0,
                          "s_max": 10.0, "theta_min": -30.0, "theta_max": 30.0, "status": True,
                          "r_dc_per_phase": 1.0, "kind": "line"}],
            "transformers": [],
            "generators": [{"id": "G", "bus": "1", "p_min": 0.0, "p_max": 5.0, "q_min": -5.0,
                            "q_max": 5.0, "cost_c0": 0.0, "cost_c1": 1.0, "cost_c2": 0.0,
                            "status": True, "pg": 0.0, "vg": 1.0}],
            "loads": [{"id": "D", "bus": "2", "p_d": p, "q_d": q, "shed_cost": 1.0, "sheddable": True}],
            "shunts": [],
        },
        "gmd": {"magnitude": 0.0, "direction": 0.0},
        "candidates": [],
    }


# branch flow ----------------------------------------------------------------


def test_branch_flow_flat_no_p():
    pf, qf, pt, qt = branch_flow(1.0, 1.0, 0.0, 0.0, 3.0, -10.0, 0.0)
    assert pf == 0 and pt == 0


def test_branch_flow_charging():
    pf, qf, pt, qt = branch_flow(1.0, 1.0, 0.0, 0.0, 1.0, -10.0, 0.2)
    # -(b + b_sh/2) v^2 + b v^2 leaves the charging term alone
    assert qf == pytest.approx(-0.1) and qt == pytest.approx(-0.1)


def test_branch_flow_phasor_oracle():
    g, b, vj, vk, d = 1.0, -5.0, 1.05, 0.98, 0.05
    Vj = vj * np.exp(1j * d)
    Vk = vk
    y = complex(g, b)
    s_fr = Vj * np.conj(y * (Vj - Vk))
    s_to = Vk * np.conj(y * (Vk - Vj))
    pf, qf, pt, qt = branch_flow(vj, vk, d, 0.0, g, b, 0.0)
    assert (pf, qf, pt, qt) == pytest.approx((s_fr.real, s_fr.imag, s_to.real, s_to.imag), abs=1e-14)


@given(st.floats(0.8, 1.2), st.floats(0.8, 1.2), st.floats(-0.5, 0.5), st.floats(0, 5),
       st.floats(-30, -1), st.floats(0, 1))
def test_branch_flow_phasor_property(vj, vk, d, g, b, bsh):
    Vj, Vk = vj * np.exp(1j * d), complex(vk)
    y, ysh = complex(g, b), 0.5j * bsh
    s_fr = Vj * np.conj(y * (Vj - Vk) + ysh * Vj)
    s_to = Vk * np.conj(y * (Vk - Vj) + ysh * Vk)
    out = branch_flow(vj, vk, d, 0.0, g, b, bsh)
    assert out == pytest.approx((s_fr.real, s_fr.imag, s_to.real, s_to.imag), abs=1e-12)


# power flow -----------------------------------------------------------------


def test_two_bus_newton_oracle():
    c = parse_case(two_bus_doc())
    sol = solve_pf(c)
    v, th = newton_two_bus(0.5, 0.0, 1.0, -10.0)
    assert sol.v["2"] == pytest.approx(v, abs=1e-8)
    assert sol.theta["2"] == pytest.approx(th, abs=1e-8)
    assert sol.theta["1"] == 0.0
    assert certificate(c, sol)["max_residual"] <= CERT


def test_two_bus_opf_matches_pf():
    c = parse_case(two_bus_doc())
    pf = solve_pf(c)
    opf = solve_acpf(c, opts=OpfOptions())
    assert opf.converged
    # with one generator and a fixed load, cost minimization only moves the slack voltage
    assert opf.p_g["G"] == pytest.approx(opf.p_fr["1"], abs=1e-8)
    cert = certificate(c, opf)
    assert cert["max_residual"] <= CERT and cert["bound_violation"] <= CERT
    assert opf.objective <= objective_gen_cost(pf, c) + 1e-8


def test_zero_load_flat():
    c = parse_case(two_bus_doc(p=0.0))
    sol = solve_pf(c)
    assert sol.v["2"] == pytest.approx(1.0, abs=1e-10)
    assert sol.p_g["G"] == pytest.approx(0.0, abs=1e-10)


def test_pseudo_load_draws_reactive_power():
    c = parse_case(two_bus_doc())
    base = solve_pf(c)
    loaded = solve_pf(c, {"2": 0.3})
    assert loaded.v["2"] < base.v["2"]
    assert loaded.q_g["G"] > base.q_g["G"]
    assert certificate(c, loaded)["max_residual"] <= CERT


def _short_of_power():
    doc = two_bus_doc(p=0.5)
    doc["network"]["generators"][0]["p_max"] = 0.3
    return parse_case(doc)


def test_opf_binary_shed_when_short():
    c = _short_of_power()
    sol = solve_opf(c, {"2": 0.1}, OpfOptions(objective="shed-cost", shed="binary"))
    assert sol.z_d["D"] == 0.0
    assert objective_shed_cost(sol, c.loads) == pytest.approx(0.5)
    assert certificate(c, sol)["max_residual"] <= CERT


def test_opf_continuous_shed_fraction():
    c = _short_of_power()
    sol = solve_opf(c, None, OpfOptions(objective="shed-cost", shed="continuous"))
    # served power equals generation less losses
    assert 0.5 < sol.z_d["D"] < 0.6
    assert certificate(c, sol)["max_residual"] <= CERT


def test_opf_infeasible_without_shedding():
    with pytest.raises(InfeasibleError) as exc:
        solve_opf(_short_of_power(), None, OpfOptions())
    assert "total_gen_pmax_pu" in exc.value.report


def test_integral_patterns():
    lb, ub = np.zeros(3), np.ones(3)
    pats = _integral_patterns(lb, ub, {0: 1.0}, [(np.array([-1.0, -1.0, -1.0]), -2.0)])
    assert sorted(pats) == [(1.0, 0.0, 1.0), (1.0, 1.0, 0.0), (1.0, 1.0, 1.0)]


# bundled cases ---------------------------------------------------------------


@pytest.mark.parametrize("name", ["b4gic", "epri21"])
def test_bundled_pf_without_gic_certified(name, request):
    c = request.getfixturevalue(name)
    sol = solve_pf(c)
    assert sol.converged
    cert = certificate(c, sol)
    assert cert["max_residual"] <= CERT
    assert all(sol.theta[b.id] == 0.0 for b in c.busses if b.is_slack)


def test_b4gic_needs_a_blocker(b4gic):
    from gicblock.gic import BlockerConfig

    net = apply_field(build_dc_network(b4gic), b4gic.gmd)
    opts = OpfOptions(objective="shed-cost", shed="binary")
    with pytest.raises(InfeasibleError):
        solve_coupled(b4gic, solve_gic(net, case=b4gic), opts, exact=True)
    gic = solve_gic(net, BlockerConfig({"n:T1"}), case=b4gic)
    sol = solve_coupled(b4gic, gic, opts, exact=True)
    assert sol.load_met(b4gic) == 1.0
    assert certificate(b4gic, sol)["max_residual"] <= CERT


def test_coupled_iteration_reaches_exact(b4gic):
    c = b4gic.with_field(magnitude=2.0)
    net = apply_field(build_dc_network(c), c.gmd)
    gic = solve_gic(net, case=c)
    opts = OpfOptions(mode="pf")
    exact = solve_coupled(c, gic, opts, exact=True)
    it = solve_coupled(c, gic, opts, iterate=True, tol=1e-12)
    assert it.stats["coupling_rounds"] > 1
    assert it.v["3"] == pytest.approx(exact.v["3"], abs=1e-9)


def test_monotone_in_coupling(b4gic):
    """More GIC reactive loss never raises the worst high-side voltage."""
    prev = None
    for mag in (0.0, 1.0, 2.0, 3.0):
        c = b4gic.with_field(magnitude=mag)
        gic = solve_gic(apply_field(build_dc_network(c), c.gmd), case=c)
        v = solve_coupled(c, gic, OpfOptions(mode="pf"), exact=True).v["3"]
        if prev is not None:
            assert v <= prev + 1e-12
        prev = v


# objectives -----------------------------------------------------------------


class _Sol:
    def __init__(self, p_g=None, z_d=None):
        self.p_g = p_g or {}
        self.z_d = z_d or {}


def _gen(gid, c0, c1, c2):
    return Generator(gid, "1", 0, 10, -1, 1, c0, c1, c2, True)


class _Case:
    def __init__(self, gens):
        self.generators = gens


def test_gen_cost_examples():
    assert objective_gen_cost(_Sol({"a": 3.0}), _Case([_gen("a", 0, 0, 0)])) == 0
    assert objective_gen_cost(_Sol({"a": 2.0}), _Case([_gen("a", 1, 2, 3)])) == 17
    split = objective_gen_cost(_Sol({"a": 1.0, "b": 1.0}), _Case([_gen("a", 1, 2, 3), _gen("b", 1, 2, 3)]))
    assert split == 12 < 17


def test_shed_cost_examples():
    loads = [Load("a", "1", 0.5, 0.1, 2.0), Load("b", "1", -1.0, 0.0, 3.0)]
    assert objective_shed_cost(_Sol(z_d={"a": 1, "b": 1}), loads) == 0
    assert objective_shed_cost(_Sol(z_d={"a": 0, "b": 1}), loads) == 1.0
    assert objective_shed_cost(_Sol(z_d={"a": 0, "b": 0}), loads) == 4.0


def test_options_validated():
    with pytest.raises(ValueError):
        OpfOptions(tol=0)
    with pytest.raises(ValueError):
        OpfOptions(shed="sometimes")
