import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gicblock.case import Transformer
from gicblock.coupling import apply_field
from gicblock.dcnet import DcEdge, DcNetwork, DcNode, build_dc_network, with_induced
from gicblock.errors import FloatingNetworkError, WindingCurrentError
from gicblock.gic import (
    BlockerConfig,
    effective_gic,
    ieff_magnitude,
    qloss,
    qloss_by_bus,
    solve_gic,
)
from gicblock.synthetic import chain_case, random_dc_network

from oracles import dense_nodal_solve


def _loop(e=130.0, g_line=1.0):
    """Line between two busses, a 0.1 ohm winding at each end, 10 S grounding at each neutral."""
    nodes = (
        DcNode("b:1", "bus-node", "1"),
        DcNode("b:2", "bus-node", "2"),
        DcNode("n:1", "neutral-node", "1", 10.0, 1.0),
        DcNode("n:2", "neutral-node", "2", 10.0, 1.0),
    )
    edges = (
        DcEdge("line", "b:1", "b:2", g_line, "line", None, induced_v=e),
        DcEdge("w1", "b:1", "n:1", 10.0, "winding-high", None),
        DcEdge("w2", "b:2", "n:2", 10.0, "winding-high", None),
    )
    return DcNetwork(nodes, edges)


def _xf(config, alpha=1.0, beta=None):
    return Transformer("T", config, alpha, {}, 1.8, 100.0, "h", "l", beta=beta)


# nodal solve -------------------------------------------------------------------


def test_loop_current_series_resistance():
    # 1 + 4 * 0.1 ohm in series
    sol = solve_gic(_loop())
    assert sol.current("line") == pytest.approx(130.0 / 1.4, rel=1e-12)


def test_loop_current_100a():
    # line trimmed to 0.9 ohm so the loop totals 1.3 ohm
    net = _loop(g_line=1 / 0.9)
    sol = solve_gic(net)
    assert sol.current("line") == pytest.approx(100.0, rel=1e-12)
    assert sol.neutral_ground_current("n:2") == pytest.approx(100.0, rel=1e-12)
    assert sol.neutral_ground_current("n:1") == pytest.approx(-100.0, rel=1e-12)
    assert np.allclose(sol.node_v, dense_nodal_solve(net), rtol=1e-12)


def test_loop_with_blocker_is_open():
    sol = solve_gic(_loop(), BlockerConfig({"n:2"}), on_floating="reference")
    assert sol.neutral_ground_current("n:2") == 0.0
    assert abs(sol.current("line")) <= 1e-12


def test_loop_blocker_opens_ground_return():
    sol = solve_gic(_loop(), BlockerConfig({"n:2"}))
    assert sol.ground_i[sol.node_ids.index("n:1")] == pytest.approx(0.0, abs=1e-12)


def test_both_blocked_raises_floating():
    with pytest.raises(FloatingNetworkError) as exc:
        solve_gic(_loop(), BlockerConfig({"n:1", "n:2"}))
    assert set(exc.value.nodes) == {"b:1", "b:2", "n:1", "n:2"}


def test_zero_field_zero_solution(epri21):
    net = apply_field(build_dc_network(epri21), epri21.with_field(magnitude=0.0).gmd)
    sol = solve_gic(net)
    assert not np.any(sol.node_v) and not np.any(sol.edge_i)


def test_out_of_service_path_floats():
    net = _loop()
    edges = tuple(e if e.id != "w1" else DcEdge(**{**e.__dict__, "in_service": False})
                  for e in net.edges)
    net = DcNetwork(net.nodes, edges)
    sol = solve_gic(net)
    assert abs(sol.current("line")) <= 1e-12


def test_non_candidate_blocker_rejected(b4gic):
    net = build_dc_network(b4gic)
    with pytest.raises(ValueError):
        solve_gic(net, BlockerConfig({"b:2"}))


@pytest.mark.parametrize("seed", range(40))
def test_random_networks_match_dense(seed):
    rng = np.random.default_rng(seed)
    net = random_dc_network(rng, int(rng.integers(5, 31)))
    sol = solve_gic(net)
    ref = dense_nodal_solve(net)
    assert np.linalg.norm(sol.node_v - ref) <= 1e-9 * np.linalg.norm(ref)
    assert sol.kcl_residual(net) <= 1e-9 * max(1.0, np.abs(sol.edge_i).max())


@pytest.mark.parametrize("name", ["b4gic", "epri21"])
def test_bundled_match_dense(name, request):
    case = request.getfixturevalue(name)
    net = apply_field(build_dc_network(case), case.gmd)
    for placed in [(), (case.candidates[0].node,)]:
        sol = solve_gic(net, BlockerConfig(placed))
        ref = dense_nodal_solve(net, frozenset(placed))
        assert np.allclose(sol.node_v, ref, rtol=1e-10, atol=1e-9)
        assert sol.kcl_residual(net) <= 1e-8
        for c in placed:
            assert sol.neutral_ground_current(c) == 0.0


def test_lead_current_splits_at_shared_ground(epri21):
    net = apply_field(build_dc_network(epri21), epri21.gmd)
    sol = solve_gic(net, case=epri21)
    g = sol.ground_i[sol.node_ids.index("g:2")]
    assert sol.lead_i["n:T2"] + sol.lead_i["n:T3"] == pytest.approx(g, rel=1e-10)
    blocked = solve_gic(net, BlockerConfig({"n:T2"}), case=epri21)
    assert blocked.lead_i["n:T2"] == 0.0
    assert blocked.i_eff["T3"] != pytest.approx(sol.i_eff["T3"])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.5, 2.0, -3.0]))
def test_superposition(seed, k):
    rng = np.random.default_rng(seed)
    net = random_dc_network(rng, 8)
    a = solve_gic(net)
    b = solve_gic(with_induced(net, [k * e.induced_v for e in net.edges]))
    assert np.allclose(b.edge_i, k * a.edge_i, rtol=1e-9, atol=1e-9)


def test_non_monotone_witness():
    """Blocking the west end of a 3-substation chain raises the middle transformer's GIC."""
    c = chain_case(3)
    net = apply_field(build_dc_network(c), c.gmd)
    before = solve_gic(net, case=c)
    after = solve_gic(net, BlockerConfig({"n:T1"}), case=c)
    assert before.i_eff["T2"] < 1e-6
    assert after.i_eff["T2"] > 100.0


def test_concurrent_solves_share_network(epri21):
    net = apply_field(build_dc_network(epri21), epri21.gmd)
    configs = [BlockerConfig({c.node}) for c in epri21.candidates]
    serial = [solve_gic(net, cfg, case=epri21).i_eff for cfg in configs]
    out = [None] * len(configs)

    def work(k):
        out[k] = solve_gic(net, configs[k], case=epri21).i_eff

    threads = [threading.Thread(target=work, args=(k,)) for k in range(len(configs))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert out == serial


# effective GIC -------------------------------------------------------------------


def test_effective_gic_examples():
    assert effective_gic(_xf("delta-delta"), {"high": 10.0}) == 10.0
    assert effective_gic(_xf("gwye-gwye", 2.0), {"high": 10.0, "low": 4.0}) == 12.0
    assert effective_gic(_xf("gwye-delta", 2.0), {"high": 10.0}) == 10.0
    assert effective_gic(_xf("auto", 3.0), {"series": 8.0, "common": 4.0}) == 7.0
    assert effective_gic(_xf("three-winding", 2.0, 4.0),
                         {"high": 1.0, "low": 2.0, "tertiary": 4.0}) == 3.0
    assert effective_gic(_xf("other"), {}) == 0.0


def test_effective_gic_missing_winding():
    with pytest.raises(WindingCurrentError):
        effective_gic(_xf("auto", 3.0), {"series": 8.0})


@pytest.mark.parametrize("x,y", [(-12, 12), (0, 0), (7, 7)])
def test_ieff_magnitude(x, y):
    assert ieff_magnitude(x) == y


# reactive loss ------------------------------------------------------------------


def test_qloss_example():
    xf = Transformer("T", "gwye-delta", 1.0, {}, 1.8, 100.0, "h", "l")
    expect_mvar = math.sqrt(2 / 3) * (100 / 345) * 1.8 * 100 * 1.0
    assert qloss(xf, 100.0, 1.0, 345.0, 100.0) == pytest.approx(expect_mvar / 100.0, rel=1e-12)
    assert qloss(xf, 0.0, 1.0, 345.0) == 0.0
    assert qloss(xf, 100.0, 2.0, 345.0) == pytest.approx(2 * qloss(xf, 100.0, 1.0, 345.0))


@given(st.floats(0, 1e3), st.floats(0.5, 1.5), st.floats(0.1, 10))
def test_qloss_bilinear(i, v, k):
    xf = Transformer("T", "gwye-delta", 1.0, {}, 1.8, 600.0, "h", "l")
    base = qloss(xf, i, v, 500.0)
    assert qloss(xf, k * i, v, 500.0) == pytest.approx(k * base, rel=1e-12, abs=1e-300)
    assert qloss(xf, i, k * v, 500.0) == pytest.approx(k * base, rel=1e-12, abs=1e-300)


def test_qloss_by_bus_sums_transformers(epri21):
    net = apply_field(build_dc_network(epri21), epri21.gmd)
    sol = solve_gic(net, case=epri21)
    by_bus = qloss_by_bus(epri21, sol)
    # T11 and T12 share high bus 18
    assert by_bus["18"] == pytest.approx(sol.q_loss["T11"] + sol.q_loss["T12"])
    assert sum(by_bus.values()) == pytest.approx(sum(sol.q_loss.values()))
