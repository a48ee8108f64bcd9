from __future__ import annotations

import itertools

import numpy as np
import pytest

from hopcast.oracle import solve_mp
from hopcast.overlay import (PEER_CAPACITIES, Configuration, OverlayGraph, complete_graph, example_graph,
                             is_connected_from_source, random_configuration, random_graph,
                             sample_capacities, toggle_configurations, toggle_graph)
from hopcast.ratecast import (SMALL_STEPS, Problem, SolverConfig, SolverState, assign_flows,
                              back_pressure, net_inflow, primal_dual_step, rate_upper_bound,
                              run_steps, select_neighbor, solve_rate)


def line_problem():
    # source 0 feeds 1 and 2; 1 and 2 are linked both ways
    g = OverlayGraph((10.0, 10.0, 10.0), (2, 2, 2), frozenset({(0, 1), (0, 2), (1, 2)}))
    return g, Problem.build(g, Configuration(g.pairs))


def with_lam(p, lam):
    s = SolverState.initial(p)
    return SolverState(s.z, np.asarray(lam, dtype=float), s.flows, s.phys)


def test_back_pressure_examples():
    g, p = line_problem()
    lam = np.zeros((3, 3))
    assert back_pressure(p, with_lam(p, lam), 1, 2) == 0.0
    lam[0] = [0.0, 3.0, 1.0]
    lam[1] = [0.0, 0.0, 2.0]
    assert back_pressure(p, with_lam(p, lam), 0, 1) == 3.0
    lam[1, 2], lam[2, 1] = 3.0, 1.0
    assert back_pressure(p, with_lam(p, lam), 1, 2) == 3.0
    with pytest.raises(KeyError):
        back_pressure(p, with_lam(p, lam), 1, 0)  # nothing flows into the source


def test_back_pressure_two_destination_example():
    # generic 4-node star: v=0 with lambda_v = {d1: 3, d2: 1}, u=3 with {d1: 1, d2: 2}
    g = OverlayGraph((1.0,) * 4, (3,) * 4, frozenset({(0, 1), (0, 2), (0, 3)}))
    p = Problem.build(g, Configuration(g.pairs))
    lam = np.zeros((4, 4))
    lam[0, 1], lam[0, 2] = 3.0, 1.0
    lam[3, 1], lam[3, 2] = 1.0, 2.0
    assert back_pressure(p, with_lam(p, lam), 0, 3) == 2.0
    lam[3] = lam[0]
    assert back_pressure(p, with_lam(p, lam), 0, 3) == 0.0


def test_select_neighbor():
    g = OverlayGraph((1.0,) * 8, (7,) * 8, frozenset({(0, 2), (0, 7)}))
    p = Problem.build(g, Configuration(g.pairs))
    lam = np.zeros((8, 8))
    lam[0, 2], lam[0, 7] = 1.0, 4.0  # w(0 -> 2) = 1 + 4, w(0 -> 7) = 1 + 4
    assert select_neighbor(p, with_lam(p, lam), 0) == 2  # tie -> lowest id
    lam[2, 7] = 2.0  # w(0 -> 2) = 1 + 2 = 3, w(0 -> 7) = 5
    assert select_neighbor(p, with_lam(p, lam), 0) == 7
    assert select_neighbor(p, with_lam(p, np.zeros((8, 8))), 0) == 2
    assert select_neighbor(p, with_lam(p, lam), 3) is None


def test_assign_flows_example():
    g = OverlayGraph((10.0, 1.0, 1.0), (2, 2, 2), frozenset({(0, 1)}))
    p = Problem.build(g, Configuration(g.pairs))
    lam = np.zeros((3, 3))
    lam[0, 1] = 1.0  # positive gap for d=1 only
    st = assign_flows(p, with_lam(p, lam))
    li = p.link_index(0, 1)
    assert st.phys[li] == 10.0
    assert st.flows[li, 1] == 10.0 and st.flows[li, 2] == 0.0
    idle = assign_flows(p, with_lam(p, np.zeros((3, 3))))
    assert not idle.flows.any() and not idle.phys.any()


def test_assign_flows_maximizes_ssp_against_brute_force():
    rng = np.random.default_rng(0)
    g = complete_graph([1.0, 2.0, 3.0, 4.0], 3)
    p = Problem.build(g, Configuration(g.pairs))
    for _ in range(50):
        lam = rng.uniform(0, 5, size=(4, 4))
        lam[:, 0] = 0
        np.fill_diagonal(lam, 0)
        st = assign_flows(p, with_lam(p, lam))

        def objective(flows):
            return sum(flows[li, d] * (lam[v, d] - lam[u, d])
                       for li, (v, u) in enumerate(p.links) for d in range(1, 4))

        # brute force: each node sends at full capacity to one chosen neighbor (or idles),
        # carrying the destinations that help
        best = -np.inf
        options = [[None] + p.out(v) for v in range(4)]
        for pick in itertools.product(*options):
            flows = np.zeros_like(st.flows)
            for v, u in enumerate(pick):
                if u is None:
                    continue
                li = p.link_index(v, u)
                flows[li] = np.where(lam[v] - lam[u] > 0, p.capacity[v], 0.0)
            best = max(best, objective(flows))
        assert objective(st.flows) == pytest.approx(best)


def test_step_z_update_example():
    g, p = line_problem()
    st = primal_dual_step(p, SolverState.initial(p, 1.0), SolverConfig(alpha=0.1))
    assert st.z == pytest.approx(1.1, abs=1e-6)


def test_step_projection_and_invariants():
    g = toggle_graph()
    p = Problem.build(g, toggle_configurations()["f1"])
    sc = SolverConfig(k=0.01)
    st = SolverState.initial(p)
    for _ in range(400):
        nxt = primal_dual_step(p, st, sc)
        assert nxt.z >= 0 and (nxt.lam >= 0).all()
        assert (np.diag(nxt.lam) == 0).all() and (nxt.lam[:, p.source] == 0).all()
        assert (nxt.flows <= nxt.phys[:, None] + 1e-12).all()
        for v in range(p.n):
            assert nxt.phys[p.src == v].sum() <= p.capacity[v] + 1e-12
        # a queue at zero with negative drift stays at zero
        drift = net_inflow(p, nxt.flows, nxt.z)
        pinned = (st.lam == 0) & (drift < 0)
        assert (nxt.lam[pinned] == 0).all()
        st = nxt


def test_step_fixed_point():
    # star with a single receiver: z* = 1 and lambda*_{s,1} = U'(1) at the optimum
    g = OverlayGraph((1.0, 1.0), (1, 1), frozenset({(0, 1)}))
    p = Problem.build(g, Configuration(g.pairs))
    sc = SolverConfig()
    lam = np.zeros((2, 2))
    lam[0, 1] = sc.uprime(1.0)
    st = SolverState(1.0, lam, np.zeros((1, 2)), np.zeros(1))
    nxt = primal_dual_step(p, st, sc)
    assert nxt.z == pytest.approx(1.0, abs=1e-15)
    assert nxt.lam == pytest.approx(lam)


def test_compiled_loop_matches_reference_step():
    for g, f in [(toggle_graph(), toggle_configurations()["f1"]),
                 (example_graph(), Configuration.of([(0, 1), (0, 2), (1, 3), (2, 4), (3, 4)]))]:
        p = Problem.build(g, f)
        sc = SolverConfig(k=0.02, alpha=0.05)
        ref = SolverState.initial(p)
        zs = []
        for _ in range(500):
            ref = primal_dual_step(p, ref, sc)
            zs.append(ref.z)
        fast, trace = run_steps(p, SolverState.initial(p), sc, 500)
        assert fast.z == ref.z
        assert np.array_equal(fast.lam, ref.lam)
        assert np.array_equal(trace, zs)


def test_per_link_step_sizes():
    g = toggle_graph()
    p = Problem.build(g, toggle_configurations()["f4"])
    k = np.full((5, 5), 0.01)
    k[3] = 0.02
    sc = SolverConfig(k=k)
    ref = SolverState.initial(p)
    for _ in range(100):
        ref = primal_dual_step(p, ref, sc)
    fast, _ = run_steps(p, SolverState.initial(p), sc, 100)
    assert np.array_equal(fast.lam, ref.lam)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(alpha=0)
    with pytest.raises(ValueError):
        SolverConfig(k=-1)
    with pytest.raises(ValueError):
        SolverConfig(utility="cubic")
    with pytest.raises(ValueError):
        SolverConfig(window=2001)


@pytest.mark.parametrize("name, want", [("f1", 1.0), ("f2", 1.0), ("f3", 1.0), ("f4", 0.5)])
def test_solve_toggle(name, want):
    res = solve_rate(toggle_graph(), toggle_configurations()[name])
    assert res.converged
    assert res.rate == pytest.approx(want, rel=0.01)


def test_solve_chain():
    g = OverlayGraph((1.0, 1.0, 1.0), (1, 2, 1), frozenset({(0, 1), (1, 2)}))
    res = solve_rate(g, Configuration(g.pairs))
    assert res.rate == pytest.approx(1.0, rel=0.01)
    assert res.receiving[1:] == pytest.approx([1.0, 1.0], rel=0.02)


def test_solve_degenerate_cases():
    g = example_graph()
    res = solve_rate(g, Configuration.of([(0, 1)]))
    assert res.rate == 0.0 and res.converged
    lone = OverlayGraph((3.0,), (1,), frozenset())
    assert solve_rate(lone, Configuration(frozenset())).rate == 3.0


def test_power_utility_converges_to_same_rate():
    res = solve_rate(toggle_graph(), toggle_configurations()["f4"], SolverConfig(utility="power"))
    assert res.rate == pytest.approx(0.5, rel=0.01)


def test_small_step_sizes_also_converge():
    res = solve_rate(toggle_graph(), toggle_configurations()["f4"], SMALL_STEPS)
    assert res.converged
    assert res.rate == pytest.approx(0.5, rel=0.01)


def _instances(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(4, 9))
        caps = [768.0] + sample_capacities(PEER_CAPACITIES, n - 1, int(rng.integers(1 << 30)))
        g = random_graph(n, 0.6, rng, caps, int(rng.integers(2, 5)))
        f = random_configuration(g, rng)
        if is_connected_from_source(g, f):
            out.append((g, f))
    return out


@pytest.mark.parametrize("g, f", _instances(12, 99))
def test_solver_matches_lp(g, f):
    res = solve_rate(g, f)
    assert res.converged
    assert res.rate == pytest.approx(solve_mp(g, f), rel=0.01)


def test_more_capacity_never_hurts():
    rng = np.random.default_rng(4)
    for g, f in _instances(4, 7):
        base = solve_rate(g, f).rate
        v = int(rng.integers(g.n))
        caps = list(g.capacity)
        caps[v] *= 2
        assert solve_rate(g.with_capacity(caps), f).rate >= base * 0.99


def test_upper_bound_is_valid():
    for g, f in _instances(10, 3):
        assert rate_upper_bound(g, f) >= solve_mp(g, f) - 1e-9


def test_trace_csv():
    res = solve_rate(toggle_graph(), toggle_configurations()["f4"], SolverConfig(trace_every=10))
    lines = res.trace_csv(every=1000).splitlines()
    assert lines[0] == "iter,z,sum_lambda_source"
    assert lines[1].startswith("10,") and lines[2].startswith("1010,")
    assert len(lines) - 1 == -(-res.iterations // 1000)
    assert res.trace_csv(every=1000) == solve_rate(toggle_graph(), toggle_configurations()["f4"],
                                                   SolverConfig(trace_every=10)).trace_csv(every=1000)
