import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from porefill.curves import PressureSaturationCurve, read_curve
from porefill.errors import NoInletPores
from porefill.netextract import PoreNetwork
from porefill.pnmperc import (
    FluidPair, curve_from_result, entry_pressure, invasion_percolation,
    percolation_sweep, staircase, sweep_filename,
)


def chain_network():
    # inlet pore A (0) -- throat -- pore B (1) on the outlet
    return PoreNetwork([[0, 0, 0], [10, 0, 0]], [5.0, 5.0], [2.0, 2.0],
                       [(0, 1)], [4.0], [1.0],
                       face_labels={"xmin": {0}, "xmax": {1}})


def random_network(seed, max_pores=20):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, max_pores + 1))
    pairs = {(int(a), int(b)) for a, b in r.integers(0, n, (int(r.integers(1, 3 * n)), 2)) if a != b}
    pairs = sorted({(min(p), max(p)) for p in pairs})
    if not pairs:
        pairs = [(0, 1)]
    # integer diameters make ties between throats common
    diam = r.integers(1, 6, len(pairs)).astype(float)
    inlet = set(r.choice(n, size=int(r.integers(1, 3)), replace=False).tolist())
    outlet = set(r.choice(n, size=int(r.integers(1, min(n, 3) + 1)), replace=False).tolist())
    return PoreNetwork(r.uniform(0, 10, (n, 3)), r.uniform(1, 5, n),
                       r.integers(1, 9, n).astype(float), pairs, diam, np.ones(len(pairs)),
                       face_labels={"xmin": inlet, "xmax": outlet})


def oracle_invasion(net, pe, inlet, outlet, trapping):
    """Step-by-step rescan of every throat; trapping recomputed from scratch."""
    conns = [tuple(map(int, c)) for c in net.throat_conns]
    invaded = []
    inv = set()
    for p in sorted(net.face_labels[inlet]):
        invaded.append(("pore", p))
        inv.add(p)
    outlet_pores = set(net.face_labels[outlet])
    trapped = set()

    def recompute():
        if not trapping:
            return
        frontier = {q for a, b in conns for q, o in ((a, b), (b, a)) if o in inv and q not in inv}
        for q in frontier:
            cluster, todo = {q}, [q]
            while todo:
                x = todo.pop()
                for a, b in conns:
                    for u, v in ((a, b), (b, a)):
                        if u == x and v not in inv and v not in cluster:
                            cluster.add(v)
                            todo.append(v)
            if not cluster & outlet_pores:
                trapped.update(cluster)

    recompute()
    while True:
        cands = []
        for t, (a, b) in enumerate(conns):
            if (a in inv) == (b in inv):
                continue
            far = b if a in inv else a
            if far in trapped:
                continue
            cands.append((pe[t], t, far))
        if not cands:
            break
        _, t, far = min(cands)
        invaded += [("throat", t), ("pore", far)]
        inv.add(far)
        recompute()
    return invaded, trapped


class TestEntryPressure:
    def test_wetting(self):
        assert entry_pressure(10.0, FluidPair(0.072, 0.0)) == pytest.approx(-28800.0, rel=1e-12)

    def test_neutral(self):
        assert entry_pressure(3.7, FluidPair(0.05, 90.0)) == 0.0

    def test_nonwetting(self):
        assert entry_pressure(10.0, FluidPair(0.072, 180.0)) == pytest.approx(28800.0, rel=1e-12)

    def test_bad_diameter(self):
        with pytest.raises(ValueError):
            entry_pressure(0.0, FluidPair())

    @pytest.mark.parametrize("kwargs", [{"surface_tension": 0.0}, {"contact_angle": 181.0}])
    def test_fluid_validation(self, kwargs):
        with pytest.raises(ValueError):
            FluidPair(**kwargs)


class TestInvasion:
    def test_chain(self):
        net = chain_network()
        res = invasion_percolation(net, FluidPair(0.072, 30.0))
        pore_sats = [e.cumulative_saturation for e in res.events if e.kind == "pore"]
        assert pore_sats == [0.5, 1.0]
        assert res.events[-1].applied_pressure == entry_pressure(4.0, FluidPair(0.072, 30.0))
        assert res.final_saturation == 1.0

    def test_no_inlet(self):
        net = chain_network()
        with pytest.raises(NoInletPores):
            invasion_percolation(net, FluidPair(), inlet="ymin")

    def test_ink_bottle_trapping(self):
        # 0 inlet, 1 outlet; 2 and 3 hang off pore 1 behind a wide throat
        net = PoreNetwork(np.zeros((4, 3)), [1.0] * 4, [1.0] * 4,
                          [(0, 1), (1, 2), (2, 3)], [2.0, 5.0, 1.0], [1.0] * 3,
                          face_labels={"xmin": {0}, "xmax": {1}})
        fluids = FluidPair(0.072, 140.0)  # non-wetting: wide throats first
        free = invasion_percolation(net, fluids, trapping=False)
        trap = invasion_percolation(net, fluids, trapping=True)
        assert free.final_saturation == 1.0
        assert trap.trapped_pores == {2, 3}
        assert trap.final_saturation == 0.5

    @pytest.mark.parametrize("seed", range(40))
    @pytest.mark.parametrize("trapping", [False, True])
    def test_oracle(self, seed, trapping):
        net = random_network(seed)
        fluids = FluidPair(0.03, 120.0)
        res = invasion_percolation(net, fluids, trapping=trapping)
        pe = entry_pressure(net.throat_diameter, fluids)
        order, trapped = oracle_invasion(net, pe, "xmin", "xmax", trapping)
        assert [(e.kind, e.element) for e in res.events] == order
        assert res.trapped_pores == trapped

    def test_connected_reaches_full(self):
        for seed in range(20):
            net = random_network(seed)
            res = invasion_percolation(net, FluidPair(0.072, 50.0))
            reached = {e.element for e in res.events if e.kind == "pore"}
            if len(reached) == net.n_pores:
                assert res.final_saturation == 1.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.0, 89.0), st.floats(0.0, 89.0))
    def test_theta_dominance(self, seed, t1, t2):
        t1, t2 = sorted((t1, t2 + 1.0))
        net = random_network(seed)
        r1 = invasion_percolation(net, FluidPair(0.05, t1))
        r2 = invasion_percolation(net, FluidPair(0.05, t2))
        grid = np.unique(np.concatenate([[e.applied_pressure for e in r.events] for r in (r1, r2)]))
        grid = np.concatenate([grid, grid - 1e-3, [grid.max() + 1]])
        grid.sort()
        s1 = curve_from_result(r1, grid).saturations
        s2 = curve_from_result(r2, grid).saturations
        assert np.all(s1 >= s2)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from([0.5, 2.0, 4.0, 0.25]),
           st.floats(0.0, 180.0), st.booleans())
    def test_diameter_scaling(self, seed, k, theta, trapping):
        net = random_network(seed)
        scaled = PoreNetwork(net.pore_center, net.pore_diameter, net.pore_volume,
                             net.throat_conns, net.throat_diameter * k, net.throat_length,
                             face_labels=net.face_labels)
        fl = FluidPair(0.05, theta)
        a = invasion_percolation(net, fl, trapping=trapping)
        b = invasion_percolation(scaled, fl, trapping=trapping)
        assert [e.cumulative_saturation for e in a.events] == [e.cumulative_saturation for e in b.events]
        np.testing.assert_allclose([e.applied_pressure / k for e in a.events],
                                   [e.applied_pressure for e in b.events], rtol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.0, 180.0))
    def test_trapping_never_increases_saturation(self, seed, theta):
        net = random_network(seed)
        fl = FluidPair(0.05, theta)
        assert (invasion_percolation(net, fl, trapping=True).final_saturation
                <= invasion_percolation(net, fl, trapping=False).final_saturation)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.integers(0, 10**6))
    def test_storage_order_free(self, seed, perm_seed):
        net = random_network(seed)
        perm = np.random.default_rng(perm_seed).permutation(net.n_throats)
        conns = net.throat_conns[perm][:, ::-1]
        shuffled = PoreNetwork(net.pore_center, net.pore_diameter, net.pore_volume, conns,
                               net.throat_diameter[perm], net.throat_length[perm],
                               face_labels=net.face_labels)
        fl = FluidPair(0.05, 110.0)
        assert invasion_percolation(net, fl, trapping=True) == invasion_percolation(shuffled, fl, trapping=True)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.0, 180.0), st.booleans())
    def test_saturation_monotone(self, seed, theta, trapping):
        res = invasion_percolation(random_network(seed), FluidPair(0.05, theta), trapping=trapping)
        sats = [e.cumulative_saturation for e in res.events]
        applied = [e.applied_pressure for e in res.events]
        assert sats == sorted(sats) and applied == sorted(applied)
        net = random_network(seed)
        all_in = len(res.invaded_pores) == net.n_pores
        assert (res.final_saturation == 1.0) == (all_in and not res.trapped_pores)


class TestCurve:
    def result(self):
        return invasion_percolation(chain_network(), FluidPair(0.072, 120.0))

    def test_below_first_event(self):
        res = self.result()
        first = res.events[0].applied_pressure
        c = curve_from_result(res, [first - 10, first - 1])
        assert c.saturations.tolist() == [0.0, 0.0]

    def test_right_continuous(self):
        res = self.result()
        p = res.events[-1].applied_pressure
        assert curve_from_result(res, [p]).saturations[0] == 1.0

    def test_replay_oracle(self):
        res = invasion_percolation(random_network(3), FluidPair(0.05, 130.0))
        grid = np.linspace(res.events[0].applied_pressure - 100, res.events[-1].applied_pressure + 100, 500)
        c = curve_from_result(res, grid)
        for p, s in zip(grid, c.saturations):
            expect = 0.0
            for e in res.events:
                if e.applied_pressure <= p:
                    expect = e.cumulative_saturation
            assert s == expect

    def test_unsorted_grid(self):
        with pytest.raises(ValueError):
            curve_from_result(self.result(), [2.0, 1.0])

    def test_staircase_matches_curve(self):
        res = invasion_percolation(random_network(5), FluidPair(0.05, 100.0))
        st_curve = staircase(res)
        c = curve_from_result(res, st_curve.pressures)
        np.testing.assert_array_equal(c.saturations, st_curve.saturations)


def test_sweep_files(tmp_path):
    net = random_network(1)
    out = percolation_sweep(net, [0.03, 0.072], [30.0, 60.0], outdir=tmp_path)
    assert len(out) == 4
    c = read_curve(tmp_path / sweep_filename(0.072, 60.0))
    assert isinstance(c, PressureSaturationCurve)
    assert (tmp_path / "ps_s0.03_t30.csv").read_text().startswith("pressure_pa,saturation\n")
    assert c.saturations[-1] == out[(0.072, 60.0)].final_saturation


def test_sweep_workers_match(tmp_path):
    net = random_network(2)
    a = percolation_sweep(net, [0.05], [20.0, 70.0, 130.0], workers=1)
    b = percolation_sweep(net, [0.05], [20.0, 70.0, 130.0], workers=2)
    assert a == b
