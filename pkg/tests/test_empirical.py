import itertools
import math

import numpy as np
import pytest

from sparsedyn.dynamics import builtin_model, simulate_discrete
from sparsedyn.empirical import (
    EmpiricalMeasure,
    bernoulli_init,
    component_empirical,
    component_functional_distribution,
    constant_init,
    ergodicity_variance_curve,
    fixed_graph_sampler,
    giant_fraction,
    global_empirical,
    gw_forest_sampler,
    root_law_monte_carlo,
    shift_average,
    tv_discrete,
    ugw_forest_sampler,
    wasserstein1_paths,
)
from sparsedyn.graphs import (
    Graph,
    RootedGraph,
    component_of,
    gen_erdos_renyi,
    gen_lattice_box,
)
from sparsedyn.trees import poisson_dist


def measure_from(paths, kind="discrete"):
    paths = np.asarray(paths)
    times = np.arange(paths.shape[1])
    return EmpiricalMeasure(paths, times, kind)


class TestEmpiricalBasics:
    def test_single_vertex_point_mass(self):
        g = Graph.from_edges(1, [])
        ts = simulate_discrete(g, np.array([1]), builtin_model("voter"), 3, seed=1)
        m = global_empirical(ts)
        assert m.count == 1
        assert np.all(m.samples == 1)

    def test_duplicate_paths_same_measure(self):
        a = measure_from([[0, 1], [0, 1]])
        b = measure_from([[0, 1]])
        assert tv_discrete(a, b) == 0.0

    def test_nonempty_required(self):
        with pytest.raises(ValueError):
            EmpiricalMeasure(np.zeros((0, 3)), np.arange(3), "discrete")

    def test_component_restriction(self):
        g = Graph.from_edges(5, [(0, 1), (1, 2), (3, 4)])
        marks = np.array([1, 1, 1, 0, 0])
        ts = simulate_discrete(g, marks, builtin_model("voter"), 2, seed=2)
        comp = component_of(g, 3)
        m = component_empirical(ts, comp)
        assert m.count == 2
        assert np.all(m.samples == 0)

    def test_connected_component_equals_global(self):
        g = Graph.from_edges(3, [(0, 1), (1, 2)])
        ts = simulate_discrete(g, np.array([0, 1, 0]), builtin_model("voter"), 2, seed=3)
        comp = component_of(g, 0)
        assert tv_discrete(component_empirical(ts, comp), global_empirical(ts)) == 0.0

    def test_components_reweighted_reproduce_global(self):
        g = gen_erdos_renyi(60, 0.02, seed=4)
        marks = np.random.default_rng(0).integers(0, 2, 60)
        ts = simulate_discrete(g, marks, builtin_model("voter"), 3, seed=5)
        seen = set()
        parts = []
        for v in range(60):
            comp = component_of(g, v)
            key = frozenset(comp.origin)
            if key in seen:
                continue
            seen.add(key)
            parts.append(component_empirical(ts, comp).samples)
        union = np.concatenate(parts, axis=0)
        m_union = measure_from(union)
        assert tv_discrete(m_union, global_empirical(ts)) == 0.0

    def test_component_mismatch_rejected(self):
        g = Graph.from_edges(3, [(0, 1)])
        ts = simulate_discrete(g, np.array([0, 1, 0]), builtin_model("voter"), 1, seed=1)
        with pytest.raises(ValueError):
            component_empirical(ts, RootedGraph(Graph(((),)), 0))  # no origin


class TestTvDiscrete:
    def test_identity_and_disjoint(self):
        a = measure_from([[0, 0], [0, 1]])
        assert tv_discrete(a, a) == 0.0
        b = measure_from([[1, 1], [1, 0]])
        assert tv_discrete(a, b) == 1.0

    def test_half_overlap(self):
        a = measure_from([[0, 0], [0, 1]])
        b = measure_from([[0, 0]])
        assert tv_discrete(a, b) == 0.5

    def test_symmetry(self):
        gen = np.random.default_rng(1)
        a = measure_from(gen.integers(0, 2, (40, 3)))
        b = measure_from(gen.integers(0, 2, (25, 3)))
        assert tv_discrete(a, b) == tv_discrete(b, a)

    def test_grid_mismatch(self):
        a = measure_from([[0, 1]])
        b = measure_from([[0, 1, 1]])
        with pytest.raises(ValueError):
            tv_discrete(a, b)


class TestWasserstein:
    def test_identical_zero(self):
        gen = np.random.default_rng(2)
        a = EmpiricalMeasure(gen.normal(0, 1, (30, 5)), np.linspace(0, 1, 5), "vector")
        assert wasserstein1_paths(a, a, t=1.0, seed=7) == 0.0

    def test_constant_point_masses(self):
        times = np.linspace(0, 1, 4)
        a = EmpiricalMeasure(np.full((1, 4), 2.0), times, "vector")
        b = EmpiricalMeasure(np.full((1, 4), -1.5), times, "vector")
        assert abs(wasserstein1_paths(a, b, t=1.0) - 3.5) < 1e-12

    def test_translation(self):
        gen = np.random.default_rng(3)
        base = gen.normal(0, 1, (40, 6))
        delta = 0.75
        times = np.linspace(0, 1, 6)
        a = EmpiricalMeasure(base, times, "vector")
        b = EmpiricalMeasure(base + delta, times, "vector")
        assert abs(wasserstein1_paths(a, b, t=1.0, seed=1) - delta) < 1e-9

    def test_triangle_inequality(self):
        gen = np.random.default_rng(4)
        times = np.linspace(0, 1, 4)
        ms = [EmpiricalMeasure(gen.normal(0, 1, (12, 4)), times, "vector") for _ in range(3)]
        for a, b, c in itertools.permutations(ms, 3):
            dab = wasserstein1_paths(a, b, t=1.0, seed=0)
            dbc = wasserstein1_paths(b, c, t=1.0, seed=0)
            dac = wasserstein1_paths(a, c, t=1.0, seed=0)
            assert dac <= dab + dbc + 1e-9

    def test_truncation_in_time(self):
        times = np.array([0.0, 0.5, 1.0])
        a = EmpiricalMeasure(np.array([[0.0, 0.0, 0.0]]), times, "vector")
        b = EmpiricalMeasure(np.array([[0.0, 0.0, 9.0]]), times, "vector")
        assert wasserstein1_paths(a, b, t=0.6) == 0.0
        assert wasserstein1_paths(a, b, t=1.0) == 9.0


class TestRootLawMonteCarlo:
    def test_single_vertex_trees(self):
        sampler = fixed_graph_sampler(RootedGraph(Graph(((),)), 0))
        m = root_law_monte_carlo(
            sampler, bernoulli_init(0.7), builtin_model("voter"), 3, 4000, seed=5
        )
        ones = float(np.mean(m.samples[:, 0] == 1))
        assert abs(ones - 0.7) < 0.03
        # isolated vertices hold their state
        assert np.all(m.samples == m.samples[:, :1])

    def test_depth_stability_discrete(self):
        rho = poisson_dist(1.5)
        model = builtin_model("voter")
        k = 2
        base = root_law_monte_carlo(
            ugw_forest_sampler(rho, k), bernoulli_init(0.5), model, k, 4000, seed=6
        )
        deeper = root_law_monte_carlo(
            ugw_forest_sampler(rho, k + 3), bernoulli_init(0.5), model, k, 4000, seed=7
        )
        assert tv_discrete(base, deeper) < 0.05

    def test_batching_invariance_of_law(self):
        rho = poisson_dist(1.0)
        model = builtin_model("voter")
        a = root_law_monte_carlo(
            gw_forest_sampler(rho, 2), bernoulli_init(0.5), model, 2, 3000, seed=8
        )
        b = root_law_monte_carlo(
            gw_forest_sampler(rho, 2), bernoulli_init(0.5), model, 2, 3000, seed=9,
            batch_size=700,
        )
        assert tv_discrete(a, b) < 0.06


class TestGiantFraction:
    def test_complete_graph(self):
        mean, err = giant_fraction(
            lambda n, s: gen_erdos_renyi(n, 1.0, s), n=30, replicas=3, seed=1
        )
        assert mean == 1.0

    def test_empty_graph(self):
        mean, err = giant_fraction(
            lambda n, s: gen_erdos_renyi(n, 0.0, s), n=30, replicas=3, seed=1
        )
        assert abs(mean - 1 / 30) < 1e-12


class TestComponentFunctional:
    def test_constant_functional(self):
        vals = component_functional_distribution(
            lambda s: gen_erdos_renyi(50, 1.0 / 50, s),
            bernoulli_init(0.5),
            builtin_model("voter"),
            lambda block: np.ones(block.shape[1]),
            2,
            120,
            seed=3,
        )
        assert np.all(vals == 1.0)


class TestShiftAverage:
    def make_ts(self, marks, k=0):
        rg = gen_lattice_box(2, 6)
        return simulate_discrete(rg.graph, marks, builtin_model("voter"), k, seed=4)

    def test_constant_configuration(self):
        rg = gen_lattice_box(2, 6)
        n_v = rg.graph.vertex_count
        ts = self.make_ts(np.ones(n_v, dtype=np.int64), k=3)
        center = 9 // 2  # window radius 1 in 2d: (2*1+1)^2 = 9 cells
        vals = shift_average(ts, lambda block: float(block[-1, center]), 1, [1, 2, 4])
        assert vals == [1.0, 1.0, 1.0]

    def test_box_plus_window_must_fit(self):
        rg = gen_lattice_box(2, 6)
        ts = self.make_ts(np.zeros(rg.graph.vertex_count, dtype=np.int64))
        with pytest.raises(ValueError):
            shift_average(ts, lambda block: 0.0, 2, [5])

    def test_iid_variance_scales_with_box(self):
        box_sizes = [2, 4]
        rows = []
        for rep in range(200):
            rg = gen_lattice_box(2, 6)
            marks = np.random.default_rng(100 + rep).integers(0, 2, rg.graph.vertex_count)
            ts = simulate_discrete(rg.graph, marks, builtin_model("voter"), 0, seed=rep)
            rows.append(shift_average(ts, lambda block: float(block[0, 0]), 0, box_sizes))
        curve = ergodicity_variance_curve(rows, box_sizes)
        # single-site Bernoulli(1/2): exact variance 0.25 / |B_m|
        v2, v4 = curve[0][1], curve[1][1]
        assert abs(v2 - 0.25 / 25) < 0.006
        assert abs(v4 - 0.25 / 81) < 0.002
        assert v2 > v4

    def test_variance_curve_requirements(self):
        with pytest.raises(ValueError):
            ergodicity_variance_curve(np.zeros((5, 2)))

    def test_deterministic_dynamics_zero_variance(self):
        rows = []
        for rep in range(25):
            rg = gen_lattice_box(2, 4)
            marks = np.ones(rg.graph.vertex_count, dtype=np.int64)
            ts = simulate_discrete(rg.graph, marks, builtin_model("voter"), 2, seed=rep)
            rows.append(shift_average(ts, lambda block: float(block[-1, 0]), 0, [1, 2]))
        curve = ergodicity_variance_curve(rows, [1, 2])
        assert curve[0][1] == 0.0 and curve[1][1] == 0.0
