"""Engine step semantics, determinism, and agreement with the exact oracle."""

import collections

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbblab.engine import (
    InitialConfig,
    LoadVector,
    coupled_step,
    idealized_step,
    one_choice_run,
    rbb_step,
    run_trace,
    successor_batch,
)
from rbblab.oracle import one_step_distribution
from rbblab.rng import RandomSource, UniformBuffer

SEED = 20240817


def rng(stream=0):
    return RandomSource(SEED, stream)


class TestLoadVector:
    def test_totals(self):
        x = LoadVector.from_list([2, 0, 3])
        assert (x.n, x.m) == (3, 5)

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="non-negative"):
            LoadVector.from_list([1, -1])

    def test_rejects_empty_and_2d(self):
        with pytest.raises(ValueError):
            LoadVector(np.zeros((2, 2), dtype=np.int64))
        with pytest.raises(ValueError):
            LoadVector.from_list([])

    def test_ball_cap(self):
        with pytest.raises(ValueError, match="cap"):
            LoadVector.from_list([2**41])


class TestInitialConfig:
    def test_uniform_remainder_to_lowest(self):
        assert list(InitialConfig("uniform").build(4, 6).loads) == [2, 2, 1, 1]

    def test_single_bin(self):
        assert list(InitialConfig("single_bin").build(3, 5).loads) == [5, 0, 0]

    def test_explicit_sum_mismatch(self):
        with pytest.raises(ValueError, match="sum"):
            InitialConfig("explicit", explicit_loads=[1, 1]).build(2, 3)

    def test_explicit_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            InitialConfig("explicit", explicit_loads=[3]).build(2, 3)


class TestRbbStep:
    def test_single_bin_identity(self):
        x = LoadVector.from_list([5])
        y, batch = rbb_step(x, rng())
        assert list(y.loads) == [5]
        assert list(batch.destinations) == [0]

    def test_frozen_two_bins_law(self):
        """n=2, (2,0): kappa=1, successors (2,0) and (1,1) each w.p. 1/2."""
        counts = collections.Counter()
        r = rng(1)
        for _ in range(4000):
            y, _ = rbb_step(LoadVector.from_list([2, 0]), r)
            counts[tuple(y.loads)] += 1
        assert set(counts) == {(2, 0), (1, 1)}
        assert abs(counts[(2, 0)] / 4000 - 0.5) < 0.04

    def test_reallocates_one_per_nonempty_bin(self):
        x = LoadVector.from_list([2, 3, 0, 1, 2, 0])
        y, batch = rbb_step(x, rng(2))
        assert len(batch.destinations) == 4
        assert y.m == x.m

    def test_input_not_mutated(self):
        x = LoadVector.from_list([1, 2])
        before = x.loads.copy()
        rbb_step(x, rng(3))
        assert np.array_equal(x.loads, before)

    def test_m0_fixed_point(self):
        y, batch = rbb_step(LoadVector.from_list([0, 0]), rng())
        assert list(y.loads) == [0, 0] and len(batch.destinations) == 0


class TestIdealizedStep:
    def test_single_bin(self):
        y, _ = idealized_step(LoadVector.from_list([3]), rng())
        assert list(y.loads) == [3]

    def test_total_law(self):
        """Total becomes m - kappa + n deterministically."""
        x = LoadVector.from_list([1, 0, 2])
        y, batch = idealized_step(x, rng(4))
        assert len(batch.destinations) == 3
        assert y.m == x.m - 2 + 3

    def test_frozen_1_0_distribution(self):
        counts = collections.Counter()
        r = rng(5)
        for _ in range(8000):
            y, _ = idealized_step(LoadVector.from_list([1, 0]), r)
            counts[tuple(y.loads)] += 1
        # exact law: (2,0) 1/4, (1,1) 1/2, (0,2) 1/4
        assert abs(counts[(2, 0)] / 8000 - 0.25) < 0.03
        assert abs(counts[(1, 1)] / 8000 - 0.50) < 0.03
        assert abs(counts[(0, 2)] / 8000 - 0.25) < 0.03


class TestCoupledStep:
    def test_precondition_rejected(self):
        with pytest.raises(ValueError, match="precondition"):
            coupled_step(LoadVector.from_list([2, 0]), LoadVector.from_list([1, 1]), rng())

    def test_single_bin_fixed(self):
        x, y = coupled_step(LoadVector.from_list([1]), LoadVector.from_list([4]), rng())
        assert (list(x.loads), list(y.loads)) == ([1], [4])

    def test_dominance_from_equality_many_steps(self):
        r = rng(6)
        x = one_choice_run(8, 32, r)
        y = LoadVector(x.loads.copy())
        for _ in range(500):
            x, y = coupled_step(x, y, r)
            assert np.all(x.loads <= y.loads)

    def test_total_gap_after_one_step(self):
        """From x = y, totals differ by exactly F(x) after one coupled step."""
        r = rng(7)
        x = LoadVector.from_list([2, 0, 0, 1])
        y = LoadVector(x.loads.copy())
        x2, y2 = coupled_step(x, y, r)
        assert y2.m - x2.m == 2


class TestOneChoice:
    def test_zero_balls(self):
        assert list(one_choice_run(3, 0, rng()).loads) == [0, 0, 0]

    def test_conserves_count(self):
        assert one_choice_run(10, 137, rng(8)).m == 137

    def test_two_bins_one_ball(self):
        seen = {tuple(one_choice_run(2, 1, rng(s)).loads) for s in range(20)}
        assert seen == {(1, 0), (0, 1)}


class TestRunTrace:
    def test_zero_rounds_single_row(self):
        tr = run_trace("rbb", 3, 3, InitialConfig("uniform"), 0, rng())
        assert len(tr) == 1
        assert tr[0].max_load == 1 and tr[0].empty.F == 0

    def test_determinism(self):
        a = run_trace("rbb", 5, 9, InitialConfig("uniform"), 200, rng(9), alpha=0.1)
        b = run_trace("rbb", 5, 9, InitialConfig("uniform"), 200, rng(9), alpha=0.1)
        assert np.array_equal(a.F, b.F)
        assert np.array_equal(a.max_load, b.max_load)
        assert np.array_equal(a.quadratic, b.quadratic)
        assert np.array_equal(a.log_phi, b.log_phi)

    def test_matches_repeated_rbb_step(self):
        """The buffered trace loop replays rbb_step's exact draw sequence."""
        tr = run_trace("rbb", 4, 7, InitialConfig("uniform"), 150, rng(10))
        state = InitialConfig("uniform").build(4, 7)
        r = rng(10)
        for t in range(150):
            state, _ = rbb_step(state, r)
        assert int(state.loads.max()) == tr[150].max_load
        assert int(np.count_nonzero(state.loads == 0)) == tr[150].empty.F

    def test_idealized_total_growth(self):
        tr = run_trace("idealized", 4, 2, InitialConfig("single_bin"), 50, rng(11))
        assert len(tr) == 51  # totals vary; just shape + no crash

    def test_unknown_observer_rejected(self):
        with pytest.raises(ValueError, match="unknown observers"):
            run_trace("rbb", 2, 2, InitialConfig("uniform"), 1, rng(), observers=("bogus",))

    def test_exponential_needs_alpha(self):
        with pytest.raises(ValueError, match="alpha"):
            run_trace("rbb", 2, 2, InitialConfig("uniform"), 1, rng(),
                      observers=("exponential",))


class TestUniformBuffer:
    def test_chunked_equals_bulk(self):
        """Regression: block-buffered draws equal one bulk generator call."""
        a, b = rng(12), rng(12)
        buf = UniformBuffer(a, 11, chunk=17)
        pieces = [buf.take(k) for k in (5, 0, 17, 1, 29, 3, 45)]
        seq = np.concatenate(pieces)
        bulk = b.generator.integers(0, 11, size=int(seq.size))
        assert np.array_equal(seq, bulk)

    def test_views_are_read_only(self):
        buf = UniformBuffer(rng(13), 5)
        buf.take(3)  # slow path fills the buffer with a read-only block
        view = buf.take(10)  # fast path returns a view into that block
        with pytest.raises(ValueError):
            view[0] = 0


class TestSuccessorBatch:
    def test_matches_one_step_distribution(self):
        """Empirical successor frequencies track the exact law."""
        x = LoadVector.from_list([1, 1])
        succ = successor_batch(x, 40000, rng(14))
        freq = np.mean(np.all(succ == np.array([1, 1]), axis=1))
        assert abs(freq - 0.5) < 0.02
        dist = one_step_distribution(x)
        assert set(map(tuple, np.unique(succ, axis=0))) <= set(dist)

    def test_all_empty_state(self):
        succ = successor_batch(LoadVector.from_list([0, 0]), 5, rng())
        assert np.all(succ == 0)


class TestConservationProperties:
    @given(
        n=st.integers(1, 32),
        m=st.integers(0, 200),
        steps=st.integers(1, 30),
        stream=st.integers(0, 1000),
    )
    @settings(max_examples=60, deadline=None)
    def test_rbb_conserves_and_stays_non_negative(self, n, m, steps, stream):
        state = InitialConfig("uniform").build(n, m)
        r = RandomSource(SEED, stream)
        for _ in range(steps):
            state, _ = rbb_step(state, r)
            assert state.m == m
            assert np.all(state.loads >= 0)

    @given(n=st.integers(1, 16), m=st.integers(0, 64), stream=st.integers(0, 500))
    @settings(max_examples=40, deadline=None)
    def test_idealized_total_identity(self, n, m, stream):
        state = InitialConfig("uniform").build(n, m)
        kappa = int(np.count_nonzero(state.loads))
        nxt, _ = idealized_step(state, RandomSource(SEED, stream))
        assert nxt.m == m - kappa + n

    @given(n=st.integers(2, 12), m=st.integers(1, 48), stream=st.integers(0, 500))
    @settings(max_examples=40, deadline=None)
    def test_coupling_dominance_property(self, n, m, stream):
        r = RandomSource(SEED, stream)
        x = one_choice_run(n, m, r)
        y = LoadVector(x.loads.copy())
        for _ in range(20):
            x, y = coupled_step(x, y, r)
            assert np.all(x.loads <= y.loads)
