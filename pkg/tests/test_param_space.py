import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poletabu.param_space import (
    NODE_RADII,
    ParamSpace,
    PoleProfile,
    make_raw_space,
    make_steps_space,
    parse_scheme,
    quantize,
    to_profile,
)
from poletabu.tabu import thresholds

MM = 1e-3


def brute_force_radii(k, raw_mm):
    """Nearest strictly increasing radius tuple on the 10 mm lattice, L1 in mm.

    Ties go to the tuple that is smallest when read from the last radius back.
    """
    lows = [10 * i for i in range(k)]
    lows[-1] = max(lows[-1], 10)
    highs = [160 - 10 * (k - 1 - i) for i in range(k)]
    best = None
    for combo in itertools.product(*(range(lo, hi + 1, 10) for lo, hi in zip(lows, highs))):
        if any(a >= b for a, b in zip(combo, combo[1:])):
            continue
        key = (sum(abs(c - r) for c, r in zip(combo, raw_mm)), tuple(reversed(combo)))
        if best is None or key < best[0]:
            best = (key, combo)
    return best[1]


class TestRawSpace:
    def test_shape(self):
        s = make_raw_space()
        assert s.n == 16
        assert s.scheme == "RAW"
        assert s.ordering == ()
        for lo, hi, res in zip(s.lower, s.upper, s.resolution):
            assert hi - lo == pytest.approx(40 * MM, abs=1e-15)
            assert res == pytest.approx(1e-5)

    def test_quanta_per_axis(self):
        assert make_raw_space().n_quanta == (4000,) * 16

    def test_initial_step_is_fifth_of_range(self):
        s = make_raw_space()
        step = s.initial_step()
        assert step == (800,) * 16
        assert step[0] * s.resolution[0] == pytest.approx(8 * MM)


class TestStepsSpace:
    def test_two_steps(self):
        s = make_steps_space(2)
        assert s.names == ("a", "b", "c", "d")
        assert s.ordering == ((0, 1),)
        assert s.lower[1] == pytest.approx(10 * MM)
        assert s.upper[1] == pytest.approx(160 * MM)
        assert s.resolution[1] == pytest.approx(10 * MM)
        assert s.lower[0] == 0.0
        assert s.resolution[2:] == (1e-5, 1e-5)
        assert s.upper[2:] == (40 * MM, 40 * MM)

    def test_one_step(self):
        s = make_steps_space(1)
        assert s.n == 2
        assert s.ordering == ()
        assert s.lower[0] == pytest.approx(10 * MM)

    def test_three_steps_thresholds(self):
        s = make_steps_space(3)
        assert s.n == 6
        assert thresholds(s.n) == (4, 8, 12)

    @pytest.mark.parametrize("k", [0, 5, -1, 2.5])
    def test_rejects_bad_k(self, k):
        with pytest.raises(ValueError):
            make_steps_space(k)

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_radius_bounds_leave_room_for_ordering(self, k):
        s = make_steps_space(k)
        for i in range(k):
            assert s.lower[i] >= 10 * i * MM - 1e-15
        assert s.upper[k - 1] == pytest.approx(160 * MM)
        assert s.lower[k - 1] >= 10 * MM - 1e-15

    def test_parse_scheme(self):
        assert parse_scheme("RAW").scheme == "RAW"
        assert parse_scheme("steps:3").scheme == "STEPS(3)"
        with pytest.raises(ValueError):
            parse_scheme("spline:3")


class TestParamSpaceValidation:
    def test_range_not_multiple_of_resolution(self):
        with pytest.raises(ValueError):
            ParamSpace(("x",), (0.0,), (1.0,), (0.3,))

    def test_cyclic_ordering(self):
        with pytest.raises(ValueError):
            ParamSpace(("x", "y"), (0.0, 0.0), (1.0, 1.0), (0.1, 0.1), ordering=((0, 1), (1, 0)))

    def test_empty_range(self):
        with pytest.raises(ValueError):
            ParamSpace(("x",), (1.0,), (1.0,), (0.1,))


class TestQuantize:
    def test_raw_rounding(self):
        s = make_raw_space()
        p = quantize(s, [0.0123456] + [0.0] * 15)
        assert p.values[0] == pytest.approx(0.01235, abs=1e-15)
        assert p.index[0] == 1235

    def test_radius_rounding(self):
        s = make_steps_space(2)
        p = quantize(s, [55 * MM, 120 * MM, 0.01, 0.01])
        assert p.values[0] == pytest.approx(60 * MM)

    def test_clamps_to_bounds(self):
        s = make_raw_space()
        p = quantize(s, [-1.0, 1.0] + [0.0] * 14)
        assert p.values[0] == 0.0
        assert p.values[1] == pytest.approx(40 * MM)

    def test_order_repair_matches_brute_force(self):
        # a=90, b=70 mm. The nearest feasible lattice points are 30 mm away in
        # L1: (60,70), (70,80), (80,90), (90,100); the tie-break keeps b lowest.
        s = make_steps_space(2)
        p = quantize(s, [90 * MM, 70 * MM, 0.01, 0.02])
        got = tuple(int(round(v / MM)) for v in p.values[:2])
        assert got == brute_force_radii(2, (90, 70)) == (60, 70)
        assert s.is_valid(p)

    def test_arity(self):
        with pytest.raises(ValueError):
            quantize(make_raw_space(), [0.0] * 3)

    @settings(max_examples=150, deadline=None)
    @given(
        k=st.integers(2, 4),
        raw=st.lists(st.integers(-20, 180), min_size=4, max_size=4),
    )
    def test_projection_is_l1_nearest(self, k, raw):
        # each axis is rounded half-up to the lattice before the ordering repair
        s = make_steps_space(k)
        raw_mm = raw[:k]
        p = quantize(s, [r * MM for r in raw_mm] + [0.0] * k)
        got = tuple(int(round(v / MM)) for v in p.values[:k])
        rounded = [10 * ((r + 5) // 10) for r in raw_mm]
        assert got == brute_force_radii(k, rounded)

    @settings(max_examples=100, deadline=None)
    @given(k=st.integers(1, 4), data=st.data())
    def test_idempotent_on_lattice(self, k, data):
        s = make_steps_space(k)
        idx = [data.draw(st.integers(0, m)) for m in s.n_quanta]
        p = s.point(s.repair(idx))
        assert s.is_valid(p)
        assert quantize(s, p.values) == p
        assert quantize(s, p.values).values == p.values

    @settings(max_examples=100, deadline=None)
    @given(raw=st.lists(st.floats(-0.1, 0.3, allow_nan=False), min_size=8, max_size=8))
    def test_always_valid(self, raw):
        s = make_steps_space(4)
        assert s.is_valid(quantize(s, raw))


class TestProfile:
    def test_one_step_flat(self):
        s = make_steps_space(1)
        prof = to_profile(s, quantize(s, [160 * MM, 20 * MM]))
        assert prof.heights[:-1] == pytest.approx([20 * MM] * 16)
        assert prof.heights[-1] == 0.0

    def test_two_steps(self):
        s = make_steps_space(2)
        prof = to_profile(s, quantize(s, [80 * MM, 160 * MM, 40 * MM, 10 * MM]))
        for r, h in zip(NODE_RADII, prof.heights):
            if r < 80 * MM - 1e-12:
                assert h == pytest.approx(40 * MM)
            elif r < 160 * MM - 1e-12:
                assert h == pytest.approx(10 * MM)
            else:
                assert h == 0.0

    def test_raw_flat(self):
        s = make_raw_space()
        prof = to_profile(s, quantize(s, [0.0] * 16))
        assert prof.heights == (0.0,) * 17

    def test_raw_axis_tied(self):
        s = make_raw_space()
        vals = [i * MM for i in range(1, 17)]
        prof = to_profile(s, quantize(s, vals))
        assert prof.heights[0] == prof.heights[1]
        assert prof.heights[1:] == pytest.approx(vals)

    def test_arity_mismatch(self):
        s2 = make_steps_space(2)
        p = make_raw_space().quantize([0.0] * 16)
        with pytest.raises(ValueError):
            to_profile(s2, p)

    def test_height_range_checked(self):
        with pytest.raises(ValueError):
            PoleProfile((0.05,) * 17)

    def test_dump_format(self):
        s = make_steps_space(2)
        text = to_profile(s, quantize(s, [80 * MM, 160 * MM, 40 * MM, 10 * MM])).dumps()
        lines = text.splitlines()
        assert len(lines) == 17
        assert lines[0] == "0.000,40.000"
        assert lines[8] == "80.000,10.000"
        assert lines[16] == "160.000,0.000"

    def test_ramp_flag(self):
        s = make_steps_space(1, ramp_nodes=2)
        prof = to_profile(s, quantize(s, [100 * MM, 20 * MM]))
        # jump at node 10 (100 mm) ramps linearly from node 8
        assert prof.heights[8] == pytest.approx(20 * MM)
        assert prof.heights[9] == pytest.approx(10 * MM)
        assert prof.heights[10] == 0.0

    @settings(max_examples=150, deadline=None)
    @given(k=st.integers(1, 4), data=st.data())
    def test_steps_are_subspace_of_raw(self, k, data):
        s = make_steps_space(k)
        idx = [data.draw(st.integers(0, m)) for m in s.n_quanta]
        p = s.point(s.repair(idx))
        prof = to_profile(s, p)
        nonzero = {h for h in prof.heights if h != 0.0}
        assert len(nonzero) <= k
        raw = make_raw_space()
        same = to_profile(raw, quantize(raw, prof.heights[1:]))
        assert np.array_equal(np.array(same.heights), np.array(prof.heights))

    def test_deterministic(self):
        s = make_steps_space(3)
        p = s.random_point(np.random.default_rng(3))
        assert to_profile(s, p) == to_profile(s, p)


def test_random_point_is_valid_and_seeded():
    s = make_steps_space(4)
    a = [s.random_point(np.random.default_rng(7)) for _ in range(3)]
    b = [s.random_point(np.random.default_rng(7)) for _ in range(3)]
    assert a == b
    assert all(s.is_valid(p) for p in a)
