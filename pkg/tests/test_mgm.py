import math
import threading

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddemgm.embedding import EmbeddingConfig
from ddemgm.mgm import (
    EPS_P,
    ClassModel,
    EmptyModelError,
    ProtocolError,
    batch_score,
    compare,
    score_init,
    score_update,
)

A, B, C = (0, 0), (1, 0), (2, 2)


def cfg(D):
    return EmbeddingConfig(n=D, s=1, d=1, tau=1, cell_sizes=(1.0,) * D)


def random_model(rng, D, n_obs=300, spread=3, walks=3):
    model = ClassModel(cfg(D))
    for _ in range(walks):
        prev = None
        pos = rng.integers(-spread, spread + 1, D)
        for _ in range(n_obs // walks):
            pos = np.clip(pos + rng.integers(-1, 2, D), -spread, spread)
            cell = tuple(int(v) for v in pos)
            model.observe(cell, prev)
            prev = cell
    return model


def neighborhood_oracle(model, to, frm, r):
    def near(a, b):
        return max(abs(x - y) for x, y in zip(a, b)) <= r
    num = sum(c for (f, t), c in model.trans_counts.items() if near(f, frm) and near(t, to))
    den = sum(c for (f, _), c in model.trans_counts.items() if near(f, frm))
    return num, den


def test_observe_examples():
    m = ClassModel(cfg(2))
    m.observe(A)
    assert m.geo_counts == {A: 1} and m.geo_log_total == math.log(2)
    m.observe(B, prev=A)
    assert m.trans_counts == {(A, B): 1}
    assert m.out_index == {A: {B: 1}} and m.out_total == {A: 1}


def test_observe_shape_error():
    with pytest.raises(ValueError):
        ClassModel(cfg(2)).observe((1, 2, 3))


def test_log_total_tracks_recomputation(rng):
    m = ClassModel(cfg(2))
    prev = None
    for _ in range(10_000):
        cell = tuple(int(v) for v in rng.integers(-6, 7, 2))
        m.observe(cell, prev)
        prev = cell if rng.random() < 0.9 else None
    assert m.geo_log_total == m.recompute_log_total()


def test_geo_prob_examples():
    m = ClassModel(cfg(2))
    m.observe(A)
    assert m.geo_prob(A) == 1.0
    for _ in range(2):
        m.observe(A)
    m.observe(B)
    assert m.geo_prob(A) == pytest.approx(2 / 3, abs=1e-15)
    assert m.geo_prob(B) == pytest.approx(1 / 3, abs=1e-15)
    assert m.geo_prob(C) == 0.0


def test_empty_model_errors():
    m = ClassModel(cfg(2))
    with pytest.raises(EmptyModelError):
        m.geo_prob(A)
    with pytest.raises(EmptyModelError):
        m.trans_prob(A, B)


def test_trans_prob_examples():
    m = ClassModel(cfg(2))
    m.observe(A)
    m.observe(B, A)
    m.observe(A)
    m.observe(B, A)
    m.observe(A)
    m.observe(C, A)
    assert m.trans_prob(B, A) == pytest.approx(2 / 3)
    assert m.trans_prob(C, A) == pytest.approx(1 / 3)
    assert m.trans_prob(A, C) == EPS_P  # C has no outgoing transitions
    assert m.trans_prob(A, A) == EPS_P  # unseen pair
    m2 = ClassModel(cfg(2))
    m2.observe(A)
    m2.observe(B, A)
    assert m2.trans_prob(B, A) == 1.0


def test_neighborhood_worked_example():
    m = ClassModel(cfg(2))
    for frm, to, count in [((0, 0), (1, 0), 2), ((0, 1), (1, 1), 1), ((5, 5), (6, 5), 4)]:
        for _ in range(count):
            m.observe(frm)
            m.observe(to, frm)
    for method in ("enumerate", "scan"):
        assert m.neighborhood_counts((1, 0), (0, 0), 1, method=method) == (3, 3)
    assert m.trans_prob_neighborhood((1, 0), (0, 0), 1) == 1.0
    assert m.trans_prob_neighborhood((30, 30), (20, 20), 1) == EPS_P


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(0, 2))
def test_neighborhood_paths_match_oracle(seed, D, r):
    rng = np.random.default_rng(seed)
    model = random_model(rng, D)
    for _ in range(40):
        to = tuple(int(v) for v in rng.integers(-4, 5, D))
        frm = tuple(int(v) for v in rng.integers(-4, 5, D))
        expect = neighborhood_oracle(model, to, frm, r)
        assert model.neighborhood_counts(to, frm, r, method="enumerate") == expect
        assert model.neighborhood_counts(to, frm, r, method="scan") == expect


def test_high_dimension_uses_scan_and_matches(rng):
    D = 9  # 3**9 > 4096 window cells
    model = random_model(rng, D, n_obs=600, spread=2)
    cells = list(model.geo_counts)
    for _ in range(60):
        to = cells[rng.integers(len(cells))]
        frm = cells[rng.integers(len(cells))]
        expect = neighborhood_oracle(model, to, frm, 1)
        assert model.neighborhood_counts(to, frm, 1) == expect
        assert model.neighborhood_counts(to, frm, 1, method="enumerate") == expect


def test_radius_zero_is_plain_transition(rng):
    model = random_model(rng, 3)
    for (frm, to) in model.trans_counts:
        assert model.trans_prob_neighborhood(to, frm, 0) == model.trans_prob(to, frm)
    for frm in list(model.out_index)[:10]:
        assert model.trans_prob_neighborhood((99, 99, 99), frm, 0) == model.trans_prob((99, 99, 99), frm)


def test_normalization(rng):
    model = random_model(rng, 3, n_obs=2000)
    assert abs(sum(model.geo_prob(c) for c in model.geo_counts) - 1.0) <= 1e-12
    for frm, outs in model.out_index.items():
        assert abs(sum(model.trans_prob(to, frm) for to in outs) - 1.0) <= 1e-12


def test_index_invariants(rng):
    model = random_model(rng, 2, n_obs=1000)
    for (frm, to) in model.trans_counts:
        assert frm in model.geo_counts and to in model.geo_counts
    for frm, outs in model.out_index.items():
        assert model.out_total[frm] == sum(outs.values())


def test_score_init_and_first_update():
    m = ClassModel(cfg(2))
    m.observe(A)
    m.observe(B, A)
    s = score_init()
    assert (s.s_g, s.log_s_m, s.t) == (0.0, 0.0, 0) and s.similarity() == 0.0
    s1 = score_update(s, m, A)
    assert s1.s_g == m.geo_prob(A) and s1.log_s_m == 0.0 and s1.t == 1
    with pytest.raises(ProtocolError):
        score_update(s1, m, B)


def test_all_unseen_trajectory():
    m = ClassModel(cfg(2))
    m.observe(A)
    m.observe(B, A)
    traj = [(10, 10), (20, 20), (30, 30), (40, 40)]
    s_g, log_s_m = batch_score(m, traj)
    assert s_g == 0.0
    assert log_s_m == pytest.approx(3 * math.log(EPS_P))


def fold(model, traj, r):
    state, prev = score_init(), None
    history = []
    for cell in traj:
        state = score_update(state, model, cell, prev, r)
        prev = tuple(cell)
        history.append(state)
    return state, history


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(0, 2))
def test_fold_equals_batch(seed, D, r):
    rng = np.random.default_rng(seed)
    model = random_model(rng, D)
    traj = [tuple(int(v) for v in rng.integers(-4, 5, D)) for _ in range(int(rng.integers(1, 40)))]
    state, history = fold(model, traj, r)
    s_g, log_s_m = batch_score(model, traj, r)
    assert abs(state.s_g - s_g) <= 1e-9 and abs(state.log_s_m - log_s_m) <= 1e-9
    for a, b in zip(history, history[1:]):
        assert b.s_g >= a.s_g and b.log_s_m <= a.log_s_m


def test_batch_empty_trajectory():
    m = ClassModel(cfg(1))
    m.observe((0,))
    with pytest.raises(ValueError):
        batch_score(m, [])


def test_own_path_beats_disjoint_path():
    own = [(i, 0) for i in range(10)]
    other = [(i, 5) for i in range(10)]
    m = ClassModel(cfg(2))
    prev = None
    for cell in own * 3:
        m.observe(cell, prev)
        prev = cell
    assert batch_score(m, own)[0] > batch_score(m, other)[0]
    assert batch_score(m, own)[1] > batch_score(m, other)[1]


def test_compare_examples():
    assert compare([(0.4, -3.0)]) == 0
    assert compare([(0.9, -2.0), (0.1, -2.0)]) == 0
    assert compare([(0.1, -2.0), (0.9, -2.0)]) == 1
    assert compare([(0.5, -1.0), (0.5, -1.0)]) == 0
    assert compare([(0.0, 0.0), (0.0, -1.0)]) is None
    with pytest.raises(ValueError):
        compare([])


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(0, 50), st.floats(-5000, 0)), min_size=1, max_size=8))
def test_compare_matches_extended_precision(scores):
    with mpmath.workdps(60):
        vals = [mpmath.mpf(s) * mpmath.exp(mpmath.mpf(l)) for s, l in scores]
        best = max(vals)
    got = compare(scores)
    if best == 0:
        assert got is None
        return
    tops = [i for i, v in enumerate(vals) if abs(v - best) <= best * mpmath.mpf(10) ** -12]
    assert got in tops


@given(st.lists(st.tuples(st.floats(1e-3, 50), st.floats(-500, 0)), min_size=1, max_size=8),
       st.floats(1e-3, 1e3))
def test_compare_scale_invariant(scores, k):
    shifted = [(s * k, l + math.log(k)) for s, l in scores]
    base = compare(scores)
    vals = [math.log(s) + l for s, l in scores]
    # skip near-ties where rounding of the shift could legitimately flip the order
    ordered = sorted(vals, reverse=True)
    if len(ordered) > 1 and ordered[0] - ordered[1] < 1e-9:
        return
    assert compare(shifted) == base


def test_observation_order_independent_counts(rng):
    walk_a = [tuple(int(v) for v in rng.integers(-3, 4, 2)) for _ in range(200)]
    walk_b = [tuple(int(v) for v in rng.integers(-3, 4, 2)) for _ in range(150)]

    def train(walks):
        m = ClassModel(cfg(2))
        for walk in walks:
            prev = None
            for cell in walk:
                m.observe(cell, prev)
                prev = cell
        return m

    ab, ba = train([walk_a, walk_b]), train([walk_b, walk_a])
    assert ab.geo_counts == ba.geo_counts and ab.trans_counts == ba.trans_counts
    assert ab.geo_log_total == ba.geo_log_total


def test_concurrent_reader_sees_consistent_model(rng):
    cells = [tuple(int(v) for v in rng.integers(-5, 6, 3)) for _ in range(20_000)]
    model = ClassModel(cfg(3))
    stop = threading.Event()
    errors = []

    def reader():
        probe = cells[:50]
        while not stop.is_set():
            try:
                if not model.geo_counts:
                    continue
                for a, b in zip(probe, probe[1:]):
                    p = model.geo_prob(b)
                    q = model.trans_prob_neighborhood(b, a, 1)
                    assert 0.0 <= p <= 1.0 + 1e-12 and 0.0 < q <= 1.0
            except AssertionError as exc:
                errors.append(exc)
                return

    threads = [threading.Thread(target=reader) for _ in range(2)]
    for t in threads:
        t.start()
    prev = None
    for cell in cells:
        model.observe(cell, prev)
        prev = cell
    stop.set()
    for t in threads:
        t.join()
    assert not errors

    serial = ClassModel(cfg(3))
    prev = None
    for cell in cells:
        serial.observe(cell, prev)
        prev = cell
    assert serial.geo_counts == model.geo_counts and serial.trans_counts == model.trans_counts
    assert serial.geo_log_total == model.geo_log_total


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5), st.integers(0, 2))
def test_many_query_paths_match_oracle(seed, D, r):
    rng = np.random.default_rng(seed)
    model = random_model(rng, D)
    tos = rng.integers(-4, 5, (30, D))
    frms = rng.integers(-4, 5, (30, D))
    expect = [neighborhood_oracle(model, tuple(t), tuple(f), r) for t, f in zip(tos.tolist(), frms.tolist())]
    for method in ("probe", "scan"):
        nums, dens = model.neighborhood_counts_many(tos, frms, r, method=method)
        assert list(zip(nums.tolist(), dens.tolist())) == expect


def test_many_query_on_empty_model():
    nums, dens = ClassModel(cfg(2)).neighborhood_counts_many([[0, 0]], [[1, 1]], 1, method="probe")
    assert nums.tolist() == [0] and dens.tolist() == [0]
