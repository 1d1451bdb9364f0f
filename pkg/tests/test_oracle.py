import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from interfere.oracle import (
    ContentionParams,
    Mode,
    QoSParams,
    naive_sum_error,
    simulate_colocation,
    simulate_qos,
    synthesize_profiles,
    write_profiles_csv,
)
from interfere.profiles import ApplicationProfile, ResourceSpace, load_profiles

unit = st.floats(0, 1, allow_nan=False)
vec3 = st.lists(unit, min_size=3, max_size=3)


def prof(i, u):
    return ApplicationProfile(f"a{i:02d}", tuple(u))


def params(mode=Mode.SATURATING, gamma=0.0, sigma=0.0, R=3, seed=0):
    return ContentionParams.uniform(R, mode, gamma, sigma, seed)


@pytest.mark.parametrize("mode", list(Mode))
def test_singleton_identity(mode):
    u = (0.3, 0.0, 0.9)
    np.testing.assert_array_equal(simulate_colocation([prof(0, u)], params(mode)), u)


def test_two_apps_formulas():
    a, b = prof(0, (0.6, 0.0, 0.0)), prof(1, (0.6, 0.0, 0.0))
    assert simulate_colocation([a, b], params(Mode.SATURATING))[0] == pytest.approx(0.84, abs=1e-15)
    assert simulate_colocation([a, b], params(Mode.CAPPED_LINEAR))[0] == 1.0


def test_interaction_inflation_by_hand():
    # combined (pre-interaction) = [0.5, 0.2, 0.0]; for CPU m = (0.2 + 0.0) / 2
    out = simulate_colocation([prof(0, (0.5, 0.2, 0.0))], params(gamma=0.3))
    np.testing.assert_allclose(out, [0.5 * (1 + 0.3 * 0.1), 0.2 * (1 + 0.3 * 0.25), 0.0])


def test_empty_input_and_bad_params():
    with pytest.raises(ValueError):
        simulate_colocation([], params())
    with pytest.raises(ValueError):
        ContentionParams.uniform(3, sigma=0.5)
    with pytest.raises(ValueError):
        ContentionParams.uniform(3, gamma=-0.1)


@given(st.lists(vec3, min_size=1, max_size=6), st.sampled_from(list(Mode)),
       st.floats(0, 1), st.floats(0, 0.49), st.integers(0, 1000), st.randoms())
def test_output_in_unit_cube_and_order_free(rows, mode, gamma, sigma, seed, rnd):
    profs = [prof(i, r) for i, r in enumerate(rows)]
    p = params(mode, gamma, sigma, seed=seed)
    out = simulate_colocation(profs, p)
    assert np.all((out >= 0) & (out <= 1))
    shuffled = profs[:]
    rnd.shuffle(shuffled)
    np.testing.assert_array_equal(out, simulate_colocation(shuffled, p))


@given(st.lists(vec3, min_size=1, max_size=5), vec3, st.sampled_from(list(Mode)), st.floats(0, 1))
def test_adding_an_app_never_lowers_utilization(rows, extra, mode, gamma):
    profs = [prof(i, r) for i, r in enumerate(rows)]
    p = params(mode, gamma)
    before = simulate_colocation(profs, p)
    after = simulate_colocation(profs + [prof(99, extra)], p)
    assert np.all(after >= before - 1e-12)


def test_noise_is_seeded_by_content():
    profs = [prof(0, (0.3, 0.3, 0.3)), prof(1, (0.2, 0.1, 0.4))]
    p = params(gamma=0.3, sigma=0.05, seed=4)
    a = simulate_colocation(profs, p)
    assert np.array_equal(a, simulate_colocation(profs[::-1], p))
    assert not np.array_equal(a, simulate_colocation(profs, params(gamma=0.3, sigma=0.05, seed=5)))


def test_qos_examples():
    qp = QoSParams(100.0, (1.0, 0.0, 0.0), p=2)
    assert simulate_qos(prof(0, (0, 0, 0)), np.zeros(3), qp) == 100.0
    assert simulate_qos(prof(0, (0, 0, 0)), np.array([0.5, 0, 0]), qp) == pytest.approx(125.0)


def test_qos_validation():
    with pytest.raises(ValueError):
        QoSParams(0.0, (1.0,))
    with pytest.raises(ValueError):
        QoSParams(10.0, (0.0, 0.0))
    with pytest.raises(ValueError):
        QoSParams(10.0, (1.0,), p=0.5)
    with pytest.raises(ValueError):
        simulate_qos(prof(0, (0,)), np.array([1.5]), QoSParams(10.0, (1.0,)))


@given(vec3, st.integers(0, 2), st.floats(0, 1), st.lists(st.floats(0, 2), min_size=3, max_size=3),
       st.floats(1, 4))
def test_qos_monotone_when_noiseless(bg, j, bump, weights, p):
    weights[0] += 0.01
    qp = QoSParams(50.0, tuple(weights), p=p)
    lo = np.array(bg)
    hi = lo.copy()
    hi[j] = max(hi[j], bump)
    t = prof(0, (0, 0, 0))
    assert simulate_qos(t, hi, qp) >= simulate_qos(t, lo, qp)


@given(vec3, st.floats(0, 0.45))
def test_qos_noise_deterministic_and_floored(bg, sigma):
    qp = QoSParams(80.0, (1.0, 1.0, 1.0), p=2, sigma=sigma, seed=3)
    t = prof(0, (0, 0, 0))
    q = simulate_qos(t, np.array(bg), qp)
    assert q == simulate_qos(t, np.array(bg), qp)
    assert q >= 40.0


def _random_combos(ds, n, lo, hi, seed):
    rng = np.random.default_rng(seed)
    ids = sorted(ds.app_ids)
    return [list(rng.choice(ids, rng.integers(lo, hi + 1), replace=False)) for _ in range(n)]


def test_naive_sum_over_predicts_without_interaction():
    sp = ResourceSpace(("x", "y", "z"), (1, 1, 1), ("x", "y", "z"))
    ds = synthesize_profiles(20, sp, seed=1, beta_a=1, beta_b=8)
    combos = _random_combos(ds, 30, 2, 3, 0)
    rep = naive_sum_error(ds, combos, params(Mode.SATURATING, 0.0, 0.0))
    nonzero = rep.summed < 1.0
    assert np.all(rep.ape[nonzero] > 0)
    assert np.all(rep.summed >= rep.observed - 1e-15)


def test_naive_sum_error_matches_independent_recomputation(space):
    ds = synthesize_profiles(40, space, seed=2)
    combos = _random_combos(ds, 50, 2, 4, 1)
    p = ContentionParams.uniform(space.R)
    rep = naive_sum_error(ds, combos, p)
    lookup = ds.by_id()
    idx = [space.names.index(d) for d in space.stress_dims]
    for row, combo in zip(rep.ape, combos):
        raw = [lookup[a].utilization for a in combo]
        summed = [min(1.0, sum(r[j] for r in raw)) for j in idx]
        # observation recomputed from the formula, independent of the module
        base = []
        for j in range(space.R):
            prod = 1.0
            for r in raw:
                prod *= 1.0 - r[j]
            base.append(1.0 - prod)
        obs_full = simulate_colocation([lookup[a] for a in combo], p)
        for k, j in enumerate(idx):
            m = (sum(base) - base[j]) / (space.R - 1)
            noiseless = min(1.0, base[j] * (1 + 0.3 * m))
            assert abs(obs_full[j] / noiseless - 1) < 0.2  # noise is a small relative perturbation
            expect = abs(summed[k] - obs_full[j]) / obs_full[j] * 100
            assert abs(row[k] - expect) <= 1e-9


def test_naive_sum_error_rejects_singletons(space):
    ds = synthesize_profiles(5, space, seed=0)
    with pytest.raises(ValueError):
        naive_sum_error(ds, [[ds.app_ids[0]]], ContentionParams.uniform(space.R))
    with pytest.raises(ValueError):
        naive_sum_error(ds, [], ContentionParams.uniform(space.R))


def test_synthesize_profiles(space, tmp_path):
    ds = synthesize_profiles(106, space, seed=7)
    assert len(ds) == 106 and len(set(ds.app_ids)) == 106
    assert np.all((ds.matrix >= 0) & (ds.matrix <= 1))
    assert len(synthesize_profiles(1, space, seed=7)) == 1
    write_profiles_csv(ds, tmp_path / "a.csv")
    write_profiles_csv(synthesize_profiles(106, space, seed=7), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    again = load_profiles(tmp_path / "a.csv", space)
    np.testing.assert_allclose(again.matrix, ds.matrix, atol=5e-7)
