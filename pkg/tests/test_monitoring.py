import math

import numpy as np
import pytest

from binarx import (
    MonitoringTerminatedError,
    ThresholdTable,
    ThresholdUnavailableError,
    default_model_spec,
    monitor_init,
    monitor_run,
    monitor_update,
    rho,
    score,
    simulate_series,
    weight,
)

SPEC = default_model_spec()


def _training(m=300, seed=50):
    return simulate_series(SPEC, m, seed=seed)


def _stream_sample(length, seed, init):
    return simulate_series(SPEC, length, seed=seed, init=init, burn_in=0)


def _stream_iter(sample):
    return zip(sample.x[1:], sample.w)


def test_rho_at_one_gamma_zero():
    assert rho(1.0, 0.0) == 0.5


def test_rho_at_one_gamma_quarter():
    assert rho(1.0, 0.25) == pytest.approx(2.0 ** -0.75, abs=1e-15)
    assert rho(1.0, 0.25) == pytest.approx(0.5946035575013605, abs=1e-12)


def test_rho_strictly_decreasing():
    s = np.linspace(0.01, 6.0, 500)
    for gamma in (0.0, 0.25, 0.4):
        vals = np.array([rho(v, gamma) for v in s])
        assert np.all(np.diff(vals) < 0)


def test_rho_domain_error():
    with pytest.raises(ValueError):
        rho(0.0, 0.25)
    with pytest.raises(ValueError):
        rho(-1.0, 0.0)
    with pytest.raises(ValueError):
        rho(1.0, 0.5)


def test_weight_examples():
    assert weight(100, 100, 0.0) == pytest.approx(0.05, abs=1e-15)
    assert weight(100, 1, 0.0) == pytest.approx(0.1 / 1.01, abs=1e-15)


def test_weight_matches_rho_identity():
    rng = np.random.default_rng(3)
    for _ in range(100):
        m = int(rng.integers(1, 2000))
        k = int(rng.integers(1, 5000))
        gamma = float(rng.uniform(0.0, 0.499))
        lhs = weight(m, k, gamma)
        rhs = m ** -0.5 * rho(k / m, gamma)
        assert abs(lhs - rhs) <= 1e-14 * max(1.0, abs(rhs))


def test_weight_domain_errors():
    with pytest.raises(ValueError):
        weight(100, 0, 0.0)
    with pytest.raises(ValueError):
        weight(0, 1, 0.0)


def test_monitor_init_fresh_state():
    state = monitor_init(_training(), SPEC.n, horizon=3.0, gamma=0.0, alpha=0.05,
                         threshold_source=7.0)
    assert state.k == 0
    assert state.alarm_at is None
    np.testing.assert_array_equal(state.running_sum, np.zeros(3))
    assert state.config.horizon_steps == 900


def test_monitor_init_zero_score_identity():
    training = _training()
    state = monitor_init(training, SPEC.n, horizon=3.0, gamma=0.0, alpha=0.05,
                         threshold_source=7.0)
    assert np.abs(score(training, SPEC.n, state.beta_hat)).max() < 1e-8


def test_monitor_init_a_policies():
    training = _training()
    ident = monitor_init(training, SPEC.n, horizon=2.0, gamma=0.0, alpha=0.05,
                         a_policy="identity", threshold_source=math.inf)
    np.testing.assert_array_equal(ident.config.a_matrix, np.eye(3))
    default = monitor_init(training, SPEC.n, horizon=2.0, gamma=0.0, alpha=0.05,
                           threshold_source=math.inf)
    assert np.linalg.eigvalsh(default.config.a_matrix).min() > 0
    with pytest.raises(ValueError):
        monitor_init(training, SPEC.n, horizon=2.0, gamma=0.0, alpha=0.05,
                     a_policy="bogus", threshold_source=1.0)


def test_monitor_init_threshold_table_lookup():
    table = ThresholdTable(entries={(0.0, 0.05): 7.25}, reps=100, grid_m=1000,
                           horizon=3.0, master_seed=1)
    state = monitor_init(_training(), SPEC.n, horizon=3.0, gamma=0.0, alpha=0.05,
                         threshold_source=table)
    assert state.config.threshold_c == 7.25
    with pytest.raises(ThresholdUnavailableError):
        monitor_init(_training(), SPEC.n, horizon=3.0, gamma=0.25, alpha=0.05,
                     threshold_source=table)


def test_identity_policy_statistic_is_weighted_norm():
    training = _training()
    state = monitor_init(training, SPEC.n, horizon=3.0, gamma=0.25, alpha=0.05,
                         a_policy="identity", threshold_source=math.inf)
    stream = _stream_sample(5, seed=81, init=int(training.x[-1]))
    stats = []
    for x_new, w_new in _stream_iter(stream):
        _, stat = monitor_update(state, int(x_new), w_new)
        stats.append(stat)
        expected = weight(state.config.m, state.k, 0.25) ** 2 * float(
            state.running_sum @ state.running_sum
        )
        assert stat == pytest.approx(expected, rel=1e-12)
    assert all(s >= 0 for s in stats)


def test_monitor_update_recomputability_exact():
    training = _training(m=200, seed=51)
    state = monitor_init(training, SPEC.n, horizon=3.0, gamma=0.0, alpha=0.05,
                         threshold_source=math.inf)
    stream = _stream_sample(40, seed=82, init=int(training.x[-1]))
    beta = state.beta_hat
    ref = np.zeros(3)
    x_prev = int(training.x[-1])
    for x_new, w_new in _stream_iter(stream):
        monitor_update(state, int(x_new), w_new)
        from binarx import build_regressor, success_prob

        z = build_regressor(x_prev, w_new)
        ref = ref + z * (int(x_new) - SPEC.n * success_prob(beta, z))
        x_prev = int(x_new)
        np.testing.assert_array_equal(state.running_sum, ref)


def test_monitor_update_rejects_after_alarm():
    training = _training(m=100, seed=52)
    state = monitor_init(training, SPEC.n, horizon=3.0, gamma=0.0, alpha=0.05,
                         threshold_source=1e-12)
    stream = _stream_sample(3, seed=83, init=int(training.x[-1]))
    pairs = list(_stream_iter(stream))
    monitor_update(state, int(pairs[0][0]), pairs[0][1])
    assert state.alarm_at == 1
    with pytest.raises(MonitoringTerminatedError):
        monitor_update(state, int(pairs[1][0]), pairs[1][1])


def test_monitor_update_rejects_after_horizon():
    training = _training(m=10, seed=53)
    state = monitor_init(training, SPEC.n, horizon=0.2, gamma=0.0, alpha=0.05,
                         threshold_source=math.inf)
    assert state.config.horizon_steps == 2
    stream = _stream_sample(3, seed=84, init=int(training.x[-1]))
    pairs = list(_stream_iter(stream))
    for x_new, w_new in pairs[:2]:
        monitor_update(state, int(x_new), w_new)
    with pytest.raises(MonitoringTerminatedError):
        monitor_update(state, int(pairs[2][0]), pairs[2][1])


def test_monitor_update_range_check():
    training = _training(m=100, seed=54)
    state = monitor_init(training, SPEC.n, horizon=3.0, gamma=0.0, alpha=0.05,
                         threshold_source=math.inf)
    with pytest.raises(ValueError):
        monitor_update(state, 11, np.array([1.0]))


def test_monitor_run_no_alarm_full_history():
    training = _training(m=100, seed=55)
    state = monitor_init(training, SPEC.n, horizon=3.0, gamma=0.0, alpha=0.05,
                         threshold_source=math.inf)
    stream = _stream_sample(300, seed=85, init=int(training.x[-1]))
    result = monitor_run(state, _stream_iter(stream))
    assert result.alarm_at is None
    assert not result.truncated
    assert result.k_final == 300
    assert len(result.statistic_history) == 300


def test_monitor_run_deterministic():
    def run_once():
        training = _training(m=100, seed=56)
        state = monitor_init(training, SPEC.n, horizon=3.0, gamma=0.25, alpha=0.05,
                             threshold_source=math.inf)
        stream = _stream_sample(300, seed=86, init=int(training.x[-1]))
        return monitor_run(state, _stream_iter(stream))

    a, b = run_once(), run_once()
    assert a.statistic_history == b.statistic_history
    assert a.alarm_at == b.alarm_at


def test_monitor_run_truncated_stream():
    training = _training(m=100, seed=57)
    state = monitor_init(training, SPEC.n, horizon=3.0, gamma=0.0, alpha=0.05,
                         threshold_source=math.inf)
    stream = _stream_sample(50, seed=87, init=int(training.x[-1]))
    result = monitor_run(state, _stream_iter(stream))
    assert result.truncated
    assert result.alarm_at is None
    assert result.k_final == 50


def test_monitor_statistics_match_vectorized_reference():
    # The streaming monitor and a batch evaluation of the same formulas must
    # agree along the whole path.
    from scipy.special import expit

    training = _training(m=150, seed=58)
    state = monitor_init(training, SPEC.n, horizon=2.0, gamma=0.4, alpha=0.05,
                         threshold_source=math.inf)
    stream = _stream_sample(300, seed=88, init=int(training.x[-1]))
    result = monitor_run(state, _stream_iter(stream))

    beta = state.beta_hat.as_array()
    A = state.config.a_matrix
    xs = np.concatenate([[training.x[-1]], stream.x[1:]])
    Z = np.column_stack([np.ones(300), xs[:-1], stream.w])
    G = Z * (stream.x[1:] - SPEC.n * expit(Z @ beta))[:, None]
    S = np.cumsum(G, axis=0)
    q = ((S @ A) * S).sum(axis=1)
    ref = weight(150, np.arange(1, 301), 0.4) ** 2 * q
    np.testing.assert_allclose(np.asarray(result.statistic_history), ref, rtol=1e-10)
