import numpy as np
import pytest

from market_env import (
    CoordinateSystem,
    MarketParams,
    Payoff,
    TimeGrid,
    simulate_paths,
)
from stopping_agent import ConstantBoundary, init_mlp, value_strict
from trainer import (
    DivergenceError,
    TrainConfig,
    construct_train_config,
    eps_at,
    evaluate_trained,
    learning_rate,
    train_nosb,
)
from trainer.train import TrainLog, training_batch


def _small_config(**overrides: object) -> TrainConfig:
    values: dict[str, object] = dict(
        iterations=5,
        batch_size=256,
        eps=5.0,
        lr=0.01,
        hidden=(8,),
        output_scale=100.0,
        init_level=115.0,
        seed=11,
        log_every=1,
    )
    values.update(overrides)
    return construct_train_config(values)


def test_zero_iterations_return_the_initial_network(
    desk_params: MarketParams,
    desk_grid: TimeGrid,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
) -> None:
    cfg = _small_config(iterations=0)
    net, log = train_nosb(
        cfg, desk_params, desk_grid, call_payoff, cs_1d, progress=False
    )
    initial = init_mlp(
        1, (8,), horizon=1.0, seed=11, output_scale=100.0, init_level=115.0
    )
    np.testing.assert_array_equal(net.theta, initial.theta)
    assert len(log) == 0


def test_training_is_deterministic(
    desk_params: MarketParams,
    desk_grid: TimeGrid,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
) -> None:
    cfg = _small_config()
    first, log_a = train_nosb(
        cfg, desk_params, desk_grid, call_payoff, cs_1d, progress=False
    )
    second, log_b = train_nosb(
        cfg, desk_params, desk_grid, call_payoff, cs_1d, progress=False
    )
    np.testing.assert_array_equal(first.theta, second.theta)
    assert log_a.to_frame().equals(log_b.to_frame())
    initial = init_mlp(
        1, (8,), horizon=1.0, seed=11, output_scale=100.0, init_level=115.0
    )
    assert not np.array_equal(first.theta, initial.theta)


def test_log_tracks_the_running_best() -> None:
    log = TrainLog()
    for value in [1.0, 3.0, 2.0, 4.0]:
        log.append(value, 0.1, 0.01, 0.05, 0.0)
    assert log.running_best == [1.0, 3.0, 3.0, 4.0]
    frame = log.to_frame()
    assert list(frame.columns) == [
        "iteration",
        "value",
        "grad_norm",
        "lr",
        "eps",
        "running_best",
    ]


def test_training_batches_use_their_own_streams(
    desk_params: MarketParams, desk_grid: TimeGrid
) -> None:
    cfg = _small_config()
    batch = training_batch(cfg, desk_params, desk_grid, 3)
    expected = simulate_paths(desk_params, desk_grid, 256, seed=11, stream=4)
    np.testing.assert_array_equal(batch.values, expected.values)
    evaluation = simulate_paths(desk_params, desk_grid, 256, seed=11)
    assert not np.array_equal(batch.values, evaluation.values)


def test_symmetrized_batches(desk_grid: TimeGrid) -> None:
    params = MarketParams.symmetric(2, 100.0, 0.05, 0.1, 0.2)
    cfg = _small_config(symmetrize=True)
    batch = training_batch(cfg, params, desk_grid, 0)
    assert batch.n_paths == 512
    np.testing.assert_array_equal(
        batch.values[256:], batch.values[:256, :, ::-1]
    )


def test_schedules() -> None:
    cfg = _small_config(lr=0.1, lr_decay_i0=100.0)
    assert learning_rate(cfg, 0) == pytest.approx(0.1)
    assert learning_rate(cfg, 100) == pytest.approx(0.05)
    constant = _small_config(lr_schedule="constant")
    assert learning_rate(constant, 1000) == 0.01
    assert eps_at(cfg, 10_000) == 5.0
    annealed = _small_config(
        eps=0.4, anneal=True, anneal_every=10, eps_floor=0.15
    )
    assert [eps_at(annealed, i) for i in (0, 9, 10, 20, 30)] == [
        0.4,
        0.4,
        0.2,
        0.15,
        0.15,
    ]


def test_invalid_configs() -> None:
    with pytest.raises(ValueError):
        construct_train_config({"iterations": 5, "learning_rate": 0.1})
    with pytest.raises(ValueError):
        TrainConfig(eps=0.0)
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)
    # schedules outside the known pair never reach learning_rate
    with pytest.raises(ValueError, match="schedule"):
        TrainConfig(lr_schedule="cosine")  # type: ignore[arg-type]
    with pytest.raises(ValueError):
        TrainConfig(hidden=(8, 0))
    assert construct_train_config({"hidden": [4, 4]}).hidden == (4, 4)
    assert TrainConfig(seed=3).resolved_eval_seed == 3
    assert TrainConfig(seed=3, eval_seed=9).resolved_eval_seed == 9


def test_divergence_guard(
    desk_params: MarketParams,
    desk_grid: TimeGrid,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
) -> None:
    # paths cross the fuzzy band below 115, so every gradient is nonzero
    cfg = _small_config(
        init_level=115.0, divergence_threshold=1e-12, divergence_patience=2
    )
    with pytest.raises(DivergenceError) as excinfo:
        train_nosb(
            cfg, desk_params, desk_grid, call_payoff, cs_1d, progress=False
        )
    assert excinfo.value.iteration == 1
    assert len(excinfo.value.grad_norms) == 2
    assert all(norm > 1e-12 for norm in excinfo.value.grad_norms)

    # the same run trains through with the default threshold
    _, log = train_nosb(
        _small_config(init_level=115.0, iterations=2),
        desk_params,
        desk_grid,
        call_payoff,
        cs_1d,
        progress=False,
    )
    assert len(log) == 2
    assert log.grad_norm[0] > 0


def test_evaluation_ignores_the_thread_count(
    desk_params: MarketParams,
    desk_grid: TimeGrid,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    net = init_mlp(1, (8,), seed=1, output_scale=100.0, init_level=120.0)
    results = []
    for threads in ("1", "4"):
        monkeypatch.setenv("NOSB_THREADS", threads)
        results.append(
            evaluate_trained(
                net,
                5000,
                7,
                desk_params,
                desk_grid,
                call_payoff,
                cs_1d,
                chunk=1000,
            )
        )
    assert results[0] == results[1]
    assert results[0].n == 5000


def test_evaluation_pools_chunks_exactly(
    desk_params: MarketParams,
    desk_grid: TimeGrid,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
) -> None:
    never = init_mlp(1, (4,), output_scale=100.0, init_level=1e6)
    est = evaluate_trained(
        never, 3000, 5, desk_params, desk_grid, call_payoff, cs_1d, chunk=700
    )
    paths = simulate_paths(desk_params, desk_grid, 3000, seed=5)
    direct = value_strict(ConstantBoundary(np.inf), paths, call_payoff, cs_1d)
    assert est.mean == pytest.approx(direct.mean, rel=1e-12)
    assert est.stderr == pytest.approx(direct.stderr, rel=1e-9)
