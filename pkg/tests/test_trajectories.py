import math

import numpy as np
import pytest

from antikz.evolve import IntegratorConfig, integrate_mode
from antikz.model import ModelParams, coefficients, initial_state
from antikz.trajectories import (TrajectoryConfig, channel_average, noise_average,
                                 noise_generator, sample_chain_trajectories,
                                 sample_trajectories, sample_trajectory)


def _master(k, p):
    return integrate_mode(initial_state(k, p), coefficients(k, p), p, IntegratorConfig(dt=1e-3))


def test_same_seed_bit_identical():
    p = ModelParams(N=8, tau=2.0, w2=0.02)
    cfg = TrajectoryConfig(seed=99)
    a = sample_trajectory(0.7, p, cfg, 5)
    b = sample_trajectory(0.7, p, cfg, 5)
    assert np.array_equal(a, b)


def test_streams_differ_by_index_k_and_seed():
    base = noise_generator(1, 0.5, 0).standard_normal(4)
    assert not np.array_equal(base, noise_generator(1, 0.5, 1).standard_normal(4))
    assert not np.array_equal(base, noise_generator(1, 0.6, 0).standard_normal(4))
    assert not np.array_equal(base, noise_generator(2, 0.5, 0).standard_normal(4))


def test_batch_independent_of_split():
    p = ModelParams(N=8, tau=1.0, w2=0.05)
    cfg = TrajectoryConfig()
    all_ = sample_trajectories(1.2, p, cfg, np.arange(6))
    one = np.array([sample_trajectory(1.2, p, cfg, i) for i in range(6)])
    assert np.array_equal(all_, one)


def test_workers_do_not_change_average(monkeypatch):
    import antikz.trajectories as tr

    monkeypatch.setattr(tr, "BATCH", 50)
    p = ModelParams(N=8, tau=1.0, w2=0.05)
    a = noise_average(1.0, p, TrajectoryConfig(n_traj=200, workers=1))
    b = noise_average(1.0, p, TrajectoryConfig(n_traj=200, workers=3))
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.stderr, b.stderr)


def test_trajectories_stay_normalised():
    p = ModelParams(N=8, tau=3.0, w2=0.1)
    psi = sample_trajectories(2.0, p, TrajectoryConfig(), np.arange(20))
    assert np.allclose(np.linalg.norm(psi, axis=1), 1.0, atol=1e-12)


def test_noiseless_trajectories_identical_and_coherent():
    p = ModelParams(N=8, tau=4.0, w2=0.0)
    avg = noise_average(0.9, p, TrajectoryConfig(n_traj=5))
    assert np.all(avg.stderr == 0.0)
    assert np.abs(avg.mean - _master(0.9, p)).max() < 1e-5


def test_noise_average_is_density_matrix():
    p = ModelParams(N=8, tau=2.0, w2=0.05)
    avg = noise_average(1.5, p, TrajectoryConfig(n_traj=300))
    assert np.trace(avg.mean).real == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(avg.mean, avg.mean.conj().T)
    assert np.linalg.eigvalsh(avg.mean).min() >= -1e-12


def test_channel_bias_is_first_order():
    p = ModelParams(N=8, tau=4.0, w2=0.05)
    ref = _master(1.0, p)
    errs = [np.abs(channel_average(1.0, p, TrajectoryConfig(dt=dt)) - ref).max()
            for dt in (0.02, 0.01, 0.005)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(1.8 < r < 2.2 for r in ratios)


def test_novikov_small_sample():
    # mean of 2000 realisations within 3 standard errors of the master equation
    p = ModelParams(N=8, tau=5.0, w2=0.02)
    k = 1.0
    avg = noise_average(k, p, TrajectoryConfig(n_traj=2000, seed=3))
    diff = avg.mean - _master(k, p)
    for d, e in ((diff.real, avg.stderr_real), (diff.imag, avg.stderr_imag)):
        mask = e > 0
        assert np.all(np.abs(d[mask]) < 3 * e[mask])


def test_chain_trajectories_normalised():
    p = ModelParams(N=4, tau=1.0, w2=0.05)
    psi = sample_chain_trajectories(p, TrajectoryConfig(scope="full"), np.arange(4))
    assert psi.shape == (4, 4)
    assert np.allclose(np.linalg.norm(psi, axis=1), 1.0)


def test_config_checks():
    with pytest.raises(ValueError):
        TrajectoryConfig(n_traj=0)
    with pytest.raises(ValueError):
        TrajectoryConfig(seed=-1)
    with pytest.raises(ValueError):
        TrajectoryConfig(scope="chain")
    with pytest.raises(ValueError):
        TrajectoryConfig(dt=0.1).check(ModelParams(N=8, tau=1.0, w2=0.1))
