import numpy as np
import pytest

from imitate.data import gen_zshape
from imitate.errors import InputError
from imitate.latent import (
    MfaParams,
    SemiTiedParams,
    count_parameters,
    expected_loglik,
    mfa_mstep,
    semitied_mstep,
    weighted_stats,
)
from imitate.markov import EMConfig, em_fit


def frob_rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_weighted_stats_hard_assignment(rng):
    X = rng.normal(size=(30, 1, 2))
    resp = np.zeros((30, 2))
    resp[:10, 0] = 1
    resp[10:, 1] = 1
    counts, means, scatter = weighted_stats(resp, X)
    assert np.allclose(counts, [10, 20])
    assert np.allclose(means[1, 0], X[10:, 0].mean(0))
    assert np.allclose(scatter[0, 0], np.cov(X[:10, 0].T, bias=True))


# -- MFA -------------------------------------------------------------------


def test_mfa_zero_loading_data():
    rng = np.random.default_rng(0)
    psi = np.full(4, 0.01)
    X = rng.normal(size=(5000, 4)) * np.sqrt(psi)
    _, p = mfa_mstep(np.ones((5000, 1)), X[:, None, :], 1, n_iter=50)
    assert np.linalg.norm(p.loadings[0, 0]) < 0.05
    assert np.all(np.abs(p.psi[0, 0] / psi - 1) < 0.1)


def test_mfa_one_factor_matches_sample_covariance():
    rng = np.random.default_rng(1)
    L = np.array([[1.0], [0.5], [-0.8], [0.3]])
    psi = np.array([0.2, 0.1, 0.3, 0.15])
    X = rng.normal(size=(4000, 1)) @ L.T + rng.normal(size=(4000, 4)) * np.sqrt(psi)
    _, p = mfa_mstep(np.ones((4000, 1)), X[:, None, :], 1, n_iter=50)
    S = np.cov(X.T, bias=True)
    assert frob_rel(p.covariances()[0, 0], S) < 0.05


def test_mfa_rejects_bad_latent_dim(rng):
    X = rng.normal(size=(20, 1, 3))
    for d in (0, 3, 4):
        with pytest.raises(InputError):
            mfa_mstep(np.ones((20, 1)), X, d)


def test_mppca_isotropic_noise(rng):
    X = rng.normal(size=(200, 1, 4))
    _, p = mfa_mstep(np.ones((200, 1)), X, 2, mppca=True)
    assert np.allclose(p.psi[0, 0], p.psi[0, 0, 0])


def test_mfa_covariances_symmetric_pd(rng):
    L = rng.normal(size=(3, 2, 4, 2))
    cov = MfaParams(L, rng.uniform(0.1, 1.0, size=(3, 2, 4))).covariances()
    assert np.allclose(cov, np.swapaxes(cov, -1, -2))
    assert np.all(np.linalg.eigvalsh(cov) > 0)


def test_mfa_full_rank_close_to_full_covariance():
    demos = [d.points for d in gen_zshape(4, 80, 0.03, seed=3)]
    full = em_fit(demos, 3, EMConfig(seed=1))
    mfa = em_fit(demos, 3, EMConfig(seed=1, structure="mfa", latent_dim=2, mfa_iters=20))
    assert abs(mfa.ll_history[-1] - full.ll_history[-1]) <= 0.01 * abs(full.ll_history[-1])


# -- semi-tied -------------------------------------------------------------


def test_semitied_single_state_attains_full_likelihood(rng):
    A = rng.normal(size=(3, 3))
    Y = rng.multivariate_normal(np.zeros(3), A @ A.T + np.eye(3), size=3000)
    S = np.cov(Y.T, bias=True)
    _, p = semitied_mstep(np.ones((3000, 1)), Y[:, None, :], n_iter=20)
    assert abs(expected_loglik(3000, S, p.covariances()[0, 0]) - expected_loglik(3000, S, S)) < 1e-6


def test_semitied_shared_rotation_recovers_covariances():
    rng = np.random.default_rng(4)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    scales = [np.array([1.0, 0.2, 0.05]), np.array([0.1, 2.0, 0.5]), np.array([0.4, 0.4, 3.0])]
    X, labels = [], []
    for k, s in enumerate(scales):
        X.append(rng.multivariate_normal(np.zeros(3), Q @ np.diag(s) @ Q.T, size=3000))
        labels += [k] * 3000
    X = np.vstack(X)
    resp = np.eye(3)[labels]
    _, p = semitied_mstep(resp, X[:, None, :], n_iter=50)
    _, _, scatter = weighted_stats(resp, X[:, None, :])
    cov = p.covariances()
    for k in range(3):
        assert frob_rel(cov[k, 0], scatter[k, 0]) < 0.05


def test_semitied_covariances_symmetric_pd(rng):
    H = rng.normal(size=(2, 3, 3)) + 2 * np.eye(3)
    cov = SemiTiedParams(H, rng.uniform(0.1, 1.0, size=(4, 2, 3))).covariances()
    assert np.allclose(cov, np.swapaxes(cov, -1, -2))
    assert np.all(np.linalg.eigvalsh(cov) > 0)


# -- parameter counts --------------------------------------------------------


@pytest.mark.parametrize(
    "structure,d,expected",
    [("full", None, 2198), ("semitied", None, 1030), ("mfa", 1, 742), ("mfa", 4, 1414), ("mfa", 7, 2086)],
)
def test_count_parameters_table(structure, d, expected):
    assert count_parameters(structure, 7, 2, 16, d) == expected


def test_count_parameters_per_state_dims():
    # per state F(2D + D d_i) + 2, i.e. 11 and 14, plus K^2 + K = 6
    assert count_parameters("sva", 2, 1, 3, [1, 2]) == 31


def test_count_parameters_errors():
    with pytest.raises(InputError):
        count_parameters("mfa", 7, 2, 16)
    with pytest.raises(InputError):
        count_parameters("diag", 7, 2, 16)
    with pytest.raises(InputError):
        count_parameters("sva", 2, 1, 3, [1])
