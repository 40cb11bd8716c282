import math

import numpy as np
import pytest

from imitate.data import gen_zshape
from imitate.errors import InputError
from imitate.markov import decode_reference
from imitate.sva import (
    Cluster,
    SvaHyper,
    SvaState,
    default_bandwidth,
    subspace_distance,
    sva_fit,
    sva_loss,
    sva_observe,
    sva_sweep,
    to_hsmm,
)
from oracles import dp_means


def point_cluster(mean):
    mean = np.asarray(mean, dtype=float)
    return Cluster(mean, np.zeros((mean.shape[0], 0)))


def stream(X, hyper):
    state = SvaState()
    state.start_sequence()
    for x in X:
        sva_observe(state, x, hyper)
    return state


def test_hyper_validation():
    with pytest.raises(InputError):
        SvaHyper(lam=-1.0)
    with pytest.raises(InputError):
        SvaHyper(bandwidth=0.0)


# -- distance --------------------------------------------------------------


def test_distance_at_mean_is_zero():
    c = Cluster(np.array([1.0, 2.0]), np.array([[1.0], [0.0]]))
    assert subspace_distance([1.0, 2.0], c, 1.0) == 0.0


def test_distance_without_basis_is_euclidean(rng):
    x, mu = rng.normal(size=3), rng.normal(size=3)
    assert subspace_distance(x, point_cluster(mu), 2.0) == pytest.approx(np.linalg.norm(x - mu), abs=1e-15)


def test_distance_hand_value():
    c = Cluster(np.zeros(2), np.array([[1.0], [0.0]]))
    assert subspace_distance([2.0, 0.0], c, 4.0) == pytest.approx((1 - math.exp(-1)) * 2, abs=1e-9)
    assert subspace_distance([2.0, 0.0], c, 4.0) == pytest.approx(1.26424, abs=1e-5)


# -- loss ------------------------------------------------------------------


def test_loss_single_cluster_at_mean():
    X = np.tile([0.5, -0.5], (6, 1))
    state = SvaState([point_cluster([0.5, -0.5])], np.array([[5]]), None, [0] * 6, [0])
    assert sva_loss(state, X, SvaHyper()) == 0.0


def test_loss_unused_cluster_costs_lambda():
    X = np.tile([0.5, -0.5], (6, 1))
    hyper = SvaHyper(lam=2.5)
    a = SvaState([point_cluster([0.5, -0.5])], np.array([[5]]), None, [0] * 6, [0])
    b = SvaState([point_cluster([0.5, -0.5]), point_cluster([9.0, 9.0])], np.array([[5, 0], [0, 0]]), None, [0] * 6, [0])
    assert sva_loss(b, X, hyper) - sva_loss(a, X, hyper) == pytest.approx(2.5, abs=1e-12)


def test_loss_hand_summed_terms():
    X = np.array([[0.1], [-0.1], [1.2], [0.9], [0.0]])
    state = SvaState([point_cluster([0.0]), point_cluster([1.0])], np.array([[1, 1], [1, 1]]), None, [0, 0, 1, 1, 0], [0])
    hyper = SvaHyper(lam=1.0, lam1=0.1, lam2=0.1, lam3=0.1)
    dist = 0.01 + 0.01 + 0.04 + 0.01 + 0.0
    trans = -0.1 * 4 * math.log(0.5)
    new_edges = 0.1 * (1 + 1)
    assert sva_loss(state, X, hyper) == pytest.approx(dist + 1.0 + trans + new_edges, abs=1e-12)


def test_loss_requires_full_assignment():
    state = SvaState([point_cluster([0.0])], np.array([[0]]), None, [0], [0])
    with pytest.raises(InputError):
        sva_loss(state, np.zeros((3, 1)), SvaHyper())


# -- streaming -------------------------------------------------------------


def test_first_observation_bootstraps():
    state = stream([np.array([1.0, 2.0])], SvaHyper())
    assert state.K == 1 and state.dims == [0]
    assert np.array_equal(state.clusters[0].mean, [1.0, 2.0])


def test_spawn_threshold():
    hyper = SvaHyper(lam=1.0, lam2=0.0, lam3=0.0)
    far = stream([np.zeros(2), np.array([1.1, 0.0])], hyper)
    near = stream([np.zeros(2), np.array([0.9, 0.0])], hyper)
    assert far.K == 2 and near.K == 1
    assert np.allclose(near.clusters[0].mean, [0.45, 0.0])


def test_tau_counts_distinct_transitions(rng):
    state = stream(rng.normal(size=(60, 2)) * 2, SvaHyper(lam=1.0))
    assert np.array_equal(state.tau, np.count_nonzero(state.transition_counts, axis=1))
    assert state.transition_counts.sum() == 59


def test_subspace_grows_on_a_line():
    t = np.linspace(0, 1, 64)[:, None]
    X = t * np.array([[1.0, 1.0, 0.0]])
    state = stream(X, SvaHyper(lam=10.0, lam1=0.01, bandwidth=10.0))
    assert state.K == 1 and state.dims == [1]
    u = state.clusters[0].basis[:, 0]
    assert abs(abs(u @ np.array([1, 1, 0]) / math.sqrt(2)) - 1) < 1e-8


def test_bases_orthonormal(rng):
    X = rng.normal(size=(300, 4))
    state, _ = sva_fit([X], SvaHyper(lam=3.0, lam1=0.05, bandwidth=default_bandwidth(X)), 3)
    for c in state.clusters:
        assert np.allclose(c.basis.T @ c.basis, np.eye(c.dim), atol=1e-8)


# -- sweeps ----------------------------------------------------------------


def test_sweeps_do_not_increase_loss(rng):
    seqs = [rng.normal(size=(80, 2)) + k for k in range(3)]
    X = np.vstack(seqs)
    _, trace = sva_fit(seqs, SvaHyper(lam=1.5, bandwidth=default_bandwidth(X)), 6)
    assert np.all(np.diff(trace) <= 1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_dp_means_limit(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 2)) * 2
    hyper = SvaHyper(lam=2.0, lam1=1e9, lam2=0.0, lam3=0.0)
    state = stream(X, hyper)
    for _ in range(4):
        sva_sweep(state, X, hyper)
    z, means = dp_means(X, 2.0, 4)
    assert state.assignments == z
    assert np.allclose([c.mean for c in state.clusters], means, atol=1e-12)


def test_huge_lambda_single_cluster():
    X = np.vstack([d.points for d in gen_zshape(3, 50, 0.01, 0)])
    state, _ = sva_fit([X], SvaHyper(lam=1e6, bandwidth=1.0), 2)
    assert state.K == 1


def test_deterministic(rng):
    seqs = [rng.normal(size=(50, 3)) for _ in range(2)]
    hyper = SvaHyper(lam=2.0, bandwidth=2.0)
    a, ta = sva_fit(seqs, hyper, 3)
    b, tb = sva_fit(seqs, hyper, 3)
    assert ta == tb and a.assignments == b.assignments
    assert all(np.array_equal(x.mean, y.mean) and np.array_equal(x.basis, y.basis) for x, y in zip(a.clusters, b.clusters))


def test_snapshot_is_independent(rng):
    state = stream(rng.normal(size=(10, 2)), SvaHyper())
    snap = state.copy()
    sva_observe(state, np.array([50.0, 50.0]), SvaHyper())
    assert snap.K == state.K - 1 and len(snap.assignments) == 10


# -- finishing pass --------------------------------------------------------


def test_to_hsmm_produces_decodable_model():
    ds = gen_zshape(3, 90, 0.005, 0)
    seqs = [d.points for d in ds]
    X = np.vstack(seqs)
    state, _ = sva_fit(seqs, SvaHyper(lam=0.3, bandwidth=default_bandwidth(X)), 3)
    m = to_hsmm(state, X)
    assert m.K == state.K
    assert np.allclose(m.trans.sum(axis=1), 1.0) and m.priors.sum() == pytest.approx(1.0)
    for c, cov in zip(state.clusters, m.covs[:, 0]):
        assert np.all(np.linalg.eigvalsh(cov) >= 1e-2 - 1e-12)
    ref = decode_reference(m, seqs[0][:1], 90)
    assert len(ref) == 90
