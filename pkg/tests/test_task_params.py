import numpy as np
import pytest

from imitate.data import gen_pickplace, gen_zshape
from imitate.errors import InputError
from imitate.gaussian import AffineFrame, Gaussian, product_of_gaussians, transform
from imitate.latent import count_parameters
from imitate.markov import EMConfig, HsmmModel, decode_reference, em_fit, run_lengths, viterbi_path
from imitate.task_params import FrameSet, adapt, project_demo, tp_em_fit
from oracles import grid_product_1d


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def two_frame_model(rng, K=2, D=2):
    means = rng.normal(size=(K, 2, D))
    covs = np.empty((K, 2, D, D))
    for k in range(K):
        for j in range(2):
            M = rng.normal(size=(D, D))
            covs[k, j] = M @ M.T + np.eye(D)
    return HsmmModel(np.full(K, 1 / K), np.full((K, K), 1 / K), means, covs, np.full(K, 4.0), np.ones(K), 10)


# -- projection ------------------------------------------------------------


def test_project_identity(rng):
    X = rng.normal(size=(5, 2))
    assert np.array_equal(project_demo(X, FrameSet.identity(2))[0], X)


def test_project_translation():
    X = np.array([[1.0, 1.0], [3.0, -1.0]])
    out = project_demo(X, FrameSet((AffineFrame(np.eye(2), np.array([1.0, 0.0])),)))[0]
    assert np.allclose(out, X - [1.0, 0.0])


def test_project_rotation():
    out = project_demo(np.array([[1.0, 0.0]]), FrameSet((AffineFrame(rot(np.pi / 2), np.zeros(2)),)))[0]
    assert np.allclose(out, [[0.0, -1.0]], atol=1e-15)
    assert np.allclose(out, (np.linalg.inv(rot(np.pi / 2)) @ [1.0, 0.0])[None], atol=1e-15)


def test_frameset_rejects_mixed_dims():
    with pytest.raises(InputError):
        FrameSet((AffineFrame.identity(2), AffineFrame.identity(3)))


# -- training --------------------------------------------------------------


def test_tp_fit_identity_equals_em_fit():
    ds = gen_zshape(3, 60, 0.01, seed=5)
    a = tp_em_fit(ds, 3, EMConfig(seed=2))
    b = em_fit([d.points for d in ds], 3, EMConfig(seed=2))
    for key in ("priors", "trans", "means", "covs", "dur_mean", "dur_var"):
        assert np.array_equal(getattr(a, key), getattr(b, key))


def test_tp_fit_inconsistent_frames_names_demo():
    ds = gen_pickplace(4, 30, seed=0)
    pairs = [(d.points, d.frames) for d in ds]
    pairs[2] = (pairs[2][0], FrameSet((pairs[2][1][0],)))
    with pytest.raises(InputError, match="demonstration 2"):
        tp_em_fit(pairs, 3)


def test_tp_fit_endpoint_variance_smaller_in_attached_frame():
    ds = gen_pickplace(8, 60, seed=1)
    m = tp_em_fit(ds, 4)
    path = viterbi_path(m, np.stack(project_demo(ds[0].points, ds[0].frames)))
    first, last = path[0], path[-1]
    tr = np.trace(m.covs, axis1=2, axis2=3)  # (K, F)
    assert tr[first, 0] < tr[first, 1]
    assert tr[last, 1] < tr[last, 0]
    # direct variance of the projected endpoints agrees in ordering
    start = np.array([project_demo(d.points[:5], d.frames)[0].mean(0) for d in ds])
    start_in_goal = np.array([project_demo(d.points[:5], d.frames)[1].mean(0) for d in ds])
    assert np.trace(np.cov(start.T)) < np.trace(np.cov(start_in_goal.T))


def test_tp_parameter_count_table_value():
    assert count_parameters("full", 7, 2, 16) == 2198


# -- adaptation ------------------------------------------------------------


def test_adapt_identity_single_frame(rng):
    ds = gen_zshape(3, 40, 0.01, seed=0)
    m = tp_em_fit(ds, 2)
    out = adapt(m, FrameSet.identity(3)).model
    assert np.allclose(out.means, m.means) and np.allclose(out.covs, m.covs)


def test_adapt_translation_equivariance(rng):
    ds = gen_zshape(3, 40, 0.01, seed=0)
    m = tp_em_fit(ds, 2)
    shift = np.array([1.0, -2.0, 0.5])
    out = adapt(m, FrameSet((AffineFrame(np.eye(3), shift),))).model
    assert np.allclose(out.means, m.means + shift)
    assert np.allclose(out.covs, m.covs)
    assert np.array_equal(out.trans, m.trans) and np.array_equal(out.dur_mean, m.dur_mean)


def test_adapt_two_frame_hand_value():
    g1 = Gaussian(np.array([1.0, 0.0]), np.diag([1.0, 4.0]))
    g2 = Gaussian(np.array([0.0, 2.0]), np.diag([2.0, 1.0]))
    f1 = AffineFrame(np.eye(2), np.zeros(2))
    f2 = AffineFrame(rot(np.pi / 2), np.array([1.0, 1.0]))
    m = HsmmModel(np.ones(1), np.ones((1, 1)), np.stack([g1.mean, g2.mean])[None], np.stack([g1.cov, g2.cov])[None],
                  [3.0], [1.0], 5)
    out = adapt(m, FrameSet((f1, f2))).model
    # second frame: mean R [0, 2] + b = [-1, 1], cov R diag(2, 1) R^T = diag(1, 2)
    P = np.diag([1.0, 0.25]) + np.diag([1.0, 0.5])
    mean = np.linalg.solve(P, np.diag([1.0, 0.25]) @ [1.0, 0.0] + np.diag([1.0, 0.5]) @ [-1.0, 1.0])
    assert np.allclose(out.means[0, 0], mean) and np.allclose(out.covs[0, 0], np.linalg.inv(P))
    # diagonal case factorizes, so each axis matches the 1-D grid oracle
    for k in range(2):
        gm, gv = grid_product_1d([[1.0, 0.0][k], [-1.0, 1.0][k]], [[1.0, 4.0][k], [1.0, 2.0][k]])
        assert abs(gm - out.means[0, 0, k]) < 1e-4 and abs(gv - out.covs[0, 0, k, k]) < 1e-4


def test_adapt_precision_is_sum(rng):
    m = two_frame_model(rng)
    fs = FrameSet((AffineFrame(rot(0.3) * 1.5, rng.normal(size=2)), AffineFrame(rot(-1.1), rng.normal(size=2))))
    out = adapt(m, fs).model
    for k in range(m.K):
        total = sum(np.linalg.inv(transform(m.emission(k, j), fs[j]).cov) for j in range(2))
        assert np.allclose(np.linalg.inv(out.covs[k, 0]), total, rtol=1e-9, atol=1e-9)


def test_adapt_rigid_equivariance(rng):
    m = two_frame_model(rng)
    fs = FrameSet((AffineFrame(rot(0.4), rng.normal(size=2)), AffineFrame(rot(2.0), rng.normal(size=2))))
    R, t = rot(0.9), np.array([0.3, -0.7])
    moved = FrameSet(tuple(AffineFrame(R @ f.A, R @ f.b + t) for f in fs))
    a, b = adapt(m, fs).model, adapt(m, moved).model
    for k in range(m.K):
        assert np.allclose(b.means[k, 0], R @ a.means[k, 0] + t, atol=1e-10)
        assert np.allclose(b.covs[k, 0], R @ a.covs[k, 0] @ R.T, atol=1e-10)


def test_adapt_wrong_frame_count(rng):
    with pytest.raises(InputError):
        adapt(two_frame_model(rng), FrameSet.identity(2, 3))


def test_adapt_wrong_dimension(rng):
    with pytest.raises(InputError):
        adapt(two_frame_model(rng), FrameSet.identity(3, 2))


def test_adapt_training_frames_reproduces_segment_order():
    ds = gen_pickplace(8, 60, seed=2)
    m = tp_em_fit(ds, 4)
    for d in list(ds)[:3]:
        order = [s for s, _ in run_lengths(viterbi_path(m, np.stack(project_demo(d.points, d.frames))))]
        ref = decode_reference(adapt(m, d.frames).model, d.points[:1], len(d))
        assert [s for s, _ in run_lengths(ref.states)] == order


def test_product_matches_adapt_of_single_state(rng):
    m = two_frame_model(rng, K=1)
    fs = FrameSet((AffineFrame.identity(2), AffineFrame(rot(0.5), np.ones(2))))
    g = product_of_gaussians([transform(m.emission(0, j), fs[j]) for j in range(2)])
    out = adapt(m, fs)
    assert out.source is m and out.frames is fs
    assert np.allclose(out.model.means[0, 0], g.mean)
