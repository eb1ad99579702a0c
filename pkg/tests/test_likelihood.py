import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles as O
from conftest import small_scene
from geofuse.channel import AmplitudeModel, build_dictionary, synthesize_observation, true_channel
from geofuse.likelihood import (PseudoInverse, RankDeficientDictionary, anchor_loglik_det,
                                anchor_loglik_sto, batch_loglik, concentrate_amplitudes,
                                concentrate_noise_det, concentrate_noise_sto, concentrate_source_cov,
                                floor_psd, loglik_deterministic, loglik_stochastic,
                                noise_subspace_energy, sylvester_logdet, woodbury_inverse,
                                woodbury_quadratic)

AGENT = np.array([2.5, -1.0, 1.2])


def random_instance(rng, n, k):
    psi = O.random_complex(rng, (n, k))
    a = O.random_complex(rng, (k, k))
    p = a @ a.conj().T
    return psi, p


def test_noiseless_amplitudes_recovered(rng):
    psi, _ = random_instance(rng, 12, 3)
    alpha = O.random_complex(rng, 3)
    np.testing.assert_allclose(concentrate_amplitudes(psi, psi @ alpha), alpha, atol=1e-9)


def test_orthogonal_observation_gives_zero_amplitudes(rng):
    psi, _ = random_instance(rng, 12, 3)
    y = O.projector_perp(psi) @ O.random_complex(rng, 12)
    np.testing.assert_allclose(concentrate_amplitudes(psi, y), 0, atol=1e-12)


def test_rank_deficient_dictionary_reported(rng):
    psi, _ = random_instance(rng, 12, 2)
    dup = np.column_stack([psi, psi[:, 0]])
    with pytest.raises(RankDeficientDictionary):
        concentrate_amplitudes(dup, O.random_complex(rng, 12))
    assert PseudoInverse.of(dup).rank == 2


def test_dictionary_object_uses_active_columns(scene):
    D = build_dictionary(scene, AGENT, 0)
    D.enabled[2] = False
    y = true_channel(scene, AGENT, 0, AmplitudeModel())
    assert concentrate_amplitudes(D, y).shape == (4,)


def test_noise_energy_in_column_space(rng):
    psi, _ = random_instance(rng, 12, 3)
    y = psi @ O.random_complex(rng, 3)
    assert noise_subspace_energy(psi, y) <= 1e-9 * np.vdot(y, y).real


def test_noise_energy_orthonormal_columns(rng):
    q, _ = np.linalg.qr(O.random_complex(rng, (8, 4)))
    psi, y = q[:, :3], q[:, 3]
    assert noise_subspace_energy(psi, y) == pytest.approx(1.0, abs=1e-12)


def test_noise_energy_vs_dense_projector(rng):
    for _ in range(10):
        psi, _ = random_instance(rng, 12, 4)
        y = O.random_complex(rng, 12)
        assert noise_subspace_energy(psi, y) == pytest.approx(O.noise_energy(psi, y), rel=1e-10)


def test_noise_estimators(rng):
    psi, _ = random_instance(rng, 384, 5)
    y_clean = psi @ O.random_complex(rng, 5)
    scale = np.vdot(y_clean, y_clean).real / 384
    assert concentrate_noise_det(psi, y_clean) < 1e-12 * scale
    assert concentrate_noise_sto(psi, y_clean) < 1e-12 * scale
    y = y_clean + O.random_complex(rng, 384)
    ratio = concentrate_noise_sto(psi, y) / concentrate_noise_det(psi, y)
    assert ratio == pytest.approx(384 / 379, rel=1e-14)


def test_noise_estimator_needs_more_rows_than_paths(rng):
    psi, _ = random_instance(rng, 3, 3)
    with pytest.raises(ValueError):
        concentrate_noise_sto(psi, O.random_complex(rng, 3))
    with pytest.raises(ValueError):
        concentrate_noise_det(psi, O.random_complex(rng, 3))


def test_source_cov_noiseless_is_outer_product(rng):
    psi, _ = random_instance(rng, 10, 3)
    y = psi @ O.random_complex(rng, 3)
    a = concentrate_amplitudes(psi, y)
    np.testing.assert_allclose(concentrate_source_cov(psi, y, 0.0), np.outer(a, a.conj()), atol=1e-12)


def test_source_cov_vs_dense(rng):
    for _ in range(10):
        psi, _ = random_instance(rng, 12, 3)
        y = O.random_complex(rng, 12)
        s2 = concentrate_noise_sto(psi, y)
        p = concentrate_source_cov(psi, y, s2)
        np.testing.assert_allclose(p, O.source_cov(psi, y, s2), atol=1e-10)
        np.testing.assert_allclose(p, p.conj().T, atol=1e-12)


@pytest.mark.parametrize("n,k", [(12, 2), (20, 3), (8, 1)])
def test_estimators_unbiased(n, k):
    # source covariance here is the second moment E[alpha alpha^H]
    rng = np.random.default_rng(100 + n)
    psi = O.random_complex(rng, (n, k))
    mu = O.random_complex(rng, k)
    a = O.random_complex(rng, (k, k)) * 0.6
    c = a @ a.conj().T
    s2 = 0.8
    draws = 20_000
    alpha = mu + O.random_complex(rng, (draws, k)) @ np.linalg.cholesky(c).T
    y = alpha @ psi.T + O.random_complex(rng, (draws, n)) * np.sqrt(s2)
    a_hat = concentrate_amplitudes(psi, y)
    s2_hat = concentrate_noise_sto(psi, y)
    p_hat = concentrate_source_cov(psi, y, s2_hat)

    def within(samples, target):
        se = samples.std(axis=0) / np.sqrt(draws)
        err = samples.mean(axis=0) - target
        assert np.all(np.abs(err.real) <= 3 * np.maximum(se, 1e-15))
        assert np.all(np.abs(err.imag) <= 3 * np.maximum(se, 1e-15))

    within(a_hat, mu)
    within(s2_hat, s2)
    within(p_hat, np.outer(mu, mu.conj()) + c)


def test_floor_psd(rng):
    psi, _ = random_instance(rng, 12, 3)
    y = O.random_complex(rng, 12)
    p_raw = concentrate_source_cov(psi, y, concentrate_noise_sto(psi, y))
    p, clamped = floor_psd(p_raw)
    assert clamped  # rank-one minus full-rank term is indefinite here
    assert np.linalg.eigvalsh(p).min() > -1e-12
    q, flag = floor_psd(np.eye(3))
    np.testing.assert_allclose(q, np.eye(3))
    assert not flag


def test_sylvester_and_woodbury_vs_dense(rng):
    for n, k in [(12, 5), (16, 1), (6, 3)]:
        psi, p = random_instance(rng, n, k)
        s2 = 0.7
        r = psi @ p @ psi.conj().T + s2 * np.eye(n)
        assert sylvester_logdet(psi, p, s2) == pytest.approx(np.linalg.slogdet(r)[1], rel=1e-9)
        dense = np.linalg.inv(r)
        assert np.max(np.abs(woodbury_inverse(psi, p, s2) - dense)) < 1e-8
        v = O.random_complex(rng, n)
        quad = (v.conj() @ dense @ v).real
        assert woodbury_quadratic(psi, p, s2, v) == pytest.approx(quad, rel=1e-9)


def test_woodbury_valid_for_singular_source_cov(rng):
    psi, _ = random_instance(rng, 12, 3)
    a = O.random_complex(rng, 3)
    p = np.outer(a, a.conj())  # rank one
    r = psi @ p @ psi.conj().T + 0.3 * np.eye(12)
    np.testing.assert_allclose(woodbury_inverse(psi, p, 0.3), np.linalg.inv(r), atol=1e-9)


@given(st.integers(2, 16), st.integers(1, 5), st.integers(0, 2**32 - 1),
       st.floats(1e-3, 1e2))
def test_kernels_property(n, k, seed, s2):
    if k >= n:
        return
    rng = np.random.default_rng(seed)
    psi, p = random_instance(rng, n, k)
    r = psi @ p @ psi.conj().T + s2 * np.eye(n)
    ref = np.linalg.slogdet(r)[1]
    assert abs(sylvester_logdet(psi, p, s2) - ref) <= 1e-8 * max(1.0, abs(ref))
    dense = np.linalg.inv(r)
    w = woodbury_inverse(psi, p, s2)
    assert np.linalg.norm(w - dense) <= 1e-8 * np.linalg.norm(dense)
    y = O.random_complex(rng, n)
    assert noise_subspace_energy(psi, y) == pytest.approx(O.noise_energy(psi, y), rel=1e-8, abs=1e-12)


def test_det_loglik_hand_evaluated():
    # one orthonormal column, N = 4
    psi = np.array([[1.0], [0.0], [0.0], [0.0]], dtype=complex)
    y = np.array([2.0 + 1.0j, 0.5, -0.5j, 1.0])
    energy = 0.25 + 0.25 + 1.0
    s2 = energy / 4
    expected = -4 * np.log(np.pi * s2) - 4.0
    assert anchor_loglik_det(psi, y).value == pytest.approx(expected, rel=1e-12)
    assert anchor_loglik_det(psi, y).value == pytest.approx(O.det_loglik(psi, y), rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_det_reduction_identity(seed):
    rng = np.random.default_rng(seed)
    psi, _ = random_instance(rng, 12, 3)
    y = O.random_complex(rng, 12)
    t = anchor_loglik_det(psi, y)
    s2 = t.estimates.sigma2_hat
    quad = -noise_subspace_energy(psi, y) / s2
    assert quad == pytest.approx(-12.0, rel=1e-9)
    assert t.value == pytest.approx(-12 * np.log(np.pi * s2) - 12, rel=1e-12)


def test_sto_loglik_vs_dense_density(rng):
    for _ in range(5):
        psi, _ = random_instance(rng, 12, 3)
        y = O.random_complex(rng, 12) + psi @ O.random_complex(rng, 3)
        t = anchor_loglik_sto(psi, y)
        ref = O.sto_loglik(psi, y, t.estimates.p_hat, t.estimates.sigma2_hat)
        assert t.value == pytest.approx(ref, rel=1e-9)


def test_sto_loglik_zero_source_cov_is_white_density(rng):
    psi, _ = random_instance(rng, 12, 3)
    y = O.random_complex(rng, 12)
    s2 = 0.4
    r = y - psi @ concentrate_amplitudes(psi, y)
    value = -12 * np.log(np.pi) - sylvester_logdet(psi, np.zeros((3, 3)), s2) \
        - woodbury_quadratic(psi, np.zeros((3, 3)), s2, r)
    assert value == pytest.approx(O.cn_logpdf(y, y - r, s2 * np.eye(12)), rel=1e-12)


def test_loglik_phase_invariance(scene):
    amps = AmplitudeModel()
    obs = [synthesize_observation(scene, AGENT, j, amps, 0.01, j).y for j in range(2)]
    rot = [np.exp(0.7j) * y for y in obs]
    for fn in (loglik_deterministic, loglik_stochastic):
        assert fn(scene, AGENT + 0.05, rot).value == pytest.approx(fn(scene, AGENT + 0.05, obs).value,
                                                                   rel=1e-10)


def test_anchor_factorization(scene):
    amps = AmplitudeModel()
    obs = [synthesize_observation(scene, AGENT, j, amps, 0.01, j).y for j in range(2)]
    hyp = AGENT + [0.1, -0.05, 0.0]
    for kind in ("det", "sto"):
        total, _ = batch_loglik(scene, hyp[None], scene.mvas[None], obs, kind)
        parts = []
        for j, y in enumerate(obs):
            psi = build_dictionary(scene, hyp, j).active
            parts.append((anchor_loglik_det if kind == "det" else anchor_loglik_sto)(psi, y).value)
        assert total[0] == pytest.approx(sum(parts), rel=1e-12)


def test_batch_matches_single(scene, rng):
    amps = AmplitudeModel()
    obs = [synthesize_observation(scene, AGENT, j, amps, 0.02, j).y for j in range(2)]
    agents = AGENT + rng.standard_normal((5, 3)) * 0.1
    mvas = scene.mvas + rng.standard_normal((5, 2, 3)) * 0.05
    values, _ = batch_loglik(scene, agents, mvas, obs, "sto")
    for b in range(5):
        single = loglik_stochastic(scene, agents[b], obs, mvas[b])
        assert values[b] == pytest.approx(single.value, rel=1e-12)


@pytest.mark.parametrize("kind", ["det", "sto"])
def test_noiseless_peak_at_truth_on_grid(kind):
    s = small_scene(n_surfaces=1, n_anchors=2)
    amps = AmplitudeModel()
    obs = [true_channel(s, AGENT, j, amps) for j in range(2)]
    g = np.linspace(-0.25, 0.25, 11)
    grid = AGENT + np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    values, _ = batch_loglik(s, grid, np.broadcast_to(s.mvas, (len(grid), 1, 3)), obs, kind)
    assert np.argmax(values) == len(grid) // 2
    np.testing.assert_allclose(grid[len(grid) // 2], AGENT)


@pytest.mark.parametrize("kind", ["det", "sto"])
def test_truth_beats_half_metre_offset_at_0db(kind):
    s = small_scene(n_surfaces=1, n_anchors=2, rows=4, cols=4, n_freq=4)
    amps = AmplitudeModel()
    truth = [true_channel(s, AGENT, j, amps) for j in range(2)]
    nv = np.mean([np.vdot(h, h).real / len(h) for h in truth])  # SNR 0 dB
    off = AGENT + np.array([0.5, 0.0, 0.0])
    diffs = []
    for d in range(100):
        obs = [synthesize_observation(s, AGENT, j, amps, nv, [d, j]).y for j in range(2)]
        v, _ = batch_loglik(s, np.array([AGENT, off]), np.broadcast_to(s.mvas, (2, 1, 3)), obs, kind)
        diffs.append(v[0] - v[1])
    assert np.median(diffs) >= 0


def test_clamp_flag_reported(scene):
    y = synthesize_observation(scene, AGENT, 0, AmplitudeModel(), 0.05, 1).y
    ll = loglik_stochastic(scene, AGENT, [y, y])
    assert np.isfinite(ll.value)
    assert isinstance(ll.clamped, bool)
