import numpy as np
import pytest

from qdiffusion.embed import amplitude_embed
from qdiffusion.grad import finite_diff_grad
from qdiffusion.models import init_params
from qdiffusion.qstate import apply_circuit, circuit_unitary, is_unitary
from qdiffusion.uss import (
    NOISE_IMAG,
    NOISE_REAL,
    USSConfig,
    USSModel,
    compose_diffusion_unitary,
    draw_noise_state,
    inverse_noise_statistics,
    load_unitary,
    minmax,
    save_unitary,
    state_pixels,
    uss_loss,
    uss_sample,
)
from qdiffusion.vqc import EntanglingStack, build_entangling_circuit


def stack(n, layers, seed):
    s = EntanglingStack(n, layers)
    return build_entangling_circuit(s), init_params(s.n_params, np.random.default_rng(seed))


def test_compose_small_powers():
    c, p = stack(3, 2, 0)
    u = circuit_unitary(c, p)
    np.testing.assert_array_equal(compose_diffusion_unitary(c, p, 0), np.eye(8))
    np.testing.assert_array_equal(compose_diffusion_unitary(c, p, 1), u)
    with pytest.raises(ValueError):
        compose_diffusion_unitary(c, p, -1)


def test_compose_matches_repeated_passes():
    c, p = stack(4, 3, 1)
    u5 = compose_diffusion_unitary(c, p, 5)
    s = draw_noise_state(3, 4, 2)
    x = s
    for _ in range(5):
        x = apply_circuit(x, c, p)
    np.testing.assert_allclose(s @ u5.T, x, atol=1e-9)
    assert is_unitary(u5)


def test_compose_additive_and_inverse():
    c, p = stack(3, 2, 3)
    a, b = compose_diffusion_unitary(c, p, 2), compose_diffusion_unitary(c, p, 3)
    np.testing.assert_allclose(compose_diffusion_unitary(c, p, 5), a @ b, atol=1e-9)
    x = draw_noise_state(1, 3, 4)[0]
    np.testing.assert_allclose(b @ (b.conj().T @ x), x, atol=1e-9)


def test_uss_loss_examples():
    t = np.array([0.1, 0.2, 0.3, 0.4])
    target, _ = amplitude_embed(t, 2)
    assert uss_loss(target, t) == 0
    assert uss_loss(-target, t) == pytest.approx(np.mean(2 * np.abs(target)))
    assert uss_loss(np.array([0, 1, 0, 0], complex), [1, 0, 0, 0]) == pytest.approx(0.5)
    assert uss_loss(np.array([1j, 0, 0, 0]), [1, 0, 0, 0]) > 0


def test_parameter_counts():
    assert USSConfig(6, 56).n_params == 1008
    assert USSConfig(6, 47, ancilla=True).n_params == 47 * 3 * 7
    with pytest.raises(ValueError):
        USSConfig(6, 4, guided=True)


@pytest.mark.parametrize("cfg", [USSConfig(2, 2), USSConfig(2, 3, ancilla=True, guided=True, n_reuploads=1)])
def test_uss_gradient_matches_finite_differences(cfg):
    rng = np.random.default_rng(5)
    model = USSModel(cfg)
    x = rng.uniform(0.1, 1, (3, 2, 2))
    y = rng.uniform(0.1, 1, (3, 2, 2))
    labels = [0, 1, 1]
    p = init_params(model.n_params, rng)
    loss, g = model.loss_and_grad(p, x, y, labels)
    assert loss >= 0
    fd = finite_diff_grad(lambda q: model.loss_and_grad(q, x, y, labels)[0], p)
    np.testing.assert_allclose(g, fd, atol=1e-7)


def test_noise_distribution():
    assert NOISE_REAL == (0.4, 0.24) and NOISE_IMAG == (0.0, 0.14)
    z = draw_noise_state(2000, 6, 6)
    np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1, atol=1e-12)
    # normalisation scales both parts alike, so ratios of moments survive
    assert z.imag.std() / z.real.std() == pytest.approx(0.14 / 0.24, rel=0.05)
    assert z.real.mean() / z.real.std() == pytest.approx(0.4 / 0.24, rel=0.05)
    assert abs(z.imag.mean()) < 0.1 * z.imag.std()


def test_identity_sampling_gives_noise_moduli():
    z = draw_noise_state(4, 3, 7)
    images, states = uss_sample(np.eye(8), 4, 0, states=z)
    np.testing.assert_allclose(images, minmax(np.abs(z)), atol=1e-12)
    assert images.min() == 0 and images.max() == 1


def test_sampling_equals_gate_passes():
    cfg = USSConfig(3, 2, ancilla=True)
    model = USSModel(cfg)
    p = init_params(model.n_params, np.random.default_rng(8))
    states = model.noise_states(5, np.random.default_rng(9))
    x = states
    for _ in range(4):
        x = model.step_states(p, x)
    images, _ = uss_sample(model.unitary(p, 4), 5, None, n_image_qubits=3, states=states)
    np.testing.assert_allclose(images, minmax(state_pixels(x, 3, 8)), atol=1e-9)


def test_state_pixels_with_shots():
    z = draw_noise_state(2, 3, 10)
    exact = state_pixels(z, 3, 8)
    shot = state_pixels(z, 3, 8, shots=200_000, rng=11)
    np.testing.assert_allclose(shot, exact, atol=0.01)
    np.testing.assert_allclose(np.sum(shot**2, axis=1), 1, atol=1e-12)


def test_inverse_statistics_use_the_inverse():
    c, p = stack(3, 2, 12)
    u = compose_diffusion_unitary(c, p, 3)
    pixels = np.random.default_rng(13).uniform(0.1, 1, (50, 8))
    stats = inverse_noise_statistics(u, pixels)
    z = amplitude_embed(pixels, 3)[0] @ np.linalg.inv(u).T
    assert stats["real_mean"] == pytest.approx(z.real.mean(), abs=1e-12)
    assert stats["imag_std"] == pytest.approx(z.imag.std(), abs=1e-12)
    ident = inverse_noise_statistics(np.eye(8), pixels)
    assert ident["imag_mean"] == 0 and ident["imag_std"] == 0


def test_binary_round_trip_and_corruption(tmp_path):
    c, p = stack(3, 2, 14)
    u = compose_diffusion_unitary(c, p, 10)
    path = tmp_path / "u.qdum"
    save_unitary(path, u, 10)
    v, tau = load_unitary(path)
    np.testing.assert_array_equal(u, v)
    assert tau == 10
    raw = bytearray(path.read_bytes())
    assert raw[:4] == b"QDUM" and len(raw) == 56 + 64 * 16
    raw[100] ^= 1
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="checksum"):
        load_unitary(path)
    path.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(ValueError, match="magic"):
        load_unitary(path)
    path.write_bytes(bytes(raw[:-16]))
    with pytest.raises(ValueError):
        load_unitary(path)
