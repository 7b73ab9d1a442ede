import numpy as np
import pytest

from factorssl import autodiff as ad
from factorssl.errors import UsageError
from factorssl.model import EncoderConfig, FactorizedModel, flatten_complex


def small_model(aggregate="mean", seed=0):
    shapes = {"mod0": (1, 3, 4), "mod1": (2, 3, 4)}
    cfg = EncoderConfig(interval_hidden=6, embed_dim=5, proj_hidden=8, proj_dim=4, aggregate=aggregate)
    return FactorizedModel(shapes, cfg, seed=seed)


def random_spectra(rng, shape, b=5):
    c, i, s = shape
    return rng.standard_normal((b, c, i, s)) + 1j * rng.standard_normal((b, c, i, s))


def test_flatten_complex_layout():
    spec = np.zeros((1, 1, 2, 3), dtype=complex)
    spec[0, 0, 0, 1] = 2.0 + 5.0j
    flat = flatten_complex(spec)
    assert flat.shape == (1, 2, 2 * 1 * 3)
    assert flat[0, 0, 1] == 2.0  # real part of the channel
    assert flat[0, 0, 3 + 1] == 5.0  # imaginary part, second half
    two_chan = flatten_complex(np.zeros((4, 2, 2, 3), dtype=complex))
    assert two_chan.shape == (4, 2, 2 * 2 * 3)


def test_zero_input_zero_bias_gives_zero_embedding():
    model = small_model()
    out = model.encode("mod0", np.zeros((2, 1, 3, 4), dtype=complex))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-15)


def test_identical_samples_identical_embeddings():
    model = small_model()
    rng = np.random.default_rng(1)
    one = random_spectra(rng, (1, 3, 4), b=1)
    two = np.concatenate([one, one], axis=0)
    out = model.encode("mod0", two)
    np.testing.assert_array_equal(out.data[0], out.data[1])


def test_single_interval_mean_equals_last():
    shapes = {"mod0": (1, 1, 4), "mod1": (1, 1, 4)}
    cfg_m = EncoderConfig(interval_hidden=6, embed_dim=5, proj_hidden=8, proj_dim=4, aggregate="mean")
    cfg_l = EncoderConfig(interval_hidden=6, embed_dim=5, proj_hidden=8, proj_dim=4, aggregate="last")
    m_mean = FactorizedModel(shapes, cfg_m, seed=3)
    m_last = FactorizedModel(shapes, cfg_l, seed=3)
    rng = np.random.default_rng(2)
    x = random_spectra(rng, (1, 1, 4), b=4)
    np.testing.assert_allclose(
        m_mean.encode("mod0", x).data, m_last.encode("mod0", x).data, atol=1e-12
    )


def test_projection_outputs_unit_norm():
    model = small_model()
    rng = np.random.default_rng(3)
    h = ad.Tensor(rng.standard_normal((10, 5)))
    s, p = model.project("mod0", h)
    np.testing.assert_allclose(np.linalg.norm(s.data, axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(p.data, axis=1), 1.0, atol=1e-9)


def test_projection_scale_invariant_with_zero_biases():
    model = small_model()
    rng = np.random.default_rng(4)
    h = ad.Tensor(rng.standard_normal((6, 5)))
    s1, p1 = model.project("mod0", h)
    s2, p2 = model.project("mod0", h * 2.0)
    np.testing.assert_allclose(s1.data, s2.data, atol=1e-12)
    np.testing.assert_allclose(p1.data, p2.data, atol=1e-12)


def test_shared_and_private_heads_differ():
    model = small_model()
    rng = np.random.default_rng(5)
    h = ad.Tensor(rng.standard_normal((6, 5)))
    s, p = model.project("mod0", h)
    assert np.abs(s.data - p.data).max() > 1e-3


def test_shape_mismatch_rejected():
    model = small_model()
    with pytest.raises(UsageError):
        model.encode("mod0", np.zeros((2, 1, 4, 4), dtype=complex))


def test_parameter_names_unique_and_complete():
    model = small_model()
    names = list(model.params)
    assert len(names) == len(set(names))
    assert len(names) == 2 * (4 + 8)  # per modality: 4 encoder + 8 projector tensors


def test_state_round_trip():
    model = small_model(seed=7)
    other = small_model(seed=8)
    other.load_state_arrays(model.state_arrays())
    for name in model.params:
        np.testing.assert_array_equal(model.params[name].data, other.params[name].data)


def test_encode_project_gradients():
    model = small_model()
    rng = np.random.default_rng(6)
    x = random_spectra(rng, (1, 3, 4), b=4)
    cs = rng.standard_normal((4, 4))
    cp = rng.standard_normal((4, 4))

    def f():
        h, s, p = model.encode_project("mod0", x)
        return (s * cs).sum() + (p * cp).sum() + (h * 0.01).sum()

    assert ad.grad_check(f, model.parameters()) < 1e-6
