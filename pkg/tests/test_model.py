"""Two-head backbone: shapes, init, forwards, gradients, checkpoints."""

import numpy as np
import pytest

from advfas.autodiff import Tensor
from advfas.coupled import spoof_loss
from advfas.errors import (
    BadMagicError,
    CheckpointError,
    DomainError,
    GraphError,
    ShapeError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from advfas.model import (
    CORRECTOR_HEAD,
    DETECTOR_HEAD,
    TRUNK,
    BackboneConfig,
    forward,
    forward_batch,
    grads,
    init_model,
    input_grad,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
    score_batch,
)

from conftest import fd_param_grad, max_rel_error, toy_config


def test_default_parameter_count_by_hand():
    # 64->64 (4160) + 64->32 (2080) + two heads of 32->16 (528) + 16->1 (17)
    assert parameter_count(BackboneConfig()) == 4160 + 2080 + 2 * (528 + 17)
    assert parameter_count(BackboneConfig()) == 7330


def test_parameter_count_matches_materialized_model():
    for cfg in (BackboneConfig(), toy_config(3), toy_config(5, activation="tanh")):
        model = init_model(cfg)
        total = sum(v.data.size for _, v in model.named_parameters())
        assert total == parameter_count(cfg)


def test_init_is_deterministic_and_seed_sensitive():
    a = init_model(BackboneConfig(seed=0))
    b = init_model(BackboneConfig(seed=0))
    c = init_model(BackboneConfig(seed=1))
    for (name, pa), (_, pb), (_, pc) in zip(
        a.named_parameters(), b.named_parameters(), c.named_parameters()
    ):
        assert pa.data.tobytes() == pb.data.tobytes(), name
        if pa.data.size:
            assert pa.data.tobytes() != pc.data.tobytes(), name


def test_init_respects_fan_in_bound():
    model = init_model(BackboneConfig(seed=4))
    for name, p in model.named_parameters():
        fan_in = p.data.shape[0] if name.endswith(".W") else None
        if fan_in is not None:
            bound = 1.0 / np.sqrt(fan_in)
            assert np.all(np.abs(p.data) <= bound)
        assert p.data.dtype == np.float32


def test_zero_parameters_give_indifferent_scores():
    model = init_model(BackboneConfig(seed=0))
    for name, p in model.named_parameters():
        model.set_parameter(name, np.zeros_like(p.data))
    s = forward(model, np.full(64, 0.5, dtype=np.float32))
    assert s.f == 0.5 and s.g == 0.5 and s.es == 0.25


def test_forward_validates_inputs():
    model = init_model(toy_config(0))
    with pytest.raises(DomainError):
        forward(model, np.array([0.1, 0.2, 1.4, 0.0]))
    with pytest.raises(ShapeError):
        forward(model, np.array([0.1, 0.2]))
    s = forward(model, np.array([0.1, 0.2, 0.3, 0.4]))
    assert 0.0 < s.f < 1.0 and 0.0 < s.g < 1.0


def test_score_batch_agrees_with_forward_batch():
    model = init_model(toy_config(1))
    x = np.random.default_rng(2).uniform(0, 1, (5, 4))
    f_t, g_t = forward_batch(model, Tensor(x))
    f_n, g_n = score_batch(model, x)
    assert np.array_equal(f_t.data, f_n)
    assert np.array_equal(g_t.data, g_n)
    assert f_n.shape == (5,)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_parameter_gradients_match_finite_differences(seed, activation):
    cfg = toy_config(seed, activation=activation)
    model = init_model(cfg)
    x = np.random.default_rng(100 + seed).uniform(0.05, 0.95, (8, cfg.input_dim))
    labels = np.random.default_rng(200 + seed).integers(0, 2, 8)

    def loss_tensor():
        f, g = forward_batch(model, Tensor(x))
        return (spoof_loss(f, labels) + spoof_loss(g, labels)).mean()

    def loss_fn():
        return float(loss_tensor().data)

    analytic = grads(model, loss_tensor())
    numeric = {
        name: fd_param_grad(loss_fn, model, name) for name, _ in model.named_parameters()
    }
    assert max_rel_error(analytic, numeric) < 1e-4


def test_detector_only_loss_leaves_corrector_grads_zero():
    model = init_model(toy_config(2))
    x = np.random.default_rng(3).uniform(0, 1, (6, 4))
    f, _ = forward_batch(model, Tensor(x))
    g_table = grads(model, spoof_loss(f, np.zeros(6, dtype=int)).mean())
    for name, p in model.named_parameters():
        group = model.group_of(name)
        if group == CORRECTOR_HEAD:
            assert np.all(g_table[name] == 0.0), name
        elif group in (TRUNK, DETECTOR_HEAD):
            assert np.any(g_table[name] != 0.0), name


def test_group_partition_covers_every_parameter():
    model = init_model(BackboneConfig())
    names = [n for n, _ in model.named_parameters()]
    grouped = [
        n
        for group in (TRUNK, DETECTOR_HEAD, CORRECTOR_HEAD)
        for n, _ in model.group_parameters(group)
    ]
    assert sorted(grouped) == sorted(names)
    assert model.group_of("trunk.0.W") == TRUNK
    assert model.group_of("det.out.b") == DETECTOR_HEAD
    assert model.group_of("cor.hidden.W") == CORRECTOR_HEAD


def test_set_parameter_checks_shape_and_casts():
    model = init_model(toy_config(0))
    with pytest.raises(ShapeError):
        model.set_parameter("det.out.b", np.zeros(2))
    model.set_parameter("det.out.b", np.array([0.25], dtype=np.float64))
    _, p = [nv for nv in model.named_parameters() if nv[0] == "det.out.b"][0]
    assert p.data.dtype == np.float32 and p.data[0] == 0.25


def test_copy_is_deep():
    model = init_model(toy_config(0))
    before = dict(model.named_parameters())["trunk.0.b"].data.copy()
    clone = model.copy()
    clone.set_parameter("trunk.0.b", np.ones(3, dtype=np.float32))
    assert np.array_equal(dict(model.named_parameters())["trunk.0.b"].data, before)


def test_grads_reports_untouched_parameters_as_exact_zero():
    model = init_model(toy_config(1))
    x = np.random.default_rng(4).uniform(0, 1, (3, 4))
    f, _ = forward_batch(model, Tensor(x))
    table = grads(model, f.mean())
    assert set(table) == {n for n, _ in model.named_parameters()}
    assert np.all(table["cor.out.W"] == 0.0)
    assert table["cor.out.W"].shape == (2, 1)


def test_grads_rejects_disconnected_loss():
    model = init_model(toy_config(1))
    with pytest.raises(GraphError):
        grads(model, Tensor(np.array(1.0), requires_grad=True).mean())


def test_input_grad_matches_product_rule():
    model = init_model(toy_config(3))
    x = Tensor(np.random.default_rng(5).uniform(0.1, 0.9, (2, 4)), requires_grad=True)
    f, g = forward_batch(model, x)
    es_grad = input_grad(model, (f * g).sum(), x)

    x2 = Tensor(x.data.copy(), requires_grad=True)
    f2, g2 = forward_batch(model, x2)
    f_grad = input_grad(model, f2.sum(), x2)
    x3 = Tensor(x.data.copy(), requires_grad=True)
    f3, g3 = forward_batch(model, x3)
    g_grad = input_grad(model, g3.sum(), x3)

    expected = f.data[:, None] * g_grad + g.data[:, None] * f_grad
    assert np.allclose(es_grad, expected, rtol=1e-5, atol=1e-8)


def test_input_grad_cancellation_is_exact_zero():
    model = init_model(toy_config(3))
    x = Tensor(np.random.default_rng(6).uniform(0, 1, (2, 4)), requires_grad=True)
    f, _ = forward_batch(model, x)
    loss = (f + (-f)).sum()
    assert np.all(input_grad(model, loss, x) == 0.0)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    model = init_model(BackboneConfig(trunk_widths=(8,), seed=9))
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    for (name, pa), (_, pb) in zip(model.named_parameters(), loaded.named_parameters()):
        assert pa.data.tobytes() == pb.data.tobytes(), name
    assert loaded.config == model.config
    save_checkpoint(loaded, tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_error_taxonomy(tmp_path):
    model = init_model(toy_config(0))
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    raw = path.read_bytes()

    bad_magic = tmp_path / "magic.ckpt"
    bad_magic.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(BadMagicError):
        load_checkpoint(bad_magic)

    bad_version = tmp_path / "version.ckpt"
    bad_version.write_bytes(raw[:4] + (99).to_bytes(4, "little") + raw[8:])
    with pytest.raises(UnsupportedVersionError):
        load_checkpoint(bad_version)

    truncated = tmp_path / "short.ckpt"
    truncated.write_bytes(raw[: len(raw) - 7])
    with pytest.raises(TruncatedFileError) as err:
        load_checkpoint(truncated)
    assert "offset" in str(err.value)

    trailing = tmp_path / "long.ckpt"
    trailing.write_bytes(raw + b"\x00")
    with pytest.raises(CheckpointError):
        load_checkpoint(trailing)
