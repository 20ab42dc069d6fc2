import numpy as np
import numpy.testing as npt
import pytest

from podlearn.backbone import Backbone, BackboneConfig
from podlearn.errors import ContractError, FormatError, ShapeError
from podlearn.protocol import SGD
from podlearn.tensor import Tensor, tsum


def _default():
    return Backbone(BackboneConfig(), seed=42)


def test_config_validation():
    with pytest.raises(ContractError):
        BackboneConfig(stages=((8, 1),))  # need >= 2 stages
    with pytest.raises(ContractError):
        BackboneConfig(embedding_dim=0)
    with pytest.raises(ContractError):
        BackboneConfig(input_shape=(0, 8, 8))
    # stride-2 entries with padding keep every extent >= 1
    deep = BackboneConfig(input_shape=(3, 2, 2), stages=((4, 1), (8, 1), (8, 1), (8, 1)))
    assert all(w >= 1 and h >= 1 for _, w, h in deep.stage_shapes())


def test_stage_shapes_halve_per_striding_stage():
    cfg = BackboneConfig()  # 3x8x8 input, stages (8,16,32)
    assert cfg.stage_shapes() == [(8, 8, 8), (16, 4, 4), (32, 2, 2)]


def test_forward_shapes_match_config():
    model = _default()
    out = model.forward_with_stages(Tensor(np.zeros((2, 3, 8, 8))))
    assert [m.shape for m in out.stage_maps] == [(2, 8, 8, 8), (2, 16, 4, 4), (2, 32, 2, 2)]
    assert out.embedding.shape == (2, 32)


def test_zero_input_zero_head_gives_bias_embedding():
    model = _default()
    model.params["head.weight"] = Tensor(
        np.zeros_like(model.params["head.weight"].data), requires_grad=True
    )
    bias = np.linspace(-1, 1, 32)
    model.params["head.bias"] = Tensor(bias.copy(), requires_grad=True)
    out = model.forward_with_stages(Tensor(np.zeros((2, 3, 8, 8))))
    npt.assert_allclose(out.embedding.data, np.tile(bias, (2, 1)), atol=1e-15)


def test_batch_forward_equals_stacked_singles():
    rng = np.random.default_rng(0)
    model = _default()
    batch = rng.normal(size=(3, 3, 8, 8))
    full = model.forward_with_stages(Tensor(batch))
    for i in range(3):
        single = model.forward_with_stages(Tensor(batch[i : i + 1]))
        npt.assert_allclose(full.embedding.data[i], single.embedding.data[0], atol=1e-12)
        for fm, sm in zip(full.stage_maps, single.stage_maps):
            npt.assert_allclose(fm.data[i], sm.data[0], atol=1e-12)


def test_last_stage_map_attains_negative_values():
    rng = np.random.default_rng(1)
    model = _default()
    out = model.forward_with_stages(Tensor(rng.normal(size=(4, 3, 8, 8))))
    assert (out.stage_maps[-1].data < 0).any()


def test_batch_shape_mismatch_rejected():
    model = _default()
    with pytest.raises(ShapeError):
        model.forward_with_stages(Tensor(np.zeros((2, 3, 8, 7))))
    with pytest.raises(ShapeError):
        model.forward_with_stages(Tensor(np.zeros((3, 8, 8))))


def test_determinism_same_seed_bitwise():
    rng = np.random.default_rng(2)
    batch = rng.normal(size=(2, 3, 8, 8))
    a = Backbone(BackboneConfig(), seed=7).forward_with_stages(Tensor(batch))
    b = Backbone(BackboneConfig(), seed=7).forward_with_stages(Tensor(batch))
    assert (a.embedding.data == b.embedding.data).all()
    for am, bm in zip(a.stage_maps, b.stage_maps):
        assert (am.data == bm.data).all()


# -- frozen clones --------------------------------------------------------------


def test_clone_matches_at_clone_time():
    rng = np.random.default_rng(3)
    model = _default()
    clone = model.clone_frozen()
    batch = Tensor(rng.normal(size=(2, 3, 8, 8)))
    a = model.forward_with_stages(batch)
    b = clone.forward_with_stages(batch)
    assert (a.embedding.data == b.embedding.data).all()


def test_clone_unchanged_after_student_update():
    rng = np.random.default_rng(4)
    model = _default()
    clone = model.clone_frozen()
    batch = Tensor(rng.normal(size=(2, 3, 8, 8)))
    before = clone.forward_with_stages(batch).embedding.data.copy()

    opt = SGD(model.parameters(), lr=0.1)
    loss = tsum(model.forward_with_stages(batch).embedding)
    opt.zero_grad()
    loss.backward()
    opt.step()

    after = clone.forward_with_stages(batch).embedding.data
    assert (before == after).all()
    # and the student did move
    moved = model.forward_with_stages(batch).embedding.data
    assert not np.allclose(before, moved)


def test_clone_collects_no_gradients():
    rng = np.random.default_rng(5)
    model = _default()
    clone = model.clone_frozen()
    batch = Tensor(rng.normal(size=(2, 3, 8, 8)))
    out = clone.forward_with_stages(batch)
    assert out.embedding.requires_grad is False
    loss = tsum(out.embedding) + tsum(model.forward_with_stages(batch).embedding)
    loss.backward()
    assert all(p.grad is None for p in clone.parameters())
    assert any(p.grad is not None for p in model.parameters())


# -- checkpointing ----------------------------------------------------------------


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    model = _default()
    path = tmp_path / "model.json"
    model.save(str(path))
    loaded = Backbone.load(str(path))
    assert set(loaded.params) == set(model.params)
    for name, p in model.params.items():
        assert (loaded.params[name].data == p.data).all()
    rng = np.random.default_rng(6)
    batch = Tensor(rng.normal(size=(1, 3, 8, 8)))
    a = model.forward_with_stages(batch).embedding.data
    b = loaded.forward_with_stages(batch).embedding.data
    assert (a == b).all()


def test_checkpoint_rejects_unknown_version(tmp_path):
    model = _default()
    state = model.state()
    state["version"] = 99
    with pytest.raises(FormatError):
        Backbone.from_state(state)


def test_from_params_validates_names_and_shapes():
    model = _default()
    values = {k: v.data for k, v in model.params.items()}
    values.pop("head.bias")
    with pytest.raises(ContractError):
        Backbone.from_params(BackboneConfig(), values)
