import numpy as np
import pytest

from fdcheck import max_rel_error, numerical_gradient
from geoflow import backbone, codec
from geoflow import numerics as nm
from geoflow.backbone import NetConfig, apply_lcm, forward, init_params, time_features


def test_zero_parameters_give_zero_map():
    cfg = NetConfig(blocks=2, hidden=8, time_dim=4, use_lcm=True)
    net = init_params(0, cfg)
    for p in net.params.values():
        p.data[:] = 0.0
    out = forward(net, np.random.default_rng(0).standard_normal((8, 8, 3)), 0.5)
    assert np.array_equal(out.data, np.zeros((8, 8, 3)))


def test_forward_deterministic():
    cfg = NetConfig(blocks=2, hidden=8, time_dim=4)
    net = init_params(1, cfg)
    z = np.random.default_rng(2).standard_normal((8, 8, 3))
    a = forward(net, z, 0.25).data
    b = forward(net, z, 0.25).data
    assert np.array_equal(a, b)


def test_forward_shape_contract_and_errors():
    z = np.random.default_rng(3).standard_normal((8, 8, 6))
    cond = init_params(0, NetConfig(blocks=1, hidden=4, time_dim=4, conditioned=True))
    assert forward(cond, z, 1.0).shape == (8, 8, 3)
    nopack = init_params(0, NetConfig(blocks=1, hidden=4, time_dim=4, use_pack=False, use_lcm=False))
    assert forward(nopack, z[:, :, :3], 1.0).shape == (8, 8, 3)
    with pytest.raises(nm.ShapeError):
        forward(cond, z[:, :, :3], 1.0)  # channel mismatch with configuration
    packed_only = init_params(0, NetConfig(blocks=1, hidden=4, time_dim=4))
    with pytest.raises(nm.ShapeError):
        forward(packed_only, np.zeros((7, 8, 3)), 1.0)  # odd spatial dim


def test_full_backbone_gradient_finite_differences():
    cfg = NetConfig(blocks=2, hidden=8, time_dim=4, use_lcm=True)
    net = init_params(5, cfg)
    rng = np.random.default_rng(6)
    z = nm.Tensor(rng.standard_normal((8, 8, 3)), requires_grad=True)
    tgt = rng.standard_normal((8, 8, 3))
    nm.backward(nm.mse(forward(net, z, 0.5), nm.Tensor(tgt)))

    def loss_with(name, arr):
        saved = net.params[name].data if name != "input" else z.data
        fresh = nm.Tensor(arr) if name == "input" else None
        if name == "input":
            out = forward(net, fresh, 0.5)
        else:
            net.params[name].data = arr
            out = forward(net, nm.Tensor(z.data), 0.5)
        val = float(nm.mse(out, nm.Tensor(tgt)).data)
        if name != "input":
            net.params[name].data = saved
        return val

    # every parameter tensor, plus the input (gradient crosses pack/unpack)
    for name in list(net.params) + ["input"]:
        ref = z.grad if name == "input" else net.params[name].grad
        arr = z.data if name == "input" else net.params[name].data
        fd = numerical_gradient(lambda a, name=name: loss_with(name, a), arr)
        assert max_rel_error(ref, fd) < 1e-5, name


def test_apply_lcm_asymptotic_identity():
    ident = np.zeros((3, 3, 3, 3))
    for c in range(3):
        ident[1, 1, c, c] = 1.0
    k1 = nm.Tensor(ident)
    k2 = nm.Tensor(ident.copy())
    zb = nm.Tensor(np.zeros(3))
    x = nm.Tensor(np.full((4, 4, 3), 6.0))
    out = apply_lcm(x, k1, zb, k2, zb)
    assert np.max(np.abs(out.data - 6.0)) < 1e-6  # GELU saturates for large x

    zero = apply_lcm(nm.Tensor(np.random.default_rng(0).standard_normal((4, 4, 3))),
                     nm.Tensor(np.zeros((3, 3, 3, 3))), zb,
                     nm.Tensor(np.zeros((3, 3, 3, 3))), zb)
    assert np.array_equal(zero.data, np.zeros((4, 4, 3)))


def test_apply_lcm_composition_oracle():
    rng = np.random.default_rng(9)
    k1 = nm.Tensor(rng.standard_normal((3, 3, 3, 3)) * 0.3)
    b1 = nm.Tensor(rng.standard_normal(3) * 0.1)
    k2 = nm.Tensor(rng.standard_normal((3, 3, 3, 3)) * 0.3)
    b2 = nm.Tensor(rng.standard_normal(3) * 0.1)
    h = nm.Tensor(rng.standard_normal((6, 6, 3)))
    direct = nm.conv2d(nm.gelu(nm.conv2d(h, k1, b1)), k2, b2)
    assert np.array_equal(apply_lcm(h, k1, b1, k2, b2).data, direct.data)


def test_init_reproducible_and_seed_sensitivity():
    cfg = NetConfig(blocks=2, hidden=8, time_dim=4)
    a = init_params(7, cfg)
    b = init_params(7, cfg)
    for name in a.params:
        assert np.array_equal(a.params[name].data, b.params[name].data)
    c = init_params(8, cfg)
    assert any(not np.array_equal(a.params[n].data, c.params[n].data) for n in a.params)


def test_init_shared_prefix_across_architectures():
    # same-named parameters draw identical values even when other shapes change
    small = init_params(3, NetConfig(blocks=2, hidden=8, time_dim=4, use_lcm=False))
    with_lcm = init_params(3, NetConfig(blocks=2, hidden=8, time_dim=4, use_lcm=True))
    cond = init_params(3, NetConfig(blocks=2, hidden=8, time_dim=4, conditioned=True))
    assert np.array_equal(small.params["block0.kernel"].data, with_lcm.params["block0.kernel"].data)
    assert np.array_equal(small.params["block1.kernel"].data, cond.params["block1.kernel"].data)
    assert small.params["proj_in.kernel"].shape != cond.params["proj_in.kernel"].shape


def test_init_fan_in_statistics():
    fan_in = 9 * 8
    target = np.sqrt(2.0 / fan_in)
    cfg = NetConfig(blocks=1, hidden=8, latent_channels=2, time_dim=4)
    samples = []
    for seed in range(10):
        net = init_params(seed, cfg)
        samples.append(net.params["block0.kernel"].data.ravel())  # 3x3x8x8 kernel
    std = np.std(np.concatenate(samples))
    assert abs(std - target) / target < 0.2


def test_locality_without_lcm_is_2x2():
    rng = np.random.default_rng(10)
    h, w, c = 8, 8, 3
    packed = rng.standard_normal((h // 2, w // 2, 4 * c))
    base = codec.unpack(packed)
    bumped = packed.copy()
    bumped[1, 2, 5] += 1.0
    diff = np.abs(codec.unpack(bumped) - base).sum(axis=2)
    rows, cols = np.nonzero(diff)
    assert rows.min() >= 2 and rows.max() <= 3  # target cell rows 2..3
    assert cols.min() >= 4 and cols.max() <= 5  # target cell cols 4..5


def test_locality_with_lcm_grows_to_5x5():
    rng = np.random.default_rng(11)
    h, w, c = 12, 12, 3
    k1 = nm.Tensor(rng.standard_normal((3, 3, c, c)))
    b1 = nm.Tensor(rng.standard_normal(c))
    k2 = nm.Tensor(rng.standard_normal((3, 3, c, c)))
    b2 = nm.Tensor(rng.standard_normal(c))
    packed = rng.standard_normal((h // 2, w // 2, 4 * c))
    bumped = packed.copy()
    bumped[3, 3, 0] += 1.0
    out0 = apply_lcm(nm.Tensor(codec.unpack(packed)), k1, b1, k2, b2).data
    out1 = apply_lcm(nm.Tensor(codec.unpack(bumped)), k1, b1, k2, b2).data
    diff = np.abs(out1 - out0).sum(axis=2)
    rows, cols = np.nonzero(diff)
    assert (rows.max() - rows.min() + 1) >= 5
    assert (cols.max() - cols.min() + 1) >= 5


def test_time_embedding_distinct_on_grid():
    grid = np.arange(1, 51) / 50
    embs = np.array([time_features(t, 8) for t in grid])
    assert len({tuple(e) for e in map(tuple, embs)}) == len(grid)
    assert np.array_equal(time_features(0.3, 8), time_features(0.3, 8))


def test_param_count_recorded():
    net = init_params(0, NetConfig(blocks=1, hidden=4, time_dim=4, use_lcm=False))
    expected = (3 * 3 * 16 * 4 + 4) + (3 * 3 * 4 * 4 + 4) + (3 * 3 * 4 * 12 + 12)
    assert net.param_count == expected
    assert net.seed == 0
