import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modcodec import autograd as ag
from modcodec.autograd import Parameter, Tensor
from modcodec.errors import ConfigError
from modcodec.gradcheck import check_gradients, numerical_grad
from modcodec.transforms import (
    BETA_MIN,
    GDN,
    TSM,
    CarrierParams,
    GdnParams,
    ResTSM,
    Shrinkage,
    ShrinkageParams,
    carrier,
    gdn_amplitude,
    gdn_forward,
    make_nonlinearity,
    phase,
    relu_amplitude,
    relu_as_amplitude,
    res_tsm_forward,
    shrinkage_amplitude,
    shrinkage_forward,
    tsm_forward,
)

DISABLED = (False, False, False)


def fmap(rng, B=2, C=3, H=4, W=4):
    return Tensor(rng.standard_normal((B, C, H, W)))


def saturated_phase_params(C, target):
    """Phase-only carrier whose phase is exactly ``target`` everywhere."""
    p = CarrierParams.create(C, "tpm", init="zeros")
    p.phase_scale = math.pi
    p.phase_bias.data[:] = math.atanh(target / math.pi)
    return p


# -- carrier / TSM -------------------------------------------------------------


def test_carrier_all_zero_branches_is_ln2():
    p = CarrierParams.create(3, "tjm", init="zeros")
    c = carrier(fmap(np.random.default_rng(0)), p)
    # softplus(0) * cos(0 + pi * tanh(0)) = ln 2
    np.testing.assert_allclose(c.data, math.log(2.0), rtol=1e-15)


def test_carrier_amplitude_off_phase_zero_is_one():
    p = CarrierParams.create(3, "tpm", init="zeros")
    assert np.all(carrier(fmap(np.random.default_rng(1)), p).data == 1.0)


def test_carrier_phase_pi_is_minus_one():
    p = CarrierParams.create(3, "tpm", init="zeros")
    p.phase_bias.data[:] = 50.0  # tanh saturates to 1 in float64
    x = fmap(np.random.default_rng(2))
    np.testing.assert_allclose(carrier(x, p).data, -1.0, atol=1e-15)
    np.testing.assert_allclose(tsm_forward(x, p).data, -x.data, atol=1e-15)


def test_tpm_identity_at_zero():
    x = fmap(np.random.default_rng(3))
    p = CarrierParams.create(3, "tpm", init="zeros")
    np.testing.assert_array_equal(tsm_forward(x, p).data, x.data)


def test_tsm_analytic_point():
    x = Tensor(np.full((1, 1, 1, 1), 2.0))
    p = saturated_phase_params(1, math.pi / 3)
    assert tsm_forward(x, p).item() == pytest.approx(1.0, abs=1e-12)


def test_channel_mismatch():
    p = CarrierParams.create(4, "tpm")
    with pytest.raises(ConfigError):
        tsm_forward(fmap(np.random.default_rng(0), C=3), p)


# -- ResTSM ----------------------------------------------------------------------


def test_restsm_zero_carrier_is_shortcut():
    C = 3
    stack = []
    for _ in range(2):
        p = CarrierParams.create(C, "tjm", init="zeros")
        p.amp_bias.data[:] = math.log(math.expm1(1.0))  # softplus -> 1
        p.phase_bias.data[:] = math.atanh(0.5)  # phase -> pi/2
        stack.append(p)
    mixers = [(Tensor(np.eye(C), requires_grad=True), Tensor(np.zeros(C), requires_grad=True))]
    x = fmap(np.random.default_rng(4))
    y = res_tsm_forward(x, stack, mixers)
    np.testing.assert_allclose(y.data, x.data, atol=1e-15)


def test_restsm_depth1_identity_unit_doubles():
    p = CarrierParams.create(3, "tjm", init="zeros")
    p.amp_bias.data[:] = math.log(math.expm1(1.0))
    x = fmap(np.random.default_rng(5))
    np.testing.assert_allclose(res_tsm_forward(x, [p], []).data, 2.0 * x.data, rtol=1e-15)


def test_restsm_params_reported_for_c192():
    layer = ResTSM(192, depth=2)
    # two joint units (3 maps each) and one mixer: 7 * (192^2 + 192)
    assert layer.count_params() == 7 * (192 ** 2 + 192)


def test_restsm_bad_depth():
    with pytest.raises(ConfigError):
        ResTSM(3, depth=0)


# -- GDN -----------------------------------------------------------------------------


def test_gdn_identity_when_gamma_zero_beta_one():
    x = fmap(np.random.default_rng(6))
    p = GdnParams.from_values(np.ones(3), np.zeros((3, 3)))
    np.testing.assert_allclose(gdn_forward(x, p).data, x.data, rtol=1e-15)


def test_gdn_hand_value():
    x = Tensor(np.array([3.0, 4.0]).reshape(1, 2, 1, 1))
    p = GdnParams.from_values(np.ones(2), np.ones((2, 2)))
    y = gdn_forward(x, p).data.reshape(-1)
    np.testing.assert_allclose(y, [3 / math.sqrt(26), 4 / math.sqrt(26)], rtol=1e-12)
    np.testing.assert_allclose(y, [0.5883, 0.7845], atol=5e-5)


def test_igdn_inverts_gdn_without_gamma():
    x = fmap(np.random.default_rng(7))
    fwd = GdnParams.from_values(np.full(3, 2.0), np.zeros((3, 3)))
    inv = GdnParams.from_values(np.full(3, 2.0), np.zeros((3, 3)), inverse=True)
    np.testing.assert_allclose(gdn_forward(gdn_forward(x, fwd), inv).data, x.data, rtol=1e-14)


def test_gdn_beta_floor_survives_any_raw_value():
    layer = GDN(4)
    layer.params.beta_raw.data[:] = 0.0
    layer.params.gamma_raw.data[:] = -3.0
    assert np.all(layer.params.beta.data >= BETA_MIN)
    assert np.all(layer.params.gamma.data >= 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_gdn_denominator_floor(seed):
    rng = np.random.default_rng(seed)
    p = GdnParams(Tensor(rng.standard_normal(3) * 1e-4), Tensor(rng.standard_normal((3, 3))))
    x = Tensor(rng.standard_normal((1, 3, 2, 2)) * rng.choice([1e-6, 1.0, 1e3]))
    denom_sq = ag.dense_channelwise(ag.square(x), p.gamma, ag.square(p.beta)).data
    assert np.all(denom_sq >= BETA_MIN ** 2)


# -- amplitude-only baselines --------------------------------------------------


def test_relu_values():
    x = Tensor(np.array([-2.0, 3.0]).reshape(1, 2, 1, 1))
    assert relu_as_amplitude(x).data.reshape(-1).tolist() == [0.0, 3.0]


def test_relu_matches_elementwise_bitwise():
    x = fmap(np.random.default_rng(8))
    assert relu_as_amplitude(x).data.tobytes() == ag.elementwise(x, "relu").data.tobytes()


@pytest.mark.parametrize("theta,x,expected", [(1.0, 0.4, 0.0), (1.0, 0.6, 0.6), (2.0, -1.5, -1.5), (2.0, 0.9, 0.0)])
def test_shrinkage_rule(theta, x, expected):
    p = ShrinkageParams(Tensor(np.array([theta])))
    assert shrinkage_forward(Tensor(np.full((1, 1, 1, 1), x)), p).item() == expected


def test_shrinkage_rejects_nonpositive_theta():
    with pytest.raises(ConfigError):
        ShrinkageParams(Tensor(np.array([0.0, 1.0])))


# -- one equation for all of them ---------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_reduction_to_amplitude_only(seed):
    rng = np.random.default_rng(seed)
    x = fmap(rng, C=4)
    off = CarrierParams.create(4, DISABLED)
    via_carrier = tsm_forward(x, off, relu_amplitude)
    assert np.array_equal(via_carrier.data, relu_as_amplitude(x).data)

    sp = ShrinkageParams(Tensor(rng.uniform(0.2, 2.0, 4)))
    assert np.array_equal(tsm_forward(x, off, shrinkage_amplitude(sp)).data, shrinkage_forward(x, sp).data)

    gp = GdnParams.from_values(rng.uniform(0.1, 2.0, 4), rng.uniform(0, 1, (4, 4)))
    np.testing.assert_allclose(tsm_forward(x, off, gdn_amplitude(gp)).data, gdn_forward(x, gp).data,
                               rtol=0, atol=1e-12)


@pytest.mark.parametrize("kind", ["tam", "tpm", "tfm", "tjm"])
def test_zero_branches_amplitude_off_is_identity(kind):
    rng = np.random.default_rng(9)
    p = CarrierParams.create(3, kind, init="zeros")
    if p.branch_mask[0]:
        p.amp_bias.data[:] = math.log(math.expm1(1.0))
        p.amp_weight.data[:] = 0.0
    x = Tensor(rng.standard_normal((1, 3, 2, 2)), requires_grad=True)
    np.testing.assert_allclose(tsm_forward(x, p).data, x.data, rtol=1e-15)
    # d f / d x = 1 + x * d carrier / d x, and the carrier is flat here
    analytic_fd = numerical_grad(lambda: tsm_forward(x, p).sum(), x)
    np.testing.assert_allclose(analytic_fd, np.ones_like(x.data), atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.01, 100.0))
def test_phase_bounded_and_carrier_magnitude(seed, scale):
    rng = np.random.default_rng(seed)
    p = CarrierParams.create(3, "tpm", factory=Parameter(rng=rng), init="train")
    p.phase_weight.data *= scale * 10
    q = CarrierParams.create(3, "tfm", factory=Parameter(rng=rng), init="train")
    x = Tensor(rng.standard_normal((1, 3, 3, 3)) * scale)
    phi = phase(x, p).data
    assert np.all(np.abs(phi) <= math.pi)
    assert np.all(np.abs(carrier(x, p).data) <= 1.0)
    assert np.all(np.abs(carrier(x, q).data) <= 1.0)


def _phase_grad(init):
    rng = np.random.default_rng(13)
    p = CarrierParams.create(4, "tpm", init=init, factory=Parameter(rng=rng))
    for t in (p.phase_weight, p.phase_bias):
        t.requires_grad = True
    x = Tensor(rng.standard_normal((2, 4, 5, 5)))
    ag.backward(ag.square(tsm_forward(x, p) - 0.3 * x).sum())
    return np.abs(p.phase_weight.grad).max() + np.abs(p.phase_bias.grad).max()


def test_zero_phase_init_is_a_saddle_and_train_init_is_not():
    # d cos(phi) / d phi vanishes at phi = 0, so a zero phase map never moves
    assert _phase_grad("zeros") == 0.0
    assert _phase_grad("train") > 1e-3


# -- gradients ---------------------------------------------------------------


@pytest.mark.parametrize("kind", ["relu", "gdn", "igdn", "sa", "tam", "tpm", "tfm", "tjm", "restsm"])
def test_transform_gradients(kind):
    rng = np.random.default_rng(10)
    factory = Parameter(rng=rng)
    base = "gdn" if kind == "igdn" else kind
    layer = make_nonlinearity(base, 3, inverse=kind == "igdn", factory=factory)
    for p in layer.parameters():
        p.data = p.data + 0.3 * rng.standard_normal(p.shape)
    if kind == "sa":
        layer.params.theta.data[:] = np.abs(layer.params.theta.data) + 0.5
    x = Tensor(rng.standard_normal((1, 3, 3, 3)), requires_grad=True)
    assert check_gradients(lambda: layer(x), [x, *layer.parameters()]) < 1e-4


# -- counting ----------------------------------------------------------------------


def test_tpm_and_gdn_parameter_counts_agree():
    for C in (1, 8, 32, 192):
        assert TSM(C, "tpm").count_params() == GDN(C).count_params() == C * C + C
    assert GDN(192).count_params() == 37_056


def test_restsm_forward_shape():
    layer = ResTSM(5, depth=3)
    x = fmap(np.random.default_rng(12), C=5)
    assert layer(x).shape == x.shape


def test_unknown_kind():
    with pytest.raises(ConfigError):
        make_nonlinearity("nal", 4)


def test_shrinkage_project_keeps_theta_positive():
    layer = Shrinkage(3)
    layer.params.theta.data[:] = -1.0
    layer.project()
    assert np.all(layer.params.theta.data > 0)
