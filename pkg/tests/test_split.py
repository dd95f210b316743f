import numpy as np
import pytest

from vflsim.channel import ChannelSpec
from vflsim.errors import ConfigError
from vflsim.split import (CostLedger, SplitScheme, build_models, flops_of, scheme_costs,
                          transmission_bytes)
from vflsim.tensor import MLP, Activation, DenseLayer

WIDTHS = [20, 18, 15]


@pytest.mark.parametrize("cut,bottom,top", [
    (1, [16], [48, 96, 196, 1]),
    (2, [16, 32], [96, 196, 1]),
    (3, [16, 32, 64], [192, 1]),
])
def test_scheme_shapes(cut, bottom, top):
    m = build_models(SplitScheme(cut), WIDTHS, seed=0)
    for d, b in zip(WIDTHS, m.bottoms):
        assert b.widths == [d] + bottom
        assert all(l.activation is Activation.RELU for l in b.layers)
    assert m.top.widths == top
    assert m.top.layers[-1].activation is Activation.SIGMOID
    assert sum(b.out_features for b in m.bottoms) == m.top.in_features
    assert len(m.bottoms[0].layers) + len(m.top.layers) == 4


def test_per_guest_widths():
    assert [SplitScheme(c).per_guest_out for c in (1, 2, 3)] == [16, 32, 64]
    assert SplitScheme(2).top_input == 96


@pytest.mark.parametrize("cut", [0, 4, -1])
def test_bad_cut(cut):
    with pytest.raises(ConfigError):
        SplitScheme(cut)


def test_seed_deterministic():
    a = build_models(SplitScheme(2), WIDTHS, 5)
    b = build_models(SplitScheme(2), WIDTHS, 5)
    c = build_models(SplitScheme(2), WIDTHS, 6)
    pa, pb, pc = (sum((x.params() for x in m.bottoms), m.top.params()) for m in (a, b, c))
    assert all(x.tobytes() == y.tobytes() for x, y in zip(pa, pb))
    assert any(x.tobytes() != y.tobytes() for x, y in zip(pa, pc))


def test_flops_hand_values():
    layer = MLP([DenseLayer(np.zeros((10, 5)), np.zeros(5))])
    assert flops_of(layer, 4) == 420
    assert flops_of(layer, 0) == 0
    assert flops_of(layer, 4, "backward") == 840
    m = build_models(SplitScheme(3), WIDTHS, 0)
    for net in m.bottoms + [m.top]:
        assert flops_of(net, 7, "backward") == 2 * flops_of(net, 7)


def test_flops_monotone_across_schemes():
    g, h = [], []
    for cut in (1, 2, 3):
        m = build_models(SplitScheme(cut), WIDTHS, 0)
        g.append([flops_of(b, 100) for b in m.bottoms])
        h.append(flops_of(m.top, 100))
    for i in range(3):
        assert g[0][i] < g[1][i] < g[2][i]
    assert h[0] > h[1] > h[2]


def test_transmission_bytes():
    fwd, bwd = transmission_bytes(SplitScheme(2), 1000, ChannelSpec.identity())
    assert fwd == bwd == 128_000
    assert transmission_bytes(SplitScheme(1), 1000, ChannelSpec.identity())[0] == 64_000
    assert transmission_bytes(SplitScheme(2), 1000, ChannelSpec.gaussian(1.0)) == (fwd, bwd)
    ratios = [transmission_bytes(SplitScheme(c), 777, ChannelSpec.identity())[0] for c in (1, 2, 3)]
    assert ratios[1] == 2 * ratios[0] and ratios[2] == 4 * ratios[0]


def test_quantized_transmission_bytes():
    ch = ChannelSpec.quantized(16)
    fwd, bwd = transmission_bytes(SplitScheme(2), 1, ch)
    assert fwd == 96 and bwd == 128
    # 10 samples in batches of 4: messages of 4, 4, 2 samples
    fwd, _ = transmission_bytes(SplitScheme(1), 10, ch, batch_size=4)
    assert fwd == 2 * (16 + 64 + 64 * 4 // 8) + (16 + 64 + 32 * 4 // 8)


def test_ledger_accumulates_and_deltas():
    led = CostLedger()
    led.register("host")
    led.transfer("guest0", "host", 100)
    led.add_flops("guest0", forward=10, backward=20)
    snap = led.snapshot()
    led.transfer("host", "guest0", 40)
    d = led.delta(snap)
    assert d["host"].bytes_sent == 40 and d["guest0"].bytes_received == 40
    assert d["guest0"].bytes_sent == 0
    assert led["host"].bytes_received == 100
    with pytest.raises(ValueError):
        led.transfer("a", "b", -1)
    text = led.to_csv([d])
    assert text.splitlines()[0] == "participant,epoch,flops_fwd,flops_bwd,bytes_sent,bytes_received"
    assert len(text.splitlines()) == 3


def test_scheme_costs_consistent():
    c = scheme_costs(SplitScheme(2), WIDTHS, 1000)
    assert c["guest0"]["bytes_sent"] == 128_000
    assert c["host"]["bytes_received"] == 3 * 128_000
