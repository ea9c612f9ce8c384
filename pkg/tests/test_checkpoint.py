import struct

import numpy as np
import pytest

from disentangle.checkpoint import MAGIC, Checkpoint, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from disentangle.config import NetworkConfig, TrainConfig
from disentangle.errors import DataError
from disentangle.network import FDRNet
from disentangle.optim import AdamState, adam_step

CFG = NetworkConfig(phases=1, channels=4, fd_layers=1, aux_blocks=1, reduction=2)


def _checkpoint(rng):
    net = FDRNet(CFG, seed=3)
    params = dict(net.named_parameters())
    adam = AdamState()
    adam_step(params, {k: rng.standard_normal(p.shape) for k, p in params.items()}, adam, lr=1e-3)
    return Checkpoint(net, adam, iteration=7, rng_state={"seed": 5}, train_config=TrainConfig(iterations=7))


def test_roundtrip_is_byte_identical(rng, tmp_path):
    ckpt = _checkpoint(rng)
    path = tmp_path / "a.ckpt"
    save_checkpoint(ckpt, path)
    back = load_checkpoint(path)
    assert to_bytes(back) == path.read_bytes()
    assert back.iteration == 7 and back.rng_state == {"seed": 5} and back.train_config == ckpt.train_config
    assert back.adam.step == 1 and back.network.config == CFG
    for (n1, p1), (n2, p2) in zip(ckpt.network.named_parameters(), back.network.named_parameters()):
        assert n1 == n2 and np.array_equal(p1.data, p2.data)
        assert np.array_equal(ckpt.adam.m[n1], back.adam.m[n2])
    x = rng.uniform(0, 1, (1, 3, 8, 8))
    from disentangle.tensor import Tensor
    np.testing.assert_array_equal(ckpt.network(Tensor(x))[0].data, back.network(Tensor(x))[0].data)


def test_fresh_optimizer_roundtrip():
    ckpt = Checkpoint(FDRNet(CFG), AdamState())
    back = from_bytes(to_bytes(ckpt))
    assert back.adam.m == {} and back.train_config is None
    assert to_bytes(back) == to_bytes(ckpt)


def test_corrupt_files_rejected(rng, tmp_path):
    blob = to_bytes(_checkpoint(rng))
    bad_version = MAGIC + struct.pack("<I", 99) + blob[12:]
    for broken in (b"NOTACKPT" + blob[8:], blob[:10], blob[:-8], blob + b"\x00" * 8, bad_version,
                   blob[:20] + b"{" * 30):
        with pytest.raises(DataError):
            from_bytes(broken)
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "missing.ckpt")
