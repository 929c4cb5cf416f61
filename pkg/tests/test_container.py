import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from threshattn.container import ContainerError, decode, encode, load, save
from threshattn.instances import InstanceSpec, generate


@given(st.integers(2, 40), st.integers(1, 5), st.integers(0, 2**63 - 1),
       st.sampled_from(["gram_exact", "random_embed"]))
def test_round_trip_bit_exact(n, k, seed, mode):
    k = min(k, n)
    spec = InstanceSpec(n=n, k=k, seed=seed, mode=mode, eta=0.05 if mode == "gram_exact" else None)
    inst = generate(spec)
    back = decode(encode(inst))
    assert back.spec == inst.spec
    for a, b in ((inst.q, back.q), (inst.k_mat, back.k_mat), (inst.v, back.v)):
        assert a.tobytes() == b.tobytes()
    assert back.truth.same_as(inst.truth)
    assert encode(back) == encode(inst)


def test_file_round_trip(tmp_path):
    inst = generate(InstanceSpec(n=300, k=8, seed=1))
    save(inst, tmp_path / "x.bin")
    assert load(tmp_path / "x.bin").truth.same_as(inst.truth)


def test_corruption_detected():
    data = encode(generate(InstanceSpec(n=8, k=2, seed=0)))
    with pytest.raises(ContainerError, match="magic"):
        decode(b"NOTMAGIC" + data[8:])
    with pytest.raises(ContainerError):
        decode(data[:-3])
    with pytest.raises(ContainerError, match="trailing"):
        decode(data + b"\x00")


def test_varint_large_indices():
    inst = generate(InstanceSpec(n=200, k=3, seed=2))
    assert any(int(idx.max()) >= 128 for idx in inst.truth.rows if idx.size)
    assert decode(encode(inst)).truth.same_as(inst.truth)
    assert np.array_equal(decode(encode(inst)).q, inst.q)
