import numpy as np
import pytest

from sailforge.checkpoint import MAGIC, dumps_checkpoint, load_checkpoint, loads_checkpoint, save_checkpoint
from sailforge.errors import ArtifactIOError


def test_round_trip_is_bitwise(model_pair, tmp_path):
    model, _ = model_pair
    save_checkpoint(model, tmp_path / "a.ckpt")
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert back.arch == model.arch and back.params.tobytes() == model.params.tobytes()
    save_checkpoint(back, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_special_float_values_survive(small_arch, model_pair):
    model, _ = model_pair
    params = model.params.copy()
    params[:3] = [-0.0, 5e-324, np.finfo(float).max]
    back = loads_checkpoint(dumps_checkpoint(model.with_params(params)))
    assert back.params.tobytes() == params.tobytes()


def test_bad_magic(model_pair):
    blob = dumps_checkpoint(model_pair[0])
    with pytest.raises(ArtifactIOError, match="magic"):
        loads_checkpoint(b"X" + blob[1:])


def test_truncated(model_pair):
    blob = dumps_checkpoint(model_pair[0])
    for cut in (len(MAGIC) + 2, 30, len(blob) - 8):
        with pytest.raises(ArtifactIOError):
            loads_checkpoint(blob[:cut])


def test_bad_version(model_pair):
    blob = bytearray(dumps_checkpoint(model_pair[0]))
    blob[8] = 9
    with pytest.raises(ArtifactIOError, match="version"):
        loads_checkpoint(bytes(blob))


def test_corrupt_descriptor(model_pair):
    blob = bytearray(dumps_checkpoint(model_pair[0]))
    blob[16] = ord("!")
    with pytest.raises(ArtifactIOError):
        loads_checkpoint(bytes(blob))


def test_missing_file(tmp_path):
    with pytest.raises(ArtifactIOError):
        load_checkpoint(tmp_path / "none.ckpt")
