import numpy as np
import pytest

from finnswe.errors import ShapeError
from finnswe.finn import FinnParams
from finnswe.optim import SGD, Adam, clip_global_norm, make_optimizer
from finnswe.scenario import Sequence, generate_dataset, plan_dataset, read_checkpoint, simulate_entry
from finnswe.swe import Grid, SimConfig
from finnswe.training import TrainConfig, evaluate, sequence_mse, train

CFG = SimConfig(grid=Grid(8, 8), steps=10)


@pytest.fixture(scope="module")
def seqs():
    return [simulate_entry(e, CFG) for e in plan_dataset("train", 4, 0, CFG)]


def test_oracle_init_stays_at_minimum(seqs):
    oracle = FinnParams.oracle(CFG.g_m_s2)
    res = train(seqs, TrainConfig(epochs=5, batch_size=2, learning_rate=1e-5, optimizer="sgd"), init=oracle)
    assert res.losses[0] < 1e-10
    assert max(res.losses) <= 10 * res.losses[0]


def test_oracle_evaluates_to_zero(seqs):
    assert evaluate(seqs, FinnParams.oracle(CFG.g_m_s2)) < 1e-10


def test_zero_sequences_zero_error():
    T = CFG.steps
    z = np.zeros((T + 1, 8, 8))
    seq = Sequence(np.full((8, 8), 70.0), z, z, z, CFG, (4e5, 4e5, 5e4))
    p = FinnParams.oracle(CFG.g_m_s2)
    assert evaluate([seq, seq], p) == 0.0


def test_provided_true_H_is_bit_identical(seqs):
    p = FinnParams.init(1)
    assert sequence_mse(p, seqs[0]) == sequence_mse(p, seqs[0], H=seqs[0].H.copy())


def test_provided_H_shape_checked(seqs):
    with pytest.raises(ShapeError):
        sequence_mse(FinnParams.init(1), seqs[0], H=np.ones((4, 4)))


def test_training_reduces_loss_and_is_deterministic(seqs, tmp_path):
    cfg = TrainConfig(epochs=6, batch_size=2, learning_rate=1e-2, seed=3)
    a = train(seqs, cfg, checkpoint_path=tmp_path / "a.fnn", log_path=tmp_path / "a.log")
    b = train(seqs, cfg, checkpoint_path=tmp_path / "b.fnn", log_path=tmp_path / "b.log")
    assert a.losses == b.losses
    assert (tmp_path / "a.log").read_bytes() == (tmp_path / "b.log").read_bytes()
    assert (tmp_path / "a.fnn").read_bytes() == (tmp_path / "b.fnn").read_bytes()
    assert a.best_loss < evaluate(seqs, FinnParams.init(3))
    lines = (tmp_path / "a.log").read_text().splitlines()
    assert lines == a.log_lines() and lines[0].startswith("epoch=0 loss=")


def test_best_checkpoint_is_monotone(seqs, tmp_path):
    res = train(seqs, TrainConfig(epochs=6, batch_size=2, learning_rate=3e-2, seed=1), checkpoint_path=tmp_path / "m.fnn")
    best = np.minimum.accumulate(res.losses)
    assert np.all(np.diff(best) <= 0)
    assert res.best_loss == best[-1]
    stored, _ = read_checkpoint(tmp_path / "m.fnn")
    assert stored.flat().tobytes() == res.params.flat().tobytes()


def test_hidden_width_mismatch(seqs):
    with pytest.raises(ShapeError):
        train(seqs, TrainConfig(epochs=1, hidden_width=8), init=FinnParams.init(0))


def test_manifest_input(tmp_path):
    m = generate_dataset(tmp_path / "d", "train", 2, 0, CFG)
    res = train(m, TrainConfig(epochs=1, batch_size=2))
    assert len(res.losses) == 1


@pytest.mark.parametrize("bad", [dict(learning_rate=0.0), dict(batch_size=0), dict(epochs=-1)])
def test_bad_config(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)


# ----------------------------------------------------------- optimisers

def test_adam_first_step_is_lr_times_sign():
    p = {"w": np.array([[1.0, -2.0]])}
    Adam(0.1).step(p, {"w": np.array([[3.0, -0.5]])})
    np.testing.assert_allclose(p["w"], [[0.9, -1.9]], rtol=1e-7)


def test_sgd_step():
    p = {"w": np.array([[1.0]])}
    SGD(0.5).step(p, {"w": np.array([[2.0]])})
    assert p["w"][0, 0] == 0.0


def test_clip_global_norm():
    g = {"a": np.array([[3.0]]), "b": np.array([[4.0]])}
    norm = clip_global_norm(g, 1.0)
    assert norm == 5.0
    np.testing.assert_allclose([g["a"][0, 0], g["b"][0, 0]], [0.6, 0.8])
    h = {"a": np.array([[0.3]])}
    clip_global_norm(h, 1.0)
    assert h["a"][0, 0] == 0.3


def test_unknown_optimizer():
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", 1e-3)
