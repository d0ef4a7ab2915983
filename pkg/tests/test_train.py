import numpy as np
import pytest

from hodinet import HODINet, ModelConfig, pnm
from hodinet.errors import ConfigError
from hodinet.nn import lr_at_epoch
from hodinet.train import load_corpus, synthetic_corpus, train, write_corpus

TINY = ModelConfig(input_size=(32, 32), rgb_channels=(4, 4, 4, 4), depth_channels=(4, 4, 4, 4),
                   decoder_width=4)


def test_lr_schedule_values():
    for e in range(6):
        assert lr_at_epoch(1e-4, 0.9, e) == pytest.approx(1e-4 * 0.9 ** e, rel=1e-12)


def test_trainer_applies_decay_per_epoch():
    corpus = synthetic_corpus(32, sides=(8, 12))
    hist = train(HODINet(TINY), corpus, epochs=3, steps_per_epoch=2, batch_size=2)
    assert hist.lrs == pytest.approx([1e-4] * 2 + [9e-5] * 2 + [8.1e-5] * 2, rel=1e-12)
    assert [e["epoch"] for e in hist.epoch_losses] == [0, 1, 2]
    assert len(hist.epoch_losses[0]["bce"]) == 4


def test_synthetic_corpus_shape():
    c = synthetic_corpus()
    assert len(c) == 4 and c.rgb.shape == (4, 3, 64, 64) and c.depth.shape == (4, 3, 64, 64)
    assert [int(g.sum()) for g in c.gt] == [s * s for s in (16, 20, 24, 28)]
    assert np.all((c.rgb >= 0) & (c.rgb <= 1))


def test_corpus_disk_round_trip(tmp_path):
    c = synthetic_corpus(32, sides=(8, 12))
    write_corpus(c, tmp_path)
    back = load_corpus(tmp_path, (32, 32))
    assert back.names == c.names
    assert np.array_equal(back.gt, c.gt)
    assert np.max(np.abs(back.rgb - c.rgb)) <= 0.5 / 255 + 1e-12


def test_orphans_are_listed(tmp_path):
    write_corpus(synthetic_corpus(32, sides=(8, 12)), tmp_path)
    pnm.write(tmp_path / "rgb" / "lonely.ppm", np.zeros((32, 32, 3), np.uint8))
    (tmp_path / "gt" / "toy1.pgm").unlink()
    with pytest.raises(ConfigError) as err:
        load_corpus(tmp_path, (32, 32))
    msg = str(err.value)
    assert "lonely.ppm" in msg and "toy1.ppm" in msg and "toy1.pgm" in msg
    assert "toy0" not in msg


def test_empty_corpus_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_corpus(tmp_path, (32, 32))


def test_training_is_deterministic():
    corpus = synthetic_corpus(32, sides=(8, 12, 16))
    runs = []
    for _ in range(2):
        model = HODINet(TINY)
        hist = train(model, corpus, epochs=2, steps_per_epoch=3, batch_size=2, seed=4)
        runs.append((hist.step_losses, model.state_dict()))
    assert runs[0][0] == runs[1][0]
    assert all(np.array_equal(a, b) for a, b in zip(runs[0][1].values(), runs[1][1].values()))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_loss_stays_finite_for_500_steps(seed):
    model = HODINet(ModelConfig(seed=seed))
    hist = train(model, synthetic_corpus(), epochs=10, steps_per_epoch=50, seed=seed)
    assert len(hist.step_losses) == 500
    assert np.all(np.isfinite(hist.step_losses))
