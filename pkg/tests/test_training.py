import numpy as np
import pytest

from bigg import (
    Graph,
    TrainConfig,
    gen_grid,
    gen_lobster,
    graph_log_likelihood,
    parse_config,
    reorder,
    save_config,
    train,
)
from bigg.model import BiggModel, load_model

from conftest import all_graphs, tiny_model


def make_model(config, seed=0):
    return BiggModel.create(config.model_config(), seed=seed)


class TestConfigFile:
    def test_roundtrip(self, tmp_path):
        config = TrainConfig(d=8, L=4, lr=5e-4, epochs=7, seed=3, batch_size=2)
        path = tmp_path / "config.txt"
        save_config(config, path)
        assert parse_config(path) == config

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.txt"
        path.write_text("d = 4\nmomentum = 0.9\n")
        with pytest.raises(ValueError, match="unknown key"):
            parse_config(path)

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "config.txt"
        path.write_text("d 4\n")
        with pytest.raises(ValueError, match="line 1"):
            parse_config(path)

    def test_comments_and_blanks_ok(self, tmp_path):
        path = tmp_path / "config.txt"
        path.write_text("# setup\n\nd = 4\nL = 2\n")
        assert parse_config(path).d == 4

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0).validate()
        with pytest.raises(ValueError):
            TrainConfig(lr=1e-6, lr_floor=1e-3).validate()
        with pytest.raises(ValueError):
            TrainConfig(k_policy="sometimes").validate()


class TestTrainingLoop:
    def test_loss_monotone_on_single_graph(self):
        config = TrainConfig(d=8, L=2, lr=1e-4, epochs=30, seed=0, batch_size=1)
        model = make_model(config)
        g = reorder(gen_grid(3, 3), "bfs")
        _, curve = train(model, [g], config)
        losses = [s.loss for s in curve]
        for a, b in zip(losses, losses[1:]):
            assert b <= a + 1e-6

    def test_overfits_point_mass(self):
        config = TrainConfig(d=16, L=2, lr=3e-3, epochs=1200, seed=1, batch_size=1)
        model = make_model(config, seed=1)
        target = Graph(4, ((), (1,), (2,), (1, 3)))

        def reached(epoch, loss, m):
            return loss < -np.log(0.99)

        model, curve = train(model, [target], config, stop_fn=reached)
        prob = np.exp(graph_log_likelihood(model, target)[0])
        assert prob > 0.99

    def test_deterministic_given_seed(self):
        graphs = [reorder(gen_lobster(6, 0.5, 0.5, 20, s), "bfs") for s in range(6)]
        curves = []
        for _ in range(2):
            config = TrainConfig(d=4, L=4, epochs=4, seed=7, batch_size=2)
            _, curve = train(make_model(config, seed=7), graphs, config)
            curves.append([(s.loss, s.lr) for s in curve])
        assert curves[0] == curves[1]

    def test_plateau_halves_lr(self):
        # converge hard on a trivial target, then watch the rate decay
        config = TrainConfig(
            d=4, L=2, lr=1e-3, epochs=80, seed=2, batch_size=1,
            plateau_window=3, plateau_tol=0.5,
        )
        model = make_model(config, seed=2)
        _, curve = train(model, [Graph(2, ((), (1,)))], config)
        rates = {s.lr for s in curve}
        assert len(rates) > 1
        assert min(rates) >= config.lr_floor

    def test_lr_floor_respected(self):
        config = TrainConfig(
            d=4, L=2, lr=4e-5, lr_floor=1e-5, epochs=60, seed=3, batch_size=1,
            plateau_window=1, plateau_tol=2.0,
        )
        model = make_model(config, seed=3)
        _, curve = train(model, [Graph(2, ((), (1,)))], config)
        assert min(s.lr for s in curve) == pytest.approx(1e-5)

    def test_checkpoints_and_curve_written(self, tmp_path):
        config = TrainConfig(d=4, L=2, epochs=3, seed=4, batch_size=2)
        model = make_model(config, seed=4)
        graphs = [reorder(gen_grid(2, 3), "bfs")] * 4
        out = tmp_path / "run"
        train(model, graphs, config, out_dir=out)
        assert (out / "params.ckpt").exists() and (out / "meta.txt").exists()
        lines = (out / "loss_curve.csv").read_text().strip().splitlines()
        assert lines[0] == "epoch,loss,lr" and len(lines) == 4
        loaded = load_model(out)
        assert loaded.node_sampler.histogram == {6: 4}

    def test_empty_training_set_rejected(self):
        config = TrainConfig(d=4, L=2, epochs=1)
        with pytest.raises(ValueError):
            train(make_model(config), [], config)

    def test_dimension_mismatch_rejected(self):
        config = TrainConfig(d=4, L=2, epochs=1)
        with pytest.raises(ValueError):
            train(tiny_model(d=8, L=2), [gen_grid(2, 2)], config)

    def test_chunked_policy_matches_full(self):
        graphs = [reorder(gen_grid(3, 4), "bfs"), reorder(gen_grid(4, 4), "bfs")]
        losses = {}
        for policy in ("full", "auto", "2"):
            config = TrainConfig(d=4, L=2, epochs=2, seed=5, batch_size=2, k_policy=policy)
            _, curve = train(make_model(config, seed=5), graphs, config)
            losses[policy] = [s.loss for s in curve]
        assert np.allclose(losses["full"], losses["auto"], rtol=1e-9)
        assert np.allclose(losses["full"], losses["2"], rtol=1e-9)

    def test_stop_fn_halts_early(self):
        config = TrainConfig(d=4, L=2, epochs=50, seed=6, batch_size=1)
        model = make_model(config, seed=6)
        _, curve = train(model, [gen_grid(2, 2)], config, stop_fn=lambda e, l, m: e >= 5)
        assert len(curve) == 5
