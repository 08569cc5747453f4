"""Model parameters, passes, Adam, and checkpoint round trips."""

from __future__ import annotations

import numpy as np
import pytest

from fairphq import losses, net, synth
from fairphq.errors import ConfigError, FileFormatError, InputError

CONFIG = net.ModelConfig(feature_dims=(5, 5, 5), hidden_dim=6)


@pytest.fixture()
def batch():
    cohort = synth.generate_cohort(synth.CohortConfig(n=10, seed=7, feature_dims=(5, 5, 5)))
    groups = {r.group.index for r in cohort.records}
    assert groups == {0, 1}
    return net.batchify(cohort.records)


class TestInit:
    def test_deterministic_in_the_seed(self):
        a = net.init_params(CONFIG, seed=4)
        b = net.init_params(CONFIG, seed=4)
        assert np.array_equal(net.to_vector(a), net.to_vector(b))
        c = net.init_params(CONFIG, seed=5)
        assert not np.array_equal(net.to_vector(a), net.to_vector(c))

    def test_scales_and_zeros(self):
        params = net.init_params(CONFIG, seed=0, uncertainty="task")
        for w, b, d in zip(params.enc_w, params.enc_b, CONFIG.feature_dims):
            assert np.all(np.abs(w) <= 1.0 / np.sqrt(d))
            assert np.array_equal(b, np.zeros(CONFIG.hidden_dim))
        assert np.all(np.abs(params.attn_q) <= 1.0 / np.sqrt(CONFIG.hidden_dim))
        assert np.array_equal(params.head_b, np.zeros((8, 4)))
        assert np.array_equal(params.log_var, np.zeros(8))

    def test_uncertainty_shapes(self):
        assert net.init_params(CONFIG, 0).log_var is None
        assert net.init_params(CONFIG, 0, "task").log_var.shape == (8,)
        assert net.init_params(CONFIG, 0, "group").log_var.shape == (2, 8)
        with pytest.raises(ConfigError):
            net.init_params(CONFIG, 0, "record")

    def test_vector_round_trip(self):
        params = net.init_params(CONFIG, seed=1, uncertainty="group")
        vec = net.to_vector(params)
        again = net.from_vector(params, vec.copy())
        assert np.array_equal(net.to_vector(again), vec)
        with pytest.raises(InputError):
            net.from_vector(params, vec[:-1])


class TestForward:
    def test_zero_params_give_uniform_outputs(self, batch):
        params = net.zeros_params(CONFIG)
        emb, alpha, fused, q = net.forward_batch(params, batch)
        assert np.all(alpha == 1.0 / 3.0)
        assert np.all(q == 0.25)
        assert np.all(fused == 0.0)

    def test_head_outputs_are_distributions(self, batch):
        params = net.init_params(CONFIG, seed=2)
        _, alpha, _, q = net.forward_batch(params, batch)
        assert q.shape == (len(batch), 8, 4)
        np.testing.assert_allclose(q.sum(axis=-1), 1.0, atol=1e-12)
        np.testing.assert_allclose(alpha.sum(axis=-1), 1.0, atol=1e-12)

    def test_single_record_matches_batch(self, batch, small_cohort):
        params = net.init_params(CONFIG, seed=2)
        _, _, _, q = net.forward_batch(params, net.batchify(small_cohort.records))
        one = net.forward(params, small_cohort.records[3])
        np.testing.assert_allclose(one, q[3], atol=1e-15)

    def test_dim_mismatch_is_a_config_error(self, small_cohort):
        params = net.init_params(net.ModelConfig((4, 5, 5), 6), seed=0)
        with pytest.raises(ConfigError):
            net.forward(params, small_cohort.records[0])


class TestBackward:
    def test_gradient_matches_finite_differences_for_mtl(self, batch):
        """Fast spot check; the full four-mode sweep runs in acceptance."""
        params = net.init_params(CONFIG, seed=3)
        spec = losses.LossSpec(mode="mtl")
        _, grads = net.backward_batch(params, batch, spec)
        g = net.to_vector(grads)
        theta = net.to_vector(params)
        rng = np.random.default_rng(0)
        idx = rng.choice(theta.size, size=40, replace=False)
        h = 1e-5
        for i in idx:
            tp = theta.copy()
            tp[i] += h
            tm = theta.copy()
            tm[i] -= h
            fd = (
                net.loss_value(net.from_vector(params, tp), batch, spec)
                - net.loss_value(net.from_vector(params, tm), batch, spec)
            ) / (2 * h)
            assert abs(g[i] - fd) / max(abs(g[i]) + abs(fd), 1e-3) < 1e-6

    def test_unitask_leaves_other_heads_untouched(self, batch):
        params = net.init_params(CONFIG, seed=3)
        spec = losses.LossSpec(mode="unitask", task=2)
        _, grads = net.backward_batch(params, batch, spec)
        for t in range(8):
            if t != 2:
                assert np.all(grads.head_w[t] == 0.0)
                assert np.all(grads.head_b[t] == 0.0)
        assert np.any(grads.head_w[2] != 0.0)

    def test_log_var_contract_enforced(self, batch):
        plain = net.init_params(CONFIG, seed=0)
        with_task = net.init_params(CONFIG, seed=0, uncertainty="task")
        with pytest.raises(ConfigError):
            net.backward_batch(plain, batch, losses.LossSpec(mode="uw"))
        with pytest.raises(ConfigError):
            net.backward_batch(with_task, batch, losses.LossSpec(mode="mtl"))
        with pytest.raises(ConfigError):
            net.backward_batch(with_task, batch, losses.LossSpec(mode="ufair"))

    def test_uw_step0_loss_equals_mtl(self, batch):
        """Zero log-variances make the uw objective coincide with mtl."""
        mtl_params = net.init_params(CONFIG, seed=6)
        uw_params = net.init_params(CONFIG, seed=6, uncertainty="task")
        l_mtl = net.loss_value(mtl_params, batch, losses.LossSpec(mode="mtl"))
        l_uw = net.loss_value(uw_params, batch, losses.LossSpec(mode="uw"))
        assert l_mtl == l_uw

    def test_backward_records_wrapper(self, small_cohort):
        params = net.init_params(CONFIG, seed=1)
        loss_a, grads_a = net.backward(params, small_cohort.records, losses.LossSpec(mode="mtl"))
        loss_b, grads_b = net.backward_batch(
            params, net.batchify(small_cohort.records), losses.LossSpec(mode="mtl")
        )
        assert loss_a == loss_b
        assert np.array_equal(net.to_vector(grads_a), net.to_vector(grads_b))


class TestAdam:
    def test_matches_reference_update(self):
        """Hand-rolled Adam recurrence agrees for several steps."""
        rng = np.random.default_rng(5)
        params = net.init_params(CONFIG, seed=0)
        state = net.init_optimizer(params, lr=0.01)
        theta = net.to_vector(params).copy()
        m = np.zeros_like(theta)
        v = np.zeros_like(theta)
        for step in range(1, 6):
            grad_vec = rng.standard_normal(theta.size)
            grads = net.from_vector(params, grad_vec)
            params, state = net.adam_step(params, grads, state)
            m = 0.9 * m + 0.1 * grad_vec
            v = 0.999 * v + 0.001 * grad_vec**2
            m_hat = m / (1.0 - 0.9**step)
            v_hat = v / (1.0 - 0.999**step)
            theta = theta - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
            np.testing.assert_allclose(net.to_vector(params), theta, atol=1e-15)
        assert state.step == 5

    def test_is_pure(self):
        params = net.init_params(CONFIG, seed=0)
        state = net.init_optimizer(params)
        before = net.to_vector(params).copy()
        grads = net.from_vector(params, np.ones(before.size))
        net.adam_step(params, grads, state)
        assert np.array_equal(net.to_vector(params), before)
        assert state.step == 0

    def test_rejects_bad_lr(self):
        params = net.init_params(CONFIG, seed=0)
        with pytest.raises(ConfigError):
            net.init_optimizer(params, lr=0.0)
        with pytest.raises(ConfigError):
            net.init_optimizer(params, lr=-1.0)


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        params = net.init_params(CONFIG, seed=9, uncertainty="group")
        state = net.init_optimizer(params, lr=0.003)
        grads = net.from_vector(params, np.full(net.to_vector(params).size, 0.1))
        params, state = net.adam_step(params, grads, state)
        path = tmp_path / "ckpt.json"
        net.save_checkpoint(str(path), params, state, meta={"mode": "ufair", "seed": 9})
        loaded, opt, meta = net.load_checkpoint(str(path))
        assert np.array_equal(net.to_vector(loaded), net.to_vector(params))
        assert np.array_equal(opt.m, state.m)
        assert np.array_equal(opt.v, state.v)
        assert opt.step == 1 and opt.lr == 0.003
        assert meta == {"mode": "ufair", "seed": 9}

    def test_save_is_byte_deterministic(self, tmp_path):
        params = net.init_params(CONFIG, seed=2, uncertainty="task")
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        net.save_checkpoint(str(p1), params)
        net.save_checkpoint(str(p2), params)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corrupt_file_is_rejected(self, tmp_path):
        path = tmp_path / "ckpt.json"
        path.write_text("{broken")
        with pytest.raises(FileFormatError):
            net.load_checkpoint(str(path))
        with pytest.raises(FileFormatError):
            net.load_checkpoint(str(tmp_path / "missing.json"))

    def test_shape_tamper_is_rejected(self, tmp_path):
        import json

        params = net.init_params(CONFIG, seed=2)
        path = tmp_path / "ckpt.json"
        net.save_checkpoint(str(path), params)
        doc = json.loads(path.read_text())
        doc["params"]["attn_q"] = doc["params"]["attn_q"][:4]
        path.write_text(json.dumps(doc))
        with pytest.raises(FileFormatError):
            net.load_checkpoint(str(path))

    def test_non_finite_values_are_rejected(self, tmp_path):
        import json

        params = net.init_params(CONFIG, seed=2)
        path = tmp_path / "ckpt.json"
        net.save_checkpoint(str(path), params)
        doc = json.loads(path.read_text())
        doc["params"]["head_b"][0][0] = None
        path.write_text(json.dumps(doc))
        with pytest.raises(FileFormatError):
            net.load_checkpoint(str(path))
