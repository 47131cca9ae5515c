import json
import math

import numpy as np
import pytest
import torch
from torch import nn

from oracles import reference_adam_step
from spoofbench.config import seed_everything
from spoofbench.data.loader import AudioBatch, BatchLoader
from spoofbench.data.records import construct
from spoofbench.data.transform import TransformParams
from spoofbench.engine.assembly import build_assembly
from spoofbench.errors import (
    DataError,
    NonFiniteLossError,
    NothingToResumeError,
    NumericError,
)
from spoofbench.trainer import (
    Adam,
    EarlyStopping,
    NullTracker,
    Trainer,
    load_checkpoint,
    validate,
)


class TestAdam:
    def test_zero_gradients_leave_params_unchanged(self):
        p = torch.tensor([1.0, -2.0], dtype=torch.float64)
        opt = Adam([p], lr=0.1)
        p.grad = torch.zeros_like(p)
        for _ in range(5):
            opt.step()
        torch.testing.assert_close(p, torch.tensor([1.0, -2.0], dtype=torch.float64),
                                   atol=0.0, rtol=0.0)

    def test_first_step_moves_by_lr(self):
        # bias correction makes the first update lr * g / (|g| + eps)
        p = torch.zeros(1, dtype=torch.float64)
        opt = Adam([p], lr=1e-3)
        p.grad = torch.ones(1, dtype=torch.float64)
        opt.step()
        assert float(p) == pytest.approx(-1e-3, rel=1e-6)

    def test_matches_reference_formula(self):
        rng = np.random.default_rng(31)
        x = rng.normal(size=7)
        p = torch.tensor(x.copy())
        opt = Adam([p], lr=0.01)
        ref_p, m, v = x.copy(), np.zeros(7), np.zeros(7)
        for t in range(1, 12):
            g = rng.normal(size=7)
            p.grad = torch.tensor(g)
            opt.step()
            ref_p, m, v = reference_adam_step(ref_p, g, m, v, t, lr=0.01)
            np.testing.assert_allclose(p.numpy(), ref_p, rtol=0, atol=1e-12)

    def test_matches_torch_adam(self):
        rng = np.random.default_rng(32)
        x = rng.normal(size=(4, 3))
        ours = torch.tensor(x.copy())
        theirs = torch.nn.Parameter(torch.tensor(x.copy()))
        opt_ours = Adam([ours], lr=0.005)
        opt_theirs = torch.optim.Adam([theirs], lr=0.005)
        for _ in range(10):
            g = torch.tensor(rng.normal(size=(4, 3)))
            ours.grad = g.clone()
            theirs.grad = g.clone()
            opt_ours.step()
            opt_theirs.step()
            np.testing.assert_allclose(
                ours.numpy(), theirs.detach().numpy(), rtol=0, atol=1e-12
            )

    def test_nonfinite_grad_raises(self):
        p = torch.zeros(2)
        opt = Adam([p], lr=0.1)
        p.grad = torch.tensor([float("nan"), 0.0])
        with pytest.raises(NumericError):
            opt.step()

    def test_state_round_trip(self):
        p = torch.randn(3, dtype=torch.float64)
        opt = Adam([p], lr=0.01)
        p.grad = torch.randn(3, dtype=torch.float64)
        opt.step()
        state = opt.state_dict()
        q = p.clone()
        opt2 = Adam([q], lr=0.01)
        opt2.load_state_dict(state)
        assert opt2.t == opt.t
        torch.testing.assert_close(opt2.m[0], opt.m[0], atol=0.0, rtol=0.0)


class TestEarlyStopping:
    def test_forced_sequence_patience_three(self):
        stopper = EarlyStopping(patience=3)
        outcomes = [stopper.update(v) for v in [1.0, 0.9, 0.95, 0.96, 0.97]]
        assert outcomes == [
            (True, False), (True, False), (False, False), (False, False),
            (False, True),
        ]
        assert stopper.best == 0.9

    def test_counter_resets_exactly_on_improvement(self):
        stopper = EarlyStopping(patience=2)
        stopper.update(1.0)
        stopper.update(1.1)
        assert stopper.since_improvement == 1
        stopper.update(0.5)
        assert stopper.since_improvement == 0

    def test_equal_loss_is_not_improvement(self):
        stopper = EarlyStopping(patience=1)
        stopper.update(1.0)
        improved, stop = stopper.update(1.0)
        assert not improved and stop

    def test_min_delta(self):
        stopper = EarlyStopping(patience=5, min_delta=0.1)
        stopper.update(1.0)
        improved, _ = stopper.update(0.95)
        assert not improved


class _StubLoader:
    def __init__(self, batches):
        self.batches = batches

    def iter_epoch(self, epoch=0, start_batch=0):
        return iter(self.batches[start_batch:])

    def __len__(self):
        return len(self.batches)


class _ConstantModel(nn.Module):
    """Emits a fixed loss and constant scores; for validate() contracts."""

    def __init__(self, losses, score_value=0.0):
        super().__init__()
        self.losses = losses
        self.score_value = score_value
        self.calls = 0

    def forward(self, waveforms, labels):
        loss = torch.tensor(self.losses[self.calls], dtype=torch.float64)
        self.calls += 1
        scores = torch.full((len(labels),), self.score_value, dtype=torch.float64)
        return loss, scores


def _batch(n, labels):
    return AudioBatch(
        waveforms=np.zeros((n, 16), dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int64),
        utt_ids=[f"u{i}" for i in range(n)],
    )


class TestValidate:
    def test_single_batch_loss(self):
        model = _ConstantModel([0.7], score_value=0.0)
        loader = _StubLoader([_batch(4, [1, 0, 1, 0])])
        val_loss, _ = validate(model, loader)
        assert val_loss == pytest.approx(0.7)

    def test_batch_size_weighted_mean(self):
        model = _ConstantModel([1.0, 4.0])
        loader = _StubLoader([_batch(3, [1, 0, 1]), _batch(1, [0])])
        val_loss, _ = validate(model, loader)
        assert val_loss == pytest.approx((1.0 * 3 + 4.0 * 1) / 4)

    def test_constant_scores_give_half_eer(self):
        model = _ConstantModel([0.5, 0.5])
        loader = _StubLoader([_batch(4, [1, 0, 1, 0]), _batch(2, [1, 0])])
        _, eer = validate(model, loader)
        assert eer == 0.5

    def test_perfect_separation_gives_zero_eer(self):
        class Separator(nn.Module):
            def forward(self, waveforms, labels):
                scores = torch.as_tensor(labels, dtype=torch.float64) * 2.0 - 1.0
                return torch.tensor(0.1), scores

        _, eer = validate(Separator(), _StubLoader([_batch(4, [1, 0, 1, 0])]))
        assert eer == 0.0

    def test_empty_loader_rejected(self):
        with pytest.raises(DataError):
            validate(_ConstantModel([1.0]), _StubLoader([]))


TRAIN_CFG = {
    "optimizer": "adam", "lr": 1e-3, "max_epochs": 2, "val_interval": "epoch",
    "patience": 5, "min_delta": 0.0, "checkpoint": {"every_k": None},
}


def small_setup(corpus, run_dir, seed=11, **cfg_overrides):
    seed_everything(seed)
    params = TransformParams(duration_s=0.3)
    train_loader = BatchLoader(
        construct(corpus["tables"]["train"]), params,
        batch_size=8, shuffle=True, seed=seed, train=True,
    )
    valid_loader = BatchLoader(
        construct(corpus["tables"]["valid"]), params, batch_size=16, seed=seed,
    )
    assembly = build_assembly(
        {"type": "reference", "params": {"feature_dim": 8, "stem_kernel": 40,
                                         "stem_stride": 32},
         "mode": "finetune", "aggregation": "last"},
        {"type": "mlp", "params": {"hidden": [8]}},
        {"type": "ce", "params": {}},
    )
    cfg = {**TRAIN_CFG, **cfg_overrides}
    return Trainer(assembly, train_loader, valid_loader, cfg, run_dir,
                   config_hash="testhash")


class TestTrainerLoop:
    def test_history_accounting_one_epoch(self, corpus, tmp_path):
        trainer = small_setup(corpus, tmp_path / "run", max_epochs=1)
        report = trainer.train()
        n_batches = len(trainer.train_loader)
        train_rows = [r for r in report.history if r["split"] == "train"]
        valid_rows = [r for r in report.history if r["split"] == "valid"]
        assert len(train_rows) == n_batches
        assert len(valid_rows) == 1
        assert all("eer" in r for r in valid_rows)
        assert (tmp_path / "run" / "logs" / "history.jsonl").exists()
        assert (tmp_path / "run" / "checkpoints" / "best.ckpt").exists()
        assert (tmp_path / "run" / "checkpoints" / "last.ckpt").exists()

    def test_step_interval_validation(self, corpus, tmp_path):
        trainer = small_setup(corpus, tmp_path / "run", max_epochs=1,
                              val_interval=2)
        report = trainer.train()
        valid_steps = [r["step"] for r in report.history if r["split"] == "valid"]
        assert valid_steps == [2, 4]

    def test_zero_lr_preserves_parameters_exactly(self, corpus, tmp_path):
        trainer = small_setup(corpus, tmp_path / "run", lr=0.0, max_epochs=1)
        before = {k: v.clone() for k, v in trainer.assembly.state_dict().items()}
        trainer.train()
        for k, v in trainer.assembly.state_dict().items():
            assert torch.equal(v, before[k]), k

    def test_checkpoint_round_trip_bit_identical(self, corpus, tmp_path):
        trainer = small_setup(corpus, tmp_path / "run", max_epochs=1)
        trainer.train()
        payload = load_checkpoint(tmp_path / "run" / "checkpoints" / "last.ckpt")
        for k, v in trainer.assembly.state_dict().items():
            assert torch.equal(payload["params"][k], v)
        assert payload["optimizer"]["t"] == trainer.optimizer.t
        torch.testing.assert_close(
            payload["optimizer"]["m"][0], trainer.optimizer.m[0],
            atol=0.0, rtol=0.0,
        )
        assert payload["config_hash"] == "testhash"

    def test_forced_validation_sequence_stops_after_five(self, corpus, tmp_path):
        forced = [1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99]

        class ForcedTrainer(Trainer):
            def validate(self):
                return forced[self.state.n_validations], 0.25

        seed_everything(11)
        base = small_setup(corpus, tmp_path / "unused", max_epochs=10, patience=3)
        trainer = ForcedTrainer(
            base.assembly, base.train_loader, base.valid_loader,
            {**TRAIN_CFG, "max_epochs": 10, "patience": 3}, tmp_path / "run",
        )
        report = trainer.train()
        assert report.stop_reason == "early_stopping"
        assert report.state.n_validations == 5
        assert report.state.best_val_index == 2
        assert report.state.best_val_loss == 0.9
        best = load_checkpoint(tmp_path / "run" / "checkpoints" / "best.ckpt")
        assert best["train_state"]["n_validations"] == 2

    def test_nonfinite_loss_aborts_with_dump(self, corpus, tmp_path):
        losses = [0.5, 0.4, float("nan")]

        class Exploder(nn.Module):
            def __init__(self):
                super().__init__()
                self.p = nn.Parameter(torch.zeros(1))
                self.calls = 0

            def forward(self, waveforms, labels):
                loss = self.p.sum() + losses[min(self.calls, 2)]
                self.calls += 1
                return loss, torch.zeros(len(labels))

            def trainable_parameters(self):
                return [self.p]

        loader = _StubLoader([_batch(2, [1, 0])] * 5)
        trainer = Trainer(Exploder(), loader, loader, TRAIN_CFG, tmp_path / "run")
        with pytest.raises(NonFiniteLossError) as err:
            trainer.train()
        assert err.value.step == 3
        assert (tmp_path / "run" / "crash_state.json").exists()
        assert (tmp_path / "run" / "checkpoints" / "crash.ckpt").exists()

    def test_resume_requires_checkpoint(self, corpus, tmp_path):
        trainer = small_setup(corpus, tmp_path / "fresh")
        with pytest.raises(NothingToResumeError):
            trainer.train(resume=True)

    def test_every_k_checkpoints(self, corpus, tmp_path):
        trainer = small_setup(corpus, tmp_path / "run", max_epochs=2,
                              checkpoint={"every_k": 1})
        trainer.train()
        ckpts = sorted(p.name for p in (tmp_path / "run" / "checkpoints").iterdir())
        assert "val_0001.ckpt" in ckpts and "val_0002.ckpt" in ckpts


class TestResumeDeterminism:
    def test_resume_reproduces_uninterrupted_run(self, corpus, tmp_path):
        full = small_setup(corpus, tmp_path / "full", seed=13, max_epochs=2)
        full.train()
        full_history = (tmp_path / "full" / "logs" / "history.jsonl").read_bytes()

        part = small_setup(corpus, tmp_path / "part", seed=13, max_epochs=2)
        part.train(max_steps=3)  # interrupt mid-epoch
        resumed = small_setup(corpus, tmp_path / "part", seed=13, max_epochs=2)
        resumed.train(resume=True)
        resumed_history = (tmp_path / "part" / "logs" / "history.jsonl").read_bytes()
        assert resumed_history == full_history

        full_last = load_checkpoint(tmp_path / "full" / "checkpoints" / "last.ckpt")
        part_last = load_checkpoint(tmp_path / "part" / "checkpoints" / "last.ckpt")
        for k in full_last["params"]:
            assert torch.equal(full_last["params"][k], part_last["params"][k]), k

    def test_two_identical_runs_bitwise_equal_history(self, corpus, tmp_path):
        a = small_setup(corpus, tmp_path / "a", seed=17, max_epochs=2)
        a.train()
        b = small_setup(corpus, tmp_path / "b", seed=17, max_epochs=2)
        b.train()
        assert (tmp_path / "a" / "logs" / "history.jsonl").read_bytes() == \
               (tmp_path / "b" / "logs" / "history.jsonl").read_bytes()
