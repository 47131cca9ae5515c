"""Training loop: batches -> forward -> backward -> optimize -> log ->
periodic validation -> checkpoints.

Validation runs every ``val_interval`` steps (or once per epoch), training
stops when validation loss has not improved for ``patience`` validations or
the epoch budget runs out, and both the best and the latest checkpoints are
kept. Because all data-order randomness is derived statelessly from
(seed, epoch, position), resuming from the last checkpoint reproduces the
uninterrupted run exactly at a single worker.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import torch

from .errors import DataError, NonFiniteLossError, NothingToResumeError, NumericError
from .evaluation import compute_eer

BETAS = (0.9, 0.999)
EPS = 1e-8


class Adam:
    """Adam with bias correction, implemented directly.

    Update: m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
    p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
    """

    def __init__(self, params, lr, betas=BETAS, eps=EPS):
        if lr < 0:
            raise NumericError(f"learning rate must be >= 0, got {lr}")
        self.params = [p for p in params]
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [torch.zeros_like(p) for p in self.params]
        self.v = [torch.zeros_like(p) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    @torch.no_grad()
    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            if not torch.isfinite(g).all():
                raise NumericError("non-finite gradient in optimizer step")
            m.mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            p.add_((m / bc1) / ((v / bc2).sqrt() + self.eps), alpha=-self.lr)

    def state_dict(self):
        return {"t": self.t, "m": [m.clone() for m in self.m],
                "v": [v.clone() for v in self.v]}

    def load_state_dict(self, state):
        self.t = state["t"]
        for dst, src in zip(self.m, state["m"]):
            dst.copy_(src)
        for dst, src in zip(self.v, state["v"]):
            dst.copy_(src)


class EarlyStopping:
    """Counts validations without a strict improvement in validation loss."""

    def __init__(self, patience, min_delta=0.0):
        if patience < 1:
            raise NumericError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.since_improvement = 0

    def update(self, val_loss):
        """Returns (improved, should_stop)."""
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.since_improvement = 0
            return True, False
        self.since_improvement += 1
        return False, self.since_improvement >= self.patience

    def state(self):
        return {"best": self.best, "since_improvement": self.since_improvement}

    def restore(self, state):
        self.best = state["best"]
        self.since_improvement = state["since_improvement"]


class NullTracker:
    """External experiment trackers plug in behind this no-op interface."""

    def log(self, row):
        pass

    def close(self):
        pass


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    next_epoch: int = 0
    next_batch: int = 0
    best_val_loss: float = math.inf
    validations_since_improvement: int = 0
    n_validations: int = 0
    best_val_index: int = 0  # 1-based validation ordinal of the best checkpoint


@dataclass
class TrainReport:
    best_checkpoint: str
    last_checkpoint: str
    history: list
    stop_reason: str
    state: TrainState


def validate(assembly, valid_loader):
    """Batch-size-weighted validation loss plus EER over collected scores."""
    was_training = assembly.training
    assembly.eval()
    total, count = 0.0, 0
    scores, labels = [], []
    with torch.no_grad():
        for batch in valid_loader.iter_epoch(0):
            if batch.labels is None:
                raise DataError("validation loader must be labelled")
            loss, batch_scores = assembly(batch.waveforms, batch.labels)
            b = len(batch)
            total += float(loss) * b
            count += b
            scores.extend(float(s) for s in batch_scores)
            labels.extend(int(l) for l in batch.labels)
    if count == 0:
        raise DataError("validation loader is empty")
    if was_training:
        assembly.train()
    eer, _ = compute_eer(scores, labels)
    return total / count, eer


class Trainer:
    """Runs the training loop for one seed in one run directory."""

    def __init__(self, assembly, train_loader, valid_loader, train_cfg, run_dir,
                 config_hash="", tracker=None):
        self.assembly = assembly
        self.train_loader = train_loader
        self.valid_loader = valid_loader
        self.cfg = train_cfg
        self.run_dir = Path(run_dir)
        self.config_hash = config_hash
        self.tracker = tracker or NullTracker()
        self.optimizer = Adam(assembly.trainable_parameters(), lr=train_cfg["lr"])
        self.stopper = EarlyStopping(train_cfg["patience"], train_cfg.get("min_delta", 0.0))
        self.state = TrainState()
        self.history = []
        self.ckpt_dir = self.run_dir / "checkpoints"
        self.history_path = self.run_dir / "logs" / "history.jsonl"

    # -- logging ----------------------------------------------------------

    def _log(self, row):
        self.history.append(row)
        self.history_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.history_path, "a") as fh:
            fh.write(json.dumps(row) + "\n")
        self.tracker.log(row)

    def _truncate_history(self, max_step):
        """Drop rows logged after the checkpoint being resumed from."""
        if not self.history_path.exists():
            return
        kept = []
        with open(self.history_path) as fh:
            for line in fh:
                row = json.loads(line)
                if row["step"] <= max_step:
                    kept.append(row)
        with open(self.history_path, "w") as fh:
            for row in kept:
                fh.write(json.dumps(row) + "\n")
        self.history = kept

    # -- checkpointing ------------------------------------------------------

    def _payload(self):
        return {
            "params": self.assembly.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "train_state": asdict(self.state),
            "stopper": self.stopper.state(),
            "torch_rng": torch.get_rng_state(),
            "config_hash": self.config_hash,
        }

    def save_checkpoint(self, name):
        self.ckpt_dir.mkdir(parents=True, exist_ok=True)
        path = self.ckpt_dir / f"{name}.ckpt"
        torch.save(self._payload(), path)
        return path

    def _restore(self, payload):
        self.assembly.load_state_dict(payload["params"])
        self.optimizer.load_state_dict(payload["optimizer"])
        self.state = TrainState(**payload["train_state"])
        self.stopper.restore(payload["stopper"])
        torch.set_rng_state(payload["torch_rng"])

    # -- the loop -----------------------------------------------------------

    def _dump_and_abort(self, loss_value):
        dump = {
            "step": self.state.step,
            "epoch": self.state.epoch,
            "loss": repr(loss_value),
            "history_rows": len(self.history),
        }
        (self.run_dir / "crash_state.json").write_text(json.dumps(dump, indent=2))
        self.save_checkpoint("crash")
        raise NonFiniteLossError(self.state.step, loss_value)

    def _run_validation(self):
        val_loss, val_eer = self.validate()
        self.state.n_validations += 1
        self._log({
            "step": self.state.step, "epoch": self.state.epoch,
            "split": "valid", "loss": val_loss, "eer": val_eer,
        })
        improved, stop = self.stopper.update(val_loss)
        self.state.best_val_loss = self.stopper.best
        self.state.validations_since_improvement = self.stopper.since_improvement
        if improved:
            self.state.best_val_index = self.state.n_validations
            self.save_checkpoint("best")
        every_k = (self.cfg.get("checkpoint") or {}).get("every_k")
        if every_k and self.state.n_validations % every_k == 0:
            self.save_checkpoint(f"val_{self.state.n_validations:04d}")
        self.save_checkpoint("last")
        return stop

    def validate(self):
        return validate(self.assembly, self.valid_loader)

    def train(self, resume=False, max_steps=None):
        """Run (or continue) training; returns a TrainReport.

        ``max_steps`` stops cleanly after that many optimization steps with
        the last checkpoint positioned for exact resumption.
        """
        if resume:
            last = self.ckpt_dir / "last.ckpt"
            if not last.exists():
                raise NothingToResumeError(f"no checkpoint to resume in {self.ckpt_dir}")
            self._restore(torch.load(last, weights_only=True))
            self._truncate_history(self.state.step)

        interval = self.cfg.get("val_interval", "epoch")
        per_epoch = interval == "epoch"
        stop_reason = "max_epochs"
        stop = False
        resume_epoch, resume_batch = self.state.next_epoch, self.state.next_batch

        for epoch in range(resume_epoch, self.cfg["max_epochs"]):
            self.state.epoch = epoch
            start_batch = resume_batch if epoch == resume_epoch else 0
            self.assembly.train()
            for batch_idx, batch in enumerate(
                self.train_loader.iter_epoch(epoch, start_batch), start=start_batch
            ):
                self.state.step += 1
                loss, _ = self.assembly(batch.waveforms, batch.labels)
                if not bool(torch.isfinite(loss)):
                    self._dump_and_abort(loss.item())
                self.optimizer.zero_grad()
                loss.backward()
                try:
                    self.optimizer.step()
                except NumericError:
                    self._dump_and_abort(loss.item())
                self.state.next_epoch = epoch
                self.state.next_batch = batch_idx + 1
                if self.state.next_batch >= len(self.train_loader):
                    self.state.next_epoch, self.state.next_batch = epoch + 1, 0
                self._log({
                    "step": self.state.step, "epoch": epoch,
                    "split": "train", "loss": loss.item(),
                })
                if not per_epoch and self.state.step % int(interval) == 0:
                    stop = self._run_validation()
                    if stop:
                        stop_reason = "early_stopping"
                        break
                if max_steps is not None and self.state.step >= max_steps:
                    self.save_checkpoint("last")
                    return self._report("max_steps")
            if stop:
                break
            if per_epoch:
                if self._run_validation():
                    stop_reason = "early_stopping"
                    break

        self.save_checkpoint("last")
        return self._report(stop_reason)

    def _report(self, stop_reason):
        self.tracker.close()
        best = self.ckpt_dir / "best.ckpt"
        last = self.ckpt_dir / "last.ckpt"
        return TrainReport(
            best_checkpoint=str(best if best.exists() else last),
            last_checkpoint=str(last),
            history=list(self.history),
            stop_reason=stop_reason,
            state=self.state,
        )


def load_checkpoint(path):
    """Read a checkpoint payload (parameters, optimizer state, config hash)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    return torch.load(path, weights_only=True)
