"""Synthetic desk-scale corpus for smoke tests and demos.

Bonafide utterances are band-limited tone complexes (a handful of harmonic
partials plus a low noise floor). Spoof utterances are the same signals
passed through a fixed codec-like artifact: mu-law companding quantized to
few bits, which leaves a broadband quantization residue a detector can
learn. Metadata includes gender (tied to the fundamental range), language,
and proxy perceptual-quality scores so the fairness pipeline has real
columns to group on.
"""

import argparse
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .wavio import write_wav

MU = 255.0
CODEC_BITS = 4
LANGUAGES = ("en", "es", "zh", "de")
F0_RANGE = {"F": (180.0, 280.0), "M": (90.0, 160.0)}


def codec_artifact(wave):
    """Fixed mu-law companding + coarse quantization, the spoof signature."""
    levels = 2 ** CODEC_BITS
    compressed = np.sign(wave) * np.log1p(MU * np.abs(wave)) / np.log1p(MU)
    quantized = np.round(compressed * levels) / levels
    return np.sign(quantized) * (np.expm1(np.abs(quantized) * np.log1p(MU))) / MU


def tone_complex(rng, n, sample_rate, gender):
    """Harmonic partial stack with random amplitudes, phases and noise floor."""
    lo, hi = F0_RANGE[gender]
    f0 = rng.uniform(lo, hi)
    k = int(rng.integers(2, 6))
    t = np.arange(n) / sample_rate
    wave = np.zeros(n)
    for h in range(1, k + 1):
        freq = f0 * h * rng.uniform(0.995, 1.005)
        if freq > 0.45 * sample_rate:
            break
        amp = rng.uniform(0.4, 1.0) / h
        wave += amp * np.sin(2.0 * np.pi * freq * t + rng.uniform(0.0, 2.0 * np.pi))
    wave /= max(1e-9, np.max(np.abs(wave)))
    noise_level = rng.uniform(0.001, 0.01)
    wave = 0.8 * wave + rng.normal(0.0, noise_level, n)
    return wave, noise_level


def generate_corpus(
    root,
    n_utts=2000,
    seed=0,
    sample_rate=16000,
    duration_range=(0.6, 1.2),
    table_format="parquet",
    splits=(0.7, 0.15, 0.15),
):
    """Write WAVs plus train/valid/test metadata tables under ``root``.

    Returns a manifest dict with the table paths. Generation is fully
    deterministic for a given seed.
    """
    root = Path(root)
    wav_dir = root / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([int(seed), 0xC0])

    rows = []
    for i in range(n_utts):
        label = "bonafide" if i % 2 == 0 else "spoof"
        gender = "F" if rng.random() < 0.5 else "M"
        language = LANGUAGES[int(rng.integers(0, len(LANGUAGES)))]
        n = int(rng.uniform(*duration_range) * sample_rate)
        wave, noise_level = tone_complex(rng, n, sample_rate, gender)
        if label == "spoof":
            wave = codec_artifact(wave)
        utt_id = f"synth_{i:05d}"
        path = wav_dir / f"{utt_id}.wav"
        write_wav(path, wave, sample_rate)
        degradation = 60.0 * noise_level + (1.1 if label == "spoof" else 0.0)
        pesq = float(np.clip(4.4 - degradation + rng.normal(0.0, 0.15), 1.0, 4.5))
        nisqa = float(np.clip(4.8 - degradation + rng.normal(0.0, 0.2), 1.0, 5.0))
        rows.append(
            {
                "utt_id": utt_id,
                "audio_path": str(path),
                "label": label,
                "gender": gender,
                "language": language,
                "pesq": round(pesq, 3),
                "nisqa_mos": round(nisqa, 3),
            }
        )

    tables = _write_splits(root, rows, splits, table_format, rng)
    manifest = {
        "root": str(root),
        "n_utts": n_utts,
        "sample_rate": sample_rate,
        "seed": seed,
        "tables": tables,
    }
    (root / "corpus.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def _write_splits(root, rows, splits, table_format, rng):
    # stratified by label so every split keeps both classes
    bona = [r for r in rows if r["label"] == "bonafide"]
    spoof = [r for r in rows if r["label"] == "spoof"]
    rng.shuffle(bona)
    rng.shuffle(spoof)
    names = ("train", "valid", "test")
    tables = {}
    cuts = np.cumsum(splits)[:2]
    for part in (bona, spoof):
        n = len(part)
        edges = [0, int(cuts[0] * n), int(cuts[1] * n), n]
        for s, name in enumerate(names):
            tables.setdefault(name, []).extend(part[edges[s] : edges[s + 1]])
    out = {}
    suffix = "parquet" if table_format == "parquet" else "csv"
    for name in names:
        split_rows = sorted(tables[name], key=lambda r: r["utt_id"])
        frame = pd.DataFrame(split_rows)
        path = root / f"{name}.{suffix}"
        if suffix == "parquet":
            frame.to_parquet(path, index=False)
        else:
            frame.to_csv(path, index=False)
        out[name] = str(path)
    return out


def make_demo_config(manifest, out_dir, **training_overrides):
    """A ready-to-train experiment config dict for a generated corpus."""
    training = {"optimizer": "adam", "lr": 1e-3, "max_epochs": 3,
                "val_interval": "epoch", "patience": 5}
    training.update(training_overrides)
    return {
        "exp_name": "synthetic_demo",
        "output_dir": str(out_dir),
        "seed": 42,
        "data": {
            "train": {
                "dataset": {"type": "table", "params": {"path": manifest["tables"]["train"]}},
                "transform": {"sample_rate": manifest["sample_rate"], "duration_s": 1.0},
                "loader": {"batch_size": 32, "shuffle": True},
            },
            "valid": {
                "dataset": {"type": "table", "params": {"path": manifest["tables"]["valid"]}},
                "transform": {"sample_rate": manifest["sample_rate"], "duration_s": 1.0},
                "loader": {"batch_size": 64},
            },
            "test": {
                "dataset": {"type": "table", "params": {"path": manifest["tables"]["test"]}},
                "transform": {"sample_rate": manifest["sample_rate"], "duration_s": 1.0},
                "loader": {"batch_size": 64},
            },
        },
        "model": {
            "frontend": {"type": "reference", "mode": "finetune", "aggregation": "weighted_sum"},
            "backend": {"type": "mlp", "params": {"hidden": [64, 32]}},
            "loss": {"type": "ce"},
        },
        "training": training,
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description="Generate the synthetic demo corpus.")
    parser.add_argument("root", help="output directory for WAVs and tables")
    parser.add_argument("--n-utts", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--format", choices=("parquet", "csv"), default="parquet")
    args = parser.parse_args(argv)
    manifest = generate_corpus(
        args.root, n_utts=args.n_utts, seed=args.seed, table_format=args.format
    )
    import yaml

    cfg = make_demo_config(manifest, Path(args.root) / "outputs")
    cfg_path = Path(args.root) / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    print(f"corpus at {args.root}; demo config: {cfg_path}")


if __name__ == "__main__":
    main()
