"""Command-line interface.

Subcommands: synth-dataset, train, swap, perturb, split, evaluate, scenario,
serve. Loss weights, optimizer settings, and ablation flags can be supplied
in a YAML config file and overridden per flag.
"""

from __future__ import annotations

import json
import os

import click
import yaml

from . import bench, media, perturb
from .media import DatasetManifest, ManifestEntry, load_clip, read_manifest, write_clip, write_manifest
from .synth import synth_clip, synth_identities
from .train import (
    AblationFlags,
    LossWeights,
    OptimizerConfig,
    TrainResult,
    swap as run_swap,
    train as run_train,
)
from .vae import load_bundle, save_bundle


def _load_config(path):
    if not path:
        return {}
    with open(path) as fh:
        return yaml.safe_load(fh) or {}


def _clips_for(manifest: DatasetManifest, root: str) -> dict:
    return {e.clip_id: load_clip(os.path.join(root, e.clip_id)) for e in manifest.entries}


@click.group()
def main():
    """Face-swap generation, perturbation, and forgery-detection benchmark."""


@main.command("synth-dataset")
@click.option("--out", required=True, type=click.Path())
@click.option("--identities", "n_identities", default=4, show_default=True)
@click.option("--clips-per-identity", default=2, show_default=True)
@click.option("--frames", default=16, show_default=True)
@click.option("--size", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
def synth_dataset_cmd(out, n_identities, clips_per_identity, frames, size, seed):
    """Render a synthetic face corpus plus an identity-grouped manifest."""
    os.makedirs(out, exist_ok=True)
    idents = synth_identities(n_identities, seed)
    assignment = bench.split_by_identity(idents, seed=seed)
    entries = []
    for i, (tag, ident) in enumerate(sorted(idents.items())):
        for j in range(clips_per_identity):
            clip = synth_clip(ident, clip_id=f"{tag}_clip{j}", identity_tag=tag,
                              n_frames=frames, size=size,
                              seed=seed * 1_000_003 + i * 101 + j)
            write_clip(clip, os.path.join(out, clip.clip_id))
            entries.append(ManifestEntry(clip_id=clip.clip_id, identity=tag,
                                         label="real", split=assignment[tag]))
    write_manifest(DatasetManifest(entries=tuple(entries), seed=seed),
                   os.path.join(out, "manifest.jsonl"))
    click.echo(f"wrote {len(entries)} clips to {out}")


@main.command("train")
@click.option("--data", required=True, type=click.Path(exists=True),
              help="Dataset root containing manifest.jsonl and clip directories.")
@click.option("--out", required=True, type=click.Path(), help="Checkpoint archive path.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--steps", default=None, type=int)
@click.option("--seed", default=None, type=int)
def train_cmd(data, out, config_path, steps, seed):
    """Train the disentangled face-swap model on a manifest of clips."""
    cfg = _load_config(config_path)
    opt_kwargs = dict(cfg.get("optimizer", {}))
    if steps is not None:
        opt_kwargs["steps"] = steps
    if seed is not None:
        opt_kwargs["seed"] = seed
    manifest = read_manifest(os.path.join(data, "manifest.jsonl"))
    clips = list(_clips_for(manifest, data).values())
    result = run_train(
        clips,
        config=OptimizerConfig(**opt_kwargs),
        weights=LossWeights(**cfg.get("weights", {})),
        flags=AblationFlags(**cfg.get("ablation", {})),
    )
    save_bundle(result.bundle, out)
    final = result.history[-1]["total"] if result.history else float("nan")
    click.echo(f"trained {len(result.history)} steps, final total loss {final:.4f}")


@main.command("swap")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--source-id", required=True)
@click.option("--target-clip", required=True, help="clip_id of the driving clip")
@click.option("--out", required=True, type=click.Path())
@click.option("--steps", default=300, show_default=True, help="training steps (desk-scale model)")
@click.option("--seed", default=0, show_default=True)
def swap_cmd(data, source_id, target_clip, out, steps, seed):
    """Train at desk scale, then swap the source identity onto the target clip."""
    manifest = read_manifest(os.path.join(data, "manifest.jsonl"))
    clips = _clips_for(manifest, data)
    result = run_train(list(clips.values()), config=OptimizerConfig(steps=steps, seed=seed))
    swapped = run_swap(source_id, clips[target_clip], result)
    write_clip(swapped, out)
    click.echo(f"wrote swapped clip {swapped.clip_id} to {out}")


@main.command("perturb")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["sing", "rand", "mix"]), required=True)
@click.option("--mix-count", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
def perturb_cmd(data, out, mode, mix_count, seed):
    """Build a perturbed dataset variant (std/sing, std/rand, std/mix)."""
    manifest = read_manifest(os.path.join(data, "manifest.jsonl"))
    os.makedirs(out, exist_ok=True)
    variant = perturb.build_variant(
        manifest,
        mode,
        seed,
        load_clip_fn=lambda cid: load_clip(os.path.join(data, cid)),
        write_clip_fn=lambda clip: write_clip(clip, os.path.join(out, clip.clip_id)),
    )
    write_manifest(variant, os.path.join(out, "manifest.jsonl"))
    click.echo(f"wrote {len(variant.entries)} perturbed clips to {out}")


@main.command("split")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
def split_cmd(manifest_path, out, seed):
    """Re-assign identity-grouped 7:1:2 splits on a manifest."""
    manifest = read_manifest(manifest_path)
    assignment = bench.split_by_identity(manifest.identities(), seed=seed)
    entries = tuple(
        ManifestEntry(clip_id=e.clip_id, identity=e.identity, label=e.label,
                      split=assignment.get(e.identity, e.split),
                      distortion_history=e.distortion_history)
        for e in manifest.entries
    )
    write_manifest(DatasetManifest(entries=entries, seed=seed), out)
    click.echo(f"split {len(entries)} entries across "
               f"{len(set(assignment.values()))} splits")


@main.command("evaluate")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
def evaluate_cmd(data, threshold, seed):
    """Fit the reference detector on the train split and report test accuracy."""
    manifest = read_manifest(os.path.join(data, "manifest.jsonl"))
    clips = _clips_for(manifest, data)
    detector = bench.ReferenceDetector(seed=seed)
    train_entries = manifest.subset("train")
    detector.fit([clips[e.clip_id] for e in train_entries],
                 [e.label for e in train_entries])
    report = bench.evaluate(detector, manifest, clips, threshold=threshold)
    click.echo(json.dumps({"accuracy": report.accuracy, "n": report.n}))


@main.command("scenario")
@click.option("--train-set", required=True)
@click.option("--test-set", required=True)
@click.option("--variants", "variant_roots", required=True, multiple=True,
              help="name=path pairs, e.g. std=/data/std")
@click.option("--threshold", default=0.5, show_default=True)
def scenario_cmd(train_set, test_set, variant_roots, threshold):
    """Run one train/test scenario with the reference detector."""
    variants = {}
    for spec in variant_roots:
        name, _, root = spec.partition("=")
        manifest = read_manifest(os.path.join(root, "manifest.jsonl"))
        variants[name] = (manifest, _clips_for(manifest, root))
    cfg = bench.ScenarioConfig(train_set=train_set, test_set=test_set)
    report = bench.run_scenario(cfg, bench.ReferenceDetector, variants, threshold=threshold)
    click.echo(json.dumps({"train": train_set, "test": test_set,
                           "accuracy": report.accuracy, "n": report.n}))


@main.command("serve")
@click.option("--vault", "vault_path", required=True, type=click.Path(exists=True),
              help="JSON file of clip_id -> label, kept server-side only.")
@click.option("--ratings-log", default=None, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve_cmd(vault_path, ratings_log, host, port):
    """Serve the hidden-test and rating-study endpoints."""
    import uvicorn

    from .server import RatingStore, create_app

    with open(vault_path) as fh:
        labels = json.load(fh)
    app = create_app(bench.HiddenVault(labels), RatingStore(persist_path=ratings_log))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
