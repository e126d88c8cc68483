"""Command-line entry points: map, eval, transfer, synth.

Exit codes: 0 success, 2 input or validation error, 3 pipeline degeneracy
(an artifact is still written, using the documented fallback), 4 unreachable
path planning.  All outputs are deterministic for fixed inputs and seed; the
SA_THREADS environment variable only changes how work is scheduled, never
what is produced.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, config_from_dict
from .evaluation import evaluate_map, report_table, report_to_dict
from .scene_model import (
    SceneBundle,
    SceneFormatError,
    SceneValidationError,
    load_scene,
    make_object,
    save_scene,
)
from .testkit import (
    BoxTemplate,
    GroupMove,
    SynthSpec,
    gen_pair,
    random_spec,
    rotation_about_z,
    yaw_pose,
)
from .tps_map import build_scene_map, load_scene_map, save_scene_map
from .transfer import (
    NoPathError,
    build_occupancy,
    load_trajectory,
    transfer_long,
    transfer_short,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_UNREACHABLE = 4


class _CliError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def _fail(status: int, message: str) -> _CliError:
    return _CliError(status, message)


def _set_dotted(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise _fail(EXIT_INPUT, f"override path '{dotted}' crosses a non-object")
    node[keys[-1]] = value


def _load_config(config_path: str | None, overrides: list[str] | None) -> PipelineConfig:
    doc: dict = {}
    if config_path is not None:
        try:
            doc = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise _fail(EXIT_INPUT, f"config {config_path}: {exc}")
    for item in overrides or []:
        if "=" not in item:
            raise _fail(EXIT_INPUT, f"override '{item}' must look like key=value")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings allowed
        _set_dotted(doc, key.strip(), value)
    try:
        cfg = config_from_dict(doc)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        # TypeError: an override put a string where a number belongs
        raise _fail(EXIT_INPUT, f"config: {exc}")
    return cfg


def _load_scene_checked(path: str) -> SceneBundle:
    try:
        return load_scene(path)
    except SceneValidationError as exc:
        lines = "\n".join(str(d) for d in exc.diagnostics)
        raise _fail(EXIT_INPUT, f"{path}: invalid scene\n{lines}")
    except (SceneFormatError, OSError, json.JSONDecodeError) as exc:
        raise _fail(EXIT_INPUT, f"{path}: {exc}")


def cmd_map(
    target_path: str,
    reference_path: str,
    config_path: str | None,
    out_path: str,
    overrides: list[str] | None = None,
) -> int:
    cfg = _load_config(config_path, overrides)
    scene_tgt = _load_scene_checked(target_path)
    scene_ref = _load_scene_checked(reference_path)

    scene_map = build_scene_map(scene_tgt, scene_ref, cfg)
    save_scene_map(scene_map, out_path)

    prov = scene_map.provenance
    stats = prov.displacement_stats
    print(f"matches:        {len(prov.matches)}")
    print(f"clusters:       {len(prov.clusters)}")
    if stats:
        print(f"mean |delta|:   {stats['mean_abs_delta']:.6f} m")
        print(f"cost before:    {stats['cost_before']:.6f}")
        print(f"cost after:     {stats['cost_after']:.6f}")
    for note in prov.diagnostics:
        print(f"warning: {note}", file=sys.stderr)
    print(f"wrote {out_path}")
    if any(note.startswith("TPS degenerate") for note in prov.diagnostics):
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_eval(
    map_path: str,
    target_path: str,
    reference_path: str,
    config_path: str | None,
    out_path: str | None = None,
    overrides: list[str] | None = None,
) -> int:
    cfg = _load_config(config_path, overrides)
    try:
        scene_map = load_scene_map(map_path)
    except (OSError, ValueError, KeyError) as exc:
        raise _fail(EXIT_INPUT, f"{map_path}: {exc}")
    scene_tgt = _load_scene_checked(target_path)
    scene_ref = _load_scene_checked(reference_path)

    report = evaluate_map(scene_map, scene_tgt, scene_ref, cfg.eval_thresholds)
    print(report_table(report))
    doc = report_to_dict(report)
    doc["config"] = cfg.to_dict()
    doc["map_path"] = str(map_path)
    out = out_path or str(Path(map_path).with_suffix(".eval.json"))
    Path(out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_transfer(
    map_path: str,
    trajectory_path: str,
    reference_path: str,
    mode: str,
    config_path: str | None,
    out_path: str,
    overrides: list[str] | None = None,
) -> int:
    if mode not in ("short", "long"):
        raise _fail(EXIT_INPUT, f"mode must be 'short' or 'long', got '{mode}'")
    cfg = _load_config(config_path, overrides)
    try:
        scene_map = load_scene_map(map_path)
        trajectory = load_trajectory(trajectory_path)
    except (OSError, ValueError, KeyError) as exc:
        raise _fail(EXIT_INPUT, str(exc))

    if mode == "short":
        result = transfer_short(trajectory, scene_map)
        costs: list[float] = []
    else:
        scene_ref = _load_scene_checked(reference_path)
        grid = build_occupancy(
            scene_ref,
            resolution=cfg.grid_resolution,
            inflation=cfg.grid_inflation,
            margin=cfg.grid_margin,
        )
        try:
            long_result = transfer_long(
                trajectory, scene_map, grid, stride=cfg.waypoint_stride
            )
        except NoPathError as exc:
            raise _fail(EXIT_UNREACHABLE, f"planning failed: {exc}")
        result = long_result.trajectory
        costs = list(long_result.segment_costs)

    doc = {
        "frame_id": result.frame_id,
        "points": [[float(v) for v in p] for p in result.points],
        "config": cfg.to_dict(),
    }
    if costs:
        doc["segment_costs"] = costs
    Path(out_path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    print(f"{mode} transfer: {len(result.points)} points")
    print(f"wrote {out_path}")
    return EXIT_OK


def _parse_synth_spec(doc: dict) -> tuple[int, dict]:
    if not isinstance(doc, dict):
        raise _fail(EXIT_INPUT, "synthesis description must be a JSON object")
    known = {
        "seed",
        "name",
        "object_count",
        "spacing",
        "feature_dim",
        "embedding_dim",
        "objects",
        "groups",
    }
    for key in doc:
        if key not in known:
            raise _fail(EXIT_INPUT, f"unknown synthesis key '{key}'")
    return int(doc.get("seed", 0)), doc


def cmd_synth(spec_path: str, out_dir: str) -> int:
    """Generate a target/reference bundle pair plus the exact per-group
    transforms that relate them (reference = target with groups moved)."""
    try:
        doc = json.loads(Path(spec_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise _fail(EXIT_INPUT, f"{spec_path}: {exc}")
    seed, doc = _parse_synth_spec(doc)
    name = str(doc.get("name", f"synth_{seed:04d}"))
    spacing = float(doc.get("spacing", 0.05))
    feature_dim = int(doc.get("feature_dim", 16))
    embedding_dim = int(doc.get("embedding_dim", 32))

    if "objects" in doc:
        try:
            templates = tuple(
                BoxTemplate(
                    label=str(o["label"]),
                    extents=tuple(float(v) for v in o.get("size", (0.4, 0.4, 0.4))),
                )
                for o in doc["objects"]
            )
            layout = tuple(
                (
                    i,
                    yaw_pose(
                        float(o.get("yaw", 0.0)),
                        [float(v) for v in o["center"]],
                    ),
                )
                for i, o in enumerate(doc["objects"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise _fail(EXIT_INPUT, f"bad object entry: {exc}")
        spec = SynthSpec(
            seed=seed,
            templates=templates,
            layout=layout,
            feature_dim=feature_dim,
            embedding_dim=embedding_dim,
            spacing=spacing,
        )
    else:
        spec = random_spec(
            seed,
            count=int(doc.get("object_count", 4)),
            spacing=spacing,
            feature_dim=feature_dim,
            embedding_dim=embedding_dim,
        )

    centers = np.stack([pose.translation for _i, pose in spec.layout])
    group_docs = doc.get("groups")
    if group_docs is None:
        rng = np.random.default_rng(np.random.SeedSequence((seed, 11)))
        group_docs = [
            {
                "objects": list(range(len(spec.layout))),
                "yaw": float(rng.uniform(-np.pi / 4, np.pi / 4)),
                "translation": [float(v) for v in rng.uniform(-2.0, 2.0, size=3)],
            }
        ]
    moves: list[GroupMove] = []
    for gdoc in group_docs:
        idxs = [int(i) for i in gdoc.get("objects", [])]
        if any(i < 0 or i >= len(spec.layout) for i in idxs):
            raise _fail(EXIT_INPUT, f"group object index out of range: {idxs}")
        # Yaw spins the group about its own center, then the translation
        # applies; b absorbs the recentring so the move is a plain (A, b).
        rot = rotation_about_z(float(gdoc.get("yaw", 0.0)))
        shift = np.asarray(gdoc.get("translation", [0.0, 0.0, 0.0]), dtype=np.float64)
        center = centers[idxs].mean(axis=0) if idxs else np.zeros(3)
        moves.append(
            GroupMove(indices=tuple(idxs), A=rot, b=center - rot @ center + shift)
        )
    try:
        target, reference, oracle = gen_pair(spec, moves)
    except ValueError as exc:
        raise _fail(EXIT_INPUT, str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tgt_named = SceneBundle(
        scene_id=f"{name}_tgt",
        feature_dim=target.feature_dim,
        embedding_dim=target.embedding_dim,
        objects=target.objects,
    )
    ref_named = SceneBundle(
        scene_id=f"{name}_ref",
        feature_dim=reference.feature_dim,
        embedding_dim=reference.embedding_dim,
        objects=reference.objects,
    )
    save_scene(tgt_named, out / "target.json")
    save_scene(ref_named, out / "reference.json")
    oracle_doc = {
        "seed": seed,
        "groups": [
            {
                "layout_indices": list(m.indices),
                "object_ids": [
                    oid
                    for oid, g in oracle.object_group.items()
                    if g == move_idx
                ],
                "A": m.A.tolist(),
                "b": m.b.tolist(),
                "kind": m.kind,
            }
            for move_idx, m in enumerate(oracle.moves)
        ],
    }
    (out / "oracle.json").write_text(json.dumps(oracle_doc, sort_keys=True, indent=2) + "\n")
    print(f"wrote {out / 'target.json'}")
    print(f"wrote {out / 'reference.json'}")
    print(f"wrote {out / 'oracle.json'}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scene-analogy",
        description="Estimate and use dense maps between 3D scenes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_map = sub.add_parser("map", help="estimate a scene map")
    p_map.add_argument("--target", required=True)
    p_map.add_argument("--reference", required=True)
    p_map.add_argument("--config")
    p_map.add_argument("--out", required=True)
    p_map.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")

    p_eval = sub.add_parser("eval", help="score a scene map")
    p_eval.add_argument("--map", required=True, dest="map_path")
    p_eval.add_argument("--target", required=True)
    p_eval.add_argument("--reference", required=True)
    p_eval.add_argument("--config")
    p_eval.add_argument("--out")
    p_eval.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")

    p_tr = sub.add_parser("transfer", help="transfer a trajectory through a map")
    p_tr.add_argument("--map", required=True, dest="map_path")
    p_tr.add_argument("--trajectory", required=True)
    p_tr.add_argument("--reference", required=True)
    p_tr.add_argument("--mode", choices=("short", "long"), default="short")
    p_tr.add_argument("--config")
    p_tr.add_argument("--out", required=True)
    p_tr.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")

    p_sy = sub.add_parser("synth", help="generate a synthetic scene pair")
    p_sy.add_argument("--spec", required=True)
    p_sy.add_argument("--out-dir", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "map":
            return cmd_map(args.target, args.reference, args.config, args.out, args.override)
        if args.command == "eval":
            return cmd_eval(
                args.map_path, args.target, args.reference, args.config, args.out, args.override
            )
        if args.command == "transfer":
            return cmd_transfer(
                args.map_path,
                args.trajectory,
                args.reference,
                args.mode,
                args.config,
                args.out,
                args.override,
            )
        if args.command == "synth":
            return cmd_synth(args.spec, args.out_dir)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.status
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
