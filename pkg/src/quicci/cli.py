"""Command-line interface.

Every subcommand accepts ``--seed``, ``--threads`` and ``--config``.  The
config file holds ``key = value`` lines whose keys mirror the long flag names
(``leaf-threshold = 128`` or ``leaf_threshold = 128``); flags given on the
command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

MESH_SUFFIXES = (".obj", ".ply")


class CliError(Exception):
    pass


def log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# --------------------------------------------------------------------------
# config handling


def read_config_file(path) -> dict[str, str]:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise CliError(f"not a boolean: {text!r}")


def apply_config(parser: argparse.ArgumentParser, argv: list[str], values: dict[str, str]) -> argparse.Namespace:
    """Install file values as defaults on ``parser`` and re-parse ``argv``."""
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in values.items():
        if key == "config":
            continue
        action = actions.get(key)
        if action is None:
            raise CliError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = _parse_bool(raw)
        elif action.nargs in ("+", "*"):
            conv = action.type or str
            defaults[key] = [conv(x) for x in raw.replace(",", " ").split()]
        else:
            conv = action.type or str
            try:
                defaults[key] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise CliError(f"config key {key!r}: {exc}") from exc
    parser.set_defaults(**defaults)
    return parser.parse_args(argv)


def resolve_threads(value: int | None) -> int:
    if value is None:
        env = os.environ.get("QUICCI_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError as exc:
                raise CliError(f"QUICCI_THREADS must be an integer, got {env!r}") from exc
        else:
            value = os.cpu_count() or 1
    if value < 1:
        raise CliError("thread count must be >= 1")
    return value


def resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def echo(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if not k.startswith("_") and k != "handler"}


# --------------------------------------------------------------------------
# helpers


def mesh_paths(items) -> list[Path]:
    paths = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            found = sorted(q for q in p.iterdir() if q.suffix.lower() in MESH_SUFFIXES)
            if not found:
                raise CliError(f"no .obj or .ply meshes in {p}")
            paths += found
        elif p.is_file():
            paths.append(p)
        else:
            raise CliError(f"no such file or directory: {p}")
    return paths


def dataset_paths(directory) -> list[Path]:
    if directory is None:
        raise CliError("--dataset is required")
    p = Path(directory)
    if not p.is_dir():
        raise CliError(f"dataset directory not found: {p}")
    return mesh_paths([p])


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def progress_printer(label: str):
    def report(done, total):
        log(f"{label}: {done}/{total}")
    return report


# --------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    from .descriptor import serialize_descriptor_set
    from .generate import describe_files
    from .intersection import DescriptorConfig

    paths = mesh_paths(args.meshes)
    config = DescriptorConfig.for_image(args.width, args.height, args.support_radius)
    start = time.perf_counter()
    dset = describe_files(paths, config, fit=args.fit)
    atomic_write(Path(args.output), serialize_descriptor_set(dset))
    log(f"wrote {len(dset)} descriptors ({args.width}x{args.height}) from {len(paths)} meshes "
        f"to {args.output} in {time.perf_counter() - start:.2f}s")
    return 0


def _load_sets(paths):
    from .descriptor import DescriptorSet, load_descriptor_set

    sets = [load_descriptor_set(p) for p in paths]
    if not sets:
        raise CliError("no descriptor files given")
    shape = (sets[0].width, sets[0].height)
    for p, s in zip(paths, sets):
        if (s.width, s.height) != shape:
            raise CliError(f"{p}: image size {s.width}x{s.height} differs from {shape[0]}x{shape[1]}")
    prov = []
    for s in sets:
        if s.provenance is None:
            prov.append(np.column_stack([np.zeros(len(s), np.uint32), np.arange(len(s), dtype=np.uint32)]))
        else:
            prov.append(s.provenance)
    return DescriptorSet(shape[0], shape[1], np.vstack([s.words for s in sets]), np.vstack(prov))


def cmd_index_build(args) -> int:
    from .hamming_tree import HammingTree, TreeConfig, save_tree

    dset = _load_sets(args.inputs)
    config = TreeConfig(dset.width * dset.height, args.chunk_bits, args.leaf_threshold)
    tree = HammingTree(config, (dset.width, dset.height))
    start = time.perf_counter()
    tree.insert_many(dset.words, dset.provenance)
    log(f"inserted {len(tree)} images in {time.perf_counter() - start:.2f}s")
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        save_tree(tree, staging, args.codec)
        if out.exists():
            shutil.rmtree(out)
        staging.rename(out)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    log(f"index written to {out}")
    return 0


def cmd_index_query(args) -> int:
    from .descriptor import load_descriptor_set
    from .hamming_tree import load_tree

    tree = load_tree(args.index)
    needles = load_descriptor_set(args.needles)
    if not 0 <= args.needle_index < len(needles):
        raise CliError(f"needle index {args.needle_index} out of range (file holds {len(needles)})")
    needle = needles[args.needle_index]
    results, stats = tree.search(needle, args.k, args.max_distance)
    log(f"visited {stats.nodes_visited} nodes, scanned {stats.entries_scanned} of {len(tree)} entries")
    rows = [[rank, r.distance, r.provenance.object_id, r.provenance.vertex_index]
            for rank, r in enumerate(results)]
    header = ["rank", "distance", "object_id", "vertex_index"]
    if args.output:
        path = Path(args.output)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent if str(path.parent) else ".")
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        os.replace(tmp, path)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(rows)
    return 0


def cmd_index_stats(args) -> int:
    from .hamming_tree import load_tree, tree_stats

    tree = load_tree(args.index)
    stats = tree_stats(tree)
    stats["string_bits"] = tree.config.string_bits
    stats["chunk_bits"] = tree.config.chunk_bits
    stats["leaf_split_threshold"] = tree.config.leaf_split_threshold
    json.dump(stats, sys.stdout, indent=2, sort_keys=True, default=str)
    sys.stdout.write("\n")
    return 0


def cmd_corpus(args) -> int:
    from .experiments.corpus import write_toy_corpus

    paths = write_toy_corpus(args.output, args.count, args.seed)
    log(f"wrote {len(paths)} meshes to {args.output}")
    return 0


def cmd_clutterbox(args) -> int:
    from .experiments.clutterbox import ClutterboxRunConfig, run_clutterbox, write_clutterbox
    from .experiments.report import OutputDir

    paths = dataset_paths(args.dataset)
    config = ClutterboxRunConfig(
        cube_edge=args.cube_edge, object_counts=tuple(args.object_counts), support_radius=args.support_radius,
        width=args.width, height=args.height, seed=args.seed, dataset=paths, runs=args.runs,
        rank_cap=args.rank_cap, identity_placement=args.identity_placement, heatmap_count=args.heatmap_count,
        heatmap_fraction_bins=args.fraction_bins, clutter_samples=args.clutter_samples, threads=args.threads)
    if len(paths) < config.object_counts[-1]:
        raise CliError(f"dataset has {len(paths)} meshes, need at least {config.object_counts[-1]}")
    from .mesh import load_mesh
    meshes = [load_mesh(p) for p in paths]
    with OutputDir(args.output) as out:
        result = run_clutterbox(config, meshes, progress=progress_printer("clutterbox run"))
        write_clutterbox(result, out)
        for h in result.histograms:
            log(f"n={h.object_count}: {h.total_queries} queries, rank 0 {h.top_fraction:.3f}, mean rank {h.mean_rank:.3f}")
        out.write_manifest("clutterbox", config.echo(), args.seed)
    return 0


def cmd_distance_study(args) -> int:
    from .experiments.distance_study import DistanceStudyConfig, run_distance_study, write_distance_study
    from .experiments.report import OutputDir
    from .mesh import load_mesh

    paths = dataset_paths(args.dataset)
    config = DistanceStudyConfig(
        width=args.width, height=args.height, support_radius=args.support_radius, sphere_radius=args.sphere_radius,
        sphere_step=args.sphere_step, sphere_max=args.sphere_max, object_count=args.objects,
        pair_count=args.pairs, seed=args.seed, dataset=paths)
    meshes = [load_mesh(p) for p in paths]
    with OutputDir(args.output) as out:
        result = run_distance_study(config, meshes, progress=progress_printer("distance study object"))
        write_distance_study(result, out)
        out.write_manifest("distance-study", config.echo(), args.seed, {"objects_used": result.objects_used})
    return 0


def cmd_bench_compare(args) -> int:
    from .experiments.bench import bench_comparison_rate, random_images
    from .experiments.report import OutputDir

    rng = np.random.default_rng(args.seed)
    total = args.width * args.height
    images = random_images(args.images, total, rng, args.density)
    rows = []
    with OutputDir(args.output) as out:
        for function in args.functions:
            rate = bench_comparison_rate(images, function, args.duration, total)
            log(f"{function}: {rate / 1e6:.2f}M comparisons/s")
            rows.append([function, args.images, total, f"{args.duration:.3f}", f"{rate:.1f}"])
        out.write_csv("comparison_rates.csv", ["function", "images", "bits", "duration_s", "pairs_per_second"], rows)
        out.write_manifest("bench-compare", echo(args), args.seed)
    return 0


def cmd_bench_generate(args) -> int:
    from .experiments.bench import bench_generation_rate, sphere_scene
    from .experiments.report import OutputDir
    from .intersection import DescriptorConfig

    config = DescriptorConfig.for_image(args.width, args.height, args.support_radius)
    scenes = [sphere_scene(s) for s in args.subdivisions]
    with OutputDir(args.output) as out:
        rows = bench_generation_rate(scenes, config, args.repeats)
        for r in rows:
            log(f"{r['triangles']} triangles: {r['rate']:.1f} descriptors/s")
        out.write_csv("generation_rates.csv", ["triangles", "descriptors", "seconds", "descriptors_per_second"],
                      [[r["triangles"], r["descriptors"], f"{r['seconds']:.6f}", f"{r['rate']:.1f}"] for r in rows])
        out.write_manifest("bench-generate", echo(args), args.seed)
    return 0


def cmd_runindex_study(args) -> int:
    from .experiments.report import OutputDir
    from .experiments.runindex_study import mixed_corpus, run_runindex_study, write_runindex_study

    rng = np.random.default_rng(args.seed)
    dset = mixed_corpus(args.images, args.width, args.height, rng)
    with OutputDir(args.output) as out:
        rows, summary = run_runindex_study(dset, args.densities, args.needles, args.k, rng)
        for r in rows:
            log(f"{r.needle_bits} needle bits: candidate fraction {r.mean_candidate_fraction:.3f}, "
                f"{r.exact_matches}/{r.queries} exact")
        write_runindex_study(rows, summary, out)
        out.write_manifest("runindex-study", echo(args), args.seed)
    return 0


# --------------------------------------------------------------------------
# parser


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (random and printed if omitted)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $QUICCI_THREADS or all cores)")
    common.add_argument("--config", default=None, help="key = value file; flags override it")

    image = argparse.ArgumentParser(add_help=False)
    image.add_argument("--width", type=int, default=64)
    image.add_argument("--height", type=int, default=64)
    image.add_argument("--support-radius", type=float, default=0.3)

    parser = argparse.ArgumentParser(prog="quicci", description="QUICCI descriptors and Hamming Tree retrieval")
    sub = parser.add_subparsers(dest="command", required=True)

    def leaf(group, name, handler, parents=(), **kw):
        p = group.add_parser(name, parents=[common, *parents], **kw)
        p.set_defaults(handler=handler, _parser=p)
        return p

    p = leaf(sub, "generate", cmd_generate, [image], help="describe every unique vertex of the given meshes")
    p.add_argument("meshes", nargs="+", help="mesh files or directories")
    p.add_argument("-o", "--output", required=True, help="output .qdf file")
    p.add_argument("--no-fit", dest="fit", action="store_false", help="skip unit-sphere normalisation")

    index = sub.add_parser("index", help="build, query or inspect a Hamming Tree")
    isub = index.add_subparsers(dest="index_command", required=True)
    p = leaf(isub, "build", cmd_index_build)
    p.add_argument("inputs", nargs="+", help=".qdf descriptor files")
    p.add_argument("-o", "--output", required=True, help="index directory")
    p.add_argument("--chunk-bits", type=int, default=128)
    p.add_argument("--leaf-threshold", type=int, default=256)
    p.add_argument("--codec", choices=["none", "zlib", "lzma"], default="zlib")
    p = leaf(isub, "query", cmd_index_query)
    p.add_argument("index", help="index directory")
    p.add_argument("--needles", required=True, help=".qdf file holding the needle")
    p.add_argument("--needle-index", type=int, default=0)
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--max-distance", type=int, default=None)
    p.add_argument("-o", "--output", default=None, help="CSV file (default: standard output)")
    p = leaf(isub, "stats", cmd_index_stats)
    p.add_argument("index", help="index directory")

    p = leaf(sub, "corpus", cmd_corpus, help="write a procedural toy mesh corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--count", type=int, default=50)

    exp = sub.add_parser("experiment", help="run an experiment")
    esub = exp.add_subparsers(dest="experiment", required=True)

    p = leaf(esub, "clutterbox", cmd_clutterbox, [image])
    p.set_defaults(width=63)
    p.add_argument("--dataset", help="directory of meshes")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--object-counts", type=_int_list, default=[1, 5, 10], help="e.g. 1,5,10")
    p.add_argument("--cube-edge", type=float, default=3.0)
    p.add_argument("--rank-cap", type=int, default=4096)
    p.add_argument("--identity-placement", action="store_true")
    p.add_argument("--heatmap-count", type=int, default=None, help="object count the heatmap is taken at")
    p.add_argument("--fraction-bins", type=int, default=20)
    p.add_argument("--clutter-samples", type=int, default=10_000)

    p = leaf(esub, "distance-study", cmd_distance_study, [image])
    p.add_argument("--dataset", help="directory of meshes")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--objects", type=int, default=100)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--sphere-radius", type=float, default=0.05)
    p.add_argument("--sphere-step", type=int, default=10)
    p.add_argument("--sphere-max", type=int, default=500)

    p = leaf(esub, "bench-compare", cmd_bench_compare, [image])
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--images", type=int, default=100_000)
    p.add_argument("--density", type=float, default=0.15)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--functions", type=lambda s: s.replace(",", " ").split(),
                   default=["hamming", "clutter", "weighted"])

    p = leaf(esub, "bench-generate", cmd_bench_generate, [image])
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--subdivisions", type=_int_list, default=[1, 2, 3, 4, 5])
    p.add_argument("--repeats", type=int, default=3)

    p = leaf(esub, "runindex-study", cmd_runindex_study, [image])
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--images", type=int, default=10_000)
    p.add_argument("--needles", type=int, default=20)
    p.add_argument("--densities", type=_int_list, default=[8, 32, 256, 1024])
    p.add_argument("--k", type=int, default=32)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            path = {k: getattr(args, k) for k in ("command", "index_command", "experiment") if hasattr(args, k)}
            args = apply_config(args._parser, argv[_leaf_offset(argv, args):], read_config_file(args.config))
            for k, v in path.items():
                setattr(args, k, v)
        args.threads = resolve_threads(args.threads)
        args.seed = resolve_seed(args.seed)
        log("config: " + json.dumps(echo(args), sort_keys=True, default=str))
        log(f"seed: {args.seed}")
        return args.handler(args)
    except CliError as exc:
        log(f"error: {exc}")
    except (OSError, ValueError, KeyError) as exc:
        log(f"error: {exc}")
    return 1


def _leaf_offset(argv: list[str], args) -> int:
    """Number of leading subcommand words in ``argv``."""
    words = [args.command]
    for attr in ("index_command", "experiment"):
        if getattr(args, attr, None):
            words.append(getattr(args, attr))
    i = 0
    for w in words:
        i = argv.index(w, i) + 1
    return i


if __name__ == "__main__":
    sys.exit(main())
