"""Command-line entry point: ``hvindex {gen,extract,binarize,build,query,bench,info}``."""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from pathlib import Path

import numpy as np

from hvindex import formats
from hvindex.bitcode import MAX_WIDTH, substring_width
from hvindex.errors import ConfigurationError, DomainError, HvIndexError
from hvindex.evaluation import (
    ENGINE_ALIASES,
    ENGINES,
    Searcher,
    canonical_engine,
    format_summary,
    miss_vs_penetration,
    run_benchmark,
    write_probe_csv,
    write_summary_csv,
    write_sweep_csv,
)
from hvindex.mih import MihIndex
from hvindex.ordinal import STRIP_SHAPES, FilterBankSpec, default_weights, forward_pofnet
from hvindex.simhash import DEFAULT_BITS, ProjectionBank, binarize_batch
from hvindex.synth import DEFAULT_FLIP_PROB, PRESETS, SynthSpec, generate

log = logging.getLogger("hvindex")

DEFAULT_SEED = 0
DEFAULT_T = 16
ENGINE_CHOICES = list(ENGINES) + list(ENGINE_ALIASES)


class UsageError(HvIndexError):
    pass


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {path}")
    return p


def _writable(path: str) -> Path:
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        raise UsageError(f"output directory does not exist: {parent}")
    if not os.access(parent, os.W_OK):
        raise UsageError(f"output directory is not writable: {parent}")
    return p


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise UsageError(f"output directory is not writable: {p}")
    return p


def parse_sweep(text: str) -> list[int]:
    m = re.fullmatch(r"(\d+):(\d+):(\d+)", text)
    if not m:
        raise UsageError(f"--sweep expects r_min:r_max:step, got {text!r}")
    lo, hi, step = map(int, m.groups())
    if step < 1 or hi < lo:
        raise UsageError(f"--sweep range {text!r} is empty")
    return list(range(lo, hi + 1, step))


# --- commands -------------------------------------------------------------------


def cmd_gen(args) -> int:
    overrides = dict(seed=args.seed, width=args.k, genuine_flip_prob=args.pg, gallery_fraction=args.gallery_fraction)
    if args.preset:
        spec = SynthSpec.from_preset(args.preset, **overrides)
    else:
        if args.classes is None or args.spc is None:
            raise UsageError("gen needs --preset or both --classes and --spc")
        spec = SynthSpec(classes=args.classes, samples_per_class=args.spc, **overrides)
    out = _out_dir(args.out)
    gallery_path = _writable(args.gallery or out / "gallery.hvc")
    probes_path = _writable(args.probes or out / "probes.hvc")

    gallery, probes = generate(spec)
    formats.write_codes(gallery, gallery_path)
    formats.write_codes(probes, probes_path)
    print(f"classes:                    {spec.classes}")
    print(f"code width:                 {spec.width}")
    print(f"genuine flip probability:   {spec.genuine_flip_prob}")
    print(f"gallery codes:              {len(gallery)}  -> {gallery_path}")
    print(f"probe codes:                {len(probes)}  -> {probes_path}")
    print(f"expected genuine distance:  {spec.expected_genuine_distance():.2f}")
    print(f"expected imposter distance: {spec.width / 2:.2f}")
    return 0


_LABEL_RE = re.compile(r"^(\d+)[_\-.]")


def cmd_extract(args) -> int:
    image_dir = Path(args.images)
    if not image_dir.is_dir():
        raise UsageError(f"image directory not found: {args.images}")
    paths = sorted(image_dir.glob("*.pgm"))
    if not paths:
        raise UsageError(f"no .pgm files in {args.images}")
    out = _writable(args.out)
    shape = STRIP_SHAPES[args.strip] if args.strip in STRIP_SHAPES else _parse_shape(args.strip)
    bank = FilterBankSpec(input_shape=shape, seed=args.seed)
    weights = formats.read_weights(_existing(args.weights)) if args.weights else default_weights(bank)
    if [len(w) for w in weights] != bank.filter_counts:
        raise ConfigurationError(
            f"weights file has filter counts {[len(w) for w in weights]}, bank needs {bank.filter_counts}"
        )

    labels = []
    for p in paths:
        m = _LABEL_RE.match(p.name)
        labels.append(int(m.group(1)) if m else None)
    has_labels = all(l is not None for l in labels)
    rows = []
    for p in paths:
        img = formats.read_pgm(p)
        if img.shape != shape:
            raise DomainError(f"{p.name}: strip is {img.shape[0]}x{img.shape[1]}, expected {shape[0]}x{shape[1]}")
        rows.append(forward_pofnet(img.astype(np.float64), bank, weights))
    formats.write_embeddings(np.stack(rows), out, labels if has_labels else None)
    print(f"extracted {len(rows)} embeddings of dim {bank.embedding_dim} -> {out}")
    return 0


def _parse_shape(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)x(\d+)", text or "")
    if not m:
        raise UsageError(f"--strip expects a preset ({', '.join(STRIP_SHAPES)}) or HxW, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def cmd_binarize(args) -> int:
    emb_path = _existing(args.embeddings)
    out = _writable(args.out)
    bank_path = _writable(args.bank or out.with_suffix(".hvp"))
    x, labels = formats.read_embeddings(emb_path)
    if bank_path.exists():
        bank = formats.read_bank(bank_path)
        if bank.input_dim != x.shape[1]:
            raise DomainError(f"bank {bank_path} expects dim {bank.input_dim}, embeddings have dim {x.shape[1]}")
        if args.k is not None and args.k != bank.output_bits:
            raise UsageError(f"--k {args.k} conflicts with existing bank of {bank.output_bits} bits")
        if args.seed is not None and args.seed != bank.seed:
            raise UsageError(f"--seed {args.seed} conflicts with existing bank seed {bank.seed}")
    else:
        k = args.k if args.k is not None else DEFAULT_BITS
        bank = ProjectionBank(x.shape[1], k, args.seed if args.seed is not None else DEFAULT_SEED)
    codes = binarize_batch(bank, x, labels)
    formats.write_codes(codes, out, with_labels=labels is not None)
    if not bank_path.exists():
        formats.write_bank(bank, bank_path)
    print(f"binarized {len(codes)} embeddings to {bank.output_bits}-bit codes -> {out} (bank {bank_path})")
    return 0


def _mih_engine(name: str) -> str:
    engine = canonical_engine(name)
    if not engine.startswith("mih"):
        raise UsageError(f"engine {name!r} has no persistent index; only MIH engines can be built")
    return engine


def cmd_build(args) -> int:
    _mih_engine(args.engine)
    codes = formats.read_codes(_existing(args.gallery))
    out = _writable(args.out)
    substring_width(codes.width, args.t)
    ix = MihIndex.build(codes, args.t)
    formats.write_index(ix, out)
    print(f"built {args.t}-table index over {ix.size} codes of {ix.width} bits ({ix.s}-bit keys) -> {out}")
    return 0


def cmd_query(args) -> int:
    engine = canonical_engine(args.engine)
    probes = formats.read_codes(_existing(args.probes))
    if args.index:
        if not engine.startswith("mih"):
            raise UsageError("--index can only be queried with an MIH engine")
        ix = formats.read_index(_existing(args.index))
        gallery = ix.codeset()
    elif args.gallery:
        gallery = formats.read_codes(_existing(args.gallery))
        ix = None
    else:
        raise UsageError("query needs --index or --gallery")
    if probes.width != gallery.width:
        raise DomainError(f"probe width {probes.width} does not match gallery width {gallery.width}")
    if not 0 <= args.r <= gallery.width:
        raise UsageError(f"--r must lie in 0..{gallery.width}")

    searcher = None if ix is not None else Searcher(gallery, engine, args.t)
    out = sys.stdout
    out.write("probe\tid\tlabel\tdistance\n")
    for j, q in enumerate(probes):
        if ix is not None and engine == "mih":
            ids = sorted(ix.query_rneighbors(q, args.r)[0])
        elif ix is not None:
            best, _ = ix.query_optimized(q, args.r)
            ids = [] if best is None else [best]
        else:
            ids, _ = searcher.search(q, args.r)
            ids = sorted(ids)
            if engine in ("mih_optimized", "mih_mcom") and ids:
                ids = [min(ids, key=lambda i: ((gallery[i].value ^ q.value).bit_count(), i))]
        rows = sorted(((gallery[i].value ^ q.value).bit_count(), i) for i in ids)
        for d, i in rows:
            out.write(f"{j}\t{i}\t{gallery.labels[i]}\t{d}\n")
    return 0


def cmd_bench(args) -> int:
    gallery = formats.read_codes(_existing(args.gallery))
    probes = formats.read_codes(_existing(args.probes))
    engines = [canonical_engine(e) for e in (args.engine or ["linear", "balltree", "mih", "mih_optimized"])]
    if gallery.width != probes.width:
        raise DomainError(f"probe width {probes.width} does not match gallery width {gallery.width}")
    if any(e.startswith("mih") for e in engines):
        substring_width(gallery.width, args.t)
    radii = parse_sweep(args.sweep) if args.sweep else [args.r]
    if args.sweep and len(radii) < 2:
        raise UsageError("--sweep must cover at least two radii")
    if max(radii) > gallery.width:
        raise UsageError(f"radius exceeds code width {gallery.width}")
    out = _out_dir(args.out)
    threads = args.threads or os.cpu_count() or 1

    reports = []
    for engine in dict.fromkeys(engines):
        searcher = Searcher(gallery, engine, args.t, args.leaf_cap)
        per_engine = []
        for r in radii:
            log.info("engine %s radius %d", engine, r)
            rep = run_benchmark(gallery, probes, searcher, r, threads=threads)
            per_engine.append(rep)
            write_probe_csv(rep, out / f"probes_{engine}_r{r}.csv")
        reports.extend(per_engine)
        if args.sweep:
            write_sweep_csv(miss_vs_penetration(per_engine), out / f"sweep_{engine}.csv")
    write_summary_csv(reports, out / "summary.csv")
    print(format_summary(reports))
    return 0


def cmd_info(args) -> int:
    for path in args.files:
        fields = formats.describe(_existing(path))
        print(path)
        for key, value in fields.items():
            print(f"  {key:<16}{value}")
    return 0


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hvindex", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic gallery/probe codes files")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--classes", type=int)
    p.add_argument("--spc", type=int, help="samples per class")
    p.add_argument("--k", type=int, default=512, help="code width in bits")
    p.add_argument("--pg", type=float, default=DEFAULT_FLIP_PROB, help="genuine bit-flip probability")
    p.add_argument("--gallery-fraction", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--gallery", help="gallery codes path (default OUT/gallery.hvc)")
    p.add_argument("--probes", help="probe codes path (default OUT/probes.hvc)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("extract", help="extract embeddings from PGM strips")
    p.add_argument("--images", required=True, help="directory of .pgm strips")
    p.add_argument("--out", required=True, help="embeddings file")
    p.add_argument("--weights", help="combiner weights file (default: uniform)")
    p.add_argument("--strip", default="iitd", help="strip shape preset or HxW")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed of the final projection")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("binarize", help="SimHash embeddings into a codes file")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="codes file")
    p.add_argument("--bank", help="projection bank path (default OUT with .hvp suffix); reused if present")
    p.add_argument("--k", type=int, help=f"code width (default {DEFAULT_BITS})")
    p.add_argument("--seed", type=int, help=f"projection seed (default {DEFAULT_SEED})")
    p.set_defaults(func=cmd_binarize)

    p = sub.add_parser("build", help="build and persist an MIH index")
    p.add_argument("--gallery", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--engine", default="mih", choices=ENGINE_CHOICES)
    p.add_argument("--t", type=int, default=DEFAULT_T, help="number of substring tables")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="print r-neighbors of each probe")
    p.add_argument("--probes", required=True)
    p.add_argument("--index", help="persisted MIH index")
    p.add_argument("--gallery", help="codes file to search when no index is given")
    p.add_argument("--engine", default="mih", choices=ENGINE_CHOICES)
    p.add_argument("--r", type=int, default=0)
    p.add_argument("--t", type=int, default=DEFAULT_T)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="hit/penetration benchmark with CSV reports")
    p.add_argument("--gallery", required=True)
    p.add_argument("--probes", required=True)
    p.add_argument("--engine", action="append", choices=ENGINE_CHOICES, help="repeatable; default all but mih_mcom")
    p.add_argument("--r", type=int, default=48)
    p.add_argument("--t", type=int, default=DEFAULT_T)
    p.add_argument("--sweep", help="r_min:r_max:step (inclusive)")
    p.add_argument("--threads", type=int, help="worker threads (default: CPU count)")
    p.add_argument("--leaf-cap", type=int, default=16, help="ball-tree leaf capacity")
    p.add_argument("--out", default="bench", help="report directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("info", help="dump artifact file headers")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "k", None) is not None and not 1 <= args.k <= MAX_WIDTH:
        parser.error(f"--k must lie in 1..{MAX_WIDTH}")
    try:
        return args.func(args)
    except (HvIndexError, OSError) as exc:
        print(f"hvindex {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
