"""redactbench command line: obscure, restore, attack, report.

Exit codes: 0 success, 1 bad arguments/config/input format, 2 runtime failure
(including any failed cell of an attack run).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import dct
from .config import ConfigError, load_config
from .dataset import write_manifest
from .image import ImageError, load_png, read_png_text, save_png
from .kernels import BACKEND
from .methods import METHODS, ObscurationSpec, UnknownMethodError, image_seed, obscure_batch
from .report import ReportSchemaError, read_rows, render_table, write_reports

log = logging.getLogger("redactbench")

SECRET_SUFFIX = ".secret"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def secret_path(public: Path) -> Path:
    return public.with_name(public.name + SECRET_SUFFIX)


def _spec_from_args(args) -> ObscurationSpec:
    m = args.method
    setting = {"gaussian": args.size, "median": args.size, "pixelation": args.size, "p3": args.threshold}.get(m)
    if m in ("ksame", "ksame-net", "upgan"):
        setting = args.k
    try:
        return ObscurationSpec(m, setting)
    except UnknownMethodError as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(f"--method {m}: {exc}") from None


def _write_split(pair, out: Path):
    save_png(dct.render_public(pair), out, dct.public_png_text(pair))
    secret_path(out).write_bytes(dct.dump_part(pair, dct.PART_SECRET))


def cmd_obscure(args) -> int:
    spec = _spec_from_args(args)
    if spec.method == "scramble" and args.seed is None:
        raise UsageError("scramble needs --seed")
    src, dst = Path(args.input), Path(args.output)
    if src.is_dir():
        files = sorted(p for p in src.iterdir() if p.suffix.lower() == ".png")
        if not files:
            raise UsageError(f"no PNG files in {src}")
        dst.mkdir(parents=True, exist_ok=True)
        targets = [dst / f.name for f in files]
        seeds = [image_seed(args.seed, i) for i in range(len(files))] if args.seed is not None else [None] * len(files)
    else:
        files, targets, seeds = [src], [dst], [args.seed]
        if dst.parent and not dst.parent.exists():
            dst.parent.mkdir(parents=True)
    images = [load_png(f) for f in files]
    if spec.method in ("p3", "scramble"):
        for img, out, seed in zip(images, targets, seeds):
            coeffs = dct.encode_image(img)
            pair = dct.p3_split(coeffs, spec.setting) if spec.method == "p3" else dct.scramble(coeffs, seed)
            _write_split(pair, out)
            log.info("wrote %s and %s", out, secret_path(out))
        return 0
    for img, out in zip(obscure_batch(spec, images, args.seed or 0), targets):
        save_png(img, out)
        log.info("wrote %s", out)
    return 0


def cmd_restore(args) -> int:
    public = dct.public_from_png_text(read_png_text(args.public))
    secret = dct.load_part(Path(args.secret).read_bytes())
    pair = dct.join_parts(public, secret)
    save_png(dct.restore_image(pair), args.output)
    log.info("wrote %s", args.output)
    return 0


def cmd_attack(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg.output = Path(args.out)
    ds = cfg.load_dataset()
    log.info("dataset: %d images, %d identities; kernels: %s", len(ds), len(ds.identities), BACKEND)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(ds, out / "manifest.tsv")

    from .harness import run_matrix

    def progress(rep):
        status = "ok" if rep.ok else f"FAILED ({rep.error})"
        log.info("%-12s %-3s %s %-15s %s", rep.method, rep.setting, rep.tm, rep.attack, status)

    reports = run_matrix(ds, cfg.matrix(), progress=progress)
    paths = write_reports(reports, out)
    failed = sum(not r.ok for r in reports)
    log.info("%d cells, %d failed; report at %s", len(reports), failed, paths["csv"])
    return 2 if failed else 0


def cmd_report(args) -> int:
    sys.stdout.write(render_table(read_rows(args.path)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="redactbench", description="Obscure face images and attack the obscurations.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    o = sub.add_parser("obscure", help="obscure a PNG or a folder of PNGs")
    o.add_argument("input")
    o.add_argument("output")
    o.add_argument("--method", required=True, choices=sorted(METHODS))
    o.add_argument("--size", type=int, help="kernel width / pixel size for gaussian, median, pixelation")
    o.add_argument("--threshold", type=int, help=f"P3 threshold (default {dct.DEFAULT_THRESHOLD})")
    o.add_argument("--k", type=int, help="group size for k-same methods")
    o.add_argument("--seed", type=int, help="scramble seed; per-image seeds are derived from it for folders")
    o.set_defaults(func=cmd_obscure)

    r = sub.add_parser("restore", help="rebuild an image from its public PNG and secret container")
    r.add_argument("public")
    r.add_argument("secret")
    r.add_argument("output")
    r.set_defaults(func=cmd_restore)

    a = sub.add_parser("attack", help="run an attack matrix from a YAML config")
    a.add_argument("config")
    a.add_argument("--out", help="override the config's output directory")
    a.set_defaults(func=cmd_attack)

    t = sub.add_parser("report", help="print a report as an aligned table")
    t.add_argument("path")
    t.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ReportSchemaError, ImageError) as exc:
        print(f"redactbench: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, NotImplementedError) as exc:
        print(f"redactbench: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
