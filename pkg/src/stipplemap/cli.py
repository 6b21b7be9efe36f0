"""Command-line front end for the palette/synthesis/estimation pipeline.

Every run prints a single-line JSON summary to stdout. Exit codes: 0 on
success, 1 on usage errors, 2 on runtime failures. A --config JSON file
may supply any flag by name; explicit flags win.
"""

from __future__ import annotations

import argparse
import io
import json
import sys

import numpy as np

from .util import atomic_write_bytes, atomic_write_text, child_seed

_PROG = "stipplemap"


class _UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--config", type=str, default=None)

    parser = argparse.ArgumentParser(prog=_PROG, parents=[common],
                                     description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("sample-spectra", parents=[common],
                       help="draw target spectra and write them as JSON")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--out", type=str, default=None)

    p = sub.add_parser("realize", parents=[common],
                       help="gradient-match a point set to a spectrum")
    p.add_argument("--target", type=str, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--out", type=str, default=None)

    p = sub.add_parser("build-palette", parents=[common],
                       help="construct and serialize a correlation palette")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--realize-iters", type=int, default=None)
    p.add_argument("--lr-iters", type=int, default=None)
    p.add_argument("--mds-iters", type=int, default=None)

    p = sub.add_parser("palette-viz", parents=[common],
                       help="emit latent scatter and swatch charts")
    p.add_argument("--palette", type=str, default=None)
    p.add_argument("--out", type=str, default=None)

    p = sub.add_parser("synth", parents=[common],
                       help="synthesize points matching a LAB map image")
    p.add_argument("--image", type=str, default=None)
    p.add_argument("--palette", type=str, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--svg", type=str, default=None)

    p = sub.add_parser("estimate", parents=[common],
                       help="recover a LAB map image from a point set")
    p.add_argument("--points", type=str, default=None)
    p.add_argument("--palette", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--resolution", type=int, default=None)

    p = sub.add_parser("render", parents=[common],
                       help="rasterize a point set to PNG or SVG")
    p.add_argument("--points", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--format", type=str, default=None)
    p.add_argument("--radius", type=float, default=None)

    p = sub.add_parser("check-realizability", parents=[common],
                       help="probe how well palette targets are matched")
    p.add_argument("--palette", type=str, default=None)
    p.add_argument("--probes", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)

    return parser


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except Exception as exc:
        raise _UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise _UsageError(f"config {path} must hold a JSON object")
    return cfg


class _Options:
    """Flag/config/default resolution; explicit flags always win."""

    def __init__(self, args: argparse.Namespace, cfg: dict):
        self.args = args
        self.cfg = cfg

    def get(self, key: str, default=None):
        value = getattr(self.args, key.replace("-", "_"), None)
        if value is not None:
            return value
        if key in self.cfg:
            return self.cfg[key]
        return default

    def need(self, key: str):
        value = self.get(key)
        if value is None:
            raise _UsageError(f"missing required option --{key}")
        return value


def _cmd_sample_spectra(opt: _Options) -> dict:
    from .spectrum import sample_spectrum
    import os

    count = int(opt.need("count"))
    out_dir = str(opt.need("out"))
    seed = int(opt.get("seed", 0))
    if count < 1:
        raise ValueError("count must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    for i in range(count):
        _, values = sample_spectrum(child_seed(seed, 0, i))
        path = os.path.join(out_dir, "spectrum_%03d.json" % i)
        atomic_write_text(path, json.dumps([float(v) for v in values]) + "\n")
    return {"command": "sample-spectra", "count": count, "out": out_dir}


def _cmd_realize(opt: _Options) -> dict:
    from .realize import realize
    from .raster import save_points_csv
    from .spectrum import SPECTRUM_BINS

    target_path = str(opt.need("target"))
    out = str(opt.need("out"))
    n = int(opt.get("n", 1024))
    iters = int(opt.get("iters", 1000))
    seed = int(opt.get("seed", 0))
    with open(target_path, "r", encoding="utf-8") as fh:
        values = json.load(fh)
    target = np.asarray(values, dtype=np.float64)
    if target.shape != (SPECTRUM_BINS,):
        raise ValueError(f"target must hold {SPECTRUM_BINS} values")
    pattern, info = realize(target, n, iterations=iters, seed=seed)
    save_points_csv(pattern, out)
    return {"command": "realize", "n": n, "out": out,
            "initial_loss": info["initial_loss"],
            "final_loss": info["final_loss"]}


def _cmd_build_palette(opt: _Options) -> dict:
    from .embedding import build_palette, save_palette

    count = int(opt.need("count"))
    points = int(opt.need("points"))
    out = str(opt.need("out"))
    seed = int(opt.get("seed", 0))
    threads = int(opt.get("threads", 1))
    palette = build_palette(
        count, points, seed=seed, threads=threads,
        realize_iterations=int(opt.get("realize-iters", 1000)),
        lr_iterations=int(opt.get("lr-iters", 1000)),
        mds_iterations=int(opt.get("mds-iters", 1000)))
    save_palette(out, palette)
    return {"command": "build-palette", "count": count, "points": points,
            "out": out}


def _lab_colors(latents: np.ndarray, lightness: float = 60.0) -> np.ndarray:
    from .raster import lab_to_rgb

    a = 255.0 * latents[:, 0] - 128.0
    b = 255.0 * latents[:, 1] - 128.0
    r, g, bb = lab_to_rgb(np.full(len(latents), lightness), a, b)
    return np.stack([r, g, bb], axis=-1) / 255.0


def _cmd_palette_viz(opt: _Options) -> dict:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from .embedding import load_palette
    import os

    palette_path = str(opt.need("palette"))
    out = str(opt.need("out"))
    palette = load_palette(palette_path)
    colors = _lab_colors(palette.latents)

    fig, ax = plt.subplots(figsize=(6, 6))
    ax.scatter(palette.latents[:, 0], palette.latents[:, 1], c=colors,
               s=60, edgecolors="black", linewidths=0.4)
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("u")
    ax.set_ylabel("v")
    ax.set_title("palette latent coordinates")
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120)
    plt.close(fig)
    atomic_write_bytes(out, buf.getvalue())

    stem, ext = os.path.splitext(out)
    swatch_path = stem + "-swatches" + (ext or ".png")
    count = len(palette.latents)
    cols = int(np.ceil(np.sqrt(count)))
    rows = int(np.ceil(count / cols))
    fig, ax = plt.subplots(figsize=(cols * 0.6, rows * 0.6))
    for i in range(count):
        r, c = divmod(i, cols)
        ax.add_patch(plt.Rectangle((c, rows - 1 - r), 0.92, 0.92,
                                   color=colors[i]))
    ax.set_xlim(0, cols)
    ax.set_ylim(0, rows)
    ax.set_aspect("equal")
    ax.axis("off")
    ax.set_title("palette swatches")
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120)
    plt.close(fig)
    atomic_write_bytes(swatch_path, buf.getvalue())
    return {"command": "palette-viz", "out": out, "swatches": swatch_path}


def _cmd_synth(opt: _Options) -> dict:
    from .embedding import load_palette
    from .raster import load_feature_image, render, save_points_csv
    from .synthesis import synthesize
    from .types import SynthesisConfig

    image = str(opt.need("image"))
    palette_path = str(opt.need("palette"))
    out = str(opt.need("out"))
    iters = int(opt.get("iters", 5000))
    seed = int(opt.get("seed", 0))
    svg = opt.get("svg")
    img = load_feature_image(image)
    palette = load_palette(palette_path)
    cfg = SynthesisConfig(iterations=iters, seed=seed)
    pattern, report = synthesize(img, palette, cfg, return_report=True)
    save_points_csv(pattern, out)
    if svg:
        render(pattern, 1024, "svg", str(svg),
               default_radius=0.25 / np.sqrt(max(len(pattern), 1)))
    report = dict(report)
    report["command"] = "synth"
    report["out"] = out
    return report


def _cmd_estimate(opt: _Options) -> dict:
    from .embedding import load_palette
    from .mapest import estimate_feature_image
    from .raster import load_points_csv, save_feature_image

    points_path = str(opt.need("points"))
    palette_path = str(opt.need("palette"))
    out = str(opt.need("out"))
    resolution = int(opt.get("resolution", 256))
    threads = int(opt.get("threads", 1))
    pattern = load_points_csv(points_path)
    palette = load_palette(palette_path)
    img = estimate_feature_image(pattern, palette, resolution=resolution,
                                 threads=threads)
    save_feature_image(img, out)
    return {"command": "estimate", "n": len(pattern),
            "resolution": resolution, "out": out}


def _cmd_render(opt: _Options) -> dict:
    from .raster import load_points_csv, render

    points_path = str(opt.need("points"))
    out = str(opt.need("out"))
    size = int(opt.get("size", 512))
    fmt = opt.get("format")
    if fmt is None:
        fmt = "svg" if str(out).lower().endswith(".svg") else "png"
    radius = opt.get("radius")
    pattern = load_points_csv(points_path)
    if radius is None and pattern.radii is None:
        radius = 0.25 / np.sqrt(max(len(pattern), 1))
    render(pattern, size, str(fmt), out,
           default_radius=None if radius is None else float(radius))
    return {"command": "render", "n": len(pattern), "format": str(fmt),
            "out": out}


def _cmd_check_realizability(opt: _Options) -> dict:
    from .embedding import load_palette
    from .synthesis import realizability_metric

    palette_path = str(opt.need("palette"))
    probes = int(opt.get("probes", 16))
    iters = int(opt.get("iters", 2000))
    seed = int(opt.get("seed", 0))
    threads = int(opt.get("threads", 1))
    palette = load_palette(palette_path)
    a, b, ratio = realizability_metric(palette, probe_count=probes,
                                       seed=seed, iterations=iters,
                                       threads=threads)
    return {"command": "check-realizability", "probes": probes,
            "A": a, "B": b, "ratio": ratio}


_COMMANDS = {
    "sample-spectra": _cmd_sample_spectra,
    "realize": _cmd_realize,
    "build-palette": _cmd_build_palette,
    "palette-viz": _cmd_palette_viz,
    "synth": _cmd_synth,
    "estimate": _cmd_estimate,
    "render": _cmd_render,
    "check-realizability": _cmd_check_realizability,
}


def dispatch(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        opt = _Options(args, _load_config(args.config))
        summary = _COMMANDS[args.command](opt)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except Exception as exc:
        print(f"{_PROG}: {exc}", file=sys.stderr)
        print(json.dumps({"error": str(exc)}))
        return 2
    print(json.dumps(summary, sort_keys=True))
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
