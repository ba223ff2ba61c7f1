"""``modcodec`` command line.

Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from dataclasses import asdict, fields
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .codec import decode_image, encode_image
from .data import DatasetSpec, PatchDataset
from .errors import ConfigError, DataError, NumericError
from .imageio import read_ppm, to_tensor_layout, write_ppm
from .metrics import (
    RdCurve,
    RdPoint,
    ScaleReductionWarning,
    bd_rate,
    channel_energy_ratio,
    msssim,
    psnr,
    read_rd_csv,
    write_rd_csv,
)
from .network import CodecModel, NetworkConfig, load_checkpoint, pad_to_factor
from . import autograd as ag
from .training import RdLossConfig, TrainConfig, resume, train_loop

log = logging.getLogger("modcodec")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

# config-file key -> (dataclass, field name)
_ALIASES = {"lambda": "lmbda", "nonlinearity": "nonlinearity", "distortion": "metric"}
_SECTIONS = (NetworkConfig, TrainConfig, RdLossConfig)


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[_ALIASES.get(key, key)] = value
    return values


def _coerce(cls, name: str, raw: str):
    ftype = {f.name: f.type for f in fields(cls)}[name]
    try:
        if ftype in ("int", int):
            return int(raw)
        if ftype in ("float", float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc
    return raw


def resolve_configs(values: dict[str, str]) -> tuple[NetworkConfig, TrainConfig, RdLossConfig]:
    known = {f.name: cls for cls in _SECTIONS for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {cls: {} for cls in _SECTIONS}
    for key, raw in values.items():
        cls = known[key]
        kwargs[cls][key] = _coerce(cls, key, raw)
    return NetworkConfig(**kwargs[NetworkConfig]), TrainConfig(**kwargs[TrainConfig]), RdLossConfig(
        **kwargs[RdLossConfig])


def gather_values(args) -> dict[str, str]:
    values: dict[str, str] = {}
    if args.config:
        try:
            values.update(parse_config_text(Path(args.config).read_text()))
        except OSError as exc:
            raise ConfigError(f"{args.config}: {exc.strerror}") from exc
    for item in args.set or ():
        values.update(parse_config_text(item))
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.lmbda is not None:
        values["lmbda"] = str(args.lmbda)
    if args.nonlinearity is not None:
        values["nonlinearity"] = args.nonlinearity
    return values


def format_config(*configs) -> str:
    lines = []
    for cfg in configs:
        for key, value in asdict(cfg).items():
            lines.append(f"{'lambda' if key == 'lmbda' else key} = {value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommands


def cmd_train(args) -> int:
    if len(args.inputs) != 1:
        raise ConfigError("train takes exactly one dataset directory")
    net_cfg, train_cfg, loss_cfg = resolve_configs(gather_values(args))
    out = Path(args.out or "run")
    resolved = format_config(net_cfg, train_cfg, loss_cfg)
    log.info("resolved config:\n%s", resolved)
    dataset = PatchDataset(DatasetSpec(args.inputs[0], train_cfg.seed, train_cfg.crop))
    if args.resume:
        model, state = resume(args.resume, train_cfg.lr)
        if model.config != net_cfg:
            raise ConfigError("resume checkpoint was trained with a different network config")
    else:
        model, state = CodecModel(net_cfg, seed=train_cfg.seed), None
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(resolved)
    state = train_loop(train_cfg, dataset, model, loss_cfg, out_dir=out, state=state)
    log.info("finished at step %d; checkpoint %s", state.step, out / "final.ckpt")
    return 0


def _need(args, n: int, usage: str):
    if len(args.inputs) != n:
        raise ConfigError(f"expected {usage}")
    return args.inputs


def cmd_encode(args) -> int:
    ckpt, image = _need(args, 2, "encode CHECKPOINT IMAGE --out FILE")
    if not args.out:
        raise ConfigError("encode needs --out")
    model, _, checksum = load_checkpoint(ckpt)
    img = read_ppm(image)
    enc = encode_image(model, checksum, img)
    Path(args.out).write_bytes(enc.bitstream)
    print(f"{args.out}: {enc.payload_bytes} payload bytes, {enc.bpp:.4f} bpp")
    return 0


def cmd_decode(args) -> int:
    ckpt, stream = _need(args, 2, "decode CHECKPOINT BITSTREAM --out IMAGE")
    if not args.out:
        raise ConfigError("decode needs --out")
    model, _, checksum = load_checkpoint(ckpt)
    try:
        blob = Path(stream).read_bytes()
    except OSError as exc:
        raise DataError(f"{stream}: {exc.strerror}") from exc
    write_ppm(args.out, decode_image(model, checksum, blob))
    return 0


def evaluate_checkpoint(path, images: list[np.ndarray]) -> RdPoint:
    """Average actual bpp, PSNR and MS-SSIM over images (8-bit domain)."""
    model, _, checksum = load_checkpoint(path)
    bits = pixels = 0
    psnrs, scores = [], []
    for img in images:
        enc = encode_image(model, checksum, img)
        rec = decode_image(model, checksum, enc.bitstream)
        bits += 8 * enc.payload_bytes
        pixels += enc.width * enc.height
        psnrs.append(psnr(img, rec))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ScaleReductionWarning)
            scores.append(msssim(img.transpose(2, 0, 1), rec.transpose(2, 0, 1)))
    finite = [p for p in psnrs if math.isfinite(p)]
    mean_psnr = float(np.mean(finite)) if finite else math.inf
    return RdPoint(bits / pixels, mean_psnr, float(np.mean(scores)))


def cmd_eval(args) -> int:
    if len(args.inputs) < 2:
        raise ConfigError("eval CHECKPOINT... IMAGE_DIR")
    *ckpts, image_dir = args.inputs
    paths = sorted(Path(image_dir).glob("*.ppm"))
    if not paths:
        raise DataError(f"{image_dir}: no .ppm images")
    images = [read_ppm(p) for p in paths]
    curve = RdCurve(evaluate_checkpoint(c, images) for c in ckpts)
    write_rd_csv(args.out or sys.stdout, curve)
    return 0


def cmd_bdrate(args) -> int:
    anchor, test = _need(args, 2, "bdrate ANCHOR_CSV TEST_CSV")
    value = bd_rate(read_rd_csv(anchor), read_rd_csv(test), args.metric)
    print(f"BD-rate ({args.metric}): {value:.2f}%")
    return 0


def cmd_energy(args) -> int:
    ckpt, image = _need(args, 2, "energy CHECKPOINT IMAGE")
    model, _, _ = load_checkpoint(ckpt)
    stage = model.config.stages if args.stage is None else args.stage
    if not 0 <= stage <= model.config.stages:
        raise ConfigError(f"stage must be in [0, {model.config.stages}]")
    x = to_tensor_layout(read_ppm(image), model.dtype)
    with ag.no_grad():
        h, _ = pad_to_factor(x, model.config.downsampling)
        for s in model.analysis[:stage + 1]:
            h = s(h)
    ratios = channel_energy_ratio(h)
    energies = np.sum(np.asarray(h.data, dtype=np.float64) ** 2, axis=(0, 2, 3))
    rows = [("channel", "energy", "ratio")] + [(i, repr(float(e)), repr(float(r)))
                                              for i, (e, r) in enumerate(zip(energies, ratios))]
    text = "\n".join(",".join(map(str, r)) for r in rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    log.info("max channel energy ratio %.4f", float(ratios.max()))
    return 0


def render_svg(curves: list[tuple[str, RdCurve]], metric: str = "psnr", width: int = 640,
               height: int = 480) -> str:
    """Static RD plot: one polyline per curve, bpp on x, quality on y."""
    pad = 60
    pts = [(p.bpp, p.quality(metric)) for _, c in curves for p in c]
    pts = [(x, y) for x, y in pts if math.isfinite(y)]
    if not pts:
        raise DataError("no finite RD points to plot")
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x1, y1 = (x1 if x1 > x0 else x0 + 1.0), (y1 if y1 > y0 else y0 + 1.0)

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    palette = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
    ylabel = "PSNR (dB)" if metric == "psnr" else "MS-SSIM (dB)"
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle">bpp</text>',
        f'<text x="18" y="{height / 2}" text-anchor="middle" transform="rotate(-90 18 {height / 2})">'
        f'{ylabel}</text>',
        f'<text x="{pad}" y="{height - pad + 18}" text-anchor="middle">{x0:.3g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 18}" text-anchor="middle">{x1:.3g}</text>',
        f'<text x="{pad - 6}" y="{height - pad}" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{pad - 6}" y="{pad + 4}" text-anchor="end">{y1:.3g}</text>',
    ]
    for i, (label, curve) in enumerate(curves):
        colour = palette[i % len(palette)]
        coords = " ".join(f"{sx(p.bpp):.2f},{sy(p.quality(metric)):.2f}" for p in curve
                          if math.isfinite(p.quality(metric)))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{coords}"/>')
        out.append(f'<text x="{width - pad - 4}" y="{pad + 16 * (i + 1)}" text-anchor="end" '
                   f'fill="{colour}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_plot(args) -> int:
    if not args.inputs:
        raise ConfigError("plot CSV...")
    curves = [(Path(p).stem, read_rd_csv(p)) for p in args.inputs]
    svg = render_svg(curves, args.metric)
    Path(args.out or "rd.svg").write_text(svg)
    return 0


COMMANDS = {
    "train": cmd_train,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "bdrate": cmd_bdrate,
    "energy": cmd_energy,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modcodec", description="Learned image codec with modulation transforms.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("inputs", nargs="*")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", dest="lmbda", type=float)
    p.add_argument("--nonlinearity", choices=("relu", "gdn", "sa", "tam", "tpm", "tfm", "tjm", "restsm"))
    p.add_argument("--out")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--resume", help="checkpoint to continue training from")
    p.add_argument("--metric", choices=("psnr", "msssim"), default="psnr")
    p.add_argument("--stage", type=int, help="analysis stage whose output `energy` measures")
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"modcodec: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"modcodec: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"modcodec: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
