"""Glue between trained models, localization, and evaluation; also the
plot-data emission (per-video attention CSV + SVG)."""

import csv
import os

from . import basemodel, evaluation, localization
from .consensus import STREAMS, fuse_attention


def stream_outputs(models, video):
    """Forward both streams on one video."""
    return {s: basemodel.forward(models[s],
                                 video.rgb if s == "rgb" else video.flow)
            for s in STREAMS}


def localize_dataset(models, videos, loc_cfg, mode="fused"):
    proposals = []
    for video in videos:
        outs = stream_outputs(models, video)
        proposals.extend(localization.localize(video.id, outs["rgb"],
                                               outs["flow"], loc_cfg,
                                               mode=mode))
    return proposals


def evaluate_models(models, videos, loc_cfg, thresholds, num_classes,
                    mode="fused"):
    proposals = localize_dataset(models, videos, loc_cfg, mode=mode)
    gts = evaluation.gt_from_videos(videos)
    return evaluation.evaluate(proposals, gts, thresholds, num_classes)


# ---------------------------------------------------------------------------
# plot emission

def write_attention_csv(path, video, outs, loc_cfg, pseudo=None):
    """Per-video CSV of upsampled attention rows; one row per upsampled
    time step (T * factor rows)."""
    factor = loc_cfg.upsample_factor
    rgb = localization.upsample_linear(outs["rgb"].attention, factor)
    flow = localization.upsample_linear(outs["flow"].attention, factor)
    fused = fuse_attention(rgb, flow, loc_cfg.beta)
    header = ["time", "attention_rgb", "attention_flow", "attention_fuse"]
    if pseudo is not None:
        header.append("pseudo_gt")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j in range(len(rgb)):
            row = [repr((j + 0.5) / factor), repr(float(rgb[j])),
                   repr(float(flow[j])), repr(float(fused[j]))]
            if pseudo is not None:
                row.append(repr(float(pseudo[j // factor])))
            writer.writerow(row)


def _svg_polyline(values, x_scale, y0, height, color):
    points = " ".join(f"{(i + 0.5) * x_scale:.2f},"
                      f"{y0 + height * (1.0 - v):.2f}"
                      for i, v in enumerate(values))
    return (f'<polyline fill="none" stroke="{color}" stroke-width="1" '
            f'points="{points}"/>')


def write_attention_svg(path, video, outs, proposals, loc_cfg):
    """Small static figure: one row per attention sequence, ground-truth
    segments as gray boxes, proposals as green boxes."""
    factor = loc_cfg.upsample_factor
    rgb = localization.upsample_linear(outs["rgb"].attention, factor)
    flow = localization.upsample_linear(outs["flow"].attention, factor)
    fused = fuse_attention(rgb, flow, loc_cfg.beta)
    width = 640.0
    row_h = 60.0
    pad = 10.0
    t = video.num_snippets
    x_per_snippet = width / t
    x_per_step = width / len(rgb)
    rows = [("rgb", rgb, "#d62728"), ("flow", flow, "#1f77b4"),
            ("fuse", fused, "#2ca02c")]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
             f'width="{width:.0f}" '
             f'height="{(row_h + pad) * len(rows) + 2 * pad:.0f}">']
    if video.gt_segments:
        for s, e, _ in video.gt_segments:
            x = (s - 1) * x_per_snippet
            w = (e - s + 1) * x_per_snippet
            parts.append(f'<rect x="{x:.2f}" y="0" width="{w:.2f}" '
                         f'height="{(row_h + pad) * len(rows):.2f}" '
                         f'fill="#cccccc" fill-opacity="0.4"/>')
    for idx, (name, values, color) in enumerate(rows):
        y0 = pad + idx * (row_h + pad)
        parts.append(f'<text x="2" y="{y0 + 10:.2f}" font-size="10">'
                     f'{name}</text>')
        parts.append(_svg_polyline(values, x_per_step, y0, row_h, color))
    for p in proposals:
        x = p.start * x_per_snippet
        w = (p.end - p.start) * x_per_snippet
        y0 = pad + 2 * (row_h + pad)
        parts.append(f'<rect x="{x:.2f}" y="{y0:.2f}" width="{w:.2f}" '
                     f'height="{row_h:.2f}" fill="none" '
                     f'stroke="#2ca02c" stroke-width="1.5"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def write_plot_bundle(out_dir, models, videos, loc_cfg, pseudo_by_video=None):
    os.makedirs(out_dir, exist_ok=True)
    for video in videos:
        outs = stream_outputs(models, video)
        proposals = localization.localize(video.id, outs["rgb"],
                                          outs["flow"], loc_cfg)
        pseudo = None
        if pseudo_by_video and video.id in pseudo_by_video:
            pseudo = pseudo_by_video[video.id]
        write_attention_csv(os.path.join(out_dir, f"{video.id}.csv"),
                            video, outs, loc_cfg, pseudo=pseudo)
        write_attention_svg(os.path.join(out_dir, f"{video.id}.svg"),
                            video, outs, proposals, loc_cfg)
