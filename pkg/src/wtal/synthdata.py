"""Synthetic two-modality dataset with planted action instances.

Each video is a pair of (T, D) feature sequences (an appearance stream and
a motion stream). Background snippets are Gaussian noise; snippets inside
a planted segment additionally carry a class-specific signal direction in
each modality. Two kinds of per-modality corruption are planted on
purpose:

* scene confounders: background stretches that receive the appearance
  signal only (the motion stream sees plain background there);
* motion misses: action instances whose motion signal is suppressed
  (slow actions the motion stream cannot see).

Ground-truth segments use 1-based inclusive snippet indices; categories
are 1-based.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised for invalid configurations or malformed dataset files."""


@dataclass
class GeneratorConfig:
    num_train: int = 60
    num_test: int = 30
    num_classes: int = 5
    feature_dim: int = 32
    t_range: tuple = (40, 80)
    actions_per_video: tuple = (1, 3)
    action_length: tuple = (8, 16)
    max_categories_per_video: int = 2
    signal_amplitude: float = 3.0
    rgb_noise: float = 0.8
    flow_noise: float = 0.4
    noise_smoothing: int = 3   # odd box width; temporal noise correlation
    rgb_false_positive_rate: float = 0.5
    flow_miss_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2 or self.feature_dim < 2:
            raise DataError("need num_classes >= 2 and feature_dim >= 2")
        for lo, hi in (self.t_range, self.actions_per_video,
                       self.action_length):
            if lo > hi or lo < 1:
                raise DataError("ranges must be nonempty and positive")
        for rate in (self.rgb_false_positive_rate, self.flow_miss_rate):
            if not 0.0 <= rate <= 1.0:
                raise DataError("rates must lie in [0, 1]")
        if self.num_train < 1 or self.num_test < 0:
            raise DataError("need at least one training video")
        if self.noise_smoothing < 1 or self.noise_smoothing % 2 == 0:
            raise DataError("noise_smoothing must be odd and positive")


@dataclass
class VideoSample:
    id: str
    label: np.ndarray                 # (C,), nonnegative, sums to 1
    rgb: np.ndarray                   # (T, D) float64
    flow: np.ndarray                  # (T, D) float64
    gt_segments: list | None          # [(start, end, category)] or None
    # generator bookkeeping, never serialized
    confounders: list = field(default_factory=list)
    suppressed: list = field(default_factory=list)

    @property
    def num_snippets(self):
        return self.rgb.shape[0]


@dataclass
class Dataset:
    class_names: list
    feature_dim: int
    train: list
    test: list

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def evaluable(self):
        return all(v.gt_segments is not None for v in self.test)

    def all_videos(self):
        return list(self.train) + list(self.test)


def _place_segments(rng, t, lengths, occupied, gap=2, attempts=50):
    """Place non-overlapping segments (1-based inclusive), keeping a gap
    from already occupied ones. Returns the placed (start, end) list."""
    placed = []
    for length in lengths:
        length = min(length, t)
        for _ in range(attempts):
            start = int(rng.integers(1, t - length + 2))
            end = start + length - 1
            ok = all(end + gap < s or start - gap > e
                     for s, e, *_ in occupied + placed)
            if ok:
                placed.append((start, end))
                break
    return placed


def _smooth_noise(rng, shape, sigma, window):
    """Gaussian noise with a temporal box filter; variance is rescaled so
    the per-snippet marginal stays at sigma^2. Snippets in real feature
    sequences are temporally correlated, which keeps the attention of a
    trained model from flickering inside a segment."""
    noise = rng.normal(0.0, sigma, size=shape)
    if window <= 1:
        return noise
    t = shape[0]
    half = window // 2
    padded = np.concatenate([noise[:half][::-1], noise,
                             noise[-half:][::-1]], axis=0)
    kernel = np.ones(window) / np.sqrt(window)
    out = np.empty_like(noise)
    for j in range(window):
        if j == 0:
            acc = padded[0:t] * kernel[0]
        else:
            acc += padded[j:j + t] * kernel[j]
    out[:] = acc
    return out


def _signal_directions(rng, num_classes, dim):
    dirs = rng.normal(size=(num_classes, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def generate(config):
    """Build a dataset deterministically from the config (seed included)."""
    rng = np.random.default_rng(config.seed)
    c, d = config.num_classes, config.feature_dim
    rgb_dirs = _signal_directions(rng, c, d)
    flow_dirs = _signal_directions(rng, c, d)
    class_names = [f"action_{i + 1}" for i in range(c)]

    def make_video(vid):
        t = int(rng.integers(config.t_range[0], config.t_range[1] + 1))
        n_actions = int(rng.integers(config.actions_per_video[0],
                                     config.actions_per_video[1] + 1))
        n_cats = int(rng.integers(1, config.max_categories_per_video + 1))
        cats = rng.choice(c, size=min(n_cats, n_actions), replace=False)
        action_cats = [int(cats[i % len(cats)]) for i in range(n_actions)]
        lengths = [int(rng.integers(config.action_length[0],
                                    config.action_length[1] + 1))
                   for _ in range(n_actions)]
        spans = _place_segments(rng, t, lengths, [])
        segments = [(s, e, cat + 1)
                    for (s, e), cat in zip(spans, action_cats)]
        # a video always carries at least one action
        if not segments:
            length = min(lengths[0], t)
            segments = [(1, length, action_cats[0] + 1)]

        rgb = _smooth_noise(rng, (t, d), config.rgb_noise,
                            config.noise_smoothing)
        flow = _smooth_noise(rng, (t, d), config.flow_noise,
                             config.noise_smoothing)
        suppressed = []
        for start, end, cat in segments:
            rgb[start - 1:end] += config.signal_amplitude * rgb_dirs[cat - 1]
            if rng.random() < config.flow_miss_rate:
                suppressed.append((start, end, cat))
            else:
                flow[start - 1:end] += (config.signal_amplitude
                                        * flow_dirs[cat - 1])

        confounders = []
        if rng.random() < config.rgb_false_positive_rate:
            length = int(rng.integers(config.action_length[0],
                                      config.action_length[1] + 1))
            spans = _place_segments(rng, t, [length],
                                    [(s, e) for s, e, _ in segments])
            if spans:
                cat = int(rng.integers(0, c)) + 1
                s0, e0 = spans[0]
                rgb[s0 - 1:e0] += config.signal_amplitude * rgb_dirs[cat - 1]
                confounders.append((s0, e0, cat))

        label = np.zeros(c)
        for _, _, cat in segments:
            label[cat - 1] = 1.0
        label /= label.sum()
        # quantize to the on-disk precision so save/load is bit-exact
        rgb = rgb.astype(np.float32).astype(np.float64)
        flow = flow.astype(np.float32).astype(np.float64)
        return VideoSample(id=vid, label=label, rgb=rgb, flow=flow,
                           gt_segments=sorted(segments),
                           confounders=confounders, suppressed=suppressed)

    train = [make_video(f"train_{i:04d}") for i in range(config.num_train)]
    test = [make_video(f"test_{i:04d}") for i in range(config.num_test)]
    return Dataset(class_names=class_names, feature_dim=d,
                   train=train, test=test)


# ---------------------------------------------------------------------------
# on-disk format: manifest.json + raw little-endian float32 feature files

def save(dataset, directory):
    os.makedirs(directory, exist_ok=True)
    videos = []
    for split, samples in (("train", dataset.train), ("test", dataset.test)):
        for v in samples:
            rgb_file = f"{v.id}_rgb.bin"
            flow_file = f"{v.id}_flow.bin"
            for name, arr in ((rgb_file, v.rgb), (flow_file, v.flow)):
                with open(os.path.join(directory, name), "wb") as fh:
                    fh.write(np.ascontiguousarray(arr,
                                                  dtype="<f4").tobytes())
            entry = {
                "id": v.id,
                "split": split,
                "T": int(v.num_snippets),
                "label": [float(x) for x in v.label],
                "rgb_file": rgb_file,
                "flow_file": flow_file,
            }
            if v.gt_segments is not None:
                entry["gt_segments"] = [[int(s), int(e), int(c)]
                                        for s, e, c in v.gt_segments]
            videos.append(entry)
    manifest = {
        "C": dataset.num_classes,
        "D": dataset.feature_dim,
        "class_names": dataset.class_names,
        "videos": videos,
    }
    path = os.path.join(directory, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_features(path, t, d):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise DataError(f"missing feature file: {path}") from exc
    values = np.frombuffer(raw, dtype="<f4")
    if values.size != t * d:
        raise DataError(
            f"{path}: expected {t}x{d} values, found {values.size}")
    return values.astype(np.float64).reshape(t, d)


def load(directory):
    manifest_path = os.path.join(directory, "manifest.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"missing manifest: {manifest_path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: invalid JSON: {exc}") from exc
    try:
        c = int(manifest["C"])
        d = int(manifest["D"])
        class_names = list(manifest["class_names"])
        entries = manifest["videos"]
    except KeyError as exc:
        raise DataError(f"{manifest_path}: missing field {exc}") from exc
    if len(class_names) != c:
        raise DataError("class_names length disagrees with C")
    splits = {"train": [], "test": []}
    for entry in entries:
        t = int(entry["T"])
        label = np.asarray(entry["label"], dtype=np.float64)
        if label.shape != (c,):
            raise DataError(f"video {entry['id']}: bad label length")
        rgb = _read_features(os.path.join(directory, entry["rgb_file"]), t, d)
        flow = _read_features(os.path.join(directory, entry["flow_file"]),
                              t, d)
        gt = entry.get("gt_segments")
        if gt is not None:
            gt = [(int(s), int(e), int(cat)) for s, e, cat in gt]
            for s, e, cat in gt:
                if not (1 <= s <= e <= t) or not (1 <= cat <= c):
                    raise DataError(
                        f"video {entry['id']}: invalid gt segment")
        sample = VideoSample(id=entry["id"], label=label, rgb=rgb,
                             flow=flow, gt_segments=gt)
        splits[entry.get("split", "train")].append(sample)
    return Dataset(class_names=class_names, feature_dim=d,
                   train=splits["train"], test=splits["test"])
