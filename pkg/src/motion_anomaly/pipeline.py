"""Frame-by-frame anomaly detection over a sequence.

Every flow field is split into orientation and magnitude fields, each is
segmented and described per superpixel, scored against its own dictionary
and normalised; the two maps are fused. The first ``training_frames`` frames
only feed the initial dictionaries and emit no maps. Afterwards features
whose normalised score stays below ``tau_u`` are buffered and folded into
their dictionary every ``T`` frames.
"""
from __future__ import annotations

import csv
import logging
import math
import re
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import synth
from .descriptor import superpixel_histograms
from .dictionary import Dictionary, UpdateBuffer, learn_dictionary, update, write_checkpoint
from .errors import ConfigError, EvaluationError, StateError
from .evaluation import RocAccumulator, product_fusion, write_metrics_csv, write_roc_csv
from .fusion import fuse
from .imaging import read_gray, write_overlay, write_unit_pgm
from .motion_field import FieldKind, FlowField, horn_schunck, read_flo, split_fields, to_gray
from .reconstruction import AnomalyMap, magnitude_scores, normalize_map, orientation_scores
from .superpixel import SegmentationMap, slic

log = logging.getLogger(__name__)

KINDS: tuple[FieldKind, FieldKind] = ("orientation", "magnitude")
MAP_NAMES = ("orientation", "magnitude", "product", "bayes")
IMAGE_SUFFIXES = (".pgm", ".png")


@dataclass(frozen=True)
class PipelineConfig:
    n_superpixels: int = 125
    compactness: float = 10.0
    d: int = 30
    lambda1: float = 0.5
    lambda2: float = 0.5
    M: int = 300
    T: int = 5
    K: int = 10
    v_max: float = 20.0
    m_fusion_bins: int = 10
    tau_u: float = 0.3
    training_frames: int = 10
    flow_source: str = "files"
    hs_smoothness: float = 0.1
    hs_iterations: int = 100
    gl_tol: float = 1e-6
    gl_max_iter: int = 500

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "flow_source" and not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{f.name} must be positive, got {v!r}")
        if self.K > self.M:
            raise ConfigError(f"K={self.K} exceeds M={self.M}")
        if self.n_superpixels < 4:
            raise ConfigError("n_superpixels must be at least 4")
        if self.d < 2 or self.m_fusion_bins < 2:
            raise ConfigError("d and m_fusion_bins must be at least 2")
        if self.flow_source not in ("files", "horn_schunck"):
            raise ConfigError(f"flow_source must be 'files' or 'horn_schunck', got {self.flow_source!r}")


_CONFIG_TYPES = {f.name: f.type for f in fields(PipelineConfig)}
_FLOW_ALIASES = {"files": "files", "horn_schunck": "horn_schunck", "hs": "horn_schunck"}


def config_from_text(text: str, source: str = "<config>") -> PipelineConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        where = f"{source}:{lineno}"
        if not sep or not key or not value:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{where}: unknown key {key!r}")
        typ = _CONFIG_TYPES[key]
        try:
            if typ == "int":
                if not re.fullmatch(r"[+-]?\d+", value):
                    raise ValueError(value)
                values[key] = int(value)
            elif typ == "float":
                values[key] = float(value)
            else:
                values[key] = _FLOW_ALIASES[value]
        except (ValueError, KeyError):
            raise ConfigError(f"{where}: bad value {value!r} for {key}") from None
    try:
        return PipelineConfig(**values)  # type: ignore[arg-type]
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return config_from_text(text, str(path))


# -- per-frame processing ------------------------------------------------------


@dataclass(frozen=True)
class FieldResult:
    seg: SegmentationMap
    histograms: np.ndarray
    anomaly: AnomalyMap | None = None


@dataclass(frozen=True)
class FrameResult:
    index: int  # 1-based position in the sequence
    orientation: FieldResult
    magnitude: FieldResult
    fused: np.ndarray | None = None

    @property
    def scored(self) -> bool:
        return self.fused is not None


@dataclass
class PipelineState:
    config: PipelineConfig
    dictionaries: dict[str, Dictionary] = field(default_factory=dict)
    buffers: dict[str, UpdateBuffer] = field(default_factory=dict)
    frame: int = 0
    training: dict[str, list[tuple[np.ndarray, np.ndarray]]] = field(default_factory=lambda: {k: [] for k in KINDS})

    @property
    def trained(self) -> bool:
        return bool(self.dictionaries)


class Detector:
    """Streaming detector; feed flows in order with :meth:`process`."""

    def __init__(self, config: PipelineConfig | None = None) -> None:
        self.config = config or PipelineConfig()
        self.state = PipelineState(self.config)

    def _describe(self, values: np.ndarray, kind: FieldKind) -> tuple[SegmentationMap, np.ndarray]:
        cfg = self.config
        seg = slic(to_gray(values, kind, cfg.v_max), cfg.n_superpixels, cfg.compactness)
        return seg, superpixel_histograms(values, seg, kind, cfg.v_max, cfg.d)

    def _learn(self, kind: FieldKind) -> Dictionary:
        cfg = self.config
        hist = np.vstack([h for h, _ in self.state.training[kind]])
        cent = np.vstack([c for _, c in self.state.training[kind]])
        dictionary = learn_dictionary(hist, cent, kind, cfg.lambda1, cfg.M, cfg.gl_tol, cfg.gl_max_iter)
        if len(dictionary) == 0:
            raise StateError(f"initial {kind} dictionary is empty; lower lambda1")
        if dictionary.warning:
            log.info("%s dictionary: %s", kind, dictionary.warning)
        return dictionary

    def _score(self, kind: FieldKind, seg: SegmentationMap, hist: np.ndarray, diagonal: float) -> AnomalyMap:
        cfg = self.config
        dictionary = self.state.dictionaries[kind]
        if kind == "orientation":
            raw = orientation_scores(hist, seg.centroids, dictionary, cfg.lambda2, cfg.K)
        else:
            raw = magnitude_scores(hist, seg.centroids, dictionary, cfg.K, diagonal)
        return normalize_map(raw, seg)

    def process(self, flow: FlowField) -> FrameResult:
        cfg, st = self.config, self.state
        st.frame += 1
        theta, rho = split_fields(flow)
        parts = {k: self._describe(v, k) for k, v in zip(KINDS, (theta, rho))}

        if st.frame <= cfg.training_frames:
            for k, (seg, hist) in parts.items():
                st.training[k].append((hist, seg.centroids))
            if st.frame == cfg.training_frames:
                for k in KINDS:
                    st.dictionaries[k] = self._learn(k)
                    st.buffers[k] = UpdateBuffer(cfg.T)
                st.training = {k: [] for k in KINDS}
            return FrameResult(st.frame, *(FieldResult(*parts[k]) for k in KINDS))

        diagonal = math.hypot(flow.height, flow.width)
        maps = {k: self._score(k, *parts[k], diagonal) for k in KINDS}
        fused = fuse(maps["orientation"].values, maps["magnitude"].values, cfg.m_fusion_bins)

        # gate on each field's own score, then relearn between frames
        for k in KINDS:
            seg, hist = parts[k]
            keep = maps[k].normalized < cfg.tau_u
            buf = st.buffers[k]
            buf.add(hist[keep], seg.centroids[keep])
            buf.tick()
            if buf.due:
                st.dictionaries[k] = update(st.dictionaries[k], buf, cfg.lambda1, cfg.M, cfg.gl_tol, cfg.gl_max_iter)
        return FrameResult(st.frame, *(FieldResult(*parts[k], maps[k]) for k in KINDS), fused)

    def run(self, flows: Iterable[FlowField]) -> Iterator[FrameResult]:
        for flow in flows:
            yield self.process(flow)


# -- evaluation bookkeeping ----------------------------------------------------


class SequenceScorer:
    """Pooled ROC accumulators for the four compared maps."""

    def __init__(self) -> None:
        self.acc = {name: RocAccumulator() for name in MAP_NAMES}

    def add(self, result: FrameResult, truth: np.ndarray) -> None:
        s_o = result.orientation.anomaly.values  # type: ignore[union-attr]
        s_m = result.magnitude.anomaly.values  # type: ignore[union-attr]
        for name, s in zip(MAP_NAMES, (s_o, s_m, product_fusion(s_o, s_m), result.fused)):
            self.acc[name].add(s, truth)

    def curves(self):
        return {name: a.curve() for name, a in self.acc.items()}

    def row(self, sequence: str, category: str) -> dict[str, object]:
        curves = self.curves()
        return {"sequence": sequence, "category": category, **{f"auc_{n}": c.auc for n, c in curves.items()}}


def evaluate_scene(spec: synth.SceneSpec, config: PipelineConfig | None = None) -> dict[str, object]:
    """Run the detector on a synthetic scene in memory and return its metrics row."""
    det = Detector(config)
    scorer = SequenceScorer()
    for f, flow, truth in synth.iter_frames(spec):
        res = det.process(flow)
        if res.scored:
            scorer.add(res, truth)
    return scorer.row(spec.name, spec.category)


# -- directory-level driver ----------------------------------------------------


def _numeric_key(path: Path) -> tuple[int, str]:
    digits = re.findall(r"\d+", path.stem)
    return (int(digits[-1]) if digits else -1, path.name)


def _listing(directory: Path, suffixes: tuple[str, ...]) -> list[Path]:
    return sorted((p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in suffixes), key=_numeric_key)


def _find_mask(mask_dir: Path, stem: str) -> Path:
    for suffix in IMAGE_SUFFIXES:
        p = mask_dir / f"{stem}{suffix}"
        if p.exists():
            return p
    raise FileNotFoundError(f"no mask for frame {stem} in {mask_dir}")


def _sequence_inputs(input_dir: Path, config: PipelineConfig):
    """Yield ``(stem, frame_path_or_None, flow)``."""
    images = _listing(input_dir, IMAGE_SUFFIXES)
    if config.flow_source == "files":
        if images:
            stems = [(p.stem, p) for p in images]
        else:
            stems = [(p.stem, None) for p in _listing(input_dir, (".flo",))]
        n = len(stems)

        def gen():
            for stem, img in stems:
                flo = input_dir / f"{stem}.flo"
                if not flo.exists():
                    raise FileNotFoundError(f"missing flow file {flo}")
                yield stem, img, read_flo(flo)

    else:
        n = max(len(images) - 1, 0)

        def gen():
            prev = read_gray(images[0])
            for img in images[1:]:
                nxt = read_gray(img)
                yield img.stem, img, horn_schunck(prev, nxt, config.hs_smoothness, config.hs_iterations)
                prev = nxt

    return n, gen()


@dataclass
class SequenceReport:
    name: str
    category: str
    scored_frames: list[str]
    metrics: dict[str, object] | None
    seconds_per_frame: float


def run_sequence(input_dir: str | Path, config: PipelineConfig, output_dir: str | Path) -> SequenceReport:
    """Process one sequence directory and write maps, overlays and metrics.

    ``input_dir`` holds frame images and/or ``.flo`` files named by frame
    number, an optional ``masks/`` directory and an optional ``scene.txt``.
    Anomaly maps are written as 8-bit PGMs under ``orientation/``,
    ``magnitude/`` and ``fused/``; per-superpixel scores go to
    ``scores.csv``. With masks, pooled pixel-wise ROC results are written to
    ``metrics.csv`` and ``roc.csv``; masks without both classes only skip
    the metrics.
    """
    input_dir, out = Path(input_dir), Path(output_dir)
    if not input_dir.is_dir():
        raise FileNotFoundError(f"input directory {input_dir} does not exist")
    n, inputs = _sequence_inputs(input_dir, config)
    if n <= config.training_frames:
        raise ConfigError(f"{input_dir}: {n} frames, need more than training_frames={config.training_frames}")

    category = "unknown"
    if (input_dir / "scene.txt").exists():
        category = synth.read_spec(input_dir / "scene.txt").category
    mask_dir = input_dir / "masks"
    scorer = SequenceScorer() if mask_dir.is_dir() else None

    for sub in ("orientation", "magnitude", "fused"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    det = Detector(config)
    scored: list[str] = []
    start = time.perf_counter()
    with open(out / "scores.csv", "w", newline="") as fh:
        rows = csv.writer(fh, lineterminator="\n")
        rows.writerow(["frame", "field_kind", "label", "cx", "cy", "raw", "normalized"])
        for stem, img, flow in inputs:
            res = det.process(flow)
            if not res.scored:
                continue
            scored.append(stem)
            for k, fr in zip(KINDS, (res.orientation, res.magnitude)):
                write_unit_pgm(out / k / f"{stem}.pgm", fr.anomaly.values)  # type: ignore[union-attr]
                for lab in range(fr.seg.count):
                    cx, cy = fr.seg.centroids[lab]
                    rows.writerow(
                        [stem, k, lab, f"{cx:.3f}", f"{cy:.3f}",
                         f"{fr.anomaly.raw[lab]:.9g}", f"{fr.anomaly.normalized[lab]:.9g}"]  # type: ignore[union-attr]
                    )
            write_unit_pgm(out / "fused" / f"{stem}.pgm", res.fused)  # type: ignore[arg-type]
            if img is not None:
                (out / "overlay").mkdir(exist_ok=True)
                write_overlay(out / "overlay" / f"{stem}.png", read_gray(img), res.fused)  # type: ignore[arg-type]
            if scorer is not None:
                scorer.add(res, read_gray(_find_mask(mask_dir, stem)) > 0.5)
    elapsed = time.perf_counter() - start

    for k in KINDS:
        write_checkpoint(out / f"dictionary_{k}.csv", det.state.dictionaries[k])
    metrics = None
    if scorer is not None:
        try:
            metrics = scorer.row(input_dir.name, category)
        except EvaluationError as exc:
            log.warning("%s: no metrics: %s", input_dir.name, exc)
        else:
            write_metrics_csv(out / "metrics.csv", [metrics])
            write_roc_csv(out / "roc.csv", scorer.curves())
    return SequenceReport(input_dir.name, category, scored, metrics, elapsed / max(n, 1))


def evaluate_directory(scores_dir: str | Path, masks_dir: str | Path, sequence: str = "", category: str = "unknown"):
    """Metrics row from exported PGM maps (``orientation/``, ``magnitude/``,
    ``fused/``) against a mask directory; missing map kinds stay empty."""
    scores_dir, masks_dir = Path(scores_dir), Path(masks_dir)
    fused_dir = scores_dir / "fused" if (scores_dir / "fused").is_dir() else scores_dir
    fused = _listing(fused_dir, IMAGE_SUFFIXES)
    if not fused:
        raise FileNotFoundError(f"no score maps in {fused_dir}")
    have_om = all((scores_dir / k).is_dir() for k in KINDS)
    names = MAP_NAMES if have_om else ("bayes",)
    acc = {n: RocAccumulator() for n in names}
    for p in fused:
        truth = read_gray(_find_mask(masks_dir, p.stem)) > 0.5
        maps = {"bayes": read_gray(p)}
        if have_om:
            maps["orientation"] = read_gray(scores_dir / "orientation" / p.name)
            maps["magnitude"] = read_gray(scores_dir / "magnitude" / p.name)
            maps["product"] = product_fusion(maps["orientation"], maps["magnitude"])
        for n in names:
            acc[n].add(maps[n], truth)
    row: dict[str, object] = {"sequence": sequence or scores_dir.name, "category": category}
    row.update({f"auc_{n}": a.curve().auc for n, a in acc.items()})
    return row
