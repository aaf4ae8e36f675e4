"""Synthetic dash-cam-like flow sequences with planted anomalies.

The background moves with a global ego flow whose speed may vary over time;
each anomaly is a rectangle or ellipse that drifts across the frame and
carries its own flow, expressed relative to the ego flow of that frame.
Every frame draws its noise from a generator seeded by ``(seed, frame)`` so
frames can be produced lazily and in any order.

Frame numbers are 1-based throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from .imaging import write_pgm
from .motion_field import FlowField, write_flo

Shape = Literal["rect", "ellipse"]
Category = Literal["VT", "VC", "PC", "none"]
MIN_ONSET = 11


@dataclass(frozen=True)
class AnomalySpec:
    """A moving region. ``(x, y)`` is its top-left corner at ``onset``; the
    corner moves by ``(vx, vy)`` pixels per frame. Inside the region the flow
    is the ego flow rotated by ``angle`` radians and scaled by ``ratio``."""

    shape: Shape
    onset: int
    x: float
    y: float
    w: float
    h: float
    vx: float = 0.0
    vy: float = 0.0
    ratio: float = 1.0
    angle: float = 0.0
    end: int | None = None  # last active frame, inclusive; None = until the end

    def active(self, frame: int) -> bool:
        return frame >= self.onset and (self.end is None or frame <= self.end)

    def corner(self, frame: int) -> tuple[float, float]:
        k = frame - self.onset
        return self.x + k * self.vx, self.y + k * self.vy


@dataclass(frozen=True)
class SceneSpec:
    name: str
    category: Category
    width: int = 640
    height: int = 480
    frames: int = 180
    ego_u: float = -3.0
    ego_v: float = 3.0
    # piecewise-linear ego speed factor as (frame, factor) knots
    speed_knots: tuple[tuple[float, float], ...] = ((1.0, 1.0),)
    noise_sigma: float = 0.5
    anomalies: tuple[AnomalySpec, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        validate(self)

    def speed_factor(self, frame: int) -> float:
        xs, ys = zip(*self.speed_knots)
        return float(np.interp(frame, xs, ys))

    def ego_flow(self, frame: int) -> tuple[float, float]:
        f = self.speed_factor(frame)
        return self.ego_u * f, self.ego_v * f

    def anomaly_flow(self, a: AnomalySpec, frame: int) -> tuple[float, float]:
        u, v = self.ego_flow(frame)
        c, s = math.cos(a.angle), math.sin(a.angle)
        return a.ratio * (c * u - s * v), a.ratio * (s * u + c * v)


def validate(spec: SceneSpec) -> None:
    """Raise ``ValueError`` for an unusable spec."""
    if spec.width < 8 or spec.height < 8:
        raise ValueError(f"{spec.name}: frame {spec.width}x{spec.height} is too small")
    if spec.frames < 1:
        raise ValueError(f"{spec.name}: frames must be positive")
    if spec.noise_sigma < 0 or not math.isfinite(spec.noise_sigma):
        raise ValueError(f"{spec.name}: noise_sigma must be a non-negative number")
    if not spec.speed_knots:
        raise ValueError(f"{spec.name}: empty speed profile")
    knots = [k for k, _ in spec.speed_knots]
    if any(b <= a for a, b in zip(knots, knots[1:])):
        raise ValueError(f"{spec.name}: speed knots must be strictly increasing")
    for a in spec.anomalies:
        if a.shape not in ("rect", "ellipse"):
            raise ValueError(f"{spec.name}: unknown anomaly shape {a.shape!r}")
        if a.onset < MIN_ONSET:
            raise ValueError(f"{spec.name}: anomaly onset {a.onset} precedes frame {MIN_ONSET}")
        if a.w <= 0 or a.h <= 0 or a.ratio < 0:
            raise ValueError(f"{spec.name}: anomaly size and ratio must be positive")
        last = spec.frames if a.end is None else min(a.end, spec.frames)
        if last < a.onset:
            raise ValueError(f"{spec.name}: anomaly never appears")
        # linear motion: the extreme positions are the endpoints
        for f in (a.onset, last):
            x, y = a.corner(f)
            if x < 0 or y < 0 or x + a.w > spec.width or y + a.h > spec.height:
                raise ValueError(f"{spec.name}: anomaly leaves the frame at frame {f}")


def region_mask(a: AnomalySpec, frame: int, height: int, width: int) -> np.ndarray:
    """Pixels whose centres fall inside the region."""
    x0, y0 = a.corner(frame)
    ys = np.arange(height)[:, None] + 0.5
    xs = np.arange(width)[None, :] + 0.5
    if a.shape == "rect":
        return (xs >= x0) & (xs < x0 + a.w) & (ys >= y0) & (ys < y0 + a.h)
    cx, cy = x0 + a.w / 2, y0 + a.h / 2
    return ((xs - cx) / (a.w / 2)) ** 2 + ((ys - cy) / (a.h / 2)) ** 2 <= 1.0


def frame_truth(spec: SceneSpec, frame: int) -> np.ndarray:
    mask = np.zeros((spec.height, spec.width), dtype=bool)
    for a in spec.anomalies:
        if a.active(frame):
            mask |= region_mask(a, frame, spec.height, spec.width)
    return mask


def frame_flow(spec: SceneSpec, frame: int) -> FlowField:
    """Flow of one frame; noise comes from a generator keyed by ``(seed, frame)``."""
    if not 1 <= frame <= spec.frames:
        raise ValueError(f"frame {frame} outside 1..{spec.frames}")
    shape = (spec.height, spec.width)
    eu, ev = spec.ego_flow(frame)
    u = np.full(shape, eu)
    v = np.full(shape, ev)
    for a in spec.anomalies:
        if a.active(frame):
            m = region_mask(a, frame, spec.height, spec.width)
            au, av = spec.anomaly_flow(a, frame)
            u[m] = au
            v[m] = av
    if spec.noise_sigma > 0:
        rng = np.random.default_rng([spec.seed, frame])
        u += rng.normal(0.0, spec.noise_sigma, shape)
        v += rng.normal(0.0, spec.noise_sigma, shape)
    return FlowField(u, v)


def iter_frames(spec: SceneSpec) -> Iterator[tuple[int, FlowField, np.ndarray]]:
    """Lazily yield ``(frame, flow, truth)`` for every frame."""
    for f in range(1, spec.frames + 1):
        yield f, frame_flow(spec, f), frame_truth(spec, f)


def generate(spec: SceneSpec) -> tuple[list[FlowField], list[np.ndarray]]:
    """All flows and masks of ``spec`` in memory."""
    validate(spec)
    flows, masks = [], []
    for _, flow, mask in iter_frames(spec):
        flows.append(flow)
        masks.append(mask)
    return flows, masks


def _vehicle(onset, x, y, vx, ratio, angle, w=150.0, h=110.0, vy=0.0, shape: Shape = "rect") -> AnomalySpec:
    return AnomalySpec(shape, onset, x, y, w, h, vx, vy, ratio, angle)


def standard_suite() -> list[SceneSpec]:
    """Nine 180-frame 640x480 scenes: three overtaking (VT), four vehicle
    crossing (VC) and two pedestrian crossing (PC) scenes.

    The ego flow points down-left, away from the angular wrap. Overtaking
    vehicles move with the camera but faster, so against the backward-flowing
    background they appear to move forward: their image flow opposes the ego
    flow at 2-3 times its magnitude. Crossing vehicles move orthogonally at a
    comparable speed, pedestrians are small, slow and orthogonal. Two
    overtaking scenes change ego speed during the sequence.
    """
    half_pi = math.pi / 2
    ramp_up = ((1.0, 1.0), (60.0, 1.0), (110.0, 1.6), (180.0, 1.6))
    brake = ((1.0, 1.0), (70.0, 1.0), (120.0, 0.6), (180.0, 0.6))
    return [
        SceneSpec("vt01", "VT", anomalies=(_vehicle(20, 60, 250, 2.0, 2.5, math.pi),), seed=101),
        SceneSpec("vt02", "VT", speed_knots=ramp_up, anomalies=(_vehicle(15, 420, 200, -1.5, 2.0, math.pi),), seed=102),
        SceneSpec("vt03", "VT", speed_knots=brake, anomalies=(_vehicle(30, 100, 120, 1.5, 3.0, math.pi, w=170, h=120, vy=0.5),), seed=103),
        SceneSpec("vc01", "VC", anomalies=(_vehicle(12, 30, 260, 2.5, 1.0, half_pi),), seed=201),
        SceneSpec("vc02", "VC", anomalies=(_vehicle(25, 450, 150, -2.0, 1.2, -half_pi, w=140, h=100),), seed=202),
        SceneSpec("vc03", "VC", anomalies=(_vehicle(18, 80, 60, 2.0, 0.9, half_pi, w=160, h=100, vy=0.6),), seed=203),
        SceneSpec("vc04", "VC", anomalies=(_vehicle(40, 40, 300, 3.0, 1.1, -half_pi, w=130, h=100, shape="ellipse"),), seed=204),
        SceneSpec("pc01", "PC", anomalies=(_vehicle(20, 150, 250, 1.2, 0.5, half_pi, w=50, h=110, shape="ellipse"),), seed=301),
        SceneSpec("pc02", "PC", anomalies=(_vehicle(25, 500, 180, -1.0, 0.6, -half_pi, w=45, h=100, shape="ellipse"),), seed=302),
    ]


# -- key-value serialisation ----------------------------------------------------

_ANOMALY_KEYS = [f.name for f in fields(AnomalySpec)]


def spec_to_text(spec: SceneSpec) -> str:
    lines = [
        f"name = {spec.name}",
        f"category = {spec.category}",
        f"width = {spec.width}",
        f"height = {spec.height}",
        f"frames = {spec.frames}",
        f"ego_u = {spec.ego_u!r}",
        f"ego_v = {spec.ego_v!r}",
        "speed_knots = " + " ".join(f"{k!r}:{v!r}" for k, v in spec.speed_knots),
        f"noise_sigma = {spec.noise_sigma!r}",
        f"seed = {spec.seed}",
    ]
    for a in spec.anomalies:
        lines.append("anomaly = " + " ".join(f"{k}={getattr(a, k)!r}".replace("'", "") for k in _ANOMALY_KEYS))
    return "\n".join(lines) + "\n"


def spec_from_text(text: str) -> SceneSpec:
    kw: dict[str, object] = {}
    anomalies = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        try:
            if key == "anomaly":
                parts = dict(p.split("=", 1) for p in value.split())
                a = {k: parts[k] for k in _ANOMALY_KEYS if k in parts}
                anomalies.append(
                    AnomalySpec(
                        shape=a.pop("shape"),  # type: ignore[arg-type]
                        onset=int(a.pop("onset")),
                        end=None if a.get("end", "None") == "None" else int(a["end"]),
                        **{k: float(v) for k, v in a.items() if k != "end"},
                    )
                )
            elif key == "speed_knots":
                kw[key] = tuple(tuple(float(x) for x in kv.split(":")) for kv in value.split())
            elif key in ("name", "category"):
                kw[key] = value
            elif key in ("width", "height", "frames", "seed"):
                kw[key] = int(value)
            elif key in ("ego_u", "ego_v", "noise_sigma"):
                kw[key] = float(value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return SceneSpec(anomalies=tuple(anomalies), **kw)  # type: ignore[arg-type]


def read_spec(path: str | Path) -> SceneSpec:
    return spec_from_text(Path(path).read_text())


def write_sequence(spec: SceneSpec, out_dir: str | Path) -> Path:
    """Write ``NNNNNN.flo`` flows, ``masks/NNNNNN.pgm`` and ``scene.txt``."""
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    (out / "scene.txt").write_text(spec_to_text(spec))
    for f, flow, mask in iter_frames(spec):
        write_flo(out / f"{f:06d}.flo", flow)
        write_pgm(out / "masks" / f"{f:06d}.pgm", mask.astype(np.uint8) * 255)
    return out


def with_frames(spec: SceneSpec, frames: int) -> SceneSpec:
    """Shortened copy of ``spec`` (anomalies clipped or dropped)."""
    kept = tuple(a for a in spec.anomalies if a.onset <= frames)
    return replace(spec, frames=frames, anomalies=kept)
