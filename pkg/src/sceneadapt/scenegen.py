"""Procedural multi-view street scenes with pixel-perfect labels.

A scene is a painter's-algorithm stack of primitives in a canonical unit
square (x right, y down): building band, sidewalks, road, lane-line
dashes, poles, plus moving vehicles and pedestrians. Each view renders the
same canonical scene through its own affine camera and photometric bias:
view A is neutral, view B is darker, cooler, and slightly sheared and
scaled, which is the domain gap adaptation has to close. Scene identity
controls the palette and layout, so different scenes of the same view
also differ in domain.

Everything is a pure function of (master seed, scene, view, t): layout
from (seed, scene), per-frame lighting jitter and sensor noise from
(seed, scene, view, t), agent positions from closed-form paths in t.
Regenerating a dataset with the same configuration is byte-identical.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import fileio
from .errors import ConfigurationError, DataError
from .geom import AffineTransform, compose, invert

CLASS_TAXONOMIES = {
    "desk8": ["unlabeled", "building", "road", "sidewalk", "lane_line",
              "vehicle", "pedestrian", "pole"],
    "full13": ["unlabeled", "building", "fence", "pedestrian", "pole",
               "lane_line", "road", "sidewalk", "vegetation", "vehicle",
               "wall", "traffic_sign", "other"],
}

# Fixed camera character of the two views. The cross-view gap is mostly
# geometric: view B sits at a different attitude (rotation-like shear,
# anisotropic scale, shift, in canonical units), with only a mild
# photometric offset on top. VIEW_PHOTOMETRICS entries are (brightness,
# tint, sensor noise sigma) per view id.
VIEW_B_LINEAR = ((1.12, 0.20), (-0.18, 1.06))
VIEW_B_OFFSET = (0.05, -0.03)
VIEW_PHOTOMETRICS = {0: (1.0, (1.0, 1.0, 1.0), 0.01),
                     1: (0.96, (0.98, 1.0, 1.02), 0.015)}

BRIGHTNESS_JITTER = 0.08
TINT_JITTER = 0.02


@dataclass(frozen=True)
class Primitive:
    """A filled shape in canonical coordinates: kind 'rect' (x0, y0, x1, y1)
    or 'disk' (cx, cy, r)."""

    kind: str
    class_id: int
    color: tuple[float, float, float]
    coords: tuple[float, ...]

    def inside(self, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
        if self.kind == "rect":
            x0, y0, x1, y1 = self.coords
            return (cx >= x0) & (cx < x1) & (cy >= y0) & (cy < y1)
        if self.kind == "disk":
            x, y, r = self.coords
            return (cx - x) ** 2 + (cy - y) ** 2 <= r * r
        raise ConfigurationError(f"unknown primitive kind {self.kind!r}")


@dataclass(frozen=True)
class AgentSpec:
    """A moving rectangle following a wrapping linear path in t."""

    class_id: int
    color: tuple[float, float, float]
    width: float
    height: float
    lane_y: float
    x_start: float
    speed: float

    def primitive_at(self, t: int) -> Primitive:
        period = 1.0 + 2.0 * self.width
        x = -self.width + (self.x_start + self.width + self.speed * t) % period
        return Primitive("rect", self.class_id, self.color,
                         (x, self.lane_y, x + self.width, self.lane_y + self.height))


@dataclass(frozen=True)
class SceneSpec:
    scene_id: int
    master_seed: int
    class_names: tuple[str, ...]
    statics: tuple[Primitive, ...]
    agents: tuple[AgentSpec, ...]


@dataclass(frozen=True)
class ViewSpec:
    view_id: int
    transform: AffineTransform
    brightness: float = 1.0
    tint: tuple[float, float, float] = (1.0, 1.0, 1.0)
    noise: float = 0.01


@dataclass(frozen=True)
class Frame:
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    mask: np.ndarray   # (H, W) uint8 class ids
    scene_id: int
    view_id: int
    t: int


def _jitter(rng, color, amount=0.05):
    c = np.asarray(color) + rng.uniform(-amount, amount, 3)
    return tuple(float(v) for v in np.clip(c, 0.02, 0.98))


# Each scene draws one per-channel color gain from this range, applied to
# every base color it uses. The same class therefore wears noticeably
# different colors in different scenes, while the two views of one scene
# stay consistent; appearance carries across views, not across scenes.
SCENE_GAIN_RANGE = (0.70, 1.30)


def build_scene(scene_id: int, master_seed: int,
                class_names=CLASS_TAXONOMIES["desk8"]) -> SceneSpec:
    """Sample the layout, ambience, and palette of one scene, deterministically."""
    names = list(class_names)
    if names[0] != "unlabeled":
        raise ConfigurationError("class 0 must be 'unlabeled'; it is the fill class")
    cid = {n: i for i, n in enumerate(names)}
    rng = np.random.default_rng((master_seed, scene_id))
    gain = rng.uniform(*SCENE_GAIN_RANGE, 3)

    def shade(color, amount=0.05):
        return _jitter(rng, np.asarray(color) * gain, amount)

    statics: list[Primitive] = []

    def rect(name, color, x0, y0, x1, y1):
        statics.append(Primitive("rect", cid[name], color, (x0, y0, x1, y1)))

    # Vertical band structure, top to bottom.
    sky_h = rng.uniform(0.05, 0.10)
    wall_y = rng.uniform(0.32, 0.40)
    road_top = wall_y + rng.uniform(0.08, 0.12)
    road_bot = road_top + rng.uniform(0.30, 0.36)
    side_bot = road_bot + rng.uniform(0.08, 0.12)

    sky = shade((0.17, 0.20, 0.27), 0.04)
    margin = shade((0.12, 0.12, 0.13), 0.03)
    building_base = shade((0.46, 0.36, 0.30), 0.10)
    road_gray = shade((0.30, 0.30, 0.31), 0.04)
    side_gray = shade((0.58, 0.57, 0.55), 0.05)

    rect("unlabeled", sky, 0.0, 0.0, 1.0, 1.0)
    rect("unlabeled", margin, 0.0, side_bot, 1.0, 1.0)

    # Buildings: adjacent slabs with uneven rooflines and shades.
    x = 0.0
    while x < 1.0:
        w = rng.uniform(0.15, 0.30)
        top = sky_h + rng.uniform(0.0, 0.07)
        rect("building", _jitter(rng, building_base, 0.06), x, top, min(x + w, 1.0), wall_y)
        x += w

    rect("sidewalk", side_gray, 0.0, wall_y, 1.0, road_top)
    rect("road", road_gray, 0.0, road_top, 1.0, road_bot)
    rect("sidewalk", _jitter(rng, side_gray, 0.03), 0.0, road_bot, 1.0, side_bot)
    if "wall" in cid:
        rect("wall", shade((0.42, 0.40, 0.38)), 0.0, wall_y, 1.0, wall_y + 0.025)

    if "vegetation" in cid:
        for _ in range(3):
            statics.append(Primitive("disk", cid["vegetation"],
                                     shade((0.18, 0.45, 0.20)),
                                     (rng.uniform(0.05, 0.95), wall_y, rng.uniform(0.03, 0.05))))
    if "fence" in cid:
        fy = road_bot + rng.uniform(0.025, 0.045)
        rect("fence", shade((0.52, 0.42, 0.26)), 0.0, fy, 1.0, fy + 0.022)

    # Dashed lane line along the road center.
    lane_color = shade((0.92, 0.90, 0.78), 0.03)
    lane_y = (road_top + road_bot) / 2.0
    dash_w, gap = 0.07, rng.uniform(0.04, 0.06)
    x = -rng.uniform(0.0, dash_w)
    while x < 1.0:
        rect("lane_line", lane_color, max(x, 0.0), lane_y - 0.018, min(x + dash_w, 1.0),
             lane_y + 0.018)
        x += dash_w + gap

    pole_color = shade((0.28, 0.22, 0.18), 0.04)
    for _ in range(int(rng.integers(3, 6))):
        px = rng.uniform(0.05, 0.95)
        ph = rng.uniform(0.12, 0.18)
        rect("pole", pole_color, px, road_top - ph, px + 0.02, road_top)

    if "traffic_sign" in cid:
        for _ in range(2):
            sx = rng.uniform(0.1, 0.9)
            rect("pole", pole_color, sx, road_bot + 0.01, sx + 0.018, side_bot)
            rect("traffic_sign", shade((0.85, 0.74, 0.20)),
                 sx - 0.012, road_bot - 0.035, sx + 0.030, road_bot + 0.01)
    if "other" in cid:
        ox = rng.uniform(0.1, 0.9)
        rect("other", shade((0.55, 0.30, 0.55)), ox, wall_y + 0.035, ox + 0.05, road_top)

    vehicle_palette = [(0.20, 0.35, 0.75), (0.15, 0.55, 0.60),
                       (0.62, 0.62, 0.66), (0.12, 0.12, 0.18)]
    agents: list[AgentSpec] = []
    lanes = (road_top + 0.03, lane_y + 0.02)
    for i in range(int(rng.integers(2, 4))):
        w, h = rng.uniform(0.10, 0.15), rng.uniform(0.05, 0.07)
        lane = lanes[i % 2]
        agents.append(AgentSpec(
            cid["vehicle"], shade(vehicle_palette[int(rng.integers(4))]),
            w, h, lane, rng.uniform(0.0, 1.0),
            float(rng.uniform(0.012, 0.02)) * (1 if i % 2 == 0 else -1)))

    ped_palette = [(0.80, 0.30, 0.20), (0.85, 0.45, 0.15), (0.75, 0.20, 0.35)]
    walks = (wall_y + 0.01, road_bot + 0.015)
    for i in range(int(rng.integers(2, 5))):
        agents.append(AgentSpec(
            cid["pedestrian"], shade(ped_palette[int(rng.integers(3))]),
            0.03, 0.06, walks[i % 2] + rng.uniform(0.0, 0.02), rng.uniform(0.0, 1.0),
            float(rng.uniform(0.002, 0.006)) * (1 if i % 2 == 0 else -1)))

    return SceneSpec(scene_id, master_seed, tuple(names), tuple(statics), tuple(agents))


def make_views(width: int, height: int) -> list[ViewSpec]:
    """The two cameras, with the resolution baked into their transforms."""
    to_pixels = AffineTransform(np.array([[float(width), 0.0, 0.0],
                                          [0.0, float(height), 0.0]]))
    perturb = AffineTransform(np.array([
        [VIEW_B_LINEAR[0][0], VIEW_B_LINEAR[0][1], VIEW_B_OFFSET[0]],
        [VIEW_B_LINEAR[1][0], VIEW_B_LINEAR[1][1], VIEW_B_OFFSET[1]],
    ]))
    b_a, t_a, n_a = VIEW_PHOTOMETRICS[0]
    b_b, t_b, n_b = VIEW_PHOTOMETRICS[1]
    return [ViewSpec(0, to_pixels, b_a, t_a, n_a),
            ViewSpec(1, compose(to_pixels, perturb), b_b, t_b, n_b)]


def _canonical_grid(view: ViewSpec, width: int, height: int):
    inv = invert(view.transform)
    xs = np.arange(width, dtype=np.float64) + 0.5
    ys = np.arange(height, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    return inv.apply(gx, gy)


def render_frame(scene: SceneSpec, view: ViewSpec, t: int, resolution=(64, 64),
                 include_agents: bool = True, lighting: bool = True) -> Frame:
    """Render one frame; bit-identical for identical arguments."""
    width, height = int(resolution[0]), int(resolution[1])
    cx, cy = _canonical_grid(view, width, height)
    image = np.zeros((height, width, 3), dtype=np.float32)
    mask = np.zeros((height, width), dtype=np.uint8)

    prims = list(scene.statics)
    if include_agents:
        prims.extend(agent.primitive_at(t) for agent in scene.agents)
    for prim in prims:
        hit = prim.inside(cx, cy)
        image[hit] = np.asarray(prim.color, dtype=np.float32)
        mask[hit] = prim.class_id

    if lighting:
        rng = np.random.default_rng((scene.master_seed, scene.scene_id, view.view_id, t))
        brightness = view.brightness * rng.uniform(1.0 - BRIGHTNESS_JITTER,
                                                   1.0 + BRIGHTNESS_JITTER)
        tint = np.asarray(view.tint) * rng.uniform(1.0 - TINT_JITTER, 1.0 + TINT_JITTER, 3)
        factor = (brightness * tint).astype(np.float32)
        noise = rng.normal(0.0, view.noise, image.shape).astype(np.float32)
        image = np.clip(image * factor + noise, 0.0, 1.0)
    return Frame(image, mask, scene.scene_id, view.view_id, int(t))


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    scenes: tuple[int, ...] = (1, 2, 3)
    frames_per_subset: int = 300
    width: int = 64
    height: int = 64
    taxonomy: str = "desk8"

    def __post_init__(self):
        if self.taxonomy not in CLASS_TAXONOMIES:
            raise ConfigurationError(
                f"unknown taxonomy {self.taxonomy!r}; pick from {sorted(CLASS_TAXONOMIES)}")
        if len(set(self.scenes)) != len(self.scenes):
            raise ConfigurationError(f"scene ids must be pairwise distinct, got {self.scenes}")
        if self.frames_per_subset < 1:
            raise ConfigurationError("frames_per_subset must be >= 1")
        if self.width < 8 or self.height < 8:
            raise ConfigurationError("resolution must be at least 8x8")

    @property
    def class_names(self) -> list[str]:
        return CLASS_TAXONOMIES[self.taxonomy]

    @staticmethod
    def from_dict(raw: dict) -> "GenConfig":
        known = {f.name for f in fields(GenConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"unknown gen config field(s): {sorted(unknown)}")
        coerced = dict(raw)
        if "scenes" in coerced:
            coerced["scenes"] = tuple(int(s) for s in coerced["scenes"])
        try:
            return GenConfig(**coerced)
        except TypeError as e:
            raise ConfigurationError(str(e)) from None


@dataclass(frozen=True)
class FrameRecord:
    image_path: str
    mask_path: str
    scene: int
    view: int
    t: int
    split: str


@dataclass
class DatasetManifest:
    class_names: list[str]
    width: int
    height: int
    seed: int
    views: list[AffineTransform]
    frames: list[FrameRecord]
    base_dir: str = ""

    def to_json_obj(self) -> dict:
        return {
            "classes": list(self.class_names),
            "resolution": {"w": self.width, "h": self.height},
            "seed": self.seed,
            "views": [v.matrix.reshape(-1).tolist() for v in self.views],
            "frames": [{"image": f.image_path, "mask": f.mask_path, "scene": f.scene,
                        "view": f.view, "t": f.t, "split": f.split}
                       for f in self.frames],
        }


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    fileio.atomic_write_json(path, manifest.to_json_obj())


def load_manifest(path: str) -> DatasetManifest:
    import json
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid manifest JSON at line {e.lineno}: {e.msg}") from None
    try:
        views = [AffineTransform(np.asarray(v, dtype=np.float64).reshape(2, 3))
                 for v in obj["views"]]
        frames = [FrameRecord(f["image"], f["mask"], int(f["scene"]), int(f["view"]),
                              int(f["t"]), f["split"]) for f in obj["frames"]]
        return DatasetManifest(list(obj["classes"]), int(obj["resolution"]["w"]),
                               int(obj["resolution"]["h"]), int(obj["seed"]), views, frames,
                               base_dir=os.path.dirname(os.path.abspath(path)))
    except (KeyError, ValueError) as e:
        raise DataError(f"{path}: malformed manifest: {e}") from None


def split_assignment(n: int, seed: int, scene: int, view: int) -> list[str]:
    """60/20/20 split of frame indices by seeded shuffle, per scene and view."""
    rng = np.random.default_rng((seed, scene, view, 20_60_20))
    order = rng.permutation(n)
    n_train = int(round(0.6 * n))
    n_val = int(round(0.2 * n))
    splits = [""] * n
    for rank, idx in enumerate(order):
        if rank < n_train:
            splits[idx] = "train"
        elif rank < n_train + n_val:
            splits[idx] = "val"
        else:
            splits[idx] = "test"
    return splits


def _frame_name(scene: int, view: int, t: int) -> str:
    return f"s{scene}_v{view}_t{t:04d}"


def _render_subset(config: GenConfig, scene_id: int, view_id: int, out_dir: str) -> list[FrameRecord]:
    scene = build_scene(scene_id, config.seed, config.class_names)
    view = make_views(config.width, config.height)[view_id]
    splits = split_assignment(config.frames_per_subset, config.seed, scene_id, view_id)
    records = []
    for t in range(config.frames_per_subset):
        frame = render_frame(scene, view, t, (config.width, config.height))
        name = _frame_name(scene_id, view_id, t)
        image_rel = os.path.join("images", name + ".ppm")
        mask_rel = os.path.join("masks", name + ".pgm")
        fileio.write_ppm(os.path.join(out_dir, image_rel), frame.image)
        fileio.write_pgm(os.path.join(out_dir, mask_rel), frame.mask)
        records.append(FrameRecord(image_rel, mask_rel, scene_id, view_id, t, splits[t]))
    return records


def generate_dataset(config: GenConfig, out_dir: str, jobs: int = 1) -> DatasetManifest:
    """Render every (scene, view, t) frame to disk and write the manifest.

    The manifest is written last and atomically, so an interrupted run
    never leaves a readable but incomplete dataset behind.
    """
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    views = make_views(config.width, config.height)
    tasks = [(scene, view.view_id) for scene in config.scenes for view in views]

    frames: list[FrameRecord] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_render_subset, config, s, v, out_dir) for s, v in tasks]
            for future in futures:
                frames.extend(future.result())
    else:
        for s, v in tasks:
            frames.extend(_render_subset(config, s, v, out_dir))

    manifest = DatasetManifest(list(config.class_names), config.width, config.height,
                               config.seed, [v.transform for v in views], frames,
                               base_dir=os.path.abspath(out_dir))
    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest
