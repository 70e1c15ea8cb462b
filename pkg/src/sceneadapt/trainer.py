"""Training loops, evaluation, and the experiment matrix.

Five run kinds share this module. NA trains on the source subset and is
judged on the target. FT trains on the target subset with its labels, an
upper bound rather than an adaptation method. WARP trains on source
frames pre-warped into the target view geometry. SceneAdapt alternates
one labeled source sample and one unlabeled target sample per iteration,
updating the discriminator and then the segmentation and reconstruction
networks jointly.

Target labels stay out of reach of the adaptation path by construction:
the target side of a DomainSampler is an ImageFrameSet, which has no
label field at all. FT is exempt because it trains ON the target domain
with its ground truth, which is exactly what that baseline means.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import fileio
from .diffcore import Tape, Tensor, add, backward, scale, softmax_channels
from .errors import ConfigurationError, DataError, NumericError
from .geom import AffineTransform, inter_view_transform, warp_image, warp_labels
from .losses import gan_d_loss, gan_g_loss, rec_loss, sem_loss, total_loss
from .metrics import ConfusionMatrix
from .nets import (build_d, build_f, build_g, f_from_state, load_checkpoint,
                   load_params, save_checkpoint)
from .optim import Adam, PolySchedule, SgdMomentum, zero_grads
from .scenegen import DatasetManifest, FrameRecord, load_manifest

METHODS = ("NA", "FT", "WARP", "SceneAdapt")
ADAPTATION_KINDS = ("point-of-view", "scene")
VIEW_LETTERS = "AB"

SGD_LR = 0.007
ADAM_LR = 0.0002
SUPERVISED_EPOCHS = 40
SCENEADAPT_ITERATIONS = 3000
BATCH_SIZE = 4
EVAL_EVERY = 250


@dataclass(frozen=True)
class SubsetId:
    """One camera view of one scene, e.g. A1 = view A, scene 1."""

    view: int
    scene: int

    @staticmethod
    def parse(text: str) -> "SubsetId":
        if len(text) >= 2 and text[0] in VIEW_LETTERS and text[1:].isdigit():
            return SubsetId(VIEW_LETTERS.index(text[0]), int(text[1:]))
        raise ConfigurationError(
            f"bad subset id {text!r}; expected a view letter in {VIEW_LETTERS} "
            f"followed by a scene number, like A1")

    def __str__(self) -> str:
        return f"{VIEW_LETTERS[self.view]}{self.scene}"


@dataclass
class EvalResult:
    method: str
    subset: str
    split: str
    iteration: int
    c_acc: float
    m_iou: float
    per_class_acc: list
    per_class_iou: list

    def to_json_obj(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat description of one run; see make_config for method defaults."""

    method: str
    source: str
    target: str
    dataset: str
    out_dir: str
    adaptation: str = "point-of-view"
    loss_sem: bool = True
    loss_rec: bool = False
    loss_gan: bool = False
    optimizer: str = "sgd"
    lr: float = SGD_LR
    momentum: float = 0.9
    epochs: int = SUPERVISED_EPOCHS
    iterations: int = SCENEADAPT_ITERATIONS
    batch_size: int = BATCH_SIZE
    eval_every: int = EVAL_EVERY
    width: int = 16
    seed: int = 0
    saturating_gan: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; pick from {METHODS}")
        if self.adaptation not in ADAPTATION_KINDS:
            raise ConfigurationError(
                f"unknown adaptation kind {self.adaptation!r}; pick from {ADAPTATION_KINDS}")
        src = SubsetId.parse(self.source)
        tgt = SubsetId.parse(self.target)
        if self.adaptation == "point-of-view":
            if src.scene != tgt.scene or src.view == tgt.view:
                raise ConfigurationError(
                    f"point-of-view pair {src}-{tgt} must share a scene and differ in view")
        else:
            if src.scene == tgt.scene or src.view != tgt.view:
                raise ConfigurationError(
                    f"scene pair {src}-{tgt} must share a view and differ in scene")
        if self.method == "WARP" and self.adaptation == "scene":
            raise ConfigurationError(
                "WARP needs a known inter-view transform; scene pairs have none")
        if not self.loss_sem:
            raise ConfigurationError("every method trains with the semantic loss enabled")
        if self.method == "SceneAdapt":
            if not (self.loss_rec or self.loss_gan):
                raise ConfigurationError(
                    "SceneAdapt needs at least one of the rec and gan losses")
        elif self.loss_rec or self.loss_gan:
            raise ConfigurationError(
                f"{self.method} is supervised; rec and gan losses do not apply")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        for name in ("lr", "momentum"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        for name in ("epochs", "iterations", "batch_size", "eval_every", "width"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        return self

    def to_json_obj(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_json_obj(), sort_keys=True).encode("utf-8")
        return hashlib.md5(blob).hexdigest()


_METHOD_DEFAULTS = {
    "NA": dict(optimizer="sgd", lr=SGD_LR, loss_rec=False, loss_gan=False),
    "FT": dict(optimizer="sgd", lr=SGD_LR, loss_rec=False, loss_gan=False),
    "WARP": dict(optimizer="sgd", lr=SGD_LR, loss_rec=False, loss_gan=False),
    "SceneAdapt": dict(optimizer="adam", lr=ADAM_LR, loss_rec=True, loss_gan=True),
}


def make_config(method: str, source: str, target: str, dataset: str, out_dir: str,
                **overrides) -> ExperimentConfig:
    """Build a validated config with the method's optimizer and loss defaults."""
    if method not in _METHOD_DEFAULTS:
        raise ConfigurationError(f"unknown method {method!r}; pick from {METHODS}")
    kwargs = dict(_METHOD_DEFAULTS[method])
    kwargs.update(overrides)
    return ExperimentConfig(method=method, source=source, target=target,
                            dataset=dataset, out_dir=out_dir, **kwargs).validate()


def config_from_dict(obj: dict) -> ExperimentConfig:
    known = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(obj) - set(known))
    if unknown:
        raise ConfigurationError(f"unknown config fields: {', '.join(unknown)}")
    for name in ("method", "source", "target", "dataset", "out_dir"):
        if name not in obj:
            raise ConfigurationError(f"config is missing required field {name!r}")
    rest = {k: v for k, v in obj.items()
            if k not in ("method", "source", "target", "dataset", "out_dir")}
    return make_config(obj["method"], obj["source"], obj["target"],
                       obj["dataset"], obj["out_dir"], **rest)


# --------------------------------------------------------------- data access


@dataclass
class LabeledFrameSet:
    """Images with ground-truth masks; the only set a supervised loss can see."""

    images: list
    labels: list
    names: list


@dataclass
class ImageFrameSet:
    """Images only. There is no label field, so adaptation code cannot read one."""

    images: list
    names: list


class FrameStore:
    """Read-side view of a generated dataset directory."""

    def __init__(self, root: str):
        self.root = root
        self.manifest: DatasetManifest = load_manifest(os.path.join(root, "manifest.json"))
        self.classes = list(self.manifest.class_names)

    def frames(self, subset: SubsetId, split: str) -> list[FrameRecord]:
        rows = [f for f in self.manifest.frames
                if f.scene == subset.scene and f.view == subset.view and f.split == split]
        if not rows:
            raise DataError(f"dataset has no frames for subset {subset}, split {split!r}")
        return sorted(rows, key=lambda f: f.t)

    def _path(self, rel: str) -> str:
        return os.path.join(self.manifest.base_dir or self.root, rel)

    def load_image(self, rec: FrameRecord) -> np.ndarray:
        raw = fileio.read_ppm(self._path(rec.image_path))
        return raw.transpose(2, 0, 1).astype(np.float32) / 255.0

    def load_mask(self, rec: FrameRecord) -> np.ndarray:
        return fileio.read_pgm(self._path(rec.mask_path)).astype(np.int64)

    def labeled_set(self, subset: SubsetId, split: str) -> LabeledFrameSet:
        rows = self.frames(subset, split)
        return LabeledFrameSet(images=[self.load_image(r) for r in rows],
                               labels=[self.load_mask(r) for r in rows],
                               names=[r.image_path for r in rows])

    def image_set(self, subset: SubsetId, split: str) -> ImageFrameSet:
        rows = self.frames(subset, split)
        return ImageFrameSet(images=[self.load_image(r) for r in rows],
                             names=[r.image_path for r in rows])

    def inter_view(self, src: SubsetId, tgt: SubsetId) -> AffineTransform:
        return inter_view_transform(self.manifest, src.view, tgt.view)


class DomainSampler:
    """Alternating source/target draws with independent seeded shuffles."""

    def __init__(self, source: LabeledFrameSet, target: ImageFrameSet, seed: int):
        self.source = source
        self.target = target
        self._rng = np.random.default_rng((seed, 0x5A))
        self._src_queue: list[int] = []
        self._tgt_queue: list[int] = []

    def _draw(self, queue: list[int], n: int) -> int:
        if not queue:
            queue.extend(self._rng.permutation(n).tolist())
        return queue.pop()

    def next_pair(self):
        """One (image, labels) source sample and one target image, batch axis added."""
        i = self._draw(self._src_queue, len(self.source.images))
        j = self._draw(self._tgt_queue, len(self.target.images))
        x_s = self.source.images[i][None]
        y_s = self.source.labels[i][None]
        x_t = self.target.images[j][None]
        return x_s, y_s, x_t


# --------------------------------------------------------------- evaluation


def predict_labels(f_net, images: np.ndarray) -> np.ndarray:
    """Per-pixel argmax of softmax class probabilities, [B, H, W] ints."""
    probs = softmax_channels(f_net.forward(Tensor(images)))
    return np.argmax(probs.data, axis=1)


def evaluate_net(f_net, frames: LabeledFrameSet, num_classes: int, method: str,
                 subset: str, split: str, iteration: int, batch: int = 8) -> EvalResult:
    cm = ConfusionMatrix(num_classes)
    for start in range(0, len(frames.images), batch):
        chunk = frames.images[start:start + batch]
        preds = predict_labels(f_net, np.stack(chunk))
        gts = np.stack(frames.labels[start:start + batch])
        cm.accumulate(preds, gts)
    acc_mean, acc_per = cm.per_class_accuracy()
    iou_mean, iou_per = cm.mean_iou()
    return EvalResult(method=method, subset=subset, split=split, iteration=iteration,
                      c_acc=acc_mean, m_iou=iou_mean,
                      per_class_acc=acc_per, per_class_iou=iou_per)


def evaluate_checkpoint(ckpt_path: str, dataset: str, subset: str, split: str,
                        method: str = "eval") -> EvalResult:
    """Evaluate a saved run with the segmentation network alone.

    Only parameters under the F. prefix are touched; the reconstruction
    and discriminator networks are never instantiated here.
    """
    ckpt = load_checkpoint(ckpt_path)
    f_net = f_from_state(ckpt.params)
    store = FrameStore(dataset)
    frames = store.labeled_set(SubsetId.parse(subset), split)
    return evaluate_net(f_net, frames, len(store.classes), method, subset, split,
                        ckpt.iteration)


# --------------------------------------------------------------- run outputs


def _fmt(value) -> str:
    return "" if value is None else f"{value:.6f}"


def _write_loss_csv(path: str, rows: list) -> None:
    lines = ["iteration,l_sem,l_rec,l_gan_g,l_gan_d,total"]
    for it, l_sem, l_rec, l_gan_g, l_gan_d, total in rows:
        lines.append(f"{it},{_fmt(l_sem)},{_fmt(l_rec)},{_fmt(l_gan_g)},"
                     f"{_fmt(l_gan_d)},{_fmt(total)}")
    fileio.atomic_write_text(path, "\n".join(lines) + "\n")


def _write_eval_csv(path: str, history: list[EvalResult]) -> None:
    lines = ["method,subset,split,iteration,c_acc,m_iou"]
    for r in history:
        lines.append(f"{r.method},{r.subset},{r.split},{r.iteration},"
                     f"{r.c_acc:.6f},{r.m_iou:.6f}")
    fileio.atomic_write_text(path, "\n".join(lines) + "\n")


def _check_finite(values: dict, iteration: int) -> None:
    for name, v in values.items():
        if v is not None and not math.isfinite(v):
            raise NumericError(f"non-finite {name} ({v}) at iteration {iteration}")


class _RunDir:
    """Output directory of one run; the config echo lands before any work."""

    def __init__(self, config: ExperimentConfig):
        self.path = config.out_dir
        os.makedirs(self.path, exist_ok=True)
        fileio.atomic_write_json(os.path.join(self.path, "config.json"),
                                 config.to_json_obj())

    def finish(self, config: ExperimentConfig, params: dict, best_iteration: int,
               loss_rows: list, history: list[EvalResult],
               final_evals: dict[str, EvalResult], classes: list[str]) -> None:
        _write_loss_csv(os.path.join(self.path, "losses.csv"), loss_rows)
        _write_eval_csv(os.path.join(self.path, "evals.csv"),
                        history + list(final_evals.values()))
        save_checkpoint(params, os.path.join(self.path, "best.ckpt"),
                        iteration=best_iteration, config_digest=config.digest())
        summary = {
            "method": config.method,
            "source": config.source,
            "target": config.target,
            "adaptation": config.adaptation,
            "seed": config.seed,
            "best_iteration": best_iteration,
            "classes": classes,
            "final": {name: r.to_json_obj() for name, r in final_evals.items()},
        }
        fileio.atomic_write_json(os.path.join(self.path, "results.json"), summary)


def _snapshot(params: dict) -> dict:
    return {name: p.data.copy() for name, p in params.items()}


def _restore(params: dict, snapshot: dict) -> None:
    for name, p in params.items():
        p.data = snapshot[name].copy()


# --------------------------------------------------------------- supervised


def _warped_labeled_set(frames: LabeledFrameSet, t: AffineTransform) -> LabeledFrameSet:
    images = [warp_image(img.transpose(1, 2, 0), t).transpose(2, 0, 1)
              for img in frames.images]
    labels = [warp_labels(lab, t) for lab in frames.labels]
    return LabeledFrameSet(images=images, labels=labels, names=list(frames.names))


def train_supervised(config: ExperimentConfig,
                     warp_transform: AffineTransform | None = None):
    """Train F with the semantic loss alone; returns (net, eval history).

    NA and WARP train on the source subset, FT on the target subset with
    its ground truth. WARP first warps every training and validation
    frame into the target view geometry; pass warp_transform to override
    the manifest's inter-view transform.
    """
    config.validate()
    if config.method not in ("NA", "FT", "WARP"):
        raise ConfigurationError(f"train_supervised cannot run method {config.method}")
    run = _RunDir(config)
    store = FrameStore(config.dataset)
    src = SubsetId.parse(config.source)
    tgt = SubsetId.parse(config.target)

    train_subset = tgt if config.method == "FT" else src
    train_set = store.labeled_set(train_subset, "train")
    val_set = store.labeled_set(train_subset, "val")
    if config.method == "WARP":
        t = warp_transform if warp_transform is not None else store.inter_view(src, tgt)
        train_set = _warped_labeled_set(train_set, t)
        val_set = _warped_labeled_set(val_set, t)

    num_classes = len(store.classes)
    f_net = build_f(num_classes, width=config.width, seed=config.seed)
    per_epoch = (len(train_set.images) + config.batch_size - 1) // config.batch_size
    total_iters = config.epochs * per_epoch
    schedule = PolySchedule(total_iterations=total_iters)
    opt = SgdMomentum(lr=config.lr, momentum=config.momentum)
    shuffle_rng = np.random.default_rng((config.seed, 0x51))

    loss_rows = []
    history: list[EvalResult] = []
    best_iou, best_params, best_it = -1.0, _snapshot(f_net.params), 0
    iteration = 0

    def maybe_eval(final: bool = False):
        nonlocal best_iou, best_params, best_it
        if iteration % config.eval_every != 0 and not final:
            return
        if history and history[-1].iteration == iteration:
            return
        result = evaluate_net(f_net, val_set, num_classes, config.method,
                              str(train_subset), "val", iteration)
        history.append(result)
        if result.m_iou > best_iou:
            best_iou, best_params, best_it = result.m_iou, _snapshot(f_net.params), iteration

    for _ in range(config.epochs):
        order = shuffle_rng.permutation(len(train_set.images))
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            x = Tensor(np.stack([train_set.images[i] for i in idx]))
            y = np.stack([train_set.labels[i] for i in idx])
            with Tape() as tape:
                loss = sem_loss(f_net.forward(x), y)
            value = float(loss.data)
            _check_finite({"l_sem": value}, iteration)
            zero_grads(f_net.params)
            backward(tape, loss)
            opt.step(f_net.params, schedule.multiplier(iteration))
            iteration += 1
            loss_rows.append((iteration, value, None, None, None, value))
            maybe_eval()
    maybe_eval(final=True)

    _restore(f_net.params, best_params)
    final_evals = {
        "selection_val": evaluate_net(f_net, val_set, num_classes, config.method,
                                      str(train_subset), "val", best_it),
        "target_test": evaluate_net(f_net, store.labeled_set(tgt, "test"), num_classes,
                                    config.method, str(tgt), "test", best_it),
        "source_test": evaluate_net(f_net, store.labeled_set(src, "test"), num_classes,
                                    config.method, str(src), "test", best_it),
    }
    run.finish(config, {f"F.{k}": v for k, v in f_net.params.items()}, best_it,
               loss_rows, history, final_evals, store.classes)
    return f_net, history


# --------------------------------------------------------------- adversarial


def _mean_pair(a, b):
    return scale(add(a, b), 0.5)


def train_sceneadapt(config: ExperimentConfig):
    """Adversarial adaptation loop; returns (f, g, d, eval history).

    Per iteration: one source sample and one target sample; if the gan
    loss is on, one discriminator update on real images versus detached
    reconstructions; then one joint F+G update where the semantic term
    sees only the source sample and rec/gan see both domains. d is None
    when the gan loss is disabled.
    """
    config.validate()
    if config.method != "SceneAdapt":
        raise ConfigurationError(f"train_sceneadapt cannot run method {config.method}")
    run = _RunDir(config)
    store = FrameStore(config.dataset)
    src = SubsetId.parse(config.source)
    tgt = SubsetId.parse(config.target)

    source_set = store.labeled_set(src, "train")
    target_set = store.image_set(tgt, "train")
    val_set = store.labeled_set(src, "val")
    sampler = DomainSampler(source_set, target_set, config.seed)

    num_classes = len(store.classes)
    f_net = build_f(num_classes, width=config.width, seed=config.seed)
    g_net = build_g(num_classes, width=config.width, seed=config.seed)
    d_net = build_d(width=config.width, seed=config.seed) if config.loss_gan else None

    fg_params = {f"F.{k}": v for k, v in f_net.params.items()}
    fg_params.update({f"G.{k}": v for k, v in g_net.params.items()})
    opt_fg = Adam(lr=config.lr)
    opt_d = Adam(lr=config.lr) if d_net is not None else None

    loss_rows = []
    history: list[EvalResult] = []
    all_nets = {"F": f_net.params, "G": g_net.params}
    if d_net is not None:
        all_nets["D"] = d_net.params
    best_iou, best_it = -1.0, 0
    best_state = {k: _snapshot(p) for k, p in all_nets.items()}

    def maybe_eval(iteration: int, final: bool = False):
        nonlocal best_iou, best_it, best_state
        if iteration % config.eval_every != 0 and not final:
            return
        if history and history[-1].iteration == iteration:
            return
        result = evaluate_net(f_net, val_set, num_classes, config.method,
                              str(src), "val", iteration)
        history.append(result)
        if result.m_iou > best_iou:
            best_iou, best_it = result.m_iou, iteration
            best_state = {k: _snapshot(p) for k, p in all_nets.items()}

    for i in range(config.iterations):
        x_s, y_s, x_t = sampler.next_pair()
        xs_t = Tensor(x_s)
        xt_t = Tensor(x_t)

        with Tape() as tape_fg:
            scores_s = f_net.forward(xs_t)
            recon_s = g_net.forward(scores_s)
            scores_t = f_net.forward(xt_t)
            recon_t = g_net.forward(scores_t)
            l_sem = sem_loss(scores_s, y_s)
            l_rec = (_mean_pair(rec_loss(recon_s, xs_t), rec_loss(recon_t, xt_t))
                     if config.loss_rec else None)

        l_gan = None
        d_value = None
        if d_net is not None:
            with Tape() as tape_d:
                d_loss = _mean_pair(
                    gan_d_loss(d_net.forward(xs_t), d_net.forward(recon_s.detach())),
                    gan_d_loss(d_net.forward(xt_t), d_net.forward(recon_t.detach())))
            d_value = float(d_loss.data)
            zero_grads(d_net.params)
            backward(tape_d, d_loss)
            opt_d.step(d_net.params)
            with tape_fg:
                l_gan = _mean_pair(
                    gan_g_loss(d_net.forward(recon_s), config.saturating_gan),
                    gan_g_loss(d_net.forward(recon_t), config.saturating_gan))

        with tape_fg:
            total = total_loss(l_sem, l_rec, l_gan)
        values = {
            "l_sem": float(l_sem.data),
            "l_rec": None if l_rec is None else float(l_rec.data),
            "l_gan_g": None if l_gan is None else float(l_gan.data),
            "l_gan_d": d_value,
            "total": float(total.data),
        }
        _check_finite(values, i)
        zero_grads(fg_params)
        backward(tape_fg, total)
        opt_fg.step(fg_params)
        loss_rows.append((i + 1, values["l_sem"], values["l_rec"], values["l_gan_g"],
                          values["l_gan_d"], values["total"]))
        maybe_eval(i + 1)
    maybe_eval(config.iterations, final=True)

    for key, params in all_nets.items():
        _restore(params, best_state[key])
    final_evals = {
        "selection_val": evaluate_net(f_net, val_set, num_classes, config.method,
                                      str(src), "val", best_it),
        "target_test": evaluate_net(f_net, store.labeled_set(tgt, "test"), num_classes,
                                    config.method, str(tgt), "test", best_it),
        "source_test": evaluate_net(f_net, store.labeled_set(src, "test"), num_classes,
                                    config.method, str(src), "test", best_it),
    }
    merged = {}
    for prefix, params in all_nets.items():
        merged.update({f"{prefix}.{k}": v for k, v in params.items()})
    run.finish(config, merged, best_it, loss_rows, history, final_evals, store.classes)
    return f_net, g_net, d_net, history


def train(config: ExperimentConfig, warp_transform: AffineTransform | None = None):
    """Dispatch a config to its training loop; returns the eval history."""
    if config.method == "SceneAdapt":
        return train_sceneadapt(config)[3]
    return train_supervised(config, warp_transform)[1]


# --------------------------------------------------------------- reporting


def _average_rows(results: list[dict]) -> dict:
    """None-aware mean of per-class vectors and scalar summaries."""
    def mean_of(key):
        return float(np.mean([r[key] for r in results]))

    def mean_vectors(key):
        length = len(results[0][key])
        out = []
        for c in range(length):
            vals = [r[key][c] for r in results if r[key][c] is not None]
            out.append(float(np.mean(vals)) if vals else None)
        return out

    return {"c_acc": mean_of("c_acc"), "m_iou": mean_of("m_iou"),
            "per_class_acc": mean_vectors("per_class_acc"),
            "per_class_iou": mean_vectors("per_class_iou")}


def _method_table(classes: list[str], columns: dict[str, dict], measure: str) -> str:
    """CSV with one column per method: Average row first, then each class."""
    per_key = "per_class_acc" if measure == "c_acc" else "per_class_iou"
    methods = list(columns)
    lines = ["class," + ",".join(methods)]
    avg = [f"{columns[m][measure]:.4f}" for m in methods]
    lines.append("Average," + ",".join(avg))
    for c, name in enumerate(classes):
        cells = []
        for m in methods:
            v = columns[m][per_key][c]
            cells.append("" if v is None else f"{v:.4f}")
        lines.append(f"{name}," + ",".join(cells))
    return "\n".join(lines) + "\n"


def write_report(run_dirs: list[str], out_dir: str) -> list[str]:
    """Merge finished runs into per-measure method-column CSV tables.

    Runs of the same method average together (the experiment matrix
    averages over its directed pairs). Tables cover both the target test
    split and the source test split.
    """
    summaries = []
    for run_dir in run_dirs:
        path = os.path.join(run_dir, "results.json")
        try:
            with open(path, "r", encoding="utf-8") as f:
                summaries.append(json.load(f))
        except OSError:
            raise
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid results JSON: {e.msg}") from None
    if not summaries:
        raise ConfigurationError("no run directories to report on")
    classes = summaries[0]["classes"]
    for s in summaries:
        if s["classes"] != classes:
            raise DataError("runs use different class taxonomies; cannot merge")

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for split_key in ("target_test", "source_test"):
        by_method: dict[str, list[dict]] = {}
        for s in summaries:
            by_method.setdefault(s["method"], []).append(s["final"][split_key])
        columns = {m: _average_rows(rows) for m, rows in by_method.items()}
        for measure in ("c_acc", "m_iou"):
            path = os.path.join(out_dir, f"{split_key}_{measure}.csv")
            fileio.atomic_write_text(path, _method_table(classes, columns, measure))
            written.append(path)
    return written


def run_matrix(configs: list[ExperimentConfig], out_dir: str) -> list[str]:
    """Execute every config and merge their results into report tables."""
    for config in configs:
        config.validate()
        store = FrameStore(config.dataset)
        for name in (config.source, config.target):
            subset = SubsetId.parse(name)
            store.frames(subset, "train")
    run_dirs = []
    for config in configs:
        train(config)
        run_dirs.append(config.out_dir)
    return write_report(run_dirs, out_dir)


def view_pair_configs(dataset: str, out_root: str, scenes: list[int],
                      **overrides) -> list[ExperimentConfig]:
    """SceneAdapt configs for all directed view pairs (A1-B1 ... B3-A3)."""
    configs = []
    for scene in scenes:
        for a, b in ((f"A{scene}", f"B{scene}"), (f"B{scene}", f"A{scene}")):
            configs.append(make_config(
                "SceneAdapt", a, b, dataset, os.path.join(out_root, f"{a}_{b}"),
                adaptation="point-of-view", **overrides))
    return configs


ABLATION_ROWS = (("sem_rec", True, False), ("sem_gan", False, True),
                 ("sem_rec_gan", True, True))


def ablation_configs(base: ExperimentConfig, scenes: list[int]) -> list[ExperimentConfig]:
    """The three loss rows crossed with the two adaptation kinds.

    The view pair keeps the base source and flips its view letter; the
    scene pair keeps the view and moves to the next scene in the dataset.
    """
    base.validate()
    if base.method != "SceneAdapt":
        raise ConfigurationError("ablations apply to SceneAdapt runs only")
    src = SubsetId.parse(base.source)
    view_target = str(SubsetId(1 - src.view, src.scene))
    others = [s for s in scenes if s != src.scene]
    if not others:
        raise ConfigurationError("scene-adaptation ablation needs a second scene")
    scene_target = str(SubsetId(src.view, others[0]))

    configs = []
    for kind, target in (("point-of-view", view_target), ("scene", scene_target)):
        for row, rec, gan in ABLATION_ROWS:
            configs.append(dataclasses.replace(
                base, adaptation=kind, target=target, loss_rec=rec, loss_gan=gan,
                out_dir=os.path.join(base.out_dir, f"{kind.replace('-', '_')}_{row}"),
            ).validate())
    return configs


def run_ablation(base: ExperimentConfig, out_dir: str) -> str:
    """Run the six ablation configs and write one summary CSV."""
    store = FrameStore(base.dataset)
    scenes = sorted({f.scene for f in store.manifest.frames})
    configs = ablation_configs(base, scenes)
    lines = ["adaptation,losses,target_c_acc,target_m_iou"]
    for config in configs:
        train(config)
        with open(os.path.join(config.out_dir, "results.json"), encoding="utf-8") as f:
            summary = json.load(f)
        final = summary["final"]["target_test"]
        losses = "+".join(p for p in ("rec" if config.loss_rec else "",
                                      "gan" if config.loss_gan else "") if p)
        lines.append(f"{config.adaptation},sem+{losses},"
                     f"{final['c_acc']:.4f},{final['m_iou']:.4f}")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "ablation.csv")
    fileio.atomic_write_text(path, "\n".join(lines) + "\n")
    return path
