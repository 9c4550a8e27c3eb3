"""Stage-by-stage retrieval pipeline with on-disk handoff.

Every stage reads its inputs from the output directory (or the dataset),
writes one artifact and a ``*.manifest.json`` recording the digests of its
inputs and the settings it used. Rerunning a stage whose manifest still
matches is a no-op; a mismatch raises :class:`StaleArtifactError` unless
``force`` is set.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import io
from .autoencoder import FinetuneConfig, encode, finetune, unfold
from .bof import DESCRIPTOR_DIM, Vocabulary, build_vocabulary, extract_descriptors, quantize
from .bof import histogram_distance_matrix
from .dbn import PRESETS, layer_configs, pretrain
from .evaluation import evaluate, format_table, id_sort_key, load_cla, rank_queries
from .exceptions import ShapeCodeError, StaleArtifactError
from .fusion import FusionWeights, fuse
from .match import DistanceMatrix, distance_matrix
from .mesh import load_mesh, normalize_pose
from .projection import ViewSet, make_rig, render_depth

log = logging.getLogger("shapecode")

MESH_EXTENSIONS = (".off", ".obj")
CHANNELS = ("global", "local", "fused")


@dataclass
class PipelineConfig:
    dataset: str = ""
    labels: str = ""
    out: str = "shapecode-out"
    azimuth_count: int = 8
    elevation_count: int = 8
    resolution: int = 72
    layers: tuple = PRESETS["psb"][1:]
    pretrain_epochs: int = 40
    batch_size: int = 100
    learning_rate: float = 0.1
    top_learning_rate: float = 0.001
    weight_decay: float = 0.0002
    initial_momentum: float = 0.5
    final_momentum: float = 0.9
    finetune_epochs: int = 100
    finetune_learning_rate: float = 0.01
    finetune_batch_size: int = 100
    p: float = 2.0
    bof_words: int = 1500
    bof_grid_step: int = 8
    bof_patch_size: int = 16
    bof_max_samples: int = 100_000
    w_global: float = 1.0
    w_local: float = 1.0
    normalizer: str = "mean"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.layers = _parse_layers(self.layers)
        if self.layers and self.layers[0] == self.input_dim and len(self.layers) > 1:
            self.layers = self.layers[1:]

    @property
    def input_dim(self):
        return int(self.resolution) ** 2

    @property
    def sizes(self):
        return (self.input_dim,) + tuple(self.layers)

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    def subset(self, *names):
        d = dataclasses.asdict(self)
        out = {k: d[k] for k in names}
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in self.sizes) if f.name == "layers" else ",".join(map(str, v))
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _parse_layers(value):
    if isinstance(value, str):
        if value.lower() in PRESETS:
            # presets name the hidden sizes; the input size follows the resolution
            return tuple(PRESETS[value.lower()][1:])
        value = [v for v in value.replace("-", ",").split(",") if v.strip()]
    return tuple(int(v) for v in value)


def _coerce(name, raw):
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    if name not in fields:
        raise ValueError(f"unknown configuration key {name!r}")
    default = fields[name].default
    if name == "layers":
        return _parse_layers(raw)
    if isinstance(default, bool):
        return str(raw).lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return str(raw)


def parse_config_text(text):
    """``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = _coerce(key, value)
    return values


def load_config(path=None, **overrides):
    values = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    for key, value in overrides.items():
        if value is not None:
            values[key] = _coerce(key, value) if isinstance(value, str) else value
    layers = values.get("layers")
    cfg = PipelineConfig(**{k: v for k, v in values.items() if k != "layers"})
    if layers is not None:
        cfg.layers = layers
        cfg.__post_init__()
    return cfg


# -- stage bookkeeping -----------------------------------------------------

def _manifest_path(output):
    return output.rstrip(os.sep) + ".manifest.json"


def _fingerprint(inputs, params):
    return {
        "inputs": {os.path.basename(p): io.file_digest(p) for p in sorted(inputs)},
        "params": json.loads(json.dumps(params, sort_keys=True)),
    }


def _is_current(output, inputs, params, force):
    """True when ``output`` exists and was built from exactly these inputs."""
    manifest = _manifest_path(output)
    if force or not os.path.exists(output) or not os.path.exists(manifest):
        return False
    with open(manifest, encoding="utf-8") as fh:
        recorded = json.load(fh)
    if recorded == _fingerprint(inputs, params):
        log.info("%s is up to date; skipping", output)
        return True
    raise StaleArtifactError(
        f"{output} was built from different inputs or settings; rerun with --force")


def _record(output, inputs, params):
    with open(_manifest_path(output), "w", encoding="utf-8") as fh:
        json.dump(_fingerprint(inputs, params), fh, indent=2, sort_keys=True)


def _require(path, what):
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


# -- render ----------------------------------------------------------------

def mesh_dir(cfg):
    root = cfg.dataset
    if not root:
        raise ValueError("no dataset configured (set 'dataset')")
    if os.path.isdir(os.path.join(root, "meshes")):
        root = os.path.join(root, "meshes")
    if not os.path.isdir(root):
        raise FileNotFoundError(f"mesh directory not found: {root}")
    return root


def list_meshes(cfg):
    root = mesh_dir(cfg)
    found = {}
    for name in os.listdir(root):
        stem, ext = os.path.splitext(name)
        if ext.lower() in MESH_EXTENSIONS:
            if stem in found:
                raise ValueError(f"model id {stem!r} appears twice in {root}")
            found[stem] = os.path.join(root, name)
    if not found:
        raise FileNotFoundError(f"no .off/.obj meshes in {root}")
    return [(m, found[m]) for m in sorted(found, key=id_sort_key)]


def views_path(cfg, model_id):
    return cfg.path("views", f"{model_id}.npz")


def _render_one(job):
    model_id, mesh_path, out_path, az, el, res = job
    mesh = normalize_pose(load_mesh(mesh_path, model_id=model_id))
    views = render_depth(mesh, make_rig(az, el), res)
    tmp = out_path + ".tmp.npz"
    np.savez(tmp, images=views.to_array(), view_index=np.arange(len(views)), model_id=model_id)
    os.replace(tmp, out_path)
    return model_id


def load_views(path):
    with np.load(path) as data:
        return ViewSet.from_array(str(data["model_id"]), data["images"])


def cmd_render(cfg, force=False):
    """Render every mesh of the dataset; returns the list of model ids."""
    meshes = list_meshes(cfg)
    os.makedirs(cfg.path("views"), exist_ok=True)
    params = cfg.subset("azimuth_count", "elevation_count", "resolution")
    jobs = []
    for model_id, mesh_path in meshes:
        out = views_path(cfg, model_id)
        if not _is_current(out, [mesh_path], params, force):
            jobs.append((model_id, mesh_path, out, cfg.azimuth_count, cfg.elevation_count,
                         cfg.resolution))
    if jobs:
        log.info("rendering %d of %d models", len(jobs), len(meshes))
        if cfg.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                list(pool.map(_render_one, jobs))
        else:
            for job in jobs:
                _render_one(job)
        for model_id, mesh_path, out, *_ in jobs:
            _record(out, [mesh_path], params)
    return [m for m, _ in meshes]


def _view_files(cfg):
    meshes = list_meshes(cfg)
    paths = [_require(views_path(cfg, m), f"view set of model {m} (run 'render')") for m, _ in meshes]
    return [m for m, _ in meshes], paths


def training_matrix(paths):
    """All depth images of all models, one flattened image per row."""
    rows = []
    for p in paths:
        with np.load(p) as data:
            images = data["images"]
        rows.append(images.reshape(len(images), -1))
    return np.concatenate(rows)


# -- pretrain / finetune / encode -----------------------------------------

def cmd_pretrain(cfg, force=False):
    out = cfg.path("dbn")
    _, inputs = _view_files(cfg)
    params = cfg.subset("layers", "resolution", "pretrain_epochs", "batch_size", "learning_rate",
                        "top_learning_rate", "weight_decay", "initial_momentum",
                        "final_momentum", "seed")
    if _is_current(out, inputs, params, force):
        return io.load_stack(out)
    X = training_matrix(inputs)
    configs = layer_configs(len(cfg.layers), cfg.pretrain_epochs, cfg.batch_size,
                            cfg.learning_rate, cfg.top_learning_rate, cfg.seed,
                            weight_decay=cfg.weight_decay,
                            initial_momentum=cfg.initial_momentum,
                            final_momentum=cfg.final_momentum)
    log.info("pretraining %s on %d images", "-".join(map(str, cfg.sizes)), len(X))
    stack = pretrain(X, cfg.sizes, configs, lambda k, e, err: log.info(
        "pretrain layer %d epoch %d/%d error %.6f", k, e + 1, cfg.pretrain_epochs, err))
    io.save_stack(stack, out, params)
    _record(out, inputs, params)
    return stack


def cmd_finetune(cfg, force=False):
    out = cfg.path("autoencoder.shc")
    stack_dir = cfg.path("dbn")
    _require(os.path.join(stack_dir, "manifest.json"), "pretrained stack (run 'pretrain')")
    _, views = _view_files(cfg)
    inputs = views + [os.path.join(stack_dir, "manifest.json")]
    inputs += [os.path.join(stack_dir, f"layer_{k}.shc") for k in range(len(cfg.layers))]
    params = cfg.subset("finetune_epochs", "finetune_learning_rate", "finetune_batch_size", "seed")
    if _is_current(out, inputs, params, force):
        return io.load_autoencoder(out)
    stack = io.load_stack(stack_dir)
    X = training_matrix(views)
    ft = FinetuneConfig(cfg.finetune_learning_rate, cfg.finetune_epochs,
                        cfg.finetune_batch_size, cfg.seed + 1000)
    net = finetune(unfold(stack), X, ft, lambda e, r: log.info(
        "finetune epoch %d/%d rmse %.6f", e + 1, cfg.finetune_epochs, r))
    io.save_autoencoder(net, out)
    _record(out, inputs, params)
    return net


def cmd_encode(cfg, force=False):
    """Code sets of all models as an ``(n_models, n_views, code_dim)`` array."""
    out = cfg.path("codes.f64")
    ids, views = _view_files(cfg)
    net_path = _require(cfg.path("autoencoder.shc"), "autoencoder (run 'finetune')")
    inputs = views + [net_path]
    if _is_current(out, inputs, {}, force):
        return io.read_matrix(out)[0]
    net = io.load_autoencoder(net_path)
    codes = []
    for p in views:
        with np.load(p) as data:
            images = data["images"]
        codes.append(encode(net, images.reshape(len(images), -1)))
    codes = np.stack(codes)
    io.write_matrix(out, codes, {"ids": ids, "n_views": codes.shape[1],
                                 "code_dim": codes.shape[2]})
    _record(out, inputs, {})
    return codes


# -- bag of features ------------------------------------------------------

def cmd_bof(cfg, force=False):
    """Vocabulary plus one L1-normalized histogram per model."""
    out = cfg.path("bof_histograms.f64")
    ids, views = _view_files(cfg)
    params = cfg.subset("bof_words", "bof_grid_step", "bof_patch_size", "bof_max_samples", "seed")
    if _is_current(out, views, params, force):
        return io.read_matrix(out)[0]
    bags = [extract_descriptors(load_views(p), cfg.bof_grid_step, cfg.bof_patch_size) for p in views]
    pooled = np.concatenate([b.descriptors for b in bags]) if bags else np.zeros((0, DESCRIPTOR_DIM))
    log.info("clustering %d descriptors into %d words", len(pooled), cfg.bof_words)
    vocab = build_vocabulary(pooled, cfg.bof_words, cfg.seed, max_samples=cfg.bof_max_samples)
    io.write_matrix(cfg.path("bof_vocabulary.f64"), vocab.centroids,
                    {"seed": vocab.seed, "n_iter": vocab.n_iter,
                     "distortions": list(vocab.distortions)})
    hists = [quantize(b, vocab, model_id=m) for b, m in zip(bags, ids)]
    io.write_matrix(out, np.stack([h.values for h in hists]),
                    {"ids": ids, "n_words": vocab.size,
                     "empty_models": [h.model_id for h in hists if h.empty]})
    _record(out, views, params)
    return np.stack([h.values for h in hists])


def load_vocabulary(cfg):
    centroids, meta = io.read_matrix(cfg.path("bof_vocabulary.f64"))
    return Vocabulary(centroids, meta.get("seed", 0), meta.get("n_iter", 0),
                      tuple(meta.get("distortions", ())))


# -- distances, fusion, evaluation ---------------------------------------

def distance_path(cfg, channel):
    return cfg.path(f"distances_{channel}.f64")


def cmd_distances(cfg, force=False):
    """Global distances from the code sets, local ones from BoF histograms when present."""
    results = {}
    codes_path = _require(cfg.path("codes.f64"), "code sets (run 'encode')")
    out = distance_path(cfg, "global")
    params = {"p": cfg.p}
    if not _is_current(out, [codes_path], params, force):
        codes, meta = io.read_matrix(codes_path)
        d = distance_matrix(codes, cfg.p, ids=meta["ids"])
        io.save_distance_matrix(d, out, channel="global")
        _record(out, [codes_path], params)
    results["global"] = io.load_distance_matrix(out)

    hist_path = cfg.path("bof_histograms.f64")
    if os.path.exists(hist_path):
        out = distance_path(cfg, "local")
        if not _is_current(out, [hist_path], {}, force):
            hists, meta = io.read_matrix(hist_path)
            d = DistanceMatrix(tuple(meta["ids"]), histogram_distance_matrix(hists),
                               {"metric": "l1", "n_words": meta["n_words"]})
            io.save_distance_matrix(d, out, channel="local")
            _record(out, [hist_path], {})
        results["local"] = io.load_distance_matrix(out)
    return results


def cmd_fuse(cfg, force=False):
    g = _require(distance_path(cfg, "global"), "global distances (run 'distances')")
    l = _require(distance_path(cfg, "local"), "local distances (run 'bof' then 'distances')")
    out = distance_path(cfg, "fused")
    params = cfg.subset("w_global", "w_local", "normalizer")
    if not _is_current(out, [g, l], params, force):
        d = fuse(io.load_distance_matrix(g), io.load_distance_matrix(l),
                 FusionWeights(cfg.w_global, cfg.w_local), cfg.normalizer)
        io.save_distance_matrix(d, out, channel="fused")
        _record(out, [g, l], params)
    return io.load_distance_matrix(out)


def available_channels(cfg):
    return [c for c in CHANNELS if os.path.exists(distance_path(cfg, c))]


def cmd_evaluate(cfg, force=False):
    """Score every available distance channel; writes report.json and report.txt."""
    labels_path = _require(cfg.labels, "class file (set 'labels')") if cfg.labels else None
    if labels_path is None:
        raise ValueError("no class file configured (set 'labels')")
    labels = load_cla(labels_path)
    channels = available_channels(cfg)
    if not channels:
        raise FileNotFoundError("no distance matrices found (run 'distances')")
    reports = {c: evaluate(io.load_distance_matrix(distance_path(cfg, c)), labels) for c in channels}
    with open(cfg.path("report.json"), "w", encoding="utf-8") as fh:
        json.dump({c: r.to_dict() for c, r in reports.items()}, fh, indent=2, sort_keys=True)
    names = {"global": "Autoencoder", "local": "BoF", "fused": "Autoencoder+BoF"}
    table = format_table([(names[c], r) for c, r in reports.items()])
    with open(cfg.path("report.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    return reports


def cmd_retrieve(cfg, query_id, k=10, channel=None):
    """Top-``k`` ``(model_id, distance)`` pairs for one query."""
    channel = channel or ("fused" if os.path.exists(distance_path(cfg, "fused")) else "global")
    d = io.load_distance_matrix(_require(distance_path(cfg, channel), f"{channel} distances"))
    query_id = str(query_id)
    if query_id not in d.ids:
        raise KeyError(f"unknown model id {query_id!r}")
    q = d.ids.index(query_id)
    ranked = rank_queries(d)[q][:k]
    return [(m, float(d.values[q, d.ids.index(m)])) for m in ranked]


def run_all(cfg, force=False, with_bof=True):
    """Every stage in order; returns the evaluation reports when labels are configured."""
    cmd_render(cfg, force)
    cmd_pretrain(cfg, force)
    cmd_finetune(cfg, force)
    cmd_encode(cfg, force)
    if with_bof:
        cmd_bof(cfg, force)
    cmd_distances(cfg, force)
    if with_bof:
        cmd_fuse(cfg, force)
    return cmd_evaluate(cfg, force) if cfg.labels else None


def synthetic_config(dataset, out, seed=0):
    """Desk-scale settings for the procedural benchmark."""
    return PipelineConfig(
        dataset=dataset, labels=os.path.join(dataset, "classes.cla"), out=out,
        resolution=32, layers=(200, 50, 10), pretrain_epochs=15, finetune_epochs=30,
        bof_words=200, bof_grid_step=4, bof_patch_size=8, seed=seed,
    )


__all__ = [
    "PipelineConfig", "load_config", "parse_config_text", "run_all", "synthetic_config",
    "cmd_render", "cmd_pretrain", "cmd_finetune", "cmd_encode", "cmd_bof", "cmd_distances",
    "cmd_fuse", "cmd_evaluate", "cmd_retrieve", "ShapeCodeError",
]
