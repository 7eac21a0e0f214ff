"""The three classifier architectures and their checkpoint format.

Checkpoints are canonical JSON: format_version, kind, config, tensors
(name -> {shape, data}), norm_stats. Loading a checkpoint rebuilds the
architecture from the config echo and overwrites every named tensor, so
load(save(m)) predicts bit-identically to m.
"""
import numpy as np

from . import canonical
from .nn import (
    Conv2D,
    Dense,
    Flatten,
    MaxPool2x2,
    ReLU,
    ShapeError,
    run_backward,
    run_forward,
    softmax_cross_entropy,
)
from .rng import RngStream
from .tabular import NormStats, apply_zscore

N_CLASSES = 5
EMBED_WIDTH = 64  # image embedding width shared by the image and hybrid heads
SYMPTOM_EMBED_WIDTH = 32
FUSION_WIDTH = 64

KINDS = ("symptoms", "image", "hybrid")


class CheckpointError(ValueError):
    pass


class Model:
    def __init__(self, kind, config, image_layers, symptom_layers, head_layers):
        if kind not in KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.config = dict(config)
        self.image_layers = list(image_layers)
        self.symptom_layers = list(symptom_layers)
        self.head_layers = list(head_layers)
        self.norm_stats = None

    @property
    def all_layers(self):
        return self.image_layers + self.symptom_layers + self.head_layers

    def n_params(self):
        return sum(p.size for layer in self.all_layers for p in layer.params.values())

    def _normalize(self, features):
        features = np.asarray(features, dtype=np.float64)
        if self.norm_stats is not None:
            return apply_zscore(features, self.norm_stats)
        return features

    def forward(self, features=None, image=None):
        if self.kind in ("symptoms", "hybrid") and features is None:
            raise ValueError(f"{self.kind} model requires symptom features")
        if self.kind in ("image", "hybrid") and image is None:
            raise ValueError(f"{self.kind} model requires an image tensor")
        if self.kind == "symptoms":
            return run_forward(self.head_layers, self._normalize(features))
        if self.kind == "image":
            emb = run_forward(self.image_layers, np.asarray(image, dtype=np.float64))
            return run_forward(self.head_layers, emb)
        emb_img = run_forward(self.image_layers, np.asarray(image, dtype=np.float64))
        emb_sym = run_forward(self.symptom_layers, self._normalize(features))
        return run_forward(self.head_layers, np.concatenate([emb_img, emb_sym]))

    def backward(self, dlogits):
        d = run_backward(self.head_layers, dlogits)
        if self.kind == "symptoms":
            return
        if self.kind == "image":
            run_backward(self.image_layers, d)
            return
        run_backward(self.image_layers, d[:EMBED_WIDTH])
        run_backward(self.symptom_layers, d[EMBED_WIDTH:])


def predict_proba(model, features=None, image=None):
    logits = model.forward(features=features, image=image)
    _, probs, _ = softmax_cross_entropy(logits, 0)
    return probs


def predicted_stage(probs):
    return int(np.argmax(probs))  # lowest index wins exact ties


def build_symptoms_model(n_features, hidden_width=64, deep=True, seed=0):
    """Multinomial logistic head, optionally with one hidden relu layer."""
    if n_features < 1:
        raise ValueError("n_features must be >= 1")
    rng = RngStream(seed).substream("init")
    if deep:
        head = [
            Dense("hidden", n_features, hidden_width, rng),
            ReLU("hidden_relu"),
            Dense("output", hidden_width, N_CLASSES, rng),
        ]
    else:
        head = [Dense("output", n_features, N_CLASSES, rng)]
    config = {
        "kind": "symptoms",
        "n_features": int(n_features),
        "hidden_width": int(hidden_width),
        "deep": bool(deep),
        "seed": int(seed),
    }
    return Model("symptoms", config, [], [], head)


def _image_stack(side, backbone_frozen, rng):
    """Backbone (2 conv/pool blocks, optionally frozen) + 2 trainable conv/pool
    blocks + flatten + dense embedding. Raises when the spatial extent
    underflows the kernel at any block."""
    specs = [
        ("backbone_conv1", 3, 8, backbone_frozen),
        ("backbone_conv2", 8, 16, backbone_frozen),
        ("conv3", 16, 32, False),
        ("conv4", 32, 32, False),
    ]
    layers = []
    extent = side
    channels = None
    for name, in_c, out_c, frozen in specs:
        if extent < 3:
            raise ShapeError(
                f"image side {side} too small: extent {extent} < kernel 3 at {name}"
            )
        conv = Conv2D(name, in_c, out_c, 3, rng)
        conv.frozen = frozen
        layers.append(conv)
        layers.append(ReLU(name + "_relu"))
        extent -= 2
        if extent < 2:
            raise ShapeError(
                f"image side {side} too small: extent {extent} < 2 at {name} pooling"
            )
        layers.append(MaxPool2x2(name + "_pool"))
        extent //= 2
        channels = out_c
    layers.append(Flatten("flatten"))
    flat = channels * extent * extent
    layers.append(Dense("embed", flat, EMBED_WIDTH, rng))
    layers.append(ReLU("embed_relu"))
    return layers


def build_image_model(side, backbone_frozen=False, seed=0):
    if side < 32:
        raise ShapeError("image side must be >= 32")
    rng = RngStream(seed).substream("init")
    image_layers = _image_stack(side, backbone_frozen, rng)
    head = [Dense("output", EMBED_WIDTH, N_CLASSES, rng)]
    config = {
        "kind": "image",
        "side": int(side),
        "backbone_frozen": bool(backbone_frozen),
        "seed": int(seed),
    }
    return Model("image", config, image_layers, [], head)


def build_hybrid_model(side, n_features, seed=0, backbone_frozen=False):
    if side < 32:
        raise ShapeError("image side must be >= 32")
    if n_features < 1:
        raise ValueError("n_features must be >= 1")
    rng = RngStream(seed).substream("init")
    image_layers = _image_stack(side, backbone_frozen, rng)
    symptom_layers = [
        Dense("symptom_embed", n_features, SYMPTOM_EMBED_WIDTH, rng),
        ReLU("symptom_embed_relu"),
    ]
    head = [
        Dense("fusion", EMBED_WIDTH + SYMPTOM_EMBED_WIDTH, FUSION_WIDTH, rng),
        ReLU("fusion_relu"),
        Dense("output", FUSION_WIDTH, N_CLASSES, rng),
    ]
    config = {
        "kind": "hybrid",
        "side": int(side),
        "n_features": int(n_features),
        "backbone_frozen": bool(backbone_frozen),
        "seed": int(seed),
    }
    return Model("hybrid", config, image_layers, symptom_layers, head)


def build_from_config(config, run_config=None):
    kind = config.get("kind")
    if kind == "symptoms":
        model = build_symptoms_model(
            config["n_features"],
            hidden_width=config.get("hidden_width", 64),
            deep=config.get("deep", True),
            seed=config.get("seed", 0),
        )
    elif kind == "image":
        model = build_image_model(
            config["side"],
            backbone_frozen=config.get("backbone_frozen", False),
            seed=config.get("seed", 0),
        )
    elif kind == "hybrid":
        model = build_hybrid_model(
            config["side"],
            config["n_features"],
            seed=config.get("seed", 0),
            backbone_frozen=config.get("backbone_frozen", False),
        )
    else:
        raise CheckpointError(f"unknown model kind {kind!r}")
    if run_config is not None:
        model.config["run"] = dict(run_config)
    return model


def named_tensors(model):
    out = {}
    for layer in model.all_layers:
        for key, value in layer.params.items():
            out[f"{layer.name}.{key}"] = value
    return out


def checkpoint_save(model, path):
    tensors = {
        name: {"shape": list(p.shape), "data": [float(v) for v in p.reshape(-1)]}
        for name, p in named_tensors(model).items()
    }
    doc = {
        "format_version": 1,
        "kind": model.kind,
        "config": model.config,
        "tensors": tensors,
        "norm_stats": model.norm_stats.to_json_dict() if model.norm_stats else None,
    }
    canonical.dump_file(doc, path)


def checkpoint_load(path):
    try:
        doc = canonical.load_file(path)
    except ValueError as exc:
        raise CheckpointError(f"{path}: malformed checkpoint: {exc}") from None
    if doc.get("format_version") != 1:
        raise CheckpointError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    config = doc.get("config", {})
    if doc.get("kind") != config.get("kind"):
        raise CheckpointError(f"{path}: kind does not match config")
    model = build_from_config({k: v for k, v in config.items() if k != "run"},
                              run_config=config.get("run"))
    targets = named_tensors(model)
    tensors = doc.get("tensors", {})
    if set(tensors) != set(targets):
        missing = set(targets) - set(tensors)
        extra = set(tensors) - set(targets)
        raise CheckpointError(f"{path}: tensor set mismatch (missing {sorted(missing)}, extra {sorted(extra)})")
    for name, entry in tensors.items():
        target = targets[name]
        shape = tuple(entry["shape"])
        if shape != target.shape:
            raise CheckpointError(
                f"{path}: tensor {name} has shape {shape}, architecture expects {target.shape}"
            )
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != target.size:
            raise CheckpointError(f"{path}: tensor {name} data length {data.size} != {target.size}")
        target[...] = data.reshape(shape)
    if doc.get("norm_stats") is not None:
        model.norm_stats = NormStats.from_json_dict(doc["norm_stats"])
    return model
