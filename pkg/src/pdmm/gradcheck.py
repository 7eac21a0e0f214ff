"""Gradient verification suite: analytic backward vs central finite differences."""
import numpy as np

from .nn import (
    Conv2D,
    Dense,
    Flatten,
    Layer,
    MaxPool2x2,
    ReLU,
    grad_check,
    run_backward,
    run_forward,
    softmax_cross_entropy,
)
from .rng import RngStream

TOLERANCE = 1e-4


class Composed(Layer):
    """A layer stack exposed as a single layer for checking through compositions."""

    def __init__(self, name, layers):
        super().__init__(name)
        self.layers = layers
        for idx, layer in enumerate(layers):
            for key in layer.params:
                tag = f"{idx}.{layer.name}.{key}"
                self.params[tag] = layer.params[key]
                self.grads[tag] = layer.grads[key]
                self.velocity[tag] = layer.velocity[key]

    def forward(self, x):
        return run_forward(self.layers, x)

    def backward(self, dy):
        return run_backward(self.layers, dy)


def _softmax_ce_check(rng, scale, label, eps=1e-5):
    logits = rng.standard_normal(5) * scale
    _, _, dlogits = softmax_cross_entropy(logits, label)
    worst = 0.0
    for i in range(5):
        bumped = logits.copy()
        bumped[i] += eps
        plus, _, _ = softmax_cross_entropy(bumped, label)
        bumped[i] -= 2 * eps
        minus, _, _ = softmax_cross_entropy(bumped, label)
        numeric = (plus - minus) / (2 * eps)
        denom = max(1e-8, abs(dlogits[i]) + abs(numeric))
        worst = max(worst, abs(dlogits[i] - numeric) / denom)
    return worst


def run_suite(seed=0, eps=1e-5):
    """Returns [(name, max_relative_error)] over >= 20 seeded configurations."""
    results = []
    stream = RngStream(seed)

    def rng(tag):
        return stream.substream(tag)

    dense_configs = [(4, 3), (10, 5), (1, 1), (7, 7), (20, 4)]
    for n_in, n_out in dense_configs:
        tag = f"dense_{n_in}x{n_out}"
        r = rng(tag)
        layer = Dense(tag, n_in, n_out, r)
        results.append((tag, grad_check(layer, r.standard_normal(n_in), r, eps)))

    conv_configs = [
        (1, 1, 1, 5, 1),
        (2, 3, 3, 8, 1),
        (3, 2, 3, 9, 2),
        (1, 4, 2, 6, 2),
        (2, 2, 5, 7, 1),
    ]
    for in_c, out_c, k, hw, stride in conv_configs:
        tag = f"conv_{in_c}to{out_c}_k{k}_s{stride}_{hw}px"
        r = rng(tag)
        layer = Conv2D(tag, in_c, out_c, k, r, stride=stride)
        results.append((tag, grad_check(layer, r.standard_normal((in_c, hw, hw)), r, eps)))

    for shape in [(1, 4, 4), (3, 6, 6), (2, 5, 5), (1, 8, 8)]:
        tag = "maxpool_" + "x".join(map(str, shape))
        r = rng(tag)
        layer = MaxPool2x2(tag)
        results.append((tag, grad_check(layer, r.standard_normal(shape), r, eps)))

    for shape in [(10,), (3, 4, 4)]:
        tag = "relu_" + "x".join(map(str, shape))
        r = rng(tag)
        layer = ReLU(tag)
        # keep inputs away from the kink at 0
        x = r.standard_normal(shape)
        x = np.where(np.abs(x) < 0.1, x + np.sign(x) * 0.1 + (x == 0) * 0.1, x)
        results.append((tag, grad_check(layer, x, r, eps)))

    stack_builders = [
        (
            "stack_conv_relu_pool",
            lambda r: [Conv2D("c", 2, 3, 3, r), ReLU("r"), MaxPool2x2("p")],
            (2, 8, 8),
        ),
        (
            "stack_two_conv_blocks",
            lambda r: [
                Conv2D("c1", 1, 2, 3, r),
                ReLU("r1"),
                MaxPool2x2("p1"),
                Conv2D("c2", 2, 2, 3, r),
            ],
            (1, 12, 12),
        ),
        (
            "stack_conv_flatten_dense",
            lambda r: [Conv2D("c", 1, 2, 3, r), ReLU("r"), Flatten("f"), Dense("d", 2 * 4 * 4, 5, r)],
            (1, 6, 6),
        ),
    ]
    for tag, builder, shape in stack_builders:
        r = rng(tag)
        layer = Composed(tag, builder(r))
        results.append((tag, grad_check(layer, r.standard_normal(shape), r, eps)))

    for i, (scale, label) in enumerate([(1.0, 0), (3.0, 2), (0.1, 4)]):
        tag = f"softmax_ce_{i}"
        results.append((tag, _softmax_ce_check(rng(tag), scale, label, eps)))

    return results
