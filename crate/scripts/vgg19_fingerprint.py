"""Reference activation fingerprints of the VGG19 encoder, computed with
torchvision's VGG19 implementation.

Two modes:

  synthetic (default)   He-uniform weights from a splitmix64 hash of
                        (layer, index), which the Rust test reproduces
                        bit-exactly; needs no download.
  --weights FILE.pth    a torchvision VGG19 state_dict (e.g. the ImageNet
                        checkpoint); fingerprints for the converted archive.

For each tap (ReLU output of the last conv in blocks 1..5) the sum and the
max over the whole activation tensor are printed as JSON.
"""

import argparse
import json
import math

import numpy as np
import torch
import torchvision

BLOCKS = [(1, 2, 64), (2, 2, 128), (3, 4, 256), (4, 4, 512), (5, 4, 512)]


def layer_names():
    names, cin = [], 3
    for block, convs, width in BLOCKS:
        for i in range(1, convs + 1):
            names.append((f"block{block}_conv{i}", cin, width))
            cin = width
    return names


def splitmix64(z):
    """Vectorised splitmix64 finaliser on uint64 arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def unit(keys):
    """Uniform values in [-1, 1) from uint64 keys."""
    u = (splitmix64(keys) >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return 2.0 * u - 1.0


def formula_weights():
    """He-uniform weights and small biases from hashed (layer, index) keys."""
    out = {}
    for layer, (name, cin, cout) in enumerate(layer_names()):
        n = cout * cin * 9
        base = np.uint64(layer + 1) << np.uint64(40)
        j = np.arange(n, dtype=np.uint64)
        w = (unit(base | j) * math.sqrt(6.0 / (cin * 9))).astype(np.float32)
        o = np.arange(cout, dtype=np.uint64)
        b = (unit(base | np.uint64(1 << 39) | o) * 0.05).astype(np.float32)
        out[name] = (w.reshape(cout, cin, 3, 3), b)
    return out


def fixed_input(size):
    c, y, x = np.meshgrid(np.arange(3), np.arange(size), np.arange(size), indexing="ij")
    v = 0.5 + 0.5 * np.sin(0.11 * x + 0.07 * y * (c + 1) + c)
    return v.astype(np.float32)[None]


def fingerprints(model, size):
    x = torch.from_numpy(fixed_input(size))
    taps, conv_in_block, block = [], 0, 0
    feats = model.features
    with torch.no_grad():
        h = x
        for layer in feats:
            h = layer(h)
            if isinstance(layer, torch.nn.Conv2d):
                conv_in_block += 1
            if isinstance(layer, torch.nn.ReLU) and conv_in_block == BLOCKS[block][1]:
                name = "bottleneck" if block == 4 else f"s{block + 1}"
                taps.append({"tap": name, "shape": list(h.shape), "sum": float(h.double().sum()), "max": float(h.max())})
                conv_in_block, block = 0, block + 1
                if block == 5:
                    break
    return taps


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--weights", help="torchvision VGG19 state_dict (.pth)")
    ap.add_argument("--size", type=int, default=32)
    args = ap.parse_args()
    torch.set_num_threads(1)
    model = torchvision.models.vgg19(weights=None).eval()
    if args.weights:
        model.load_state_dict(torch.load(args.weights, map_location="cpu"))
    else:
        convs = [m for m in model.features if isinstance(m, torch.nn.Conv2d)]
        weights = formula_weights()
        for conv, (name, _, _) in zip(convs, layer_names()):
            w, b = weights[name]
            conv.weight.data = torch.from_numpy(w.copy())
            conv.bias.data = torch.from_numpy(b.copy())
    print(json.dumps({"size": args.size, "taps": fingerprints(model, args.size)}, indent=2))


if __name__ == "__main__":
    main()
