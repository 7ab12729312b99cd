"""Convert torchvision VGG19 weights into the segunet weight archive.

    python scripts/convert_vgg19.py --state-dict vgg19-dcbb9e9d.pth --out vgg19.bin
    python scripts/convert_vgg19.py --download --out vgg19.bin
    python scripts/convert_vgg19.py --synthetic --out vgg19_synthetic.bin

The archive holds the 16 encoder convolutions as `block{b}_conv{i}.weight`
(out, in, 3, 3) and `block{b}_conv{i}.bias` (out). torchvision already stores
convolution kernels as (out, in, kh, kw) cross-correlation filters, so no
transposition is needed. `--fingerprints FILE` also writes the reference
tap fingerprints for the same weights (see vgg19_fingerprint.py).
"""

import argparse
import json
import struct

import numpy as np
import torch
import torchvision

from vgg19_fingerprint import fingerprints, formula_weights, layer_names


def conv_tensors(model):
    convs = [m for m in model.features if isinstance(m, torch.nn.Conv2d)]
    assert len(convs) == 16, "expected the 16 VGG19 convolutions"
    for conv, (name, cin, cout) in zip(convs, layer_names()):
        w = conv.weight.detach().cpu().numpy().astype("<f4")
        b = conv.bias.detach().cpu().numpy().astype("<f4")
        assert w.shape == (cout, cin, 3, 3), (name, w.shape)
        yield f"{name}.weight", w
        yield f"{name}.bias", b


def write_archive(path, tensors):
    manifest, payload, offset = [], [], 0
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payload.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps(manifest, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for chunk in payload:
            f.write(chunk)


def main():
    ap = argparse.ArgumentParser()
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--state-dict", help="path to a torchvision VGG19 state_dict")
    src.add_argument("--download", action="store_true", help="fetch IMAGENET1K_V1 through torchvision")
    src.add_argument("--synthetic", action="store_true", help="hashed He-uniform weights (test fixture)")
    ap.add_argument("--out", required=True)
    ap.add_argument("--fingerprints", help="also write reference fingerprints to this JSON file")
    ap.add_argument("--size", type=int, default=32, help="fingerprint input size")
    args = ap.parse_args()

    torch.set_num_threads(1)
    if args.download:
        model = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)
    else:
        model = torchvision.models.vgg19(weights=None)
        if args.state_dict:
            model.load_state_dict(torch.load(args.state_dict, map_location="cpu"))
        else:
            convs = [m for m in model.features if isinstance(m, torch.nn.Conv2d)]
            weights = formula_weights()
            for conv, (name, _, _) in zip(convs, layer_names()):
                w, b = weights[name]
                conv.weight.data = torch.from_numpy(w.copy())
                conv.bias.data = torch.from_numpy(b.copy())
    model.eval()
    write_archive(args.out, conv_tensors(model))
    if args.fingerprints:
        with open(args.fingerprints, "w") as f:
            json.dump({"size": args.size, "taps": fingerprints(model, args.size)}, f, indent=2)


if __name__ == "__main__":
    main()
