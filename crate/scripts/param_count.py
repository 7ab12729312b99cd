"""Trainable parameter counts of both architectures, layer by layer.

Independent of the Rust code: counts come from the standard formulas
conv kxk: k*k*in*out + out, batch norm: 2*channels (gamma, beta).
"""


def conv(k, cin, cout):
    return k * k * cin * cout + cout


def bn(c):
    return 2 * c


def baseline():
    layers = [
        conv(3, 3, 64), bn(64), conv(3, 64, 64), bn(64),
        conv(3, 64, 128), bn(128), conv(3, 128, 128), bn(128),
        conv(3, 128, 256), bn(256), conv(3, 256, 256), bn(256),
        conv(3, 256 + 128, 128), bn(128),
        conv(3, 128 + 64, 64), bn(64),
        conv(1, 64, 1),
    ]
    return sum(layers)


def vgg19_backbone():
    blocks = [(2, 64), (2, 128), (4, 256), (4, 512), (4, 512)]
    total, cin, skips = 0, 3, []
    for convs, width in blocks:
        for _ in range(convs):
            total += conv(3, cin, width)
            cin = width
        skips.append(width)
    encoder = total
    for width, skip in zip([512, 256, 128, 64], reversed(skips[:4])):
        total += 2 * 2 * cin * width + width  # transposed conv
        total += conv(3, width + skip, width) + bn(width)
        cin = width
    total += conv(1, cin, 1)
    return encoder, total


if __name__ == "__main__":
    enc, full = vgg19_backbone()
    print(f"baseline {baseline()}")
    print(f"vgg19_encoder {enc}")
    print(f"vgg19_backbone {full}")
