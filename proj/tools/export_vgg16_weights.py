#!/usr/bin/env python3
"""Export the ImageNet-pretrained VGG16 convolutional trunk (conv1_1..conv5_3)
to the binary format read by the vgg16 feature extractor.

Requires torchvision with download access to its model zoo:
    python3 tools/export_vgg16_weights.py --out vgg16_relu5_3.bin
"""

import argparse
import struct


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output weights file")
    args = parser.parse_args()

    import torch
    import torchvision

    model = torchvision.models.vgg16(weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1)
    convs = [m for m in model.features if isinstance(m, torch.nn.Conv2d)]
    assert len(convs) == 13, f"expected 13 conv layers, found {len(convs)}"

    with open(args.out, "wb") as f:
        f.write(b"SDSEGVGG1\n")
        for conv in convs:
            w = conv.weight.detach().cpu().contiguous().float()
            b = conv.bias.detach().cpu().contiguous().float()
            cout, cin, kh, kw = w.shape
            assert (kh, kw) == (3, 3)
            f.write(struct.pack("<ii", cout, cin))
            f.write(w.numpy().tobytes())
            f.write(b.numpy().tobytes())
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
