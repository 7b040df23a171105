#!/usr/bin/env python3
"""Export torchvision's ResNet-18 weights into the AMWT archive format.

The C++ side refuses to fabricate pretrained weights, so this script is the
one sanctioned bridge: it downloads (or reads a cached copy of) the
torchvision ResNet-18 state dict, drops the classification layer, and writes
the remaining backbone tensors into the project's tensor-archive container.

Usage:
    python3 tools/export_resnet18_weights.py --out resnet18_backbone.amwt

Point $AMAC_RESNET18_WEIGHTS (or encoder.pretrained_weights in the run
config) at the produced file.
"""

import argparse
import json
import struct
import sys

MAGIC = b"AMWT"
VERSION = 1

DTYPE_TAGS = {
    "torch.float32": "f32",
    "torch.float64": "f64",
    "torch.int64": "i64",
    "torch.int32": "i32",
    "torch.uint8": "u8",
}


def state_dict_from_torchvision():
    from torchvision.models import ResNet18_Weights, resnet18

    model = resnet18(weights=ResNet18_Weights.IMAGENET1K_V1)
    return model.state_dict()


def state_dict_from_file(path):
    import torch

    blob = torch.load(path, map_location="cpu", weights_only=True)
    return blob.get("state_dict", blob) if isinstance(blob, dict) else blob


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="output .amwt path")
    parser.add_argument(
        "--from-file",
        help="existing ResNet-18 state-dict .pth instead of a torchvision download",
    )
    args = parser.parse_args()

    state = (
        state_dict_from_file(args.from_file)
        if args.from_file
        else state_dict_from_tv_with_message()
    )

    tensors = {}
    for name, tensor in state.items():
        if name.startswith("fc."):
            continue  # classification layer is replaced by the projection head
        tag = DTYPE_TAGS.get(str(tensor.dtype))
        if tag is None:
            raise SystemExit(f"unsupported dtype {tensor.dtype} for {name}")
        tensors[name] = (tag, tensor.detach().cpu().contiguous())

    index = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        tag, tensor = tensors[name]
        data = tensor.numpy().tobytes()  # numpy is little-endian on every target we build for
        index.append(
            {
                "name": name,
                "dtype": tag,
                "shape": list(tensor.shape),
                "offset": offset,
                "nbytes": len(data),
            }
        )
        blobs.append(data)
        offset += len(data)

    header = json.dumps(
        {
            "meta": {
                "kind": "resnet18_backbone",
                "source": "torchvision IMAGENET1K_V1" if not args.from_file else args.from_file,
            },
            "tensors": index,
        }
    ).encode("utf-8")

    with open(args.out, "wb") as out:
        out.write(MAGIC)
        out.write(struct.pack("<I", VERSION))
        out.write(struct.pack("<Q", len(header)))
        out.write(header)
        for data in blobs:
            out.write(data)

    print(f"wrote {len(index)} tensors ({offset} bytes) to {args.out}")


def state_dict_from_tv_with_message():
    try:
        return state_dict_from_torchvision()
    except Exception as e:  # torchvision missing or download blocked
        print(
            "could not fetch torchvision weights ({}); pass --from-file with a "
            "local ResNet-18 state dict instead".format(e),
            file=sys.stderr,
        )
        raise SystemExit(1)


if __name__ == "__main__":
    main()
