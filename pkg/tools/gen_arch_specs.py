#!/usr/bin/env python3
"""Regenerate the bundled architecture JSON files.

The five reference networks (VGG-16 and GoogLeNet for 32x32 inputs,
ResNet-56/110 for 32x32, ResNet-50 for 224x224) are transcribed from their
standard definitions: conv/batchnorm pairs, residual blocks with projection
shortcuts on stage transitions, and inception modules with branch-ordered
concatenation.  Activation layers are omitted; they carry no parameters or
FLOPs and do not affect channel propagation.

Run from the repo root:  python tools/gen_arch_specs.py
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from clr_rnf.graph import (  # noqa: E402
    ArchSpec,
    Edge,
    LayerSpec,
    save_arch,
    total_flops,
    total_params,
)

OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "clr_rnf" / "archs"


class Builder:
    def __init__(self, name: str, input_shape: tuple[int, int, int]):
        self.name = name
        self.input_shape = input_shape
        self.layers: list[LayerSpec] = []
        self.edges: list[Edge] = []

    def add(
        self,
        name: str,
        kind: str,
        out_ch: int,
        in_ch: int,
        *,
        kernel=(1, 1),
        stride=1,
        padding=0,
        bias=False,
        after=None,
        edge_kind="sequential",
    ) -> int:
        lid = len(self.layers)
        self.layers.append(
            LayerSpec(
                id=lid,
                name=name,
                kind=kind,
                out_channels=out_ch,
                in_channels=in_ch,
                kernel=tuple(kernel),
                stride=stride,
                padding=padding,
                bias=bias,
            )
        )
        if after is not None:
            sources = after if isinstance(after, (list, tuple)) else [after]
            for src in sources:
                self.edges.append(Edge(src, lid, edge_kind))
        return lid

    def conv_bn(self, prefix, out_ch, in_ch, *, kernel, stride=1, padding=0, bias=False, after):
        conv = self.add(
            f"{prefix}.conv", "conv", out_ch, in_ch,
            kernel=kernel, stride=stride, padding=padding, bias=bias, after=after,
        )
        bn = self.add(f"{prefix}.bn", "batchnorm", out_ch, out_ch, after=conv)
        return conv, bn

    def build(self) -> ArchSpec:
        return ArchSpec(
            name=self.name,
            input_shape=self.input_shape,
            layers=tuple(self.layers),
            edges=tuple(self.edges),
        )


def vgg16_cifar() -> ArchSpec:
    plan = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)]
    b = Builder("vgg16-cifar", (3, 32, 32))
    prev = None
    in_ch = 3
    for block, (width, reps) in enumerate(plan, start=1):
        for rep in range(1, reps + 1):
            _, prev = b.conv_bn(
                f"conv{block}_{rep}", width, in_ch,
                kernel=(3, 3), padding=1, bias=True, after=prev,
            )
            in_ch = width
        prev = b.add(f"pool{block}", "pool", width, width, kernel=(2, 2), stride=2, after=prev)
    b.add("fc", "fully-connected", 10, 512, bias=True, after=prev)
    return b.build()


def resnet_cifar(depth: int) -> ArchSpec:
    assert (depth - 2) % 6 == 0
    blocks = (depth - 2) // 6
    b = Builder(f"resnet{depth}-cifar", (3, 32, 32))
    _, prev = b.conv_bn("stem", 16, 3, kernel=(3, 3), padding=1, after=None)
    in_ch = 16
    for stage, width in enumerate((16, 32, 64), start=1):
        for block in range(1, blocks + 1):
            stride = 2 if (stage > 1 and block == 1) else 1
            prefix = f"stage{stage}.block{block}"
            _, bn1 = b.conv_bn(
                f"{prefix}.conv1", width, in_ch, kernel=(3, 3), stride=stride, padding=1, after=prev,
            )
            _, bn2 = b.conv_bn(f"{prefix}.conv2", width, width, kernel=(3, 3), padding=1, after=bn1)
            if stride != 1 or in_ch != width:
                _, shortcut = b.conv_bn(
                    f"{prefix}.downsample", width, in_ch, kernel=(1, 1), stride=stride, after=prev,
                )
            else:
                shortcut = prev
            prev = b.add(
                f"{prefix}.add", "add", width, width,
                after=[shortcut, bn2], edge_kind="residual-add",
            )
            in_ch = width
    pool = b.add("avgpool", "pool", 64, 64, kernel=(8, 8), stride=8, after=prev)
    b.add("fc", "fully-connected", 10, 64, bias=True, after=pool)
    return b.build()


def resnet50_imagenet() -> ArchSpec:
    b = Builder("resnet50-imagenet", (3, 224, 224))
    _, prev = b.conv_bn("stem", 64, 3, kernel=(7, 7), stride=2, padding=3, after=None)
    prev = b.add("stem.maxpool", "pool", 64, 64, kernel=(3, 3), stride=2, padding=1, after=prev)
    in_ch = 64
    stage_cfg = [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)]
    for stage, (width, blocks, stage_stride) in enumerate(stage_cfg, start=1):
        out_ch = width * 4
        for block in range(1, blocks + 1):
            stride = stage_stride if block == 1 else 1
            prefix = f"stage{stage}.block{block}"
            _, bn1 = b.conv_bn(f"{prefix}.conv1", width, in_ch, kernel=(1, 1), after=prev)
            _, bn2 = b.conv_bn(
                f"{prefix}.conv2", width, width, kernel=(3, 3), stride=stride, padding=1, after=bn1,
            )
            _, bn3 = b.conv_bn(f"{prefix}.conv3", out_ch, width, kernel=(1, 1), after=bn2)
            if stride != 1 or in_ch != out_ch:
                _, shortcut = b.conv_bn(
                    f"{prefix}.downsample", out_ch, in_ch, kernel=(1, 1), stride=stride, after=prev,
                )
            else:
                shortcut = prev
            prev = b.add(
                f"{prefix}.add", "add", out_ch, out_ch,
                after=[shortcut, bn3], edge_kind="residual-add",
            )
            in_ch = out_ch
    pool = b.add("avgpool", "pool", 2048, 2048, kernel=(7, 7), stride=7, after=prev)
    b.add("fc", "fully-connected", 1000, 2048, bias=True, after=pool)
    return b.build()


def googlenet_cifar() -> ArchSpec:
    b = Builder("googlenet-cifar", (3, 32, 32))

    def inception(prefix, after, in_ch, n1, n3r, n3, n5r, n5, npool):
        _, b1 = b.conv_bn(f"{prefix}.b1", n1, in_ch, kernel=(1, 1), bias=True, after=after)
        _, r2 = b.conv_bn(f"{prefix}.b2.reduce", n3r, in_ch, kernel=(1, 1), bias=True, after=after)
        _, b2 = b.conv_bn(f"{prefix}.b2", n3, n3r, kernel=(3, 3), padding=1, bias=True, after=r2)
        _, r3 = b.conv_bn(f"{prefix}.b3.reduce", n5r, in_ch, kernel=(1, 1), bias=True, after=after)
        _, m3 = b.conv_bn(f"{prefix}.b3.mid", n5, n5r, kernel=(3, 3), padding=1, bias=True, after=r3)
        _, b3 = b.conv_bn(f"{prefix}.b3", n5, n5, kernel=(3, 3), padding=1, bias=True, after=m3)
        p4 = b.add(f"{prefix}.b4.pool", "pool", in_ch, in_ch, kernel=(3, 3), stride=1, padding=1, after=after)
        _, b4 = b.conv_bn(f"{prefix}.b4", npool, in_ch, kernel=(1, 1), bias=True, after=p4)
        out_ch = n1 + n3 + n5 + npool
        return b.add(
            f"{prefix}.concat", "concat", out_ch, out_ch,
            after=[b1, b2, b3, b4], edge_kind="concat",
        )

    _, prev = b.conv_bn("pre", 192, 3, kernel=(3, 3), padding=1, bias=True, after=None)
    prev = inception("a3", prev, 192, 64, 96, 128, 16, 32, 32)
    prev = inception("b3", prev, 256, 128, 128, 192, 32, 96, 64)
    prev = b.add("maxpool3", "pool", 480, 480, kernel=(3, 3), stride=2, padding=1, after=prev)
    prev = inception("a4", prev, 480, 192, 96, 208, 16, 48, 64)
    prev = inception("b4", prev, 512, 160, 112, 224, 24, 64, 64)
    prev = inception("c4", prev, 512, 128, 128, 256, 24, 64, 64)
    prev = inception("d4", prev, 512, 112, 144, 288, 32, 64, 64)
    prev = inception("e4", prev, 528, 256, 160, 320, 32, 128, 128)
    prev = b.add("maxpool4", "pool", 832, 832, kernel=(3, 3), stride=2, padding=1, after=prev)
    prev = inception("a5", prev, 832, 256, 160, 320, 32, 128, 128)
    prev = inception("b5", prev, 832, 384, 192, 384, 48, 128, 128)
    pool = b.add("avgpool", "pool", 1024, 1024, kernel=(8, 8), stride=8, after=prev)
    b.add("fc", "fully-connected", 10, 1024, bias=True, after=pool)
    return b.build()


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for arch in (
        vgg16_cifar(),
        resnet_cifar(56),
        resnet_cifar(110),
        resnet50_imagenet(),
        googlenet_cifar(),
    ):
        path = OUT_DIR / f"{arch.name}.json"
        save_arch(arch, path)
        flops = total_flops(arch)
        params = total_params(arch)
        groups = [len(g) for g in arch.coupling_groups]
        print(
            f"{arch.name:20s} layers={len(arch.layers):4d} flops={flops:>14,d} "
            f"params={params:>12,d} coupling={groups}"
        )


if __name__ == "__main__":
    main()
