"""Generate the shipped ResNet arch specs (dev helper, run from repo root)."""

import pathlib

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "pqf" / "data"


def resnet18():
    lines, edges = [], []

    def layer(name, kind, k, c_in, c_out):
        lines.append(f"{name} {kind} {k} {c_in} {c_out}")

    def edge(a, b):
        edges.append(f"edge {a} {b}")

    layer("input", "input", 1, 3, 3)
    layer("conv1", "conv", 7, 3, 64)
    layer("bn1", "batchnorm", 1, 64, 64)
    layer("relu1", "relu", 1, 64, 64)
    layer("maxpool", "pool", 1, 64, 64)
    edge("input", "conv1")
    edge("conv1", "bn1")
    edge("bn1", "relu1")
    edge("relu1", "maxpool")

    prev = "maxpool"
    stage_channels = {1: 64, 2: 128, 3: 256, 4: 512}
    in_c = 64
    for stage in (1, 2, 3, 4):
        out_c = stage_channels[stage]
        for block in (0, 1):
            base = f"layer{stage}.{block}"
            downsample = block == 0 and stage > 1
            layer(f"{base}.conv1", "conv", 3, in_c, out_c)
            layer(f"{base}.bn1", "batchnorm", 1, out_c, out_c)
            layer(f"{base}.relu1", "relu", 1, out_c, out_c)
            layer(f"{base}.conv2", "conv", 3, out_c, out_c)
            layer(f"{base}.bn2", "batchnorm", 1, out_c, out_c)
            if downsample:
                layer(f"{base}.downsample.0", "conv", 1, in_c, out_c)
                layer(f"{base}.downsample.1", "batchnorm", 1, out_c, out_c)
            layer(f"{base}.add", "add", 1, out_c, out_c)
            layer(f"{base}.relu2", "relu", 1, out_c, out_c)
            edge(prev, f"{base}.conv1")
            edge(f"{base}.conv1", f"{base}.bn1")
            edge(f"{base}.bn1", f"{base}.relu1")
            edge(f"{base}.relu1", f"{base}.conv2")
            edge(f"{base}.conv2", f"{base}.bn2")
            edge(f"{base}.bn2", f"{base}.add")
            if downsample:
                edge(prev, f"{base}.downsample.0")
                edge(f"{base}.downsample.0", f"{base}.downsample.1")
                edge(f"{base}.downsample.1", f"{base}.add")
            else:
                edge(prev, f"{base}.add")
            edge(f"{base}.add", f"{base}.relu2")
            prev = f"{base}.relu2"
            in_c = out_c
    layer("avgpool", "pool", 1, 512, 512)
    layer("fc", "fc", 1, 512, 1000)
    layer("output", "output", 1, 1000, 1000)
    edge(prev, "avgpool")
    edge("avgpool", "fc")
    edge("fc", "output")
    return "\n".join(lines + edges) + "\n"


def resnet50():
    lines, edges = [], []

    def layer(name, kind, k, c_in, c_out):
        lines.append(f"{name} {kind} {k} {c_in} {c_out}")

    def edge(a, b):
        edges.append(f"edge {a} {b}")

    layer("input", "input", 1, 3, 3)
    layer("conv1", "conv", 7, 3, 64)
    layer("bn1", "batchnorm", 1, 64, 64)
    layer("relu1", "relu", 1, 64, 64)
    layer("maxpool", "pool", 1, 64, 64)
    edge("input", "conv1")
    edge("conv1", "bn1")
    edge("bn1", "relu1")
    edge("relu1", "maxpool")

    prev = "maxpool"
    in_c = 64
    for stage, blocks in ((1, 3), (2, 4), (3, 6), (4, 3)):
        width = 64 * 2 ** (stage - 1)
        out_c = width * 4
        for block in range(blocks):
            base = f"layer{stage}.{block}"
            downsample = block == 0
            layer(f"{base}.conv1", "conv", 1, in_c, width)
            layer(f"{base}.bn1", "batchnorm", 1, width, width)
            layer(f"{base}.relu1", "relu", 1, width, width)
            layer(f"{base}.conv2", "conv", 3, width, width)
            layer(f"{base}.bn2", "batchnorm", 1, width, width)
            layer(f"{base}.relu2", "relu", 1, width, width)
            layer(f"{base}.conv3", "conv", 1, width, out_c)
            layer(f"{base}.bn3", "batchnorm", 1, out_c, out_c)
            if downsample:
                layer(f"{base}.downsample.0", "conv", 1, in_c, out_c)
                layer(f"{base}.downsample.1", "batchnorm", 1, out_c, out_c)
            layer(f"{base}.add", "add", 1, out_c, out_c)
            layer(f"{base}.relu3", "relu", 1, out_c, out_c)
            edge(prev, f"{base}.conv1")
            edge(f"{base}.conv1", f"{base}.bn1")
            edge(f"{base}.bn1", f"{base}.relu1")
            edge(f"{base}.relu1", f"{base}.conv2")
            edge(f"{base}.conv2", f"{base}.bn2")
            edge(f"{base}.bn2", f"{base}.relu2")
            edge(f"{base}.relu2", f"{base}.conv3")
            edge(f"{base}.conv3", f"{base}.bn3")
            edge(f"{base}.bn3", f"{base}.add")
            if downsample:
                edge(prev, f"{base}.downsample.0")
                edge(f"{base}.downsample.0", f"{base}.downsample.1")
                edge(f"{base}.downsample.1", f"{base}.add")
            else:
                edge(prev, f"{base}.add")
            edge(f"{base}.add", f"{base}.relu3")
            prev = f"{base}.relu3"
            in_c = out_c
    layer("avgpool", "pool", 1, 2048, 2048)
    layer("fc", "fc", 1, 2048, 1000)
    layer("output", "output", 1, 1000, 1000)
    edge(prev, "avgpool")
    edge("avgpool", "fc")
    edge("fc", "output")
    return "\n".join(lines + edges) + "\n"


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "resnet18.arch").write_text(resnet18())
    (OUT / "resnet50.arch").write_text(resnet50())
    print("wrote", OUT / "resnet18.arch")
    print("wrote", OUT / "resnet50.arch")
