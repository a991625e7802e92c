"""Write the expected permutation-group listings shipped with the package.

The member sets below are transcribed from the reference listings for the
torchvision ResNet-18/50 models (dev helper, run from repo root).
"""

import pathlib

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "pqf" / "data"

R18_WIDTH = {"layer1": 64, "layer2": 128, "layer3": 256, "layer4": 512}

R18 = []
for stage in (1, 2, 3, 4):
    for block in (0, 1):
        b = f"layer{stage}.{block}"
        R18.append(
            ([f"{b}.conv1", f"{b}.bn1"], [f"{b}.conv2"], R18_WIDTH[f"layer{stage}"])
        )
R18.append(
    (
        ["conv1", "bn1", "layer1.0.conv2", "layer1.0.bn2", "layer1.1.conv2", "layer1.1.bn2"],
        ["layer1.0.conv1", "layer2.0.downsample.0", "layer1.1.conv1", "layer2.0.conv1"],
        64,
    )
)
R18.append(
    (
        [
            "layer2.0.downsample.0",
            "layer2.0.downsample.1",
            "layer2.0.conv2",
            "layer2.0.bn2",
            "layer2.1.conv2",
            "layer2.1.bn2",
        ],
        ["layer2.1.conv1", "layer3.0.downsample.0", "layer3.0.conv1"],
        128,
    )
)
R18.append(
    (
        [
            "layer3.0.downsample.0",
            "layer3.0.downsample.1",
            "layer3.0.conv2",
            "layer3.0.bn2",
            "layer3.1.conv2",
            "layer3.1.bn2",
        ],
        ["layer3.1.conv1", "layer4.0.downsample.0", "layer4.0.conv1"],
        256,
    )
)
R18.append(
    (
        [
            "layer4.0.conv2",
            "layer4.0.bn2",
            "layer4.0.downsample.0",
            "layer4.0.downsample.1",
            "layer4.1.conv2",
            "layer4.1.bn2",
        ],
        ["layer4.1.conv1", "fc"],
        512,
    )
)


def resnet50_groups():
    groups = [(["conv1", "bn1"], ["layer1.0.conv1", "layer1.0.downsample.0"], 64)]
    blocks = {1: 3, 2: 4, 3: 6, 4: 3}
    for stage in (1, 2, 3, 4):
        width = 64 * 2 ** (stage - 1)
        out_c = 4 * width
        for block in range(blocks[stage]):
            b = f"layer{stage}.{block}"
            groups.append(([f"{b}.conv1", f"{b}.bn1"], [f"{b}.conv2"], width))
            groups.append(([f"{b}.conv2", f"{b}.bn2"], [f"{b}.conv3"], width))
        parents = [f"layer{stage}.0.conv3", f"layer{stage}.0.bn3"]
        parents += [f"layer{stage}.0.downsample.0", f"layer{stage}.0.downsample.1"]
        for block in range(1, blocks[stage]):
            parents += [f"layer{stage}.{block}.conv3", f"layer{stage}.{block}.bn3"]
        if stage < 4:
            children = [f"layer{stage}.{block}.conv1" for block in range(1, blocks[stage])]
            children += [f"layer{stage + 1}.0.conv1", f"layer{stage + 1}.0.downsample.0"]
        else:
            children = [f"layer4.{block}.conv1" for block in range(1, blocks[stage])] + ["fc"]
        groups.append((parents, children, out_c))
    return groups


def render(groups):
    lines = [
        "# expected permutation groups; group order and member order within a",
        "# group carry no meaning, comparisons are set-based",
    ]
    for i, (parents, children, channels) in enumerate(groups, start=1):
        lines.append(f"group {i}: channels={channels} block=1")
        lines.append("  parents:  [" + ", ".join(parents) + "]")
        lines.append("  children: [" + ", ".join(children) + "]")
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "resnet18.groups").write_text(render(R18))
    r50 = resnet50_groups()
    assert len(r50) == 37, len(r50)
    (OUT / "resnet50.groups").write_text(render(r50))
    print("wrote", OUT / "resnet18.groups", f"({len(R18)} groups)")
    print("wrote", OUT / "resnet50.groups", f"({len(r50)} groups)")
