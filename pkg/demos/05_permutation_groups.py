"""Which layers must share one permutation, resolved from the DAG.

Reordering a layer's output channels silently reorders its consumers'
inputs, residual adds force whole streams to agree, and reshapes pin
contiguous blocks together. The resolver unifies channel slots across the
graph and returns the independent groups; slots touching the network input
or output are fixed and produce no group.
"""

import importlib.resources as resources

from pqf import graph, tensor_io

for name in ("resnet18", "resnet50"):
    arch = tensor_io.parse_arch_spec(
        (resources.files("pqf") / "data" / f"{name}.arch").read_text()
    )
    groups = graph.resolve_groups(arch)
    print(f"{name}: {len(groups)} independent permutation groups")

print()
print("ResNet-18 groups in full:")
arch = tensor_io.parse_arch_spec(
    (resources.files("pqf") / "data" / "resnet18.arch").read_text()
)
print(graph.format_groups(graph.resolve_groups(arch)))

print()
print("a reshape between a conv and a dense layer pins channel blocks:")
toy = tensor_io.parse_arch_spec(
    """
    input input 1 2 2
    conv1 conv 3 2 4
    relu1 relu 1 4 4
    flat reshape 1 4 36
    fc1 fc 1 36 5
    output output 1 5 5
    edge input conv1
    edge conv1 relu1
    edge relu1 flat
    edge flat fc1
    edge fc1 output
    """
)
print(graph.format_groups(graph.resolve_groups(toy)))
