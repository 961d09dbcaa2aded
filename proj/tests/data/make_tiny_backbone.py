"""Regenerates tiny_backbone.onnx, a stand-in classifier trunk for the
pretrained-baseline tests: conv(3->6, k3, s2) + ReLU + global average pool
+ linear(6->4). The pooled activations are the graph value
'/ReduceMean_output_0'."""

import torch


class Tiny(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.conv = torch.nn.Conv2d(3, 6, 3, stride=2)
        self.fc = torch.nn.Linear(6, 4)

    def forward(self, x):
        h = torch.relu(self.conv(x))
        return self.fc(h.mean(dim=(2, 3)))


if __name__ == "__main__":
    torch.manual_seed(0)
    torch.onnx.export(Tiny().eval(), torch.zeros(1, 3, 32, 32), "tiny_backbone.onnx",
                      input_names=["input"], output_names=["logits"], opset_version=11, dynamo=False)
