"""Writes the tiny ONNX models used by the backend tests.

Both graphs use only Gemm, GlobalAveragePool, Flatten, Add and Sigmoid so
that OpenCV's ONNX importer (4.5+) can run them.

Layout model (sequence length fixed at 512, padded with zeros)
  inputs:  input_ids [512, 1]   hashed word ids as float32, 0 = padding
           bbox [512, 4]        boxes on the 0-1000 grid
           pixel_values [1, 3, 224, 224]  RGB in [0, 1]
  output:  logits [512, 8]      class order Title, Client, Stamp, Signature,
                                Date, Total, TotalValue, O
  logits = (bbox / 1000) W_box^T + b_box + input_ids W_ids^T + mean_rgb W_pix^T

Detector model
  input:   image [1, 3, 320, 320]  RGB in [0, 1]
  outputs: boxes [1, 4N]  x_min, y_min, x_max, y_max in the 320 x 320 frame
           scores [1, N]
           classes [1, N]   0 = Stamp, 1 = Signature

The weights are written to weights.json so tests can recompute outputs.
Usage: python3 make_fixture_models.py <output dir>
"""

import json
import pathlib
import sys

import torch

torch.manual_seed(0)
out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "tests/data/models")
out.mkdir(parents=True, exist_ok=True)
SEQ = 512


def mean_rgb(x):
    return torch.flatten(torch.nn.functional.adaptive_avg_pool2d(x, 1), 1)


class Layout(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.box = torch.nn.Linear(4, 8)
        self.ids = torch.nn.Linear(1, 8, bias=False)
        self.pix = torch.nn.Linear(3, 8, bias=False)
        with torch.no_grad():
            self.ids.weight.mul_(1e-4)

    def forward(self, input_ids, bbox, pixel_values):
        return self.box(bbox / 1000.0) + self.ids(input_ids) + self.pix(mean_rgb(pixel_values))


class Detector(torch.nn.Module):
    BOXES = [[40.0, 200.0, 120.0, 260.0], [180.0, 220.0, 300.0, 280.0], [44.0, 204.0, 118.0, 262.0]]
    CLASSES = [0.0, 1.0, 0.0]
    A = [2.0, -1.0, 0.5]   # score = sigmoid(A * mean intensity + S0)
    S0 = [0.5, 0.8, -2.5]

    def __init__(self):
        super().__init__()
        n = len(self.BOXES)
        self.boxes = torch.nn.Linear(3, 4 * n)
        self.scores = torch.nn.Linear(3, n)
        self.classes = torch.nn.Linear(3, n)
        with torch.no_grad():
            self.boxes.weight.zero_()
            self.boxes.bias.copy_(torch.tensor(self.BOXES).flatten())
            self.scores.weight.copy_(torch.tensor(self.A).unsqueeze(1).repeat(1, 3) / 3.0)
            self.scores.bias.copy_(torch.tensor(self.S0))
            self.classes.weight.zero_()
            self.classes.bias.copy_(torch.tensor(self.CLASSES))

    def forward(self, image):
        x = mean_rgb(image)
        return self.boxes(x), torch.sigmoid(self.scores(x)), self.classes(x)


layout = Layout().eval()
torch.onnx.export(
    layout,
    (torch.zeros(SEQ, 1), torch.zeros(SEQ, 4), torch.zeros(1, 3, 224, 224)),
    str(out / "layout.onnx"),
    input_names=["input_ids", "bbox", "pixel_values"],
    output_names=["logits"],
    opset_version=11,
    dynamo=False,
)
det = Detector().eval()
torch.onnx.export(
    det,
    (torch.zeros(1, 3, 320, 320),),
    str(out / "detector.onnx"),
    input_names=["image"],
    output_names=["boxes", "scores", "classes"],
    opset_version=11,
    dynamo=False,
)

weights = {
    "layout": {
        "box_weight": layout.box.weight.detach().tolist(),
        "box_bias": layout.box.bias.detach().tolist(),
        "ids_weight": layout.ids.weight.detach().flatten().tolist(),
        "pix_weight": layout.pix.weight.detach().tolist(),
    },
    "detector": {"boxes": Detector.BOXES, "classes": Detector.CLASSES, "a": Detector.A, "s0": Detector.S0},
}
(out / "weights.json").write_text(json.dumps(weights, indent=2) + "\n")
