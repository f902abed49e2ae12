"""Efficient super-resolution model zoo and efficiency profiler.

Numpy reference executor for small image-to-image CNN graphs, builders for
MSRResNet / IMDN / RFDN / FIMDN / PAN, static metrics (params, FLOPs,
activations, memory proxy), exact re-parameterisations, and the PSNR /
runtime measurement protocol.
"""
from .analysis import EfficiencyReport, analyze, count_activations, count_conv_layers, count_flops, count_params, estimate_peak_memory
from .graph import GraphBuilder, GraphError, GraphIR, execute, infer_shapes
from .ops import Conv2dParams, ShapeError
from .zoo import build, list_models

__version__ = "0.1.0"
