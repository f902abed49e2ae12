"""
Efficiency metrics of the model zoo
===================================

Build every model, count parameters, multiply-accumulates, conv-output
activations and the liveness memory proxy at a 256x256 LR input, and put
the computed rows next to the bundled results table.
"""

from effsr import analysis, stats, zoo

reports = [analysis.analyze(zoo.build(name)) for name in zoo.MODELS]
for r in reports:
    print(f"{r.model:<12} params {r.params / 1e6:6.3f}M  flops {r.flops / 1e9:7.2f}G  "
          f"activations {r.activations / 1e6:7.2f}M  convs {r.conv_layer_count}")

# FLOPs grow with the pixel count; the fully convolutional baseline is exactly linear
msr = zoo.build("msrresnet")
for side in (64, 128, 256):
    print(side, analysis.count_flops(msr, (side, side)) / 1e9)

# the same rows, laid out like the fixture, as markdown
print(stats.emit_report(reports, stats.load_fixture(), "md"))
