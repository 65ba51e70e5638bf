"""Stereo disparity estimation on a self-contained numpy tensor engine.

The package provides a small correlation-volume stereo network (2-D feature
backbone, cosine correlation volume with attention weighting, 3-D hourglass
aggregation with context-feature fusion, top-2 soft-argmax regression and
learned convex upsampling), together with the reverse-mode autodiff engine it
runs on, a synthetic random-dot stereogram generator, PFM/PNM data I/O, a
trainer, evaluation metrics, ablation drivers, and a command line front end.
"""

__version__ = "0.1.0"
