"""Multi-camera BEV semantic segmentation, built on a small numpy autograd."""

__version__ = "0.1.0"
