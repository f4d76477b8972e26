"""VTR: a shifted-patch-tokenization ViT inference engine plus a
functional-and-timing simulator of its block-wise hardware accelerator."""

__version__ = "0.1.0"
