"""explainbench: saliency attribution, LVM explanations, and text metrics."""

__version__ = "0.1.0"
