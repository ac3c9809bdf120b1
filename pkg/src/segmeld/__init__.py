"""Region proposals, metric-learning classification and pixel-vote fusion
for semantic segmentation from few examples, with F0.5-centred evaluation."""

__version__ = "0.1.0"
