"""Context-aware segmentation toolkit.

Composite global/local cross-entropy losses and an adversarial trainer
whose discriminator scores masks from both whole-image and ROI features,
built for heavily class-imbalanced 2D segmentation.
"""

__version__ = "0.1.0"
