"""Desk-scale laboratory for scene-based adversarial domain adaptation of
semantic segmentation: a shared segmentation network, an image
reconstruction generator, and a patch discriminator trained on a labeled
source view and an unlabeled target view of the same synthetic scenes."""

__version__ = "0.1.0"
