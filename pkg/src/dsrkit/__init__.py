"""Speaker-embedding toolkit: synthesis, augmentation, encoder, losses, evaluation."""

__version__ = "0.1.0"
