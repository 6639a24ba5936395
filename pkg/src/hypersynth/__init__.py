"""One-shot instrument sound synthesizer: a conditional style-based GAN whose
generator weights are refined per input by a pitch-invariant hypernetwork."""

__version__ = "0.1.0"
