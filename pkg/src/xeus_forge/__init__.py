"""Speech SSL pre-training data engine.

Segmentation, noise/reverberation augmentation, k-means pseudo-labels,
mask generation and length-aware batching, emitting trainer-ready shards.
"""

from xeus_forge.audio import Waveform, energy, frame_energies, read_wav, resample, write_wav

__version__ = "0.1.0"

__all__ = [
    "Waveform",
    "energy",
    "frame_energies",
    "read_wav",
    "resample",
    "write_wav",
    "__version__",
]
