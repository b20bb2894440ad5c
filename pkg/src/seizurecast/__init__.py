"""End-to-end CNN seizure prediction from raw multichannel EEG windows."""

__version__ = "0.1.0"
