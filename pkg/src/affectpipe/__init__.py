"""Facial-attribute screening pipeline.

Per-frame facial attributes (action units, expressions, arousal, valence)
are produced by a multi-task convolutional network, summarized into a
58-dimensional temporal feature vector per participant, and fed to a bank
of binary classifiers evaluated with leave-one-out cross-validation and
Student's t-tests.
"""

__version__ = "0.1.0"
