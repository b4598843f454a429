"""Desk-scale optical flow lab.

Synthetic layered-scene data generation, a learned image-conditioned prior
over flow fields, an unsupervised flow predictor trained against that
prior, and a classical variational baseline, all sized to run on a single
CPU core.
"""

__version__ = "0.1.0"
