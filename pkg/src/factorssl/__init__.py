"""Self-supervised contrastive pretraining for multimodal time series.

Factorized shared/private embedding spaces with an orthogonality
constraint and a temporal structural constraint, plus the full desk-scale
training and downstream-evaluation toolkit around them.
"""

__version__ = "0.1.0"
