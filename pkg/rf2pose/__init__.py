"""
rf2pose - generative counterfactual regularization for RF-based 3D human pose estimation.
"""

__version__ = "0.1.0"
