"""Tweedie ratemaking for the Income Stabilization Tool.

Simulates IST indemnities from a farm panel, fits GLM, grouped LASSO,
grouped elastic net and gradient boosting models of the expected
indemnity, and evaluates the resulting premiums out of sample and
economically.
"""

__version__ = "0.1.0"
