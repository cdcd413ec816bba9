"""deepcva: neural exercise policies, exposures and CVA for derivative portfolios."""

__version__ = "0.1.0"
