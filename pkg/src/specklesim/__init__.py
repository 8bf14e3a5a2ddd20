"""specklesim: split-step simulation and analysis of speckle intensity
correlations formed behind a thick random medium, plus the moment-transport
oracles and mask-retrieval tools that go with them."""

__version__ = "0.1.0"
