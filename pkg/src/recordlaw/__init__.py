"""recordlaw: forecasting toolkit for monotone record progressions."""

__version__ = "0.1.0"
