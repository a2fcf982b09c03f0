"""Activity-based load-shifting recommendations from appliance-level consumption data."""

__version__ = "0.1.0"
