"""Knowledge-graph driven intrusion response assistant."""

__version__ = "0.1.0"
