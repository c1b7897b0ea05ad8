"""loomxai: notebook-embeddable XAI widgets with kernel/view state sync."""

__version__ = "0.1.0"

WIRE_VERSION = "loomxai/1"
