"""Self-tallying yes/no voting with commitment-based abort recovery on a simulated blockchain."""

from .group import Group, get_group

__all__ = ["Group", "get_group"]
__version__ = "0.1.0"
