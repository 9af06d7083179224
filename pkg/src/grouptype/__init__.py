"""Social vs topical group typing from interaction graphs, memberships and tags."""

__version__ = "0.1.0"
