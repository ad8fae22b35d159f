"""Exception types shared across the package."""


class TexmapError(Exception):
    """Base class for all texmap errors."""


class InputError(TexmapError):
    """Bad user input: unreadable files, malformed manifests, invalid meshes."""


class ConsistencyError(TexmapError):
    """Internal invariant violation; indicates a bug, not bad input."""
