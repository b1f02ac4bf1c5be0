"""Exception hierarchy shared across the codec."""


class VxpcError(Exception):
    """Base class for all codec errors."""


class PlyError(VxpcError):
    """Malformed or unsupported PLY input. Carries the byte offset of the fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class GeometryError(VxpcError):
    """Invalid coordinates, depths, or block addressing."""


class FormatError(VxpcError):
    """Corrupt or inconsistent serialized data (octree, container, weights)."""
