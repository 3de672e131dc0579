"""LiDAR-camera 3D multi-object tracking over synchronous and asynchronous frames."""

__version__ = "0.1.0"
