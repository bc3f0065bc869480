"""Depth-camera navigation stack for a power wheelchair.

Subsystems: sensor pipeline (depth to clouds), obstacle detection, local
costmap, pose-graph mapper, global/local planners, doorway detection and
traversal, a deterministic simulator, and a benchmark harness.
"""

__version__ = "0.1.0"
