"""Interference-aware performance modeling for co-located applications.

Profiles are clustered, cluster representatives are combined into stressor
mixes, a random forest learns the mixes' joint utilization, a Latin hypercube
knowledge base maps utilization regions to mixes, and a per-target decision
tree predicts QoS from background utilization.
"""

__version__ = "0.1.0"
