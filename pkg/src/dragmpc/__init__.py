"""Drag-aware flatness-based model predictive control for multirotors.

The package couples four pieces:

* an exact discrete-time model of the differentially flat multirotor
  (integrator chains per axis plus yaw),
* Gaussian-process regression of residual aerodynamic forces, with a
  first-order (value + gradient) joint posterior used to propagate the
  learned disturbance and its uncertainty through the predictions,
* chance-constraint tightening that turns probabilistic thrust-magnitude
  and thrust-angle limits into second-order cone constraints,
* an embedded operator-splitting conic solver and a receding-horizon
  controller that assembles and solves the resulting SOCP each tick.

A planar simulator and an experiment harness close the loop and benchmark
the learned controller against non-learning baselines.
"""

__version__ = "0.1.0"
