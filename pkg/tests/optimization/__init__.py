# Tests for boxtraj.optimization
