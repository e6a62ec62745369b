# Tests for boxtraj.evaluation
