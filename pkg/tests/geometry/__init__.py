# Tests for boxtraj.geometry
