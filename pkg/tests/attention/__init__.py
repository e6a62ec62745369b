# Tests for boxtraj.attention
