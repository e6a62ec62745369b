# Tests for boxtraj.storage
