# Tests for ftem
