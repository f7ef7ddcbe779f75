"""homodrift tests."""
