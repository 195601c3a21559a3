"""MCD, per-system evaluation and the four-system comparison."""
