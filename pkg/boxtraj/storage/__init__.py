"""File formats, heatmaps and run configuration."""
