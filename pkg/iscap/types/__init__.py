"""Row shapes of result tables and numpy array aliases."""
