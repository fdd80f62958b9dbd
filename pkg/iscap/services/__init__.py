"""Domain operations: channels, scenarios, covariances, metrics, designs and experiments."""
