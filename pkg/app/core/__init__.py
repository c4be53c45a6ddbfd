"""Settings, presets and the error hierarchy."""
