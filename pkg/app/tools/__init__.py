"""Oracle checks behind the validate command."""
