"""Run ledger persistence."""
