"""Stage scheduling, escalation handling, and the run engine."""
