"""Human-in-the-loop checkpoint records, decision sources, and the HTTP API."""
