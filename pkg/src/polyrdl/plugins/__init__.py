"""Reference plug-ins: logging, undo, rollback."""
