"""MCP tool wrappers and input compatibility parsers."""
