"""Scenario runner behind the pidsqueeze command."""
