"""Dependence-aware standard errors for regression on relational arrays."""
