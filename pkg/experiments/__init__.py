"""experiment kinds, one module per kind, each with a Task class"""
