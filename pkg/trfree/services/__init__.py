"""Services package for the T^(r)-free process laboratory.

One module per concern: combinatorics, the process engine, the brute-force oracle,
observables, independence-number solvers and ensemble execution.
"""
