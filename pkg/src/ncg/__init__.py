"""Exact calculus on finite etale groupoids: convolution algebra, bigraded
noncommutative forms, bisections, module representations, smoothing-kernel
operators, traces, superconnections and Chern forms, with every identity
checked in exact Gaussian-rational arithmetic."""

__version__ = "0.1.0"
