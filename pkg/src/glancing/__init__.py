"""Numerical laboratory for boundary layers near glancing on concave domains.

Subpackage map:

* airy        -- complex Airy function in factored (exponent, mantissa) form
* symbols     -- discrete symbol calculus on the circle (quantize, compose)
* params      -- parameter regimes, scaling weights, and cutoff functions
* airy_layer  -- boundary layer parametrix where the glancing variable is small
* wkb         -- two-scale WKB parametrix away from glancing
* oracle      -- resolved finite-difference reference solver for the model strip
* disk        -- exact dispersion relations and counting on the unit disk
* cli         -- command line front end
"""

__version__ = "0.1.0"

__all__ = [
    "airy",
    "symbols",
    "params",
    "airy_layer",
    "wkb",
    "oracle",
    "disk",
    "cli",
]
