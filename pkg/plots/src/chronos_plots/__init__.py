"""Batch figure rendering for chronos harness CSVs.

The CSV files are the only contract with the integration library: this
package reads them, fits log-log slopes, and writes PNG figures.
"""

__version__ = "0.1.0"
