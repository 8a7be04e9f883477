"""
All names that can be imported from this module are considered public, stable, and
intended for general use.

The [cmvlab.run][] function takes a (possibly partial) scenario document and returns
[a report](../autodocs/misc.md#cmvlab.misc.Report) made of plain JSON data. Scenario
failures like an ambiguous rank or a window that is too small are recorded in the
report instead of being raised, only invalid documents raise
[`ConfigInvalid`][cmvlab.misc.ConfigInvalid].

For a quick look at a solution space, the report is probably all you need:

```py
from cmvlab import run

report = run({"scenario": "solve", "order": 2, "window": 40})
print(report["result"]["classification"])  # prints: 'lebesgue'
```

Independent scenarios can be run together with [cmvlab.sweep][], which keeps the
input order of the reports no matter how many worker processes are used.
"""

from importlib import metadata

__version__ = metadata.version("cmvlab")

from cmvlab.cli import run_scenario as run
from cmvlab.cli import sweep

__all__ = ["run", "sweep", "__version__"]
