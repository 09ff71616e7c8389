"""Example external black box: reads the evaluation request as JSON on stdin
and prints a smooth function of the parameters as the last line of stdout."""

import json
import math
import sys

request = json.load(sys.stdin)
p = request["params"]
print(f"eval {request['eval_id']} seed {request['seed']}", file=sys.stderr)
value = (p["x"] - 0.3) ** 2 + 0.5 * (math.log10(p["rate"]) + 3.0) ** 2
print(repr(value))
