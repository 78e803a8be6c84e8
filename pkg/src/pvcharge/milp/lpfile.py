"""Plain-text dump of a :class:`MilpModel` for debugging.

Grammar (one item per line, sections in this order)::

    \\ <comment>
    Minimize
     obj: <term> <term> ... [+ <constant>]
    Subject To
     <row name>: <term> <term> ... <sense> <rhs>
    Bounds
     <lower> <= <var name> <= <upper>
    Binaries
     <var name> ...
    End

A term is ``+ <coef> <var name>`` or ``- <coef> <var name>``; infinite bounds
print as ``-inf`` / ``+inf``.
"""

from __future__ import annotations

import io
import math
from typing import TextIO, Union

from .model import MilpModel


def _num(value: float) -> str:
    if math.isinf(value):
        return "+inf" if value > 0 else "-inf"
    return repr(float(value))


def _terms(model: MilpModel, pairs) -> str:
    parts = []
    for vid, coef in pairs:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_num(abs(coef))} {model.variables[vid].name}")
    return " ".join(parts) if parts else "0"


def write_lp(model: MilpModel, out: Union[str, TextIO, None] = None) -> str:
    """Render ``model``; also write it to ``out`` (path or stream) when given."""
    buf = io.StringIO()
    buf.write(f"\\ {model.name}\n")
    buf.write("Minimize\n")
    obj = _terms(model, sorted(model.objective.items()))
    if model.objective_offset:
        obj += f" + {_num(model.objective_offset)}"
    buf.write(f" obj: {obj}\n")
    buf.write("Subject To\n")
    for con in model.constraints:
        body = _terms(model, zip(con.indices, con.coefs))
        buf.write(f" {con.name}: {body} {con.sense.value} {_num(con.rhs)}\n")
    buf.write("Bounds\n")
    for var in model.variables:
        buf.write(f" {_num(var.lower)} <= {var.name} <= {_num(var.upper)}\n")
    binaries = [model.variables[i].name for i in model.integral_indices]
    if binaries:
        buf.write("Binaries\n")
        for name in binaries:
            buf.write(f" {name}\n")
    buf.write("End\n")
    text = buf.getvalue()
    if isinstance(out, str):
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    elif out is not None:
        out.write(text)
    return text
