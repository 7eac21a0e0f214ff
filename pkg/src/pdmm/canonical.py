"""Canonical JSON serialization.

Equal values must produce byte-equal files: keys are sorted, numbers are
rendered with 17 significant digits, newline is LF, and there is no
insignificant whitespace.
"""
import json
import math


def _render(obj, out):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite number not serializable: {obj!r}")
        out.append(format(obj, ".17g"))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=True))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _render(v, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, k in enumerate(sorted(obj)):
            if not isinstance(k, str):
                raise TypeError(f"object keys must be strings, got {k!r}")
            if i:
                out.append(",")
            out.append(json.dumps(k, ensure_ascii=True))
            out.append(":")
            _render(obj[k], out)
        out.append("}")
    else:
        raise TypeError(f"not serializable to canonical JSON: {type(obj).__name__}")


def dumps(obj) -> str:
    """Serialize to canonical JSON text (single trailing LF)."""
    out = []
    _render(obj, out)
    out.append("\n")
    return "".join(out)


def dump_file(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def load_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
