"""Flat ``key = value`` configuration files.

Values are scalars, comma-separated lists (``m = 3,5,1``) or tables whose rows
are separated by semicolons (``n = 2,2,2,0; 1,1,1,3``). Keys may be dotted
(``a.kappa``). ``#`` starts a comment.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

from .data import DesignInfo


class ConfigError(ValueError):
    pass


DESIGN_KEYS = ("E", "G", "P", "m", "n", "g_ref", "n_I")
HYPER_KEYS = {
    "a.kappa": "a_kappa",
    "b.kappa": "b_kappa",
    "a.alpha": "a_alpha",
    "b.alpha": "b_alpha",
    "a.p": "a_p",
    "b.p": "b_p",
    "a.gamma": "a_gamma",
    "b.gamma": "b_gamma",
    "a.sigma": "a_sigma",
    "b.sigma": "b_sigma",
}
CHAIN_KEYS = {"burnin": "burn_in", "keep": "keep", "thin": "thin", "chains": "num_chains", "seed": "seed", "init": "init_strategy"}


def _scalar(text: str) -> Any:
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def parse_value(text: str) -> Any:
    text = text.strip()
    if ";" in text:
        return [[_scalar(v) for v in row.split(",") if v.strip()] for row in text.split(";") if row.strip()]
    if "," in text:
        return [_scalar(v) for v in text.split(",") if v.strip()]
    return _scalar(text)


def format_value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            text = "; ".join(",".join(format_value(v) for v in row) for row in value)
            return text + (";" if len(value) == 1 else "")
        # a one-element list must still parse back as a list
        return ",".join(format_value(v) for v in value) + ("," if len(value) == 1 else "")
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config(path: str | Path) -> dict[str, Any]:
    out: dict[str, Any] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            out[key] = parse_value(value)
    return out


def write_config(values: dict[str, Any], path: str | Path, comment: str | None = None) -> None:
    lines = [f"# {comment}"] if comment else []
    lines += [f"{key} = {format_value(value)}" for key, value in values.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def design_from_config(cfg: dict[str, Any]) -> DesignInfo | None:
    """Return the design if the config declares one, ``None`` if it only has ``g_ref``."""
    present = [k for k in DESIGN_KEYS if k in cfg]
    if not present or present == ["g_ref"]:
        return None
    missing = [k for k in ("E", "G", "P", "m", "n", "g_ref") if k not in cfg]
    if missing:
        raise ConfigError(f"incomplete design, missing keys: {', '.join(missing)}")
    n = cfg["n"]
    if not isinstance(n, list) or not n or not isinstance(n[0], list):
        n = [_as_list(n)]
    return DesignInfo.from_dict(
        {"E": cfg["E"], "G": cfg["G"], "P": cfg["P"], "m": _as_list(cfg["m"]), "n": n,
         "g_ref": _as_list(cfg["g_ref"]), "n_I": cfg.get("n_I")}
    )


def reference_groups(cfg: dict[str, Any]) -> list[int]:
    if "g_ref" not in cfg:
        raise ConfigError("configuration must give g_ref (reference group per experiment)")
    return [int(v) for v in _as_list(cfg["g_ref"])]


def hyper_overrides(cfg: dict[str, Any]) -> dict[str, float]:
    return {field: float(cfg[key]) for key, field in HYPER_KEYS.items() if key in cfg}


def chain_overrides(cfg: dict[str, Any]) -> dict[str, Any]:
    return {field: cfg[key] for key, field in CHAIN_KEYS.items() if key in cfg}
