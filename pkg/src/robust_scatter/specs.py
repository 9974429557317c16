"""Parsing of plain-text key=value specs for models, estimators, and
experiment configs.

Model specs look like ``family=t nu=3 p=20``; estimator specs like
``estimator=sq q=0.9``, ``estimator=rocke gamma=0.8``,
``estimator=shr c=6.0``, ``estimator=bisquare``, ``estimator=mle``, or
``estimator=sample``.  Config files hold one ``key = value`` pair per line;
``#`` starts a comment; repeated keys accumulate into lists.  The exact key
names are documented in the CLI module.
"""

from dataclasses import dataclass

from .elliptical import Family, GeneratingFunction
from .errors import SpecFormatError

__all__ = ["parse_kv", "gen_from_spec", "EstimatorSpec", "parse_estimator_spec", "read_config_text", "read_config"]

_FAMILY_ALIASES = {
    "kotz": Family.KOTZ,
    "gaussian": Family.GAUSSIAN,
    "normal": Family.GAUSSIAN,
    "pearson2": Family.PEARSON_II,
    "pearson-ii": Family.PEARSON_II,
    "pearson7": Family.PEARSON_VII,
    "pearson-vii": Family.PEARSON_VII,
    "t": Family.T,
    "student-t": Family.T,
    "cauchy": Family.CAUCHY,
    "genhyp": Family.GEN_HYPERBOLIC,
    "generalized-hyperbolic": Family.GEN_HYPERBOLIC,
    "vg": Family.VARIANCE_GAMMA,
    "variance-gamma": Family.VARIANCE_GAMMA,
    "laplace": Family.LAPLACE,
    "mvhyp": Family.MULTIVARIATE_HYPERBOLIC,
    "multivariate-hyperbolic": Family.MULTIVARIATE_HYPERBOLIC,
    "hum": Family.HYPERBOLIC_MARGINALS,
    "hyperbolic-marginals": Family.HYPERBOLIC_MARGINALS,
    "nig": Family.NORMAL_INVERSE_GAUSSIAN,
    "normal-inverse-gaussian": Family.NORMAL_INVERSE_GAUSSIAN,
}


def parse_kv(text):
    """Split ``k1=v1 k2=v2 ...`` into an ordered dict of strings."""
    out = {}
    for token in text.split():
        if "=" not in token:
            raise SpecFormatError(f"expected key=value, got {token!r} in {text!r}")
        key, value = token.split("=", 1)
        if not key or not value:
            raise SpecFormatError(f"empty key or value in {token!r}")
        if key in out:
            raise SpecFormatError(f"duplicate key {key!r} in {text!r}")
        out[key] = value
    if not out:
        raise SpecFormatError("empty spec string")
    return out


def gen_from_spec(text, p=None):
    """GeneratingFunction from ``family=... p=... <params>``."""
    kv = parse_kv(text)
    fam_name = kv.pop("family", None)
    if fam_name is None:
        raise SpecFormatError(f"model spec {text!r} is missing the 'family' key")
    family = _FAMILY_ALIASES.get(fam_name.lower())
    if family is None:
        raise SpecFormatError(f"unknown family {fam_name!r} (valid: {sorted(_FAMILY_ALIASES)})")
    p_spec = kv.pop("p", None)
    if p_spec is not None:
        p = int(p_spec)
    if p is None:
        raise SpecFormatError(f"model spec {text!r} is missing the dimension 'p'")
    try:
        params = {k: float(v) for k, v in kv.items()}
        return GeneratingFunction(family, p, **params)
    except (TypeError, ValueError) as exc:
        raise SpecFormatError(f"invalid model spec {text!r}: {exc}") from exc


_ESTIMATOR_KINDS = {"sq", "rocke", "bisquare", "shr", "mle", "sample"}
_TUNING_KEY = {"sq": "q", "rocke": "gamma", "shr": "c"}


@dataclass(frozen=True)
class EstimatorSpec:
    """Parsed estimator request; ``tuning`` is None when auto-tuned."""

    kind: str
    tuning: float | None
    label: str

    @property
    def tunable(self):
        return self.kind in _TUNING_KEY


def parse_estimator_spec(text):
    kv = parse_kv(text)
    kind = kv.pop("estimator", None)
    if kind is None:
        raise SpecFormatError(f"estimator spec {text!r} is missing the 'estimator' key")
    kind = kind.lower()
    if kind not in _ESTIMATOR_KINDS:
        raise SpecFormatError(f"unknown estimator {kind!r} (valid: {sorted(_ESTIMATOR_KINDS)})")
    tuning = None
    key = _TUNING_KEY.get(kind)
    if key is not None and key in kv:
        try:
            tuning = float(kv.pop(key))
        except ValueError as exc:
            raise SpecFormatError(f"invalid {key} in {text!r}") from exc
    if kv:
        raise SpecFormatError(f"unexpected keys {sorted(kv)} in estimator spec {text!r}")
    label = kind if tuning is None else f"{kind}({_TUNING_KEY[kind]}={tuning:g})"
    return EstimatorSpec(kind, tuning, label)


def read_config_text(text):
    """Parse ``key = value`` lines; repeated keys accumulate into lists."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecFormatError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise SpecFormatError(f"line {lineno}: empty key or value")
        if key in out:
            prev = out[key]
            out[key] = prev + [value] if isinstance(prev, list) else [prev, value]
        else:
            out[key] = value
    return out


def read_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return read_config_text(fh.read())
