"""Tolerance profile used by the certification suites and the CLI."""

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class ToleranceProfile:
    """Pass/fail thresholds, grouped by the kind of quantity checked.

    Only the thresholds live here; computed residuals never depend on them.
    """

    construction: float = 1e-12
    property: float = 1e-10
    constraint: float = 1e-10
    oracle: float = 1e-10
    local_form: float = 1e-6
    global_form: float = 1e-5
    bracket: float = 1e-5
    rank_fraction: float = 0.95
    ode_rtol: float = 1e-10
    ode_drift: float = 1e-8
    crossing_drift: float = 1e-7
    cross_method: float = 1e-6
    reversibility: float = 1e-7

    def scaled(self, factor):
        """Return a copy with every absolute threshold multiplied by `factor`.

        ``rank_fraction`` and ``ode_rtol`` are left alone: the first is a ratio
        and the second controls the computation rather than judging it.
        """
        keep = {"rank_fraction", "ode_rtol"}
        return replace(self, **{f.name: getattr(self, f.name) * factor
                                for f in fields(self) if f.name not in keep})

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"scale"}
        if unknown:
            raise ValueError(f"unknown tolerance fields: {sorted(unknown)}")
        prof = cls(**{k: float(v) for k, v in data.items() if k in known})
        if "scale" in data:
            prof = prof.scaled(float(data["scale"]))
        return prof


DEFAULT_TOLERANCES = ToleranceProfile()
