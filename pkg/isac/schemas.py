"""
Result-table schemas, one per experiment kind. Column order is part of the contract.
"""

import pandera as pa
from pandera import Check, Column, DataFrameSchema


def _schema(columns: dict) -> DataFrameSchema:
    columns = dict(columns)
    columns["config_hash"] = Column(str, Check.str_length(min_value=16, max_value=16))
    return DataFrameSchema(columns, strict=True, ordered=True, coerce=True)


_probability = [Check.greater_than_or_equal_to(0.0), Check.less_than_or_equal_to(1.0)]
_non_negative = Check.greater_than_or_equal_to(0.0)

ESTIMATE_SCHEMA = _schema({
    "trial": Column(int, Check.greater_than_or_equal_to(0)),
    "snr_db": Column(float),
    "nu_true": Column(float),
    "nu_hat": Column(float),
    "err": Column(float),
    "nu_integer": Column(float),
    "nu_oracle": Column(float),
})

PROB_SWEEP_SCHEMA = _schema({
    "snr_db": Column(float),
    "p_eff_mc": Column(float, _probability),
    "p_eff_closed": Column(float, _probability),
    "ci95": Column(float, _non_negative),
})

MSE_SWEEP_SCHEMA = _schema({
    "snr_db": Column(float),
    "mse_mc": Column(float, _non_negative),
    "mse_cond_mc": Column(float, _non_negative, nullable=True),
    "mse_approx": Column(float, _non_negative, nullable=True),
    "mse_upper": Column(float, _non_negative, nullable=True),
    "delta_lower": Column(float, nullable=True),
    "delta_upper": Column(float, nullable=True),
})

BEAMFORM_SCHEMA = _schema({
    "trial": Column(int, Check.greater_than_or_equal_to(0)),
    "objective_init": Column(float, _non_negative),
    "objective_final": Column(float, _non_negative),
    "iterations": Column(int, Check.greater_than_or_equal_to(0)),
    "rate": Column(float, _non_negative),
    "rate_lower_bound": Column(float, _non_negative),
    "los_gain": Column(float, _non_negative),
    "gamma_prime": Column(float, _non_negative),
})

RATE_SWEEP_SCHEMA = _schema({
    "snr_db": Column(float),
    "rate_subspace": Column(float, _non_negative),
    "rate_strongest": Column(float, _non_negative),
    "rate_random": Column(float, _non_negative),
    "rate_no_irs": Column(float, _non_negative),
})

CONVERGENCE_SCHEMA = _schema({
    "iter": Column(int, Check.greater_than_or_equal_to(0)),
    "objective": Column(float, _non_negative),
    "rate": Column(float, _non_negative),
})

VELOCITY_SWEEP_SCHEMA = _schema({
    "velocity_kmh": Column(float, _non_negative),
    "mse_ratio": Column(float, _non_negative),
    "mse_integer": Column(float, _non_negative),
})

RESULT_SCHEMAS = {
    "estimate": ESTIMATE_SCHEMA,
    "prob-sweep": PROB_SWEEP_SCHEMA,
    "mse-sweep": MSE_SWEEP_SCHEMA,
    "beamform": BEAMFORM_SCHEMA,
    "rate-sweep": RATE_SWEEP_SCHEMA,
    "convergence": CONVERGENCE_SCHEMA,
    "velocity-sweep": VELOCITY_SWEEP_SCHEMA,
}

# Axis and metric columns for emitted plot scripts
PLOT_AXES = {
    "estimate": ("trial", ["err"]),
    "prob-sweep": ("snr_db", ["p_eff_mc", "p_eff_closed"]),
    "mse-sweep": ("snr_db", ["mse_mc", "mse_cond_mc", "mse_approx", "mse_upper"]),
    "beamform": ("trial", ["objective_init", "objective_final"]),
    "rate-sweep": ("snr_db", ["rate_subspace", "rate_strongest", "rate_random", "rate_no_irs"]),
    "convergence": ("iter", ["objective"]),
    "velocity-sweep": ("velocity_kmh", ["mse_ratio", "mse_integer"]),
}

LOG_SCALE = {"mse-sweep", "velocity-sweep"}


def columns_for(kind: str) -> list:
    return list(RESULT_SCHEMAS[kind].columns)


def validate_table(kind: str, table):
    """Validate a result table against its schema (lazy: all failures reported together)"""
    try:
        return RESULT_SCHEMAS[kind].validate(table, lazy=True)
    except pa.errors.SchemaErrors as e:
        raise ValueError(f"{kind} result table failed validation:\n{e.failure_cases}") from e
