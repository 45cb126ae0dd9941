#!/usr/bin/env python3
"""
Auto-generated documentation for the experiment result tables.
"""

import os
import sys
from datetime import datetime

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..'))

from isac.schemas import RESULT_SCHEMAS

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

TABLE_DESCRIPTIONS = {
    "estimate": "One row per trial of the full frame pipeline: LoS Doppler truth and estimates",
    "prob-sweep": "Effective sensing probability per SNR, Monte Carlo against the closed form",
    "mse-sweep": "Estimator MSE per SNR at a fixed fractional Doppler offset, with closed-form bounds",
    "beamform": "One row per random scenario of the joint combiner / IRS phase design",
    "rate-sweep": "Mean achievable rate per SNR for the joint design and three baselines",
    "convergence": "Objective and rate per outer iteration, averaged over scenarios",
    "velocity-sweep": "Estimator MSE against user speed, showing the Doppler aliasing limit",
}

COLUMN_DESCRIPTIONS = {
    "trial": "Trial index (also the RNG stream index)",
    "snr_db": "Pilot SNR x_p^2 / sigma^2 in dB",
    "nu_true": "True LoS Doppler (Hz)",
    "nu_hat": "Ratio-based estimate (Hz)",
    "err": "nu_hat - nu_true (Hz)",
    "nu_integer": "On-grid peak estimate without fractional correction (Hz)",
    "nu_oracle": "Least-squares fit over an oversampled Doppler grid (Hz)",
    "p_eff_mc": "Monte Carlo rate of correct peak and side-peak selection",
    "p_eff_closed": "Closed-form effective sensing probability",
    "ci95": "Half-width of the normal-approximation 95% interval of p_eff_mc",
    "mse_mc": "Monte Carlo MSE over all trials (Hz^2)",
    "mse_cond_mc": "Monte Carlo MSE over correctly selected trials (Hz^2), empty if none",
    "mse_approx": "Closed-form MSE approximation (Hz^2)",
    "mse_upper": "Closed-form MSE upper bound (Hz^2)",
    "delta_lower": "Lower bound on mse_upper - mse_approx (Hz^2)",
    "delta_upper": "Upper bound on mse_upper - mse_approx (Hz^2)",
    "objective_init": "||H||_F^2 at the strongest-path initialization",
    "objective_final": "||H||_F^2 after the alternating optimization",
    "iterations": "Outer iterations performed",
    "rate": "Achievable rate (bit/s/Hz)",
    "rate_lower_bound": "Frobenius-norm lower bound of the rate (bit/s/Hz)",
    "los_gain": "Cascaded LoS gain |h| |r^H a_B| |a_theta^H xi|",
    "gamma_prime": "Minimum LoS gain meeting the MSE target",
    "rate_subspace": "Rate of the joint subspace / ADMM design",
    "rate_strongest": "Rate with beams aligned to the LoS path only",
    "rate_random": "Rate with random IRS phases and the subspace combiner",
    "rate_no_irs": "Rate with every IRS element at phase pi",
    "iter": "Outer iteration (0 is the initialization)",
    "objective": "Mean ||H||_F^2",
    "velocity_kmh": "User speed (km/h)",
    "mse_ratio": "MSE of the ratio-based estimate (Hz^2)",
    "mse_integer": "MSE of the on-grid peak estimate (Hz^2)",
    "config_hash": "First 16 hex digits of the SHA-256 of the resolved config",
}


def _dtype_name(column) -> str:
    return str(column.dtype) if column.dtype is not None else "any"


def _check_text(column) -> str:
    return ", ".join(str(check) for check in column.checks)


def build_results_dictionary() -> str:
    """Markdown description of every result table, in column order"""
    content = []
    content.append("# Results Dictionary")
    content.append(f"*Generated on {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}*")
    content.append("")
    content.append("Every experiment writes one CSV with a header row; columns appear in the order listed.")
    content.append("")

    for kind, schema in RESULT_SCHEMAS.items():
        content.append(f"## {kind}")
        content.append("")
        content.append(TABLE_DESCRIPTIONS.get(kind, f"Description for {kind}"))
        content.append("")
        content.append("| Column | Type | Nullable | Checks | Description |")
        content.append("|--------|------|----------|--------|-------------|")
        for name, column in schema.columns.items():
            nullable = "yes" if column.nullable else ""
            content.append(
                f"| {name} | {_dtype_name(column)} | {nullable} | {_check_text(column)} "
                f"| {COLUMN_DESCRIPTIONS.get(name, '')} |"
            )
        content.append("")
        content.append("---")
        content.append("")

    return "\n".join(content)


def generate_results_dictionary(output_path=None):
    """Write docs/results_dictionary.md"""
    if output_path is None:
        output_path = os.path.join(PROJECT_ROOT, "docs", "results_dictionary.md")

    docs_dir = os.path.dirname(output_path)
    if docs_dir and not os.path.exists(docs_dir):
        os.makedirs(docs_dir)

    with open(output_path, 'w', encoding='utf-8') as f:
        f.write(build_results_dictionary())

    print(f"Results dictionary generated successfully at {output_path}")
    return output_path


def main():
    """Main function to generate documentation"""
    print("Generating results dictionary...")
    generate_results_dictionary()
    print("Documentation generation complete!")


if __name__ == "__main__":
    main()
