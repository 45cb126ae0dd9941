#!/usr/bin/env python3
"""
Utility script to run every experiment kind and regenerate the results dictionary.
"""

import subprocess
import sys
import os
import logging

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

KINDS = ["estimate", "prob-sweep", "mse-sweep", "beamform", "rate-sweep", "convergence", "velocity-sweep"]


def run_command(command, cwd=None):
    """Run a command and return the result"""
    logger.info(f"Running command: {' '.join(command)}")
    try:
        result = subprocess.run(
            command,
            cwd=cwd,
            check=True,
            capture_output=True,
            text=True,
        )
        logger.debug(f"Command output: {result.stdout}")
        if result.stderr:
            logger.debug(f"Command stderr: {result.stderr}")
        return result
    except subprocess.CalledProcessError as e:
        logger.error(f"Command failed with exit code {e.returncode}")
        logger.error(f"Error output: {e.stderr}")
        raise


def main():
    """Run all experiments into results/ with plot scripts alongside"""
    logger.info("Starting all experiments...")

    try:
        project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        config_path = os.path.join(project_root, "configs", "default.json")
        results_dir = os.path.join(project_root, "results")
        trials = sys.argv[1] if len(sys.argv) > 1 else None

        logger.info(f"Project root: {project_root}")
        logger.info(f"Config: {config_path}")

        for step, kind in enumerate(KINDS, start=1):
            logger.info(f"Step {step}: {kind}...")
            command = [
                sys.executable, "-m", "isac", kind,
                "--config", config_path,
                "--out", os.path.join(results_dir, f"{kind}.csv"),
                "--plot", os.path.join(results_dir, f"plot_{kind.replace('-', '_')}.py"),
            ]
            if trials:
                command += ["--trials", trials]
            run_command(command, cwd=project_root)

        logger.info(f"Step {len(KINDS) + 1}: Generating documentation...")
        run_command([sys.executable, os.path.join("scripts", "generate_docs.py")], cwd=project_root)

        logger.info("All experiments finished successfully!")

    except Exception as e:
        logger.error(f"Run failed: {str(e)}")
        logger.exception("Full traceback:")
        sys.exit(1)


if __name__ == "__main__":
    main()
