import os

import click
from dotenv import load_dotenv, find_dotenv

from .util.logging_config import setup_logging

load_dotenv(dotenv_path=find_dotenv(usecwd=True))

# Commands
from .routers import converge, exceedance, run, verify


@click.group(
    help="Stochastic Navier-Stokes Taylor-Hood solver and Monte Carlo convergence lab."
)
@click.version_option("1.0.0", prog_name="sns-lab")
def app():
    setup_logging(
        log_level=os.getenv("SNS_LOG_LEVEL", "INFO").upper(),
        log_file=os.getenv("SNS_LOG_FILE") or None,
    )


# verify
app.add_command(verify.command)

# run
app.add_command(run.command)

# converge-time / converge-space
app.add_command(converge.converge_time)
app.add_command(converge.converge_space)

# exceedance
app.add_command(exceedance.command)


if __name__ == "__main__":
    app()
