import asyncio
from pathlib import Path

from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import (
    CliApp,
    CliPositionalArg,
    CliSubCommand,
    SettingsConfigDict,
    SettingsError,
    get_subcommand,
)

from softcap.config import Settings
from softcap.errors import ConfigurationError, ExitCode, PartialSweepFailure, SoftCapError
from softcap.logger import configure_logger, logger


class RunCommand(BaseModel):
    """Run the policy once and write trace.jsonl, trace.csv and summary.json."""

    config: CliPositionalArg[Path] = Field(description="Run config JSON.")


class SweepCommand(BaseModel):
    """Sweep the Full-evaluation ceiling over caps and seeds."""

    spec: CliPositionalArg[Path] = Field(description="Sweep spec JSON.")


class AblateCommand(BaseModel):
    """Run a controller or cue ablation."""

    spec: CliPositionalArg[Path] = Field(description="Ablation spec JSON.")


class ProfileBuildCommand(BaseModel):
    """Build a frozen reference profile from a fixed-threshold ensemble."""

    spec: CliPositionalArg[Path] = Field(description="Profile build spec JSON.")


class SoftCapCli(Settings):
    """
    Risk-gated feature-caching simulator with a soft Full-evaluation ceiling.

    Common flags go before the subcommand, e.g. `softcap --jobs 4 sweep sweep.json`.
    """

    model_config = SettingsConfigDict(
        env_prefix="SOFTCAP_",
        env_file=".env",
        env_file_encoding="utf-8",
        cli_prog_name="softcap",
        cli_kebab_case=True,
        cli_exit_on_error=False,
        case_sensitive=False,
        extra="ignore",
    )

    run: CliSubCommand[RunCommand]
    sweep: CliSubCommand[SweepCommand]
    ablate: CliSubCommand[AblateCommand]
    profile_build: CliSubCommand[ProfileBuildCommand]


def dispatch(cli: SoftCapCli, command: BaseModel) -> ExitCode:
    """Run the selected subcommand and print its report to stdout."""
    from softcap.formatter import format_ablation_report, format_run_report, format_sweep_report
    from softcap.harness import (
        cmd_ablate,
        cmd_profile_build,
        cmd_run,
        cmd_sweep,
        resolve_output_dir,
    )

    match command:
        case RunCommand():
            out_dir = resolve_output_dir(cli.out)
            trace = cmd_run(command.config, out_dir, seed=cli.seed)
            print(format_run_report(trace.summary, len(trace.records)))

        case SweepCommand():
            report = asyncio.run(cmd_sweep(command.spec, cli.out, jobs=cli.jobs, seed=cli.seed))
            print(format_sweep_report(report.by_cap, report.failed, report.total))
            report.raise_for_failures()

        case AblateCommand():
            report = asyncio.run(cmd_ablate(command.spec, cli.out, jobs=cli.jobs, seed=cli.seed))
            print(format_ablation_report(report.mode, report.variants, report.failed, report.total))
            report.raise_for_failures()

        case ProfileBuildCommand():
            result = cmd_profile_build(command.spec, cli.out, seed=cli.seed)
            print(
                f"Reference profile: tau_ref={result.profile.tau_ref} "
                f"ensemble={result.ensemble_size} -> {result.path}"
            )

    return ExitCode.OK


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the softcap CLI."""
    configure_logger()

    try:
        cli = CliApp.run(SoftCapCli, cli_args=argv)
        command = get_subcommand(cli)
    except (SettingsError, ValidationError) as e:
        logger.error(f"Invalid command line: {e}")
        return ExitCode.CONFIG_ERROR

    configure_logger(log_level=cli.log_level)

    try:
        return dispatch(cli, command)

    except PartialSweepFailure as e:
        logger.warning(str(e))
        return ExitCode.PARTIAL_FAILURE

    except (ConfigurationError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return ExitCode.CONFIG_ERROR

    except SoftCapError as e:
        logger.error(f"Run failed: {e}")
        return ExitCode.RUNTIME_ERROR

    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return ExitCode.RUNTIME_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
