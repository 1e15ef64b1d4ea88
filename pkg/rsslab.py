#!/usr/bin/env python3

import argparse
from configparser import ConfigParser, Error as ConfigParserError
import json
import logging
import re
import sys
from typing import get_args

import pandas as pd
from pydantic import ValidationError

from _version import __version__
from models import MomentSet, Population, PopulationSpec, Scenario
from models.config import Command, RunConfig
from models.estimator import REPORT_COLUMNS
from models.exceptions import ConfigException, DesignException, RssLabException
from services import estimators, experiments, population, rss_sampling, tables
from services.seeding import ORDER_STATS_STREAM, POPULATION_STREAM, derive_seed

LOGGER = logging.getLogger("rsslab")

CONFIG_SECTION = "rsslab"
FLAG_FIELDS = [name for name in RunConfig.model_fields if name != "command"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def flag_name(field: str) -> str:
    return "--" + field.replace("_", "-")


def _default_text(value) -> str:
    if isinstance(value, tuple):
        return ",".join(f"{v:g}" for v in value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        prog="rsslab",
        description="ranked set sampling estimators under measurement error and non-response",
        allow_abbrev=False,
    )
    parser.add_argument("command", choices=get_args(Command), help="what to run")
    parser.add_argument(
        "--config", help="configuration file: a [rsslab] section or flat key = value lines", default=None
    )
    parser.add_argument("--from-manifest", help="replay the configuration stored in a run manifest", default=None)
    parser.add_argument(
        "--print-config", action="store_true", help="print the resolved configuration and exit"
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="log progress; repeat for debug output"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    options = parser.add_argument_group("run configuration (also valid as config file keys)")
    for name in FLAG_FIELDS:
        field = RunConfig.model_fields[name]
        help_text = f"{field.description} (default: {_default_text(field.default)})"
        if field.annotation is bool:
            options.add_argument(
                flag_name(name), dest=name, action="store_true", default=argparse.SUPPRESS, help=help_text
            )
        else:
            options.add_argument(
                flag_name(name), dest=name, metavar=name.upper(), default=argparse.SUPPRESS, help=help_text
            )
    return parser


def read_config_file(path: str) -> dict[str, str]:
    """Key/value pairs of a config file; a missing section header implies [rsslab]."""
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigException(f"cannot read config file {path}: {e}") from e
    if not re.search(r"^\s*\[", text, flags=re.MULTILINE):
        text = f"[{CONFIG_SECTION}]\n{text}"

    config = ConfigParser()
    config.optionxform = str  # keep N distinct from n
    try:
        config.read_string(text, source=path)
    except ConfigParserError as e:
        raise ConfigException(f"malformed config file {path}: {e}") from e
    if not config.has_section(CONFIG_SECTION):
        raise ConfigException(f"config file {path} has no [{CONFIG_SECTION}] section")
    return {key.replace("-", "_"): value for key, value in config.items(CONFIG_SECTION) if value != ""}


def read_manifest_config(path: str) -> dict:
    try:
        return dict(tables.read_manifest(path)["config"])
    except (OSError, ValueError) as e:
        raise ConfigException(f"cannot replay manifest {path}: {e}") from e


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Built-in defaults < manifest < config file < command-line flags."""
    values: dict = {}
    if args.from_manifest:
        values.update(read_manifest_config(args.from_manifest))
    if args.config:
        values.update(read_config_file(args.config))
    values.update({name: getattr(args, name) for name in FLAG_FIELDS if hasattr(args, name)})
    values["command"] = args.command
    # manifests store every field, including ones left unset
    values = {key: value for key, value in values.items() if value is not None}
    return RunConfig.model_validate(values)


def parse_config(argv: list[str] | None = None) -> RunConfig:
    return resolve_config(build_parser().parse_args(argv))


def _scenario(config: RunConfig) -> Scenario:
    return Scenario(
        spec=config.population_spec(),
        design=config.design,
        replications=config.reps,
        master_seed=config.seed,
        rank_on=config.rank_on,
        me_mode=config.me_mode,
        reestimate_weights=config.reestimate_weights,
        os_samples=config.os_samples,
        os_method=config.os_method,
        group2_divisor=config.group2_divisor,
        threads=config.threads,
    )


def _population(config: RunConfig) -> tuple[Population, PopulationSpec]:
    if config.population:
        pop = population.load_population(config.population)
        spec = population.describe_population(
            pop,
            sigma2_u=config.sigma2_u or 0.0,
            sigma2_v=config.sigma2_v or 0.0,
            rho_uv=config.rho_uv or 0.0,
            sigma2_u2=config.sigma2_u2,
            sigma2_v2=config.sigma2_v2,
        )
        return pop, spec
    spec = config.population_spec()
    return population.generate_population(spec, derive_seed(config.seed, POPULATION_STREAM), config.me_mode), spec


def _moment_set(config: RunConfig) -> MomentSet:
    if config.command == "estimate" and config.moments:
        try:
            with open(config.moments, encoding="utf-8") as f:
                return MomentSet.from_text(f.read())
        except (OSError, UnicodeDecodeError) as e:
            raise ConfigException(f"cannot read moment set {config.moments}: {e}") from e
    pop, spec = _population(config)
    _, mom = experiments.population_moments(
        pop, spec, config.design,
        seed=derive_seed(config.seed, ORDER_STATS_STREAM, 0),
        os_samples=config.os_samples,
        os_method=config.os_method,
        group2_divisor=config.group2_divisor,
        threads=config.threads,
    )
    return mom


def _emit_frame(config: RunConfig, frame: pd.DataFrame) -> None:
    if config.out is None:
        sys.stdout.write(tables.render(frame, config.format))
        return
    digest = tables.write_table(frame, config.out, config.format)
    tables.write_manifest(config.model_dump(mode="json"), config.out, digest)


def _emit_text(config: RunConfig, text: str) -> None:
    if config.out is None:
        sys.stdout.write(text)
        return
    with open(config.out, "w", encoding="utf-8") as f:
        f.write(text)
    tables.write_manifest(config.model_dump(mode="json"), config.out, tables.file_digest(config.out))


def dispatch(config: RunConfig) -> int:
    match config.command:
        case "gen-pop":
            pop, spec = _population(config)
            LOGGER.info(f"Population: N={pop.N}, N2={pop.N2}, rho={spec.rho_xy}")
            if config.out is None:
                population.save_population(pop, sys.stdout)
            else:
                population.save_population(pop, config.out)
                tables.write_manifest(config.model_dump(mode="json"), config.out, tables.file_digest(config.out))
        case "moments":
            _emit_text(config, _moment_set(config).to_text())
        case "estimate":
            mom = _moment_set(config)
            sample = rss_sampling.load_sample(config.sample, config.design)
            ybar_star, xbar_star = rss_sampling.combined_mean(sample)
            reports = estimators.estimate_all(ybar_star, xbar_star, mom)
            _emit_frame(config, pd.DataFrame([r.to_csv_row() for r in reports], columns=REPORT_COLUMNS))
        case "simulate":
            _emit_frame(config, experiments.run_simulation(_scenario(config)))
        case "table1":
            sc = _scenario(config)
            _emit_frame(config, experiments.run_table1(
                sc.spec, sc.design, sc.replications, sc.master_seed,
                **sc.model_dump(exclude={"spec", "design", "replications", "master_seed"}),
            ))
        case "table2":
            _emit_frame(config, experiments.run_table2_grid(_scenario(config), align_w2=config.w2 is None))
        case "table3":
            _emit_frame(config, experiments.run_table3_grid(_scenario(config), config.deltas))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        config = resolve_config(args)
    except (ValidationError, ConfigException, DesignException) as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    if args.print_config:
        print(json.dumps(config.model_dump(mode="json"), indent=2))
        return EXIT_OK

    try:
        return dispatch(config)
    except (ValidationError, ConfigException, DesignException) as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (RssLabException, OSError) as e:
        logging.error(f"{config.command} failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
