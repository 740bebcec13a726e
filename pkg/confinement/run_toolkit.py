# confinement/run_toolkit.py

"""
Shared plumbing for the management commands: common arguments, config
loading, the run ledger and the mapping from outcomes to exit codes.
"""

import logging

from django.core.management.base import BaseCommand
from django.db import DatabaseError

from . import artifacts
from .config import load_config
from .exceptions import ConfigError, NumericalError, ToolkitError
from .models import RunRecord

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_ABORT = 3

STATUS_BY_CODE = {EXIT_PASS: 'PASS', EXIT_FAIL: 'FAIL', EXIT_CONFIG: 'CONFIG', EXIT_ABORT: 'ABORT'}


def exit_code_for(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_ABORT
    return getattr(exc, 'exit_code', EXIT_ABORT)


def record_run(subcommand, config, code, message='', report=None, directory=None):
    """ Store one RunRecord; a missing or unmigrated database only costs the ledger entry. """
    try:
        return RunRecord.objects.create(
            subcommand=subcommand,
            config_hash=config.config_hash() if config else '',
            config_text=config.to_text() if config else '',
            status=STATUS_BY_CODE.get(code, 'ABORT'),
            exit_code=code,
            message=message,
            report=artifacts.json_ready(report or {}),
            output_dir=str(directory or ''),
        )
    except DatabaseError as exc:
        logger.warning("run ledger unavailable (%s); run %s not recorded", exc, subcommand)
        return None


class ToolkitCommand(BaseCommand):
    """
    Subclasses set `subcommand` and implement `execute_run(config, directory,
    options)` returning (report, passed). Everything else happens here.
    """
    subcommand = None
    config_overrides = ()

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Config file in the [section] key = value grammar.')
        parser.add_argument('--chi', type=float)
        parser.add_argument('--n-half', dest='n_half', type=int)
        parser.add_argument('--nx', type=int)
        parser.add_argument('--L', dest='L', type=float, help='Milne half-line length (0 derives it from beta).')
        parser.add_argument('--box-L', dest='box_L', type=float)
        parser.add_argument('--rule', choices=['gauss', 'midpoint'])
        parser.add_argument('--output-dir', dest='output_dir')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--n-jobs', dest='n_jobs', type=int)
        self.add_run_arguments(parser)

    def add_run_arguments(self, parser):
        pass

    def load(self, options):
        keys = ('chi', 'n_half', 'nx', 'L', 'box_L', 'rule', 'output_dir', 'seed', 'n_jobs',
                *self.config_overrides)
        return load_config(options.get('config'), **{key: options.get(key) for key in keys})

    def execute_run(self, config, directory, options):
        raise NotImplementedError

    def handle(self, *args, **options):
        config = directory = None
        report = {}
        try:
            config = self.load(options)
            directory = artifacts.run_directory(config, self.subcommand)
            (directory / 'config.txt').write_text(config.to_text(), encoding='utf-8')
            logger.info("%s: config %s -> %s", self.subcommand, config.config_hash(), directory)

            report, passed = self.execute_run(config, directory, options)
            artifacts.write_report(directory / 'report.txt', report)
            code = EXIT_PASS if passed else EXIT_FAIL
            message = 'all checks passed' if passed else 'verification failed'
        except ToolkitError as exc:
            code = exit_code_for(exc)
            message = f"{type(exc).__name__}: {exc}"
            logger.error("%s aborted: %s", self.subcommand, message)

        record_run(self.subcommand, config, code, message, report, directory)
        if report:
            self.stdout.write(artifacts.report_text(report))
        style = self.style.SUCCESS if code == EXIT_PASS else self.style.ERROR
        self.stdout.write(style(f"{self.subcommand}: {STATUS_BY_CODE[code]} ({message})"))
        if code != EXIT_PASS:
            raise SystemExit(code)
