from confinement.pipelines import run_dispersion
from confinement.run_toolkit import ToolkitCommand
from confinement.exceptions import ConfigError


def parse_chis(text):
    try:
        return [float(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise ConfigError(f"--sweep expects comma-separated chi values, got {text!r}") from None


class Command(ToolkitCommand):
    help = 'Solve the dispersion relation for alpha, kappa and beta; optionally sweep chi.'
    subcommand = 'dispersion'

    def add_run_arguments(self, parser):
        parser.add_argument('--sweep', help='Comma-separated chi values, e.g. 0.01,0.1,0.5')

    def execute_run(self, config, directory, options):
        sweep = parse_chis(options['sweep']) if options.get('sweep') else None
        return run_dispersion(config, directory, sweep=sweep)
