from django.core.management.base import BaseCommand, CommandError

from core.management.errors import CONFIG_ERROR, config_errors, run_errors, split_list
from core.schedulers import STRATEGIES
from core.services import load_config, run_sweep, simulation_setting, sweep_configs


class Command(BaseCommand):
    help = 'Run strategy x rate x window x seed and write sweep.csv and sweep_summary.csv.'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Base scenario JSON document')
        parser.add_argument('--strategies', required=True, help='Comma-separated strategies')
        parser.add_argument('--rates', required=True, help='Comma-separated total stream rates in Kbps')
        parser.add_argument('--windows', required=True, help='Comma-separated window sizes in seconds')
        parser.add_argument('--seeds', type=int, required=True, help='Number of seeds per cell')
        parser.add_argument('--out', help='Output directory (default from settings)')
        parser.add_argument('--workers', type=int, default=None, help='Parallel runs (default from settings)')

    def handle(self, *args, **options):
        strategies = split_list(options['strategies'], str.lower, 'strategies')
        unknown = [s for s in strategies if s not in STRATEGIES]
        if unknown:
            raise CommandError(f'unknown strategies: {", ".join(unknown)}', returncode=CONFIG_ERROR)
        rates = split_list(options['rates'], float, 'rates')
        windows = split_list(options['windows'], int, 'windows')
        if options['seeds'] < 1:
            raise CommandError('--seeds must be >= 1', returncode=CONFIG_ERROR)
        if options['workers'] is not None and options['workers'] < 1:
            raise CommandError('--workers must be >= 1', returncode=CONFIG_ERROR)

        with config_errors():
            base = load_config(options['config'])
            # fail on an impossible cell before any run starts
            sweep_configs(base, strategies, rates, windows, options['seeds'])

        with run_errors():
            sweep_path, summary_path = run_sweep(
                base, strategies, rates, windows, options['seeds'],
                options['out'] or simulation_setting('OUTPUT_DIR'), workers=options['workers']
            )
        self.stdout.write(self.style.SUCCESS(f'wrote {sweep_path} and {summary_path}'))
