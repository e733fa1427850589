from django.core.management.base import BaseCommand, CommandError

from core.management.errors import CONFIG_ERROR, config_errors, run_errors
from core.metrics import FORMATS
from core.schedulers import STRATEGIES
from core.services import load_config, run_scenario, simulation_setting

U64_MAX = 2 ** 64 - 1


class Command(BaseCommand):
    help = 'Run one scenario with one strategy and seed, and write its report.'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Scenario JSON document')
        parser.add_argument('--strategy', choices=STRATEGIES, help='Overrides the scenario strategy')
        parser.add_argument('--seed', type=int, help='Overrides the scenario seed (u64)')
        parser.add_argument('--out', help='Output directory (default from settings)')
        parser.add_argument('--format', choices=FORMATS, default=None, help='Report format (default from settings)')
        parser.add_argument('--store', action='store_true', help='Also store the run in the database')

    def handle(self, *args, **options):
        seed = options['seed']
        if seed is not None and not 0 <= seed <= U64_MAX:
            raise CommandError(f'--seed {seed} is not a u64', returncode=CONFIG_ERROR)

        with config_errors():
            config = load_config(options['config'], strategy=options['strategy'], seed=seed)

        out_dir = options['out'] or simulation_setting('OUTPUT_DIR')
        with run_errors():
            report, path, run = run_scenario(config, out_dir=out_dir, fmt=options['format'], store=options['store'])

        aggregate = 'n/a' if report.aggregate_delivery is None else f'{report.aggregate_delivery:.4f}'
        message = f'{report.strategy} seed={report.seed} aggregate_delivery={aggregate} -> {path}'
        if run is not None:
            message += f' (run id {run.id})'
        self.stdout.write(self.style.SUCCESS(message))
