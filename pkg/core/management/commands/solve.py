import json

from django.core.management.base import BaseCommand, CommandError

from core.management.errors import CONFIG_ERROR, config_errors
from core.services import read_knapsack_csv, read_matrix_csv, solve_knapsack, solve_matrix


class Command(BaseCommand):
    help = 'Solve an ad-hoc assignment matrix or knapsack instance and print the result as JSON.'

    def add_arguments(self, parser):
        group = parser.add_mutually_exclusive_group(required=True)
        group.add_argument('--matrix', help='Weight matrix CSV; empty cell or x = forbidden')
        group.add_argument('--knapsack', help='Knapsack CSV with value,weight rows')
        parser.add_argument('--capacity', type=int, help='Knapsack capacity')

    def handle(self, *args, **options):
        with config_errors():
            if options['matrix']:
                result = solve_matrix(read_matrix_csv(options['matrix']))
            else:
                if options['capacity'] is None:
                    raise CommandError('--knapsack needs --capacity', returncode=CONFIG_ERROR)
                values, weights = read_knapsack_csv(options['knapsack'])
                result = solve_knapsack(values, weights, options['capacity'])
        self.stdout.write(json.dumps(result))
