from rest_framework import status
from rest_framework.decorators import api_view
from rest_framework.response import Response
from rest_framework.exceptions import ValidationError
from django.shortcuts import get_object_or_404

from .exceptions import InvariantViolation
from .models import SimulationRun
from .serializers import SimulationRunSerializer, SimulationRunListSerializer, SolveRequestSerializer
from .services import build_config, run_scenario, solve_matrix, solve_knapsack
from .schedulers import STRATEGIES


@api_view(['POST'])
def create_run(request):
    """
    Endpoint: POST /api/runs/
    Description: Validate a scenario document, run it and store the result.
    Optional top-level `strategy` and `seed` override the document.
    """
    try:
        config = build_config(request.data)
        _report, _path, run = run_scenario(config, store=True)
        return Response(SimulationRunSerializer(run).data, status=status.HTTP_201_CREATED)
    except ValidationError as e:
        return Response(e.detail, status=status.HTTP_400_BAD_REQUEST)
    except ValueError as e:
        return Response({'error': str(e)}, status=status.HTTP_400_BAD_REQUEST)
    except InvariantViolation as e:
        return Response({'error': str(e)}, status=status.HTTP_500_INTERNAL_SERVER_ERROR)


@api_view(['GET'])
def list_runs(request):
    """
    Endpoint: GET /api/runs/list/
    Description: List stored runs, optionally filtered by strategy, layers, seed.
    """
    strategy = request.query_params.get('strategy')
    layers = request.query_params.get('layers')
    seed = request.query_params.get('seed')

    runs = SimulationRun.objects.all()

    if strategy:
        if strategy not in STRATEGIES:
            return Response({'error': f'unknown strategy {strategy!r}'}, status=status.HTTP_400_BAD_REQUEST)
        runs = runs.filter(strategy=strategy)

    try:
        if layers:
            runs = runs.filter(layers=int(layers))
        if seed:
            runs = runs.filter(seed=int(seed))
    except ValueError:
        return Response({'error': 'layers and seed must be integers'}, status=status.HTTP_400_BAD_REQUEST)

    serializer = SimulationRunListSerializer(runs, many=True)
    return Response(serializer.data)


@api_view(['GET'])
def run_detail(request, run_id):
    """
    Endpoint: GET /api/runs/<id>/
    Description: One stored run with its per-layer delivery ratios.
    """
    run = get_object_or_404(SimulationRun.objects.prefetch_related('layer_deliveries'), id=run_id)
    return Response(SimulationRunSerializer(run).data)


@api_view(['POST'])
def solve(request):
    """
    Endpoint: POST /api/solve/
    Description: Solve an assignment matrix (null = forbidden) or a 0/1 knapsack instance.
    """
    serializer = SolveRequestSerializer(data=request.data)
    if not serializer.is_valid():
        return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)
    data = serializer.validated_data
    try:
        if 'matrix' in data:
            return Response(solve_matrix(data['matrix']))
        return Response(solve_knapsack(data['values'], data['weights'], data['capacity']))
    except ValueError as e:
        return Response({'error': str(e)}, status=status.HTTP_400_BAD_REQUEST)
