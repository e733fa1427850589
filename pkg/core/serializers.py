from rest_framework import serializers

from .models import SimulationRun, LayerDelivery
from .priority import THETA_STRATEGIES
from .schedulers import STRATEGIES
from .simulation import BandwidthClass, PrioritySettings, SimConfig, StreamSpec


class StrictSerializer(serializers.Serializer):
    """
    Serializer that rejects keys it does not declare.
    """

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown field.'] for key in unknown})
        return super().to_internal_value(data)


class StreamSerializer(StrictSerializer):
    layers = serializers.IntegerField(min_value=1, required=False, default=1)
    layer_rate_kbps = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), allow_empty=False, required=False, default=[500.0]
    )
    chunk_size_kbits = serializers.FloatField(required=False, default=10.0)


class PrioritySerializer(StrictSerializer):
    theta = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    theta_strategy = serializers.ChoiceField(
        choices=THETA_STRATEGIES, required=False, allow_null=True, default=None
    )
    ep_base = serializers.FloatField(required=False, default=10.0)
    lp_base = serializers.FloatField(required=False, default=10.0)
    min_exponent = serializers.IntegerField(max_value=0, required=False, default=-30)

    def validate(self, attrs):
        if attrs.get('theta') is not None and attrs.get('theta_strategy'):
            raise serializers.ValidationError('Give either theta or theta_strategy, not both.')
        return attrs


class BandwidthClassSerializer(StrictSerializer):
    fraction = serializers.FloatField(min_value=0.0, max_value=1.0)
    download_kbps = serializers.FloatField(min_value=0.0)


class ScenarioSerializer(StrictSerializer):
    """
    Validates a scenario document and turns it into a SimConfig.
    Omitted keys take the SimConfig defaults.
    """
    node_count = serializers.IntegerField(min_value=2, required=False)
    degree = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, max_value=2 ** 64 - 1, required=False)
    duration = serializers.IntegerField(min_value=0, required=False)
    strategy = serializers.ChoiceField(choices=STRATEGIES, required=False)
    window_seconds = serializers.IntegerField(min_value=1, required=False)
    request_period = serializers.IntegerField(min_value=1, max_value=1, required=False)
    source_upload_factor = serializers.FloatField(min_value=0.0, required=False)
    stream = StreamSerializer(required=False)
    priority = PrioritySerializer(required=False)
    bandwidth_classes = BandwidthClassSerializer(many=True, required=False, allow_empty=False)

    def validate(self, attrs):
        try:
            self.build_config(attrs).priority_params()
        except ValueError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs

    @staticmethod
    def build_config(attrs):
        kwargs = {k: v for k, v in attrs.items() if k not in ('stream', 'priority', 'bandwidth_classes')}
        if 'stream' in attrs:
            stream = attrs['stream']
            kwargs['stream'] = StreamSpec(
                layers=stream['layers'],
                layer_rate_kbps=tuple(stream['layer_rate_kbps']),
                chunk_size_kbits=stream['chunk_size_kbits'],
            )
        if 'priority' in attrs:
            kwargs['priority'] = PrioritySettings(**attrs['priority'])
        if 'bandwidth_classes' in attrs:
            kwargs['bandwidth_classes'] = tuple(BandwidthClass(**c) for c in attrs['bandwidth_classes'])
        return SimConfig(**kwargs)

    @property
    def config(self):
        return self.build_config(self.validated_data)


class LayerDeliverySerializer(serializers.ModelSerializer):
    class Meta:
        model = LayerDelivery
        fields = ['layer', 'ratio']


class SimulationRunSerializer(serializers.ModelSerializer):
    """
    Serializer for the SimulationRun model.
    Includes the per-layer ratios.
    """
    layer_deliveries = LayerDeliverySerializer(many=True, read_only=True)

    class Meta:
        model = SimulationRun
        fields = '__all__'


class SimulationRunListSerializer(serializers.ModelSerializer):
    class Meta:
        model = SimulationRun
        exclude = ['config', 'runtime']


class SolveRequestSerializer(StrictSerializer):
    """
    Either a weight matrix (null = forbidden) or a knapsack instance.
    """
    matrix = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(allow_null=True)), required=False
    )
    values = serializers.ListField(child=serializers.FloatField(), required=False)
    weights = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False)
    capacity = serializers.IntegerField(min_value=0, required=False)

    def validate(self, attrs):
        knapsack = {'values', 'weights', 'capacity'} & attrs.keys()
        if 'matrix' in attrs:
            if knapsack:
                raise serializers.ValidationError('Send a matrix or a knapsack instance, not both.')
            widths = {len(row) for row in attrs['matrix']}
            if len(widths) > 1:
                raise serializers.ValidationError({'matrix': ['Rows must all have the same length.']})
            return attrs
        if knapsack != {'values', 'weights', 'capacity'}:
            raise serializers.ValidationError('Knapsack instances need values, weights and capacity.')
        if len(attrs['values']) != len(attrs['weights']):
            raise serializers.ValidationError({'weights': ['Must have as many entries as values.']})
        return attrs
