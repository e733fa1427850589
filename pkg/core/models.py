from django.db import models
from django.utils import timezone


class SimulationRun(models.Model):
    """
    One completed simulation run and its headline metrics.
    """
    STRATEGY_CHOICES = [
        ('assched', 'AsSched'),
        ('nassched', 'NAsSched'),
        ('rnd', 'Random'),
        ('lrf', 'Local rarest first'),
        ('rr', 'Round robin'),
    ]

    strategy = models.CharField(max_length=10, choices=STRATEGY_CHOICES, help_text="Scheduling strategy")
    seed = models.BigIntegerField(help_text="Random seed of the run")
    layers = models.PositiveIntegerField(help_text="Number of stream layers")
    stream_rate_kbps = models.FloatField(help_text="Total stream rate in Kbps")
    window_s = models.PositiveIntegerField(help_text="Sliding window size in seconds")
    config_hash = models.CharField(max_length=16, db_index=True, help_text="Hash of the canonical scenario")
    config = models.JSONField(help_text="Full scenario document")
    aggregate_delivery = models.FloatField(null=True, blank=True, help_text="Aggregate delivery ratio (0-1)")
    expired_count = models.PositiveIntegerField(default=0, help_text="Measured chunks that expired unreceived")
    requested_count = models.PositiveIntegerField(default=0, help_text="Requests sent during the run")
    duplicate_request_count = models.PositiveIntegerField(default=0, help_text="Duplicate requests (always 0)")
    runtime = models.JSONField(default=dict, help_text="Deterministic run counters")
    wall_time_s = models.FloatField(default=0.0, help_text="Wall-clock duration of the run")
    created_at = models.DateTimeField(default=timezone.now, help_text="When the run was stored")

    def __str__(self):
        return f"{self.strategy} seed={self.seed} rate={self.stream_rate_kbps:g}Kbps window={self.window_s}s"

    class Meta:
        verbose_name = "Simulation run"
        verbose_name_plural = "Simulation runs"
        ordering = ['-created_at']


class LayerDelivery(models.Model):
    """
    Delivery ratio of one layer in a stored run.
    """
    run = models.ForeignKey(SimulationRun, on_delete=models.CASCADE, related_name='layer_deliveries', help_text="Owning run")
    layer = models.PositiveIntegerField(help_text="Layer index, 1 = base layer")
    ratio = models.FloatField(help_text="Delivery ratio (0-1)")

    def __str__(self):
        return f"Layer {self.layer} of run {self.run_id}: {self.ratio:.3f}"

    class Meta:
        verbose_name = "Layer delivery"
        verbose_name_plural = "Layer deliveries"
        ordering = ['run', 'layer']
        constraints = [
            models.UniqueConstraint(fields=['run', 'layer'], name='unique_layer_per_run'),
        ]
