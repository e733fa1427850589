# Generated by Django 6.0.1 on 2026-10-18 09:12

import django.db.models.deletion
import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('strategy', models.CharField(choices=[('assched', 'AsSched'), ('nassched', 'NAsSched'), ('rnd', 'Random'), ('lrf', 'Local rarest first'), ('rr', 'Round robin')], help_text='Scheduling strategy', max_length=10)),
                ('seed', models.BigIntegerField(help_text='Random seed of the run')),
                ('layers', models.PositiveIntegerField(help_text='Number of stream layers')),
                ('stream_rate_kbps', models.FloatField(help_text='Total stream rate in Kbps')),
                ('window_s', models.PositiveIntegerField(help_text='Sliding window size in seconds')),
                ('config_hash', models.CharField(db_index=True, help_text='Hash of the canonical scenario', max_length=16)),
                ('config', models.JSONField(help_text='Full scenario document')),
                ('aggregate_delivery', models.FloatField(blank=True, help_text='Aggregate delivery ratio (0-1)', null=True)),
                ('expired_count', models.PositiveIntegerField(default=0, help_text='Measured chunks that expired unreceived')),
                ('requested_count', models.PositiveIntegerField(default=0, help_text='Requests sent during the run')),
                ('duplicate_request_count', models.PositiveIntegerField(default=0, help_text='Duplicate requests (always 0)')),
                ('runtime', models.JSONField(default=dict, help_text='Deterministic run counters')),
                ('wall_time_s', models.FloatField(default=0.0, help_text='Wall-clock duration of the run')),
                ('created_at', models.DateTimeField(default=django.utils.timezone.now, help_text='When the run was stored')),
            ],
            options={
                'verbose_name': 'Simulation run',
                'verbose_name_plural': 'Simulation runs',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='LayerDelivery',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('layer', models.PositiveIntegerField(help_text='Layer index, 1 = base layer')),
                ('ratio', models.FloatField(help_text='Delivery ratio (0-1)')),
                ('run', models.ForeignKey(help_text='Owning run', on_delete=django.db.models.deletion.CASCADE, related_name='layer_deliveries', to='core.simulationrun')),
            ],
            options={
                'verbose_name': 'Layer delivery',
                'verbose_name_plural': 'Layer deliveries',
                'ordering': ['run', 'layer'],
                'constraints': [models.UniqueConstraint(fields=('run', 'layer'), name='unique_layer_per_run')],
            },
        ),
    ]
